"""
Utility functions for tapermle.

This module provides utility functions and classes for:
- Console output with rich formatting
- Message printing with colored output
- Logo display with gradient effects
- Result tables and JSON result files
"""

import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np
from art import text2art
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.traceback import install
from rich_gradient import Gradient

install(show_locals=False)
# stdout is reserved for JSON results
console = Console(log_path=False, stderr=True)

SPEC_VERSION = 1


def show_logo(
    text: Any,
    font: str = "small",
    style: tuple[str, bool] | bool = ("bold", True),
    fits: tuple[bool, int] | bool = (True, 1),
    panel: bool = True,
) -> None:
    """
    Display ASCII art logo with gradient coloring.

    Args:
        text (str): Text to convert to ASCII art
        font (str, optional): ASCII art font name. Defaults to "small".
        style (str, bool): Text style. Defaults to "bold". Gradient colors.
        fits (bool, int): Panel fit, Number of blank lines after logo. Defaults to 1.
        panel (bool): Print inside a rich panel.
    Returns:
        None
    """
    if isinstance(style, bool):
        style = ("bold", style)
    if isinstance(fits, bool):
        fits = (fits, 1)
    logo_art = text2art(text, font=font)
    if isinstance(logo_art, str):
        lines: Any = str(logo_art).splitlines()
        if panel:
            lines = Panel.fit("\n".join(lines)) if fits[0] else Panel("\n".join(lines))

        lolcat = Gradient(lines, console=console) if style[1] else lines
        console.print(lolcat, style=style[0], soft_wrap=True)
        console.line(fits[1])


class CLIprinter:
    """RICH Style, Text Printer"""

    def __init__(self) -> None:
        self.quiet = False

    def print(
        self,
        value: str | Any = "",
        style: Optional[str] = "bold",
        prefix: Optional[str] = "?",
    ):
        """Print using rich console"""
        fix = f"\\[[{style}]{prefix}[reset]] "
        console.print(
            f"{fix}[{style}]{value}",
            markup=True,
            highlight=True,
            soft_wrap=True,
        )

    def error(self, value: Any, style: str = "bold red", prefix: str = "x"):
        """Level Error"""
        self.print(value=value, style=style, prefix=prefix)

    def warning(self, value: Any, style: str = "bold yellow", prefix: str = "~"):
        """Level Warning"""
        self.print(value=value, style=style, prefix=prefix)

    def progress(self, value: Any, style: str = "bold magenta", prefix: str = "$"):
        """Level Progress"""
        if not self.quiet:
            self.print(value=value, style=style, prefix=prefix)

    def success(self, value: Any, style: str = "bold green", prefix: str = "*"):
        """Level Success"""
        if not self.quiet:
            self.print(value=value, style=style, prefix=prefix)


msg = CLIprinter()


def showbox_table(title: str, columns: list[str], rows: Iterable[Iterable[Any]]) -> None:
    """Print a result table in rich styling."""
    if msg.quiet:
        return
    table = Table(title=title, box=box.ROUNDED, show_lines=False)
    for i, name in enumerate(columns):
        table.add_column(name, style="cyan" if i == 0 else "magenta", justify="right")
    for row in rows:
        table.add_row(*(_fmt_cell(v) for v in row))
    console.print(table)


def _fmt_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "[green]yes[/green]" if value else "[red]no[/red]"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def to_jsonable(value: Any) -> Any:
    """Convert numpy values and non-finite floats into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        # JSON has no inf/nan
        return value if math.isfinite(value) else str(value)
    return value


def dump_json(record: dict) -> str:
    """Serialize a result record with the schema version first."""
    payload = {"spec_version": SPEC_VERSION}
    payload.update(to_jsonable(record))
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def write_json(record: dict, path: Optional[str | Path]) -> None:
    """Write a result record to path, or to stdout when path is None."""
    text = dump_json(record)
    if path is None:
        print(text, end="")
        return
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    msg.success(f"Wrote: [u magenta]{path}[/u magenta]")
