"""
Replicate runner.

Runs independent replicate jobs on a thread pool behind a rich progress bar
and gathers their results in submission order, so output never depends on
scheduling or on the number of threads. Ctrl+C stops the run after the job
in flight.
"""

import os
import signal
from concurrent.futures import ThreadPoolExecutor, as_completed
from contextlib import contextmanager
from threading import Event
from typing import Any, Callable, Iterable, Iterator, Optional, TypeVar

from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    TextColumn,
    TimeElapsedColumn,
    TimeRemainingColumn,
)

from tapermle.errors import ConfigError
from tapermle.utils import console, msg

THREADS_ENV = "TAPER_MLE_THREADS"

T = TypeVar("T")
R = TypeVar("R")

done_event = Event()


def handle_sigint(*_):
    """Handle SIGINT (Ctrl+C) to stop the replicate loop gracefully."""
    done_event.set()


@contextmanager
def _sigint_guard() -> Iterator[None]:
    done_event.clear()
    try:
        previous = signal.signal(signal.SIGINT, handle_sigint)
    except ValueError:
        # not the main thread
        yield
        return
    try:
        yield
    finally:
        signal.signal(signal.SIGINT, previous)


def resolve_threads(cli_value: Optional[int] = None, config_value: Optional[int] = None) -> int:
    """
    Worker count: TAPER_MLE_THREADS, then --threads, then the config, then all cores.

    Raises:
        ConfigError: If the chosen value is not a positive integer.
    """
    env = os.environ.get(THREADS_ENV, "").strip()
    if env:
        try:
            value = int(env)
        except ValueError as e:
            raise ConfigError(THREADS_ENV, f"expected an integer, got '{env}'") from e
        source = THREADS_ENV
    elif cli_value is not None:
        value, source = cli_value, "--threads"
    elif config_value is not None:
        value, source = config_value, "threads"
    else:
        return os.cpu_count() or 1
    if value < 1:
        raise ConfigError(source, f"must be >= 1, got {value}")
    return value


def make_progress(quiet: bool = False) -> Progress:
    return Progress(
        TextColumn("[bold magenta]{task.description}"),
        BarColumn(bar_width=None),
        MofNCompleteColumn(),
        "•",
        TimeElapsedColumn(),
        "•",
        TimeRemainingColumn(),
        console=console,
        transient=True,
        disable=quiet or msg.quiet,
    )


def run_ordered(
    func: Callable[[T], R],
    items: Iterable[T],
    *,
    threads: int = 1,
    label: str = "replicates",
    quiet: bool = False,
) -> list[R]:
    """
    Apply func to every item and return the results in item order.

    The first exception raised by a job cancels the jobs not yet started and
    propagates.

    Raises:
        KeyboardInterrupt: If Ctrl+C was pressed during the run.
    """
    items = list(items)
    results: list[Any] = [None] * len(items)
    with _sigint_guard(), make_progress(quiet) as progress:
        task = progress.add_task(label, total=len(items))
        if threads <= 1 or len(items) <= 1:
            for i, item in enumerate(items):
                if done_event.is_set():
                    raise KeyboardInterrupt
                results[i] = func(item)
                progress.advance(task)
            return results

        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(func, item): i for i, item in enumerate(items)}
            try:
                for future in as_completed(futures):
                    results[futures[future]] = future.result()
                    progress.advance(task)
                    if done_event.is_set():
                        raise KeyboardInterrupt
            except BaseException:
                for future in futures:
                    future.cancel()
                raise
    return results
