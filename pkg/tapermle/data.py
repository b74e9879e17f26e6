"""
Sampling designs and datasets.

A Design is a strictly increasing vector of locations on a bounded interval;
a Dataset pairs a Design with one realization. Datasets travel as CSV files
with header "t,x" and 17 significant digits.
"""

import csv
import dataclasses
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike

from tapermle.errors import DesignError
from tapermle.utils import msg

# Relative to the domain length, gaps below this count as duplicates.
NEAR_DUPLICATE = 1e-12


def _frozen_array(values: ArrayLike) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class Design:
    """Strictly increasing sampling locations."""

    t: np.ndarray

    def __post_init__(self):
        t = _frozen_array(self.t)
        if t.size == 0:
            raise DesignError("design needs at least one location")
        if not np.all(np.isfinite(t)):
            raise DesignError("locations must be finite")
        if np.any(np.diff(t) <= 0):
            raise DesignError("locations must be strictly increasing")
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return int(self.t.size)

    @property
    def length(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def gaps(self) -> np.ndarray:
        """Δ_k = t_k - t_{k-1}, k = 2..n."""
        return np.diff(self.t)

    def check_distinct(self) -> None:
        """Reject gaps below NEAR_DUPLICATE times the domain length."""
        if self.n > 1 and np.min(self.gaps) < NEAR_DUPLICATE * max(self.length, 1.0):
            raise DesignError("near-duplicate locations make the covariance matrix singular")

    def a1_constants(self) -> tuple[float, float]:
        """((n-1) min gap, (n-1) max gap), the (A1) spacing constants."""
        if self.n < 2:
            raise DesignError("(A1) constants need at least two locations")
        scale = self.n - 1
        return float(scale * self.gaps.min()), float(scale * self.gaps.max())

    def __eq__(self, other) -> bool:
        return isinstance(other, Design) and np.array_equal(self.t, other.t)

    __hash__ = None


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """A design together with one realization x(t)."""

    design: Design
    x: np.ndarray

    def __post_init__(self):
        x = _frozen_array(self.x)
        if x.size != self.design.n:
            raise DesignError(f"{x.size} values for {self.design.n} locations")
        if not np.all(np.isfinite(x)):
            raise DesignError("observations must be finite")
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def t(self) -> np.ndarray:
        return self.design.t

    def scaled(self, factor: float) -> "Dataset":
        return Dataset(self.design, self.x * factor)


def write_csv(data: Dataset, path: str | Path) -> Path:
    """Write "t,x" rows with full double precision and LF endings."""
    path = Path(path).expanduser()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t", "x"])
        for t, x in zip(data.t, data.x):
            writer.writerow([f"{t:.17g}", f"{x:.17g}"])
    return path


def read_csv(path: str | Path) -> Dataset:
    """
    Read a "t,x" CSV file.

    Rows out of order are sorted with a warning; repeated locations are an
    error.

    Raises:
        DesignError: On unreadable files, bad headers or values, duplicates.
    """
    path = Path(path).expanduser()
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DesignError(f"cannot read {path}: {e}") from e

    if not rows or [c.strip() for c in rows[0]] != ["t", "x"]:
        raise DesignError(f"{path.name}: expected header 't,x'")
    try:
        values = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as e:
        raise DesignError(f"{path.name}: {e}") from e
    if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] != 2:
        raise DesignError(f"{path.name}: expected two columns of data rows")

    t, x = values[:, 0], values[:, 1]
    if np.any(np.diff(t) < 0):
        msg.warning(f"{path.name}: rows are not sorted by t, sorting them.")
        order = np.argsort(t, kind="stable")
        t, x = t[order], x[order]
    if np.any(np.diff(t) == 0):
        raise DesignError(f"{path.name}: duplicate locations")
    return Dataset(Design(t), x)
