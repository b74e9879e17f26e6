"""
Special functions for the Matérn family.

Thin validated wrappers over scipy.special: the gamma function and the
modified Bessel function of the second kind K_nu. Both accept scalars or
arrays; scalar input returns a Python float.
"""

import dataclasses

import numpy as np
from numpy.typing import ArrayLike
from scipy import special as sps

from tapermle.errors import DomainError


@dataclasses.dataclass(frozen=True)
class BesselOrder:
    """Positive smoothness order of K_nu."""

    nu: float

    def __post_init__(self):
        if not np.isfinite(self.nu) or self.nu <= 0:
            raise DomainError(f"Bessel order must be positive, got {self.nu}")

    def __float__(self) -> float:
        return float(self.nu)


def _scalar_or_array(values: np.ndarray, scalar: bool) -> float | np.ndarray:
    return float(values) if scalar else values


def gamma_fn(x: ArrayLike) -> float | np.ndarray:
    """Gamma function for positive finite arguments."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("gamma_fn requires finite x > 0")
    return _scalar_or_array(sps.gamma(arr), arr.ndim == 0)


def bessel_k(nu: BesselOrder | float, x: ArrayLike) -> float | np.ndarray:
    """
    Modified Bessel function of the second kind K_nu(x).

    Values past the underflow threshold (x around 700 and beyond) come back
    as exactly 0.

    Args:
        nu (BesselOrder | float): Order, must be positive.
        x (ArrayLike): Positive argument(s).

    Returns:
        float | np.ndarray: K_nu(x).

    Raises:
        DomainError: If nu <= 0 or any x <= 0.
    """
    order = float(nu if isinstance(nu, BesselOrder) else BesselOrder(float(nu)))
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0):
        raise DomainError("bessel_k requires x > 0")
    return _scalar_or_array(sps.kv(order, arr), arr.ndim == 0)
