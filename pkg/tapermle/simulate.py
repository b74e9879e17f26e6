"""
Sampling designs and exact Gaussian process simulation.

Designs live on [0, 1] with both endpoints pinned. Realizations come from a
dense Cholesky factor of V_n, or, for the exponential covariance, from the
O(n) Ornstein-Uhlenbeck Markov recursion, whose inverse is whiten_ou.

Every random stream is a Philox counter generator keyed by
SeedSequence(root, spawn_key=keys); normals use numpy's ziggurat sampler.
"""

import dataclasses
import math
from enum import Enum

import numpy as np

from tapermle.covmodel import CovModel
from tapermle.data import Dataset, Design
from tapermle.errors import DesignError, DomainError
from tapermle.linalg import build_dense, factorize
from tapermle.utils import msg

RNG_NAME = "philox/ziggurat"
MAX_JITTER = 0.5
SAFE_JITTER = 0.4
# Spawn-key prefix of design streams; replicate streams use (n, r).
DESIGN_STREAM = 0xD5


class DesignKind(str, Enum):
    REGULAR = "regular"
    JITTERED = "jittered"


@dataclasses.dataclass(frozen=True)
class Seed:
    """Root of all replicate streams, a 64-bit unsigned integer."""

    root: int

    def __post_init__(self):
        if isinstance(self.root, bool) or not isinstance(self.root, int):
            raise DomainError(f"seed must be an integer, got {self.root!r}")
        if not 0 <= self.root < 2**64:
            raise DomainError(f"seed must fit in 64 unsigned bits, got {self.root}")

    def generator(self, *keys: int) -> np.random.Generator:
        """Independent stream for the given keys; equal keys give equal streams."""
        seq = np.random.SeedSequence(self.root, spawn_key=tuple(int(k) for k in keys))
        return np.random.Generator(np.random.Philox(seq))

    def to_dict(self) -> dict:
        return {"root": self.root, "rng": RNG_NAME}


def regular_design(n: int) -> Design:
    """t_k = (k - 1) / (n - 1)."""
    if n < 2:
        raise DesignError(f"regular design needs n >= 2, got {n}")
    return Design(np.linspace(0.0, 1.0, n))


def jittered_design(n: int, jitter_frac: float, seed: Seed, replicate: int = 0) -> Design:
    """
    Regular grid with interior points moved uniformly by up to
    ±jitter_frac/(n-1). Endpoints stay at 0 and 1.

    Raises:
        DesignError: If jitter_frac is negative or at least 0.5, where the
            gaps are no longer bounded below by a multiple of 1/n.
    """
    if not 0 <= jitter_frac < MAX_JITTER:
        raise DesignError(f"jitter_frac must lie in [0, {MAX_JITTER}), got {jitter_frac}")
    if jitter_frac > SAFE_JITTER:
        msg.warning(f"jitter_frac {jitter_frac} > {SAFE_JITTER}: minimum gaps get very small.")
    t = regular_design(n).t.copy()
    if n > 2:
        step = 1.0 / (n - 1)
        rng = seed.generator(DESIGN_STREAM, n, replicate)
        t[1:-1] += rng.uniform(-jitter_frac * step, jitter_frac * step, size=n - 2)
        t.sort()
    return Design(t)


def make_design(
    kind: DesignKind | str,
    n: int,
    jitter: float = 0.0,
    seed: Seed | None = None,
    replicate: int = 0,
) -> Design:
    kind = DesignKind(kind)
    if kind is DesignKind.REGULAR:
        return regular_design(n)
    return jittered_design(n, jitter, seed or Seed(0), replicate)


def _normals(design: Design, seed: Seed, replicate: int) -> np.ndarray:
    return seed.generator(design.n, replicate).standard_normal(design.n)


def sample_gp(design: Design, model: CovModel, seed: Seed, replicate: int = 0) -> Dataset:
    """
    Exact draw x = L z with L L' = V_n.

    Raises:
        FactorizationError: If V_n is numerically not PD on the design.
    """
    lower = factorize(build_dense(design, model)).lower
    return Dataset(design, lower @ _normals(design, seed, replicate))


def sample_ou_markov(
    design: Design, theta: float, sigma2: float, seed: Seed, replicate: int = 0
) -> Dataset:
    """
    OU draw by the Markov recursion
    X(t_k) = e^{-θΔ_k} X(t_{k-1}) + σ sqrt(1 - e^{-2θΔ_k}) W_k.
    """
    if not (theta > 0 and sigma2 > 0):
        raise DomainError("theta and sigma2 must be positive")
    z = _normals(design, seed, replicate)
    rho = np.exp(-theta * design.gaps)
    scale = np.sqrt(sigma2 * -np.expm1(-2.0 * theta * design.gaps))
    x = np.empty(design.n)
    x[0] = math.sqrt(sigma2) * z[0]
    for k in range(1, design.n):
        x[k] = rho[k - 1] * x[k - 1] + scale[k - 1] * z[k]
    return Dataset(design, x)


def whiten_ou(data: Dataset, theta0: float, sigma2_0: float) -> np.ndarray:
    """The n - 1 standardized one-step innovations W_k; i.i.d. N(0, 1) under the truth."""
    if data.n < 2:
        raise DesignError("whitening needs at least two locations")
    gaps = data.design.gaps
    x = data.x
    innovation = x[1:] - np.exp(-theta0 * gaps) * x[:-1]
    return innovation / np.sqrt(sigma2_0 * -np.expm1(-2.0 * theta0 * gaps))
