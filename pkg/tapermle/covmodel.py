"""
Covariance models, compactly supported tapers and spectral diagnostics.

This module provides:
- Exponential and Matérn covariances and their theta-derivatives
- Wendland tapers and the tapered (Hadamard) covariance
- Spectral densities of the models, the tapers and the tapered covariance
- Numeric checks of the taper conditions (A2), (A3) and of the tapered spectral tail decay

Spectral convention: K(h) = ∫ exp(iλh) f(λ) dλ, so ∫ f = sigma2 and
f(λ) = (1/π) ∫_0^∞ K(h) cos(λh) dh.
"""

import dataclasses
import math
from enum import Enum
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Polynomial
from numpy.typing import ArrayLike
from scipy import integrate, optimize, stats
from scipy import special as sps

from tapermle.errors import DiagnosticError, DomainError
from tapermle.special import bessel_k, gamma_fn

# Above this value of λγ the taper transform switches from quadrature to the
# exact boundary expansion of the polynomial.
TAIL_SWITCH = 10.0
QUAD_ABS_TOL = 1e-9


class CovFamily(str, Enum):
    """Covariance families."""

    EXPONENTIAL = "exponential"
    MATERN = "matern"


class TaperFamily(str, Enum):
    """Compactly supported correlation tapers."""

    WENDLAND1 = "wendland1"
    WENDLAND2 = "wendland2"
    NONE = "none"

    @classmethod
    def parse(cls, value: "str | TaperFamily") -> "TaperFamily":
        """Accept the enum, its value, or the long names WendlandOne/WendlandTwo."""
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {"wendlandone": "wendland1", "wendlandtwo": "wendland2", "null": "none"}
        try:
            return cls(aliases.get(key, key))
        except ValueError as e:
            raise DomainError(f"unknown taper family '{value}'") from e


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be positive and finite, got {value}")
    return value


@dataclasses.dataclass(frozen=True)
class CovModel:
    """Stationary isotropic covariance (family, sigma2, theta, nu)."""

    family: CovFamily
    sigma2: float
    theta: float
    nu: float = 0.5

    def __post_init__(self):
        try:
            family = CovFamily(str(getattr(self.family, "value", self.family)).lower())
        except ValueError as e:
            raise DomainError(f"unknown covariance family '{self.family}'") from e
        object.__setattr__(self, "family", family)
        for name in ("sigma2", "theta", "nu"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))
        if family is CovFamily.EXPONENTIAL and self.nu != 0.5:
            raise DomainError("exponential family requires nu = 1/2")

    @classmethod
    def exponential(cls, sigma2: float = 1.0, theta: float = 1.0) -> "CovModel":
        return cls(CovFamily.EXPONENTIAL, sigma2, theta, 0.5)

    @classmethod
    def matern(cls, sigma2: float, theta: float, nu: float) -> "CovModel":
        return cls(CovFamily.MATERN, sigma2, theta, nu)

    @property
    def microergodic(self) -> float:
        """sigma2 * theta^(2 nu)."""
        return self.sigma2 * self.theta ** (2.0 * self.nu)

    def with_params(
        self, *, theta: Optional[float] = None, sigma2: Optional[float] = None
    ) -> "CovModel":
        return dataclasses.replace(
            self,
            theta=self.theta if theta is None else theta,
            sigma2=self.sigma2 if sigma2 is None else sigma2,
        )

    def correlation(self) -> "CovModel":
        """The unit-variance model with the same theta and nu."""
        return self.with_params(sigma2=1.0)

    def matched(self, theta: float) -> "CovModel":
        """Model at another theta sharing this model's microergodic value."""
        theta = _positive("theta", theta)
        return self.with_params(theta=theta, sigma2=self.microergodic / theta ** (2.0 * self.nu))

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "sigma2": self.sigma2,
            "theta": self.theta,
            "nu": self.nu,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "CovModel":
        family = str(record["family"]).lower()
        nu = record.get("nu")
        if family == CovFamily.EXPONENTIAL.value and nu is None:
            nu = 0.5
        if nu is None:
            raise DomainError("matern model requires nu")
        return cls(family, record["sigma2"], record["theta"], nu)


@dataclasses.dataclass(frozen=True)
class TaperSpec:
    """Compactly supported correlation taper with range gamma."""

    family: TaperFamily = TaperFamily.NONE
    gamma: float = math.inf

    def __post_init__(self):
        family = TaperFamily.parse(self.family)
        object.__setattr__(self, "family", family)
        gamma = float(self.gamma)
        if family is TaperFamily.NONE:
            if not gamma > 0:
                raise DomainError("gamma must be positive")
        else:
            gamma = _positive("gamma", gamma)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def none(cls) -> "TaperSpec":
        return cls(TaperFamily.NONE)

    @classmethod
    def wendland1(cls, gamma: float) -> "TaperSpec":
        return cls(TaperFamily.WENDLAND1, gamma)

    @classmethod
    def wendland2(cls, gamma: float) -> "TaperSpec":
        return cls(TaperFamily.WENDLAND2, gamma)

    @property
    def is_identity(self) -> bool:
        return self.family is TaperFamily.NONE

    def to_dict(self) -> dict:
        return {
            "taper_family": self.family.value,
            "gamma": self.gamma if math.isfinite(self.gamma) else None,
        }


def _lags(h: ArrayLike) -> np.ndarray:
    arr = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("lags must be finite and nonnegative")
    return arr


def _out(values: np.ndarray, like: np.ndarray) -> float | np.ndarray:
    return float(values) if like.ndim == 0 else values


def _matern_norm(nu: float) -> float:
    return 1.0 / (gamma_fn(nu) * 2.0 ** (nu - 1.0))


def cov(model: CovModel, h: ArrayLike) -> float | np.ndarray:
    """
    Covariance K(h) of the model at lag(s) h.

    cov(model, 0) is sigma2, the h -> 0 limit of the Matérn form. Lags where
    K_nu underflows give exactly 0.
    """
    arr = _lags(h)
    if model.family is CovFamily.EXPONENTIAL:
        return _out(model.sigma2 * np.exp(-model.theta * arr), arr)

    x = np.atleast_1d(model.theta * arr)
    out = np.full(x.shape, model.sigma2)
    pos = x > 0
    if np.any(pos):
        xp = x[pos]
        kv = bessel_k(model.nu, xp)
        with np.errstate(over="ignore", invalid="ignore"):
            val = model.sigma2 * _matern_norm(model.nu) * xp**model.nu * kv
        # K_nu overflows only next to the origin, where the limit is sigma2
        out[pos] = np.where(np.isinf(kv), model.sigma2, val)
    return _out(out.reshape(arr.shape), arr)


def dcov_dtheta(model: CovModel, h: ArrayLike) -> float | np.ndarray:
    """
    Analytic derivative ∂K/∂θ.

    Uses d/dx[x^ν K_ν(x)] = -x^ν K_{ν-1}(x), which gives
    ∂K/∂θ = -(sigma2 c / θ) x^{ν+1} K_{|ν-1|}(x) with x = θh.
    """
    arr = _lags(h)
    if model.family is CovFamily.EXPONENTIAL:
        return _out(-model.sigma2 * arr * np.exp(-model.theta * arr), arr)

    x = np.atleast_1d(model.theta * arr)
    out = np.zeros(x.shape)
    pos = x > 0
    if np.any(pos):
        xp = x[pos]
        # order may be 0 (nu = 1), outside BesselOrder's domain
        kv = sps.kv(abs(model.nu - 1.0), xp)
        scale = model.sigma2 * _matern_norm(model.nu) / model.theta
        with np.errstate(over="ignore", invalid="ignore"):
            val = -scale * xp ** (model.nu + 1.0) * kv
        out[pos] = np.where(np.isfinite(val), val, 0.0)
    return _out(out.reshape(arr.shape), arr)


def taper_value(taper: TaperSpec, h: ArrayLike) -> float | np.ndarray:
    """Wendland taper K_tap(h); exactly 0 for h >= gamma, 1 everywhere for family none."""
    arr = _lags(h)
    if taper.is_identity:
        return _out(np.ones_like(arr), arr)
    r = arr / taper.gamma
    one = np.clip(1.0 - r, 0.0, None)
    if taper.family is TaperFamily.WENDLAND1:
        val = one**4 * (1.0 + 4.0 * r)
    else:
        val = one**6 * (1.0 + 6.0 * r + 35.0 * r**2 / 3.0)
    return _out(val, arr)


def taper_derivative(taper: TaperSpec, h: ArrayLike) -> float | np.ndarray:
    """Analytic K_tap'(h)."""
    arr = _lags(h)
    if taper.is_identity:
        return _out(np.zeros_like(arr), arr)
    r = arr / taper.gamma
    one = np.clip(1.0 - r, 0.0, None)
    if taper.family is TaperFamily.WENDLAND1:
        val = -20.0 / taper.gamma * r * one**3
    else:
        val = -56.0 / (3.0 * taper.gamma) * r * one**5 * (1.0 + 5.0 * r)
    return _out(val, arr)


def taper_lipschitz(taper: TaperSpec) -> float:
    """max |K_tap'| over the support."""
    if taper.is_identity:
        return 0.0
    res = optimize.minimize_scalar(
        lambda h: -abs(taper_derivative(taper, h)),
        bounds=(0.0, taper.gamma),
        method="bounded",
        options={"xatol": 1e-12 * taper.gamma},
    )
    return float(-res.fun)


def tapered_cov(model: CovModel, taper: TaperSpec, h: ArrayLike) -> float | np.ndarray:
    """K(h) K_tap(h), bit-exact zero for h >= gamma."""
    return cov(model, h) * taper_value(taper, h)


def check_a2_slope(taper: TaperSpec) -> float:
    """Constant c of K_tap'(h) = c h + o(h)."""
    if taper.family is TaperFamily.WENDLAND1:
        return -20.0 / taper.gamma**2
    if taper.family is TaperFamily.WENDLAND2:
        return -56.0 / (3.0 * taper.gamma**2)
    raise DiagnosticError("(A2) slope is defined only for Wendland tapers")


@dataclasses.dataclass(frozen=True)
class SpectralDensity:
    """Matérn spectral density sigma2 c θ^{2ν} / (θ² + λ²)^{ν+1/2}."""

    sigma2: float
    theta: float
    nu: float

    @property
    def c(self) -> float:
        return gamma_fn(self.nu + 0.5) / (gamma_fn(self.nu) * math.sqrt(math.pi))

    def __call__(self, lam: ArrayLike) -> float | np.ndarray:
        arr = np.asarray(lam, dtype=float)
        val = (
            self.sigma2
            * self.c
            * self.theta ** (2.0 * self.nu)
            / (self.theta**2 + arr**2) ** (self.nu + 0.5)
        )
        return _out(val, arr)

    def total(self) -> float:
        """∫ f over the real line: quadrature on [0, L] plus the analytic tail."""
        reach = 1e3 * self.theta
        body, _ = integrate.quad(self, 0.0, reach, epsabs=1e-13, epsrel=1e-12, limit=400)
        # ∫_L^∞ λ^{-2ν-1} dλ to leading order
        tail = self.sigma2 * self.c * self.theta ** (2 * self.nu) * reach ** (-2 * self.nu)
        tail /= 2.0 * self.nu
        return 2.0 * (body + tail)


def matern_spectral(model: CovModel) -> SpectralDensity:
    return SpectralDensity(model.sigma2, model.theta, model.nu)


def _cosine_transform(func: Callable[[float], float], upper: float, lam: float) -> float:
    """(1/π) ∫_0^upper func(h) cos(λh) dh by adaptive quadrature."""
    kwargs = {"epsabs": 1e-15, "epsrel": 1e-12, "limit": 400, "full_output": 1}
    if lam == 0.0:
        res = integrate.quad(func, 0.0, upper, **kwargs)
    else:
        res = integrate.quad(func, 0.0, upper, weight="cos", wvar=lam, **kwargs)
    value, abserr = res[0], res[1]
    if not math.isfinite(value) or abserr > QUAD_ABS_TOL:
        raise DiagnosticError(f"cosine transform failed at λ={lam} (error {abserr:.3g})")
    return value / math.pi


def _wendland_poly(taper: TaperSpec, at_support_end: bool = False) -> Polynomial:
    """Taper polynomial in h, or in s = gamma - h when at_support_end."""
    g = taper.gamma
    if at_support_end:
        one, r = Polynomial([0.0, 1.0 / g]), Polynomial([1.0, -1.0 / g])
    else:
        one, r = Polynomial([1.0, -1.0 / g]), Polynomial([0.0, 1.0 / g])
    if taper.family is TaperFamily.WENDLAND1:
        return one**4 * (1.0 + 4.0 * r)
    return one**6 * (1.0 + 6.0 * r + (35.0 / 3.0) * r**2)


def _polynomial_cosine_transform(taper: TaperSpec, lam: float) -> float:
    """
    Exact (1/π) ∫_0^γ p(h) cos(λh) dh for the taper polynomial p.

    The antiderivative of p(h) e^{iλh} is e^{iλh} Σ_j (-1)^j p^(j)(h) / (iλ)^{j+1}.
    The expansion at h = γ is built in s = γ - h so the vanishing low
    derivatives there are exact zeros.
    """
    p_start = _wendland_poly(taper)
    p_end = _wendland_poly(taper, at_support_end=True)
    iw = 1j * lam
    edge = np.exp(iw * taper.gamma)
    total = 0j
    for j in range(p_start.degree() + 1):
        d_start = (p_start.deriv(j) if j else p_start)(0.0)
        d_end = (-1) ** j * (p_end.deriv(j) if j else p_end)(0.0)
        total += (-1) ** j / iw ** (j + 1) * (edge * d_end - d_start)
    return total.real / math.pi


def _grid(lambda_grid: ArrayLike) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    if not np.all(np.isfinite(lam)):
        raise DomainError("frequency grid must be finite")
    return lam


def taper_spectral(taper: TaperSpec, lambda_grid: ArrayLike) -> np.ndarray:
    """
    Spectral density f_tap(λ) = (1/π) ∫_0^γ K_tap(h) cos(λh) dh on a grid.

    Args:
        taper (TaperSpec): Wendland taper.
        lambda_grid (ArrayLike): Frequencies.

    Returns:
        np.ndarray: Density values, unit total mass.

    Raises:
        DiagnosticError: For family none or quadrature failure.
    """
    if taper.is_identity:
        raise DiagnosticError("taper 'none' has no integrable spectral density")
    lam = np.abs(_grid(lambda_grid))
    out = np.empty(lam.shape)
    for i, value in enumerate(lam):
        if value * taper.gamma < TAIL_SWITCH:
            out[i] = _cosine_transform(lambda h: taper_value(taper, h), taper.gamma, value)
        else:
            out[i] = _polynomial_cosine_transform(taper, value)
    return out


def tapered_spectral(model: CovModel, taper: TaperSpec, lambda_grid: ArrayLike) -> np.ndarray:
    """
    Spectral density of K·K_tap by its cosine transform.

    This is the convolution ∫ f(x) f_tap(λ - x) dx evaluated on the lag side.
    """
    lam = np.abs(_grid(lambda_grid))
    if taper.is_identity:
        return np.asarray(matern_spectral(model)(lam), dtype=float)
    return np.array(
        [
            _cosine_transform(lambda h: tapered_cov(model, taper, h), taper.gamma, value)
            for value in lam
        ]
    )


def convolved_spectral(model: CovModel, taper: TaperSpec, lambda_grid: ArrayLike) -> np.ndarray:
    """Spectral density of K·K_tap by literal numeric convolution f * f_tap."""
    lam = _grid(lambda_grid)
    if taper.is_identity:
        return np.asarray(matern_spectral(model)(np.abs(lam)), dtype=float)
    f = matern_spectral(model)
    out = np.empty(lam.shape)
    for i, value in enumerate(lam):

        def integrand(x, value=value):
            return f(x) * taper_spectral(taper, value - x)[0]

        reach = 50.0 * max(model.theta, 1.0 / taper.gamma) + abs(value)
        total = 0.0
        for lo, hi, points in (
            (-np.inf, -reach, None),
            (-reach, reach, sorted({0.0, float(value)})),
            (reach, np.inf, None),
        ):
            res = integrate.quad(integrand, lo, hi, points=points, epsabs=1e-12, limit=400)
            if not math.isfinite(res[0]):
                raise DiagnosticError(f"convolution quadrature failed at λ={value}")
            total += res[0]
        out[i] = total
    return out


def fit_decay_exponent(lambdas: ArrayLike, values: ArrayLike) -> tuple[float, float]:
    """
    Least-squares fit of |values| ~ M λ^{-p} on log-log axes.

    Returns:
        tuple[float, float]: (p, M).
    """
    lam = np.asarray(lambdas, dtype=float)
    mag = np.abs(np.asarray(values, dtype=float))
    if lam.size < 3 or np.any(lam <= 0) or np.any(~np.isfinite(mag)) or np.any(mag <= 0):
        raise DiagnosticError("decay fit needs at least three positive finite points")
    fit = stats.linregress(np.log(lam), np.log(mag))
    return float(-fit.slope), float(np.exp(fit.intercept))


@dataclasses.dataclass(frozen=True)
class A3Report:
    """Empirical check of f_tap(λ) <= M / (1 + λ²)^{ν + 1/2 + ε}."""

    satisfied: bool
    fitted_epsilon: float
    fitted_M: float
    threshold: float
    decay: float
    lambda_lo: float
    lambda_hi: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def check_a3(
    taper: TaperSpec, nu: float, lambda_max: float = 1e4, n_points: int = 24
) -> A3Report:
    """
    Fit the tail decay of f_tap and compare ε with max{1/2, 1 - ν}.

    The grid is log-spaced from max(100, 20/γ), past the first oscillations
    of the transform, to max(lambda_max, 10 x start).
    """
    nu = _positive("nu", nu)
    if not lambda_max > 10:
        raise DomainError("lambda_max must exceed 10")
    if taper.is_identity:
        raise DiagnosticError("(A3) needs a compactly supported taper")
    lo = max(1e2, 2.0 * TAIL_SWITCH / taper.gamma)
    hi = max(float(lambda_max), 10.0 * lo)
    lam = np.geomspace(lo, hi, n_points)
    values = taper_spectral(taper, lam)
    decay, _ = fit_decay_exponent(lam, values)
    exponent = decay / 2.0
    epsilon = exponent - nu - 0.5
    fitted_m = float(np.max(values * (1.0 + lam**2) ** exponent))
    threshold = max(0.5, 1.0 - nu)
    return A3Report(
        satisfied=bool(epsilon > threshold),
        fitted_epsilon=float(epsilon),
        fitted_M=fitted_m,
        threshold=threshold,
        decay=float(decay),
        lambda_lo=float(lo),
        lambda_hi=float(hi),
    )


def lemma4_ratio(
    model: CovModel, taper: TaperSpec, lambda_grid: ArrayLike, method: str = "cosine"
) -> np.ndarray:
    """
    Relative spectral perturbation (f̃(λ) - f(λ)) / f(λ) caused by tapering.

    Args:
        method (str): "cosine" transforms K·K_tap directly, "convolution"
            integrates f(x) f_tap(λ - x) over the real line.
    """
    lam = _grid(lambda_grid)
    if taper.is_identity:
        return np.zeros(lam.shape)
    if method == "cosine":
        tilde = tapered_spectral(model, taper, lam)
    elif method == "convolution":
        tilde = convolved_spectral(model, taper, lam)
    else:
        raise DomainError(f"unknown method '{method}'")
    base = np.asarray(matern_spectral(model)(np.abs(lam)), dtype=float)
    return (tilde - base) / base


@dataclasses.dataclass(frozen=True)
class Lemma4Report:
    """Tail ratios and the fitted decay exponent r; satisfied when r > 1."""

    lambdas: np.ndarray
    ratios: np.ndarray
    fitted_r: float
    satisfied: bool

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas,
            "ratios": self.ratios,
            "fitted_r": self.fitted_r,
            "satisfied": self.satisfied,
        }


def lemma4_report(
    model: CovModel, taper: TaperSpec, lambda_grid: Optional[ArrayLike] = None
) -> Lemma4Report:
    """Evaluate lemma4_ratio on a tail grid and fit its decay."""
    if taper.is_identity:
        raise DiagnosticError("ratio is identically zero without a taper")
    if lambda_grid is None:
        lo = max(2.0 * TAIL_SWITCH / taper.gamma, 10.0 * model.theta)
        lambda_grid = np.geomspace(lo, 20.0 * lo, 12)
    lam = _grid(lambda_grid)
    ratios = lemma4_ratio(model, taper, lam)
    r, _ = fit_decay_exponent(lam, ratios)
    return Lemma4Report(lambdas=lam, ratios=ratios, fitted_r=r, satisfied=bool(r > 1.0))
