"""
Exact and tapered Gaussian log-likelihoods and their maximizers.

This module provides:
- exact_loglik / tapered_loglik (with the OU fast path for the exponential model)
- theta- and sigma2-scores of both likelihoods
- the closed-form sigma2 estimator at a fixed theta (Matérn and exponential)
- the boxed (theta, sigma2) maximizer for the exponential model via the
  theta-profile of the closed-form sigma2
"""

import dataclasses
import math

import numpy as np
from scipy import optimize

from tapermle.covmodel import CovFamily, CovModel, TaperSpec, dcov_dtheta, taper_value
from tapermle.data import Dataset
from tapermle.errors import DomainError, FactorizationError
from tapermle.linalg import (
    Factor,
    OuPrecision,
    DenseSpd,
    build_dense,
    build_tapered,
    factorize,
    ou_precision,
)

LOG_2PI = math.log(2.0 * math.pi)
GRID_POINTS = 64


@dataclasses.dataclass(frozen=True)
class ParamBox:
    """Compact parameter box J = [a, b] x [w, v]."""

    theta_range: tuple[float, float]
    sigma2_range: tuple[float, float]

    def __post_init__(self):
        for name, (lo, hi) in (("theta", self.theta_range), ("sigma2", self.sigma2_range)):
            lo, hi = float(lo), float(hi)
            if not (0 < lo <= hi < math.inf):
                raise DomainError(f"{name} range must satisfy 0 < lower <= upper, got {lo}, {hi}")
        object.__setattr__(self, "theta_range", tuple(map(float, self.theta_range)))
        object.__setattr__(self, "sigma2_range", tuple(map(float, self.sigma2_range)))

    @classmethod
    def from_bounds(cls, a: float, b: float, w: float, v: float) -> "ParamBox":
        return cls((a, b), (w, v))

    def contains(self, theta: float, sigma2: float) -> bool:
        (a, b), (w, v) = self.theta_range, self.sigma2_range
        return a <= theta <= b and w <= sigma2 <= v

    def to_dict(self) -> dict:
        (a, b), (w, v) = self.theta_range, self.sigma2_range
        return {"a": a, "b": b, "w": w, "v": v}


@dataclasses.dataclass(frozen=True)
class FitResult:
    """Estimated parameters and the log-likelihood at the optimum."""

    theta_hat: float
    sigma2_hat: float
    loglik: float
    tapered: bool
    n: int
    converged: bool
    evaluations: int
    nu: float = 0.5

    @property
    def microergodic(self) -> float:
        """sigma2_hat * theta_hat^(2 nu), recomputed on access."""
        return self.sigma2_hat * self.theta_hat ** (2.0 * self.nu)

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "sigma2_hat": self.sigma2_hat,
            "microergodic": self.microergodic,
            "loglik": self.loglik,
            "tapered": self.tapered,
            "n": self.n,
            "converged": self.converged,
            "evaluations": self.evaluations,
            "nu": self.nu,
        }


def _gaussian_loglik(n: int, log_det: float, quad: float) -> float:
    return -0.5 * (n * LOG_2PI + log_det + quad)


def _uses_ou(model: CovModel, n: int) -> bool:
    return model.family is CovFamily.EXPONENTIAL and n >= 2


def _exact_path(data: Dataset, model: CovModel, method: str = "auto") -> Factor | OuPrecision:
    if method == "auto":
        method = "ou" if _uses_ou(model, data.n) else "dense"
    if method == "ou":
        if model.family is not CovFamily.EXPONENTIAL:
            raise DomainError("the OU path needs the exponential family")
        return ou_precision(data.design, model.theta, model.sigma2)
    if method == "dense":
        return factorize(build_dense(data.design, model))
    raise DomainError(f"unknown likelihood method '{method}'")


def _tapered_path(
    data: Dataset, model: CovModel, taper: TaperSpec, dense: bool = False
) -> Factor | OuPrecision:
    if taper.is_identity:
        return _exact_path(data, model)
    matrix = build_tapered(data.design, model, taper)
    return factorize(DenseSpd(matrix.to_dense()) if dense else matrix)


def exact_loglik(
    data: Dataset, model: CovModel, *, method: str = "auto", strict: bool = False
) -> float:
    """
    Gaussian log-likelihood of the data under the model.

    Args:
        method (str): "auto" (OU precision for the exponential family, dense
            Cholesky otherwise), "ou" or "dense".
        strict (bool): Raise on factorization failure instead of returning -inf.

    Returns:
        float: l_n, or -inf when the covariance is numerically not PD.
    """
    try:
        path = _exact_path(data, model, method)
    except FactorizationError:
        if strict:
            raise
        return -math.inf
    return _gaussian_loglik(data.n, path.log_det, path.quad_form(data.x))


def tapered_loglik(
    data: Dataset,
    model: CovModel,
    taper: TaperSpec,
    *,
    dense: bool = False,
    strict: bool = False,
) -> float:
    """
    Tapered log-likelihood through the banded factorization.

    The identity taper delegates to exact_loglik, so both agree bit for bit.
    dense=True factorizes the same tapered matrix densely.
    """
    try:
        path = _tapered_path(data, model, taper, dense)
    except FactorizationError:
        if strict:
            raise
        return -math.inf
    return _gaussian_loglik(data.n, path.log_det, path.quad_form(data.x))


def _lag_matrix(data: Dataset) -> np.ndarray:
    t = data.t
    return np.abs(t[:, None] - t[None, :])


def _theta_score(factor: Factor, dmat: np.ndarray, x: np.ndarray) -> float:
    # ½(-tr{V⁻¹ ∂V} + x'V⁻¹ ∂V V⁻¹x)
    alpha = factor.solve(x)
    trace = float(np.trace(factor.solve(dmat)))
    return 0.5 * (-trace + float(alpha @ dmat @ alpha))


def dloglik_dtheta(data: Dataset, model: CovModel) -> float:
    """∂l_n/∂θ with the analytic ∂V/∂θ."""
    if data.n == 1:
        return 0.0
    factor = factorize(build_dense(data.design, model))
    return _theta_score(factor, dcov_dtheta(model, _lag_matrix(data)), data.x)


def tapered_dloglik_dtheta(data: Dataset, model: CovModel, taper: TaperSpec) -> float:
    """∂l_{n,tap}/∂θ with ∂Ṽ/∂θ = (∂V/∂θ) ∘ T_n."""
    if taper.is_identity:
        return dloglik_dtheta(data, model)
    if data.n == 1:
        return 0.0
    factor = factorize(build_tapered(data.design, model, taper))
    lags = _lag_matrix(data)
    dmat = dcov_dtheta(model, lags) * taper_value(taper, lags)
    return _theta_score(factor, dmat, data.x)


def _correlation_path(data: Dataset, model: CovModel, taper: TaperSpec) -> Factor | OuPrecision:
    return _tapered_path(data, model.correlation(), taper)


def dloglik_dsigma2(data: Dataset, model: CovModel, taper: TaperSpec | None = None) -> float:
    """
    σ²-score -n/(2σ²) + x'R⁻¹x/(2σ⁴), R the (tapered) correlation matrix.

    Vanishes exactly at σ² = x'R⁻¹x / n.
    """
    taper = taper or TaperSpec.none()
    q = _correlation_path(data, model, taper).quad_form(data.x)
    s2 = model.sigma2
    return -data.n / (2.0 * s2) + q / (2.0 * s2 * s2)


def tapered_dloglik_dsigma2(data: Dataset, model: CovModel, taper: TaperSpec) -> float:
    return dloglik_dsigma2(data, model, taper)


def _unit_model(theta: float, nu: float) -> CovModel:
    if nu == 0.5:
        return CovModel.exponential(1.0, theta)
    return CovModel.matern(1.0, theta, nu)


def sigma2_mle_fixed_theta(
    data: Dataset, theta1: float, nu: float, taper: TaperSpec | None = None
) -> FitResult:
    """
    Closed-form σ̂² = x'R⁻¹x / n at a fixed θ₁ (tapered R with a taper).

    Raises:
        FactorizationError: If the correlation matrix is not PD.
    """
    taper = taper or TaperSpec.none()
    path = _correlation_path(data, _unit_model(theta1, nu), taper)
    n = data.n
    q = path.quad_form(data.x)
    if not q > 0:
        raise DomainError("closed-form variance needs data that is not identically zero")
    s2 = q / n
    loglik = -0.5 * (n * LOG_2PI + n * math.log(s2) + path.log_det + n)
    return FitResult(
        theta_hat=float(theta1),
        sigma2_hat=s2,
        loglik=loglik,
        tapered=not taper.is_identity,
        n=n,
        converged=True,
        evaluations=1,
        nu=float(nu),
    )


def profile_loglik_exponential(
    data: Dataset, theta: float, box: ParamBox, taper: TaperSpec | None = None
) -> tuple[float, float]:
    """
    l(θ, σ̂²(θ)) with σ̂²(θ) = x'R_θ⁻¹x / n clamped into [w, v].

    Returns:
        tuple[float, float]: (profile log-likelihood, σ̂²(θ)).
    """
    taper = taper or TaperSpec.none()
    path = _correlation_path(data, CovModel.exponential(1.0, theta), taper)
    n = data.n
    q = path.quad_form(data.x)
    s2 = float(np.clip(q / n, *box.sigma2_range))
    return -0.5 * (n * LOG_2PI + n * math.log(s2) + path.log_det + q / s2), s2


def joint_mle_exponential(
    data: Dataset,
    box: ParamBox,
    taper: TaperSpec | None = None,
    grid_points: int = GRID_POINTS,
) -> FitResult:
    """
    Maximize the (tapered) exponential log-likelihood over J.

    A log-spaced scan of the θ-profile over [a, b] locates the best grid
    cell; golden-section search refines it inside its bracketing neighbours
    (bounded Brent search at the box edges).
    """
    taper = taper or TaperSpec.none()
    evaluations = 0

    def objective(theta: float) -> float:
        nonlocal evaluations
        evaluations += 1
        try:
            value, _ = profile_loglik_exponential(data, float(theta), box, taper)
        except FactorizationError:
            return math.inf
        return -value

    a, b = box.theta_range
    thetas = np.array([a]) if a == b else np.geomspace(a, b, grid_points)
    values = np.array([objective(th) for th in thetas])
    tapered = not taper.is_identity
    if not np.any(np.isfinite(values)):
        return FitResult(a, box.sigma2_range[0], -math.inf, tapered, data.n, False, evaluations)

    k = int(np.argmin(values))
    best_theta, best_value = float(thetas[k]), float(values[k])
    if thetas.size > 1:
        lo, hi = float(thetas[max(k - 1, 0)]), float(thetas[min(k + 1, thetas.size - 1)])
        interior = 0 < k < thetas.size - 1 and values[k] < min(values[k - 1], values[k + 1])
        if interior:
            res = optimize.minimize_scalar(
                objective, bracket=(lo, best_theta, hi), method="golden", tol=1.5e-8
            )
        else:
            res = optimize.minimize_scalar(
                objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10 * hi}
            )
        if np.isfinite(res.fun) and res.fun < best_value and a <= res.x <= b:
            best_theta, best_value = float(res.x), float(res.fun)

    loglik, s2 = profile_loglik_exponential(data, best_theta, box, taper)
    evaluations += 1
    return FitResult(
        theta_hat=best_theta,
        sigma2_hat=s2,
        loglik=loglik,
        tapered=tapered,
        n=data.n,
        converged=bool(math.isfinite(loglik)),
        evaluations=evaluations,
    )
