"""
Monte Carlo harness for the fixed-domain limit results.

This module provides:
- mc_microergodic: replicated estimation of the microergodic parameter and
  its standardized statistics √n(m̂ - σ₀²θ₀^{2ν}), exact and tapered
- gap_trace: likelihood and score gaps l_tap - l over a dyadic n grid
- trace_gap_theorem3 / trace_gap_series: trace(V₀V₁⁻¹) - n
- sigma2_proximity: n·|σ̂²_tap - σ̂²| at a fixed θ₁
- normality_check: one-sample KS test against N(0, target_var)

Replicates run through tapermle.pool and are gathered in replicate order, so
every statistic is a pure function of the configuration and the seed.
"""

import dataclasses
import math
import time
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from tapermle.covmodel import A3Report, CovFamily, CovModel, TaperSpec, check_a3
from tapermle.data import Dataset, Design
from tapermle.errors import (
    ConfigError,
    ConvergenceError,
    DiagnosticError,
    DomainError,
    TaperMleError,
)
from tapermle.likelihood import (
    FitResult,
    ParamBox,
    dloglik_dsigma2,
    dloglik_dtheta,
    exact_loglik,
    joint_mle_exponential,
    sigma2_mle_fixed_theta,
    tapered_dloglik_dsigma2,
    tapered_dloglik_dtheta,
    tapered_loglik,
)
from tapermle.linalg import build_dense, build_tapered, factorize
from tapermle.pool import run_ordered
from tapermle.simulate import (
    DesignKind,
    Seed,
    make_design,
    regular_design,
    sample_gp,
    sample_ou_markov,
)
from tapermle.utils import msg

MIN_NORMALITY_SAMPLE = 30
MAX_FAILURE_FRACTION = 0.01
# Dense n x n solves above this size are skipped in MC summaries.
EXACT_MOMENTS_MAX_N = 4096


def simulate_truth(design: Design, truth: CovModel, seed: Seed, replicate: int) -> Dataset:
    """Exact draw from the truth; the OU recursion for the exponential family."""
    if truth.family is CovFamily.EXPONENTIAL:
        return sample_ou_markov(design, truth.theta, truth.sigma2, seed, replicate)
    return sample_gp(design, truth, seed, replicate)


def _check_n_list(n_list: Sequence[int], key: str = "mc.n_list") -> tuple[int, ...]:
    n_list = tuple(int(n) for n in n_list)
    if not n_list:
        raise ConfigError(key, "needs at least one sample size")
    if n_list[0] < 2:
        raise ConfigError(key, f"sample sizes must be >= 2, got {n_list[0]}")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError(key, "sample sizes must be strictly increasing")
    return n_list


@dataclasses.dataclass(frozen=True)
class NormalityReport:
    ks_stat: float
    ks_p: float
    mean: float
    var: float
    var_ratio: float
    count: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def normality_check(z: Iterable[float], target_var: float) -> NormalityReport:
    """
    One-sample Kolmogorov-Smirnov test of z against N(0, target_var).

    The p-value uses the asymptotic Kolmogorov distribution.

    Raises:
        DiagnosticError: Fewer than 30 values, or zero sample variance.
    """
    z = np.asarray(list(z) if not isinstance(z, np.ndarray) else z, dtype=float)
    if not target_var > 0:
        raise DomainError(f"target variance must be positive, got {target_var}")
    if z.size < MIN_NORMALITY_SAMPLE:
        raise DiagnosticError(f"normality check needs {MIN_NORMALITY_SAMPLE} values, got {z.size}")
    if not np.all(np.isfinite(z)):
        raise DiagnosticError("normality check got non-finite values")
    var = float(np.var(z, ddof=1))
    if var == 0.0:
        raise DiagnosticError("degenerate sample: zero variance")
    res = stats.kstest(z, "norm", args=(0.0, math.sqrt(target_var)), method="asymp")
    return NormalityReport(
        ks_stat=float(res.statistic),
        ks_p=float(res.pvalue),
        mean=float(np.mean(z)),
        var=var,
        var_ratio=var / target_var,
        count=int(z.size),
    )


@dataclasses.dataclass(frozen=True)
class ZMoments:
    """Exact mean and variance of the standardized statistic at one n."""

    n: int
    tapered: bool
    mean: float
    var: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def fixed_theta_moments(
    truth: CovModel, theta1: float, taper: TaperSpec, design: Design
) -> ZMoments:
    """
    Finite-n moments of Z = √n(σ̂²θ₁^{2ν} - σ₀²θ₀^{2ν}) under the truth.

    σ̂² = x'R⁻¹x / n is a Gaussian quadratic form, so with M = R⁻¹V₀
    E[Z] = √n(θ₁^{2ν} tr(M) / n - m₀) and Var[Z] = 2θ₁^{4ν} tr(M²) / n.
    R is the (tapered) correlation matrix at θ₁. A nonzero E[Z] is the
    finite-sample bias; it vanishes like n^{-1/2}.
    """
    unit = truth.correlation().with_params(theta=float(theta1))
    if taper.is_identity:
        matrix = build_dense(design, unit)
    else:
        matrix = build_tapered(design, unit, taper)
    m = factorize(matrix).solve(build_dense(design, truth).entries)
    n = design.n
    scale = float(theta1) ** (2.0 * truth.nu)
    mean = math.sqrt(n) * (scale * float(np.trace(m)) / n - truth.microergodic)
    var = 2.0 * scale**2 * float(np.sum(m * m.T)) / n
    return ZMoments(n=n, tapered=not taper.is_identity, mean=mean, var=var)


@dataclasses.dataclass(frozen=True)
class McConfig:
    """
    One microergodic experiment.

    Exactly one working specification is given: theta1 (closed-form σ² at a
    fixed θ₁, any family) or box (joint exponential MLE over J).
    """

    truth: CovModel
    taper: TaperSpec
    n_list: tuple[int, ...]
    replicates: int
    seed: Seed
    theta1: Optional[float] = None
    box: Optional[ParamBox] = None
    design_kind: DesignKind = DesignKind.REGULAR
    jitter: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "n_list", _check_n_list(self.n_list))
        object.__setattr__(self, "design_kind", DesignKind(self.design_kind))
        if self.replicates < 2:
            raise ConfigError("mc.replicates", f"must be >= 2, got {self.replicates}")
        if (self.theta1 is None) == (self.box is None):
            raise ConfigError("mc.theta1", "give either a fixed theta1 or a parameter box")
        if self.theta1 is not None and not self.theta1 > 0:
            raise ConfigError("mc.theta1", f"must be positive, got {self.theta1}")
        if self.box is not None and self.truth.family is not CovFamily.EXPONENTIAL:
            raise ConfigError("box", "the joint box MLE covers the exponential model only")

    @property
    def estimator(self) -> str:
        return "fixed" if self.theta1 is not None else "joint"

    @property
    def target_microergodic(self) -> float:
        return self.truth.microergodic

    @property
    def target_var(self) -> float:
        return 2.0 * self.truth.microergodic**2

    def check_assumptions(self) -> Optional[A3Report]:
        """(A3) for a tapered Matérn experiment; warns when it does not hold."""
        if self.taper.is_identity or self.truth.family is not CovFamily.MATERN:
            return None
        report = check_a3(self.taper, self.truth.nu)
        if not report.satisfied:
            msg.warning(
                f"(A3) not satisfied for {self.taper.family.value} at nu={self.truth.nu}: "
                f"fitted epsilon {report.fitted_epsilon:.3g} <= {report.threshold:.3g}"
            )
        return report

    def exact_moments(self) -> tuple[ZMoments, ...]:
        """
        fixed_theta_moments for every n, exact and tapered.

        Empty for the joint box MLE and for jittered designs, where the
        design changes with the replicate.
        """
        if self.theta1 is None or self.design_kind is not DesignKind.REGULAR:
            return ()
        out = []
        for n in self.n_list:
            if n > EXACT_MOMENTS_MAX_N:
                continue
            design = regular_design(n)
            for tapered, taper in ((False, TaperSpec.none()), (True, self.taper)):
                moments = fixed_theta_moments(self.truth, self.theta1, taper, design)
                out.append(dataclasses.replace(moments, tapered=tapered))
        return tuple(out)

    def fit(self, data: Dataset, taper: TaperSpec) -> FitResult:
        if self.theta1 is not None:
            return sigma2_mle_fixed_theta(data, self.theta1, self.truth.nu, taper)
        fit = joint_mle_exponential(data, self.box, taper)
        if not fit.converged:
            raise ConvergenceError(f"box MLE found no finite likelihood at n={data.n}")
        return fit

    def to_dict(self) -> dict:
        record = {
            "truth": self.truth.to_dict(),
            "taper": self.taper.to_dict(),
            "estimator": self.estimator,
            "n_list": list(self.n_list),
            "replicates": self.replicates,
            "seed": self.seed.to_dict(),
            "design": {"kind": self.design_kind.value, "jitter": self.jitter},
        }
        if self.theta1 is not None:
            record["theta1"] = self.theta1
        else:
            record["box"] = self.box.to_dict()
        return record


@dataclasses.dataclass(frozen=True, eq=False)
class ZSample:
    """Standardized statistics at one n; NaN marks an excluded replicate."""

    n: int
    tapered: bool
    z: np.ndarray

    @property
    def kept(self) -> np.ndarray:
        return self.z[np.isfinite(self.z)]

    @property
    def failures(self) -> int:
        return int(np.count_nonzero(~np.isfinite(self.z)))


@dataclasses.dataclass(frozen=True, eq=False)
class McSummary:
    config: McConfig
    samples: list[ZSample]
    runtime: float
    a3: Optional[A3Report] = None
    moments: tuple[ZMoments, ...] = ()

    @property
    def target_var(self) -> float:
        return self.config.target_var

    def report(self, sample: ZSample) -> NormalityReport:
        return normality_check(sample.kept, self.target_var)

    def expected(self, sample: ZSample) -> Optional[ZMoments]:
        """Exact moments matching sample, if they were computed."""
        for m in self.moments:
            if m.n == sample.n and m.tapered == sample.tapered:
                return m
        return None

    def moment_check(self, sample: ZSample, sigmas: float = 4.0, var_tol: float = 0.2) -> dict:
        """
        Compare the Monte Carlo mean and variance with the exact moments.

        The mean must lie within sigmas standard errors of E[Z] and the
        variance within ±var_tol of Var[Z].
        """
        exact = self.expected(sample)
        if exact is None:
            raise DiagnosticError(f"no exact moments for n={sample.n} tapered={sample.tapered}")
        z = sample.kept
        if z.size < 2:
            raise DiagnosticError("moment check needs at least two replicates")
        mean, var = float(np.mean(z)), float(np.var(z, ddof=1))
        mean_se = math.sqrt(exact.var / z.size)
        mean_ok = abs(mean - exact.mean) <= sigmas * mean_se
        var_ok = abs(var / exact.var - 1.0) <= var_tol
        return {
            "n": sample.n,
            "tapered": sample.tapered,
            "mean": mean,
            "expected_mean": exact.mean,
            "var": var,
            "expected_var": exact.var,
            "passed": bool(mean_ok and var_ok),
        }

    def sample(self, n: int, tapered: bool) -> ZSample:
        for s in self.samples:
            if s.n == n and s.tapered == tapered:
                return s
        raise KeyError((n, tapered))

    def accept(
        self, var_tol: float = 0.2, mean_tol: Optional[float] = 0.25, ks_alpha: float = 0.01
    ) -> list[dict]:
        """Per-sample acceptance: var within ±var_tol of target, |mean| and KS p bounds."""
        checks = []
        for s in self.samples:
            if s.kept.size < MIN_NORMALITY_SAMPLE:
                checks.append(
                    dict(n=s.n, tapered=s.tapered, passed=False, reason="too few replicates")
                )
                continue
            rep = self.report(s)
            var_ok = abs(rep.var_ratio - 1.0) <= var_tol
            mean_ok = mean_tol is None or abs(rep.mean) <= mean_tol
            ks_ok = rep.ks_p > ks_alpha
            checks.append(
                {
                    "n": s.n,
                    "tapered": s.tapered,
                    "var_ok": var_ok,
                    "mean_ok": mean_ok,
                    "ks_ok": ks_ok,
                    "passed": bool(var_ok and mean_ok and ks_ok),
                }
            )
        return checks

    def z_rows(self) -> Iterable[tuple[int, int, float, bool]]:
        """Rows "n,replicate,z,tapered"; excluded replicates are skipped."""
        for s in self.samples:
            for r, z in enumerate(s.z):
                if np.isfinite(z):
                    yield s.n, r, float(z), s.tapered

    def to_dict(self) -> dict:
        results = []
        for s in self.samples:
            entry = {
                "n": s.n,
                "tapered": s.tapered,
                "kept": int(s.kept.size),
                "failures": s.failures,
            }
            if s.kept.size >= MIN_NORMALITY_SAMPLE:
                entry.update(self.report(s).to_dict())
            else:
                entry.update(
                    mean=float(np.mean(s.kept)),
                    var=float(np.var(s.kept, ddof=1)) if s.kept.size > 1 else None,
                )
            exact = self.expected(s)
            if exact is not None:
                entry.update(expected_mean=exact.mean, expected_var=exact.var)
            results.append(entry)
        record = {"experiment": "microergodic", **self.config.to_dict()}
        record.update(
            target_microergodic=self.config.target_microergodic,
            target_var=self.target_var,
            results=results,
        )
        if self.a3 is not None:
            record["a3"] = self.a3.to_dict()
        record["runtime_s"] = self.runtime
        return record


def mc_microergodic(config: McConfig, threads: int = 1, quiet: bool = False) -> McSummary:
    """
    Simulate from the truth, fit exact and tapered, standardize.

    Replicates whose fit fails are excluded and counted.

    Raises:
        ConvergenceError: If more than 1% of the replicates at some n fail.
    """
    start = time.perf_counter()
    a3 = config.check_assumptions()
    m0 = config.target_microergodic
    untapered = TaperSpec.none()

    def replicate(job: tuple[int, int]) -> tuple[float, float]:
        n, r = job
        out = []
        try:
            design = make_design(config.design_kind, n, config.jitter, config.seed, r)
            data = simulate_truth(design, config.truth, config.seed, r)
        except TaperMleError:
            return math.nan, math.nan
        for taper in (untapered, config.taper):
            if taper.is_identity and out:
                out.append(out[0])
                continue
            try:
                m = config.fit(data, taper).microergodic
                out.append(math.sqrt(n) * (m - m0))
            except TaperMleError:
                out.append(math.nan)
        return out[0], out[1]

    samples = []
    for n in config.n_list:
        jobs = [(n, r) for r in range(config.replicates)]
        pairs = np.array(run_ordered(replicate, jobs, threads=threads, label=f"n={n}", quiet=quiet))
        for col, tapered in ((0, False), (1, True)):
            sample = ZSample(n=n, tapered=tapered, z=pairs[:, col])
            if sample.failures:
                msg.warning(
                    f"n={n} tapered={tapered}: "
                    f"{sample.failures} of {config.replicates} replicates excluded"
                )
            if sample.failures > MAX_FAILURE_FRACTION * config.replicates:
                raise ConvergenceError(
                    f"n={n}: {sample.failures} of {config.replicates} fits failed (limit 1%)"
                )
            samples.append(sample)
    return McSummary(
        config=config,
        samples=samples,
        runtime=time.perf_counter() - start,
        a3=a3,
        moments=config.exact_moments(),
    )


def box_grid(box: ParamBox, points: int = 3) -> list[tuple[float, float]]:
    """points x points log-spaced (θ, σ²) grid over J."""
    thetas = np.geomspace(*box.theta_range, points)
    sigma2s = np.geomspace(*box.sigma2_range, points)
    return [(float(th), float(s2)) for th in thetas for s2 in sigma2s]


def _median_trend(n_list: Sequence[int], medians: np.ndarray) -> tuple[float, float]:
    fit = stats.linregress(np.asarray(n_list, dtype=float), medians)
    return float(fit.slope), float(fit.stderr)


@dataclasses.dataclass(frozen=True, eq=False)
class GapTrace:
    """
    Absolute gaps |l_tap - l| at identical data and parameters.

    gaps has shape (len(n_list), replicates, len(params)); the score gaps
    share that shape when requested.
    """

    family: CovFamily
    n_list: tuple[int, ...]
    params: list[tuple[float, float]]
    gaps: np.ndarray
    dtheta_gaps: Optional[np.ndarray] = None
    dsigma2_gaps: Optional[np.ndarray] = None

    def medians(self, normalized: bool = False) -> np.ndarray:
        """Median over replicates, shape (len(n_list), len(params))."""
        med = np.median(self.gaps, axis=1)
        if normalized:
            med = med / np.sqrt(np.asarray(self.n_list, dtype=float))[:, None]
        return med

    def rate_check(self) -> dict:
        """Median gap/√n at the largest n strictly below its value at the smallest n."""
        med = self.medians(normalized=True)
        first, last = med[0], med[-1]
        per_param = (last < first) | ((first == 0) & (last == 0))
        return {
            "first": first,
            "last": last,
            "per_param": per_param,
            "passes": bool(np.all(per_param)),
        }

    def bounded_check(self) -> dict:
        """
        Least-squares slope of the median raw gap against n; bounded when
        slope x n_max stays under half the median gap at n_max.
        """
        med = self.medians()
        n_max = float(self.n_list[-1])
        slopes, ok = [], []
        for p in range(med.shape[1]):
            if np.all(med[:, p] == 0):
                slopes.append(0.0)
                ok.append(True)
                continue
            slope, _ = _median_trend(self.n_list, med[:, p])
            slopes.append(slope)
            ok.append(bool(slope * n_max < 0.5 * med[-1, p]))
        return {
            "slopes": slopes,
            "max_gap": float(np.max(self.gaps)) if self.gaps.size else 0.0,
            "per_param": ok,
            "passes": bool(all(ok)),
        }

    def to_dict(self) -> dict:
        record = {
            "experiment": "gap",
            "family": self.family.value,
            "n_list": list(self.n_list),
            "params": [{"theta": th, "sigma2": s2} for th, s2 in self.params],
            "median_gap": self.medians(),
            "median_gap_over_sqrt_n": self.medians(normalized=True),
        }
        if self.dtheta_gaps is not None:
            record["median_dtheta_gap"] = np.median(self.dtheta_gaps, axis=1)
        if self.dsigma2_gaps is not None:
            record["median_dsigma2_gap"] = np.median(self.dsigma2_gaps, axis=1)
        record["rate_check"] = self.rate_check()
        record["bounded_check"] = self.bounded_check()
        return record


def gap_trace(
    truth: CovModel,
    params_grid: Sequence[tuple[float, float]],
    taper: TaperSpec,
    n_list: Sequence[int],
    seed: Seed,
    replicates: int = 1,
    derivatives: bool = False,
    threads: int = 1,
    quiet: bool = True,
) -> GapTrace:
    """
    Exact and tapered likelihoods on the same realization, per n and seed.

    Each (θ, σ²) in params_grid is evaluated with the truth's family and ν.

    Raises:
        ConfigError: If n_list spans less than a factor of 8.
        FactorizationError: Propagated from either likelihood.
    """
    n_list = _check_n_list(n_list)
    if n_list[-1] < 8 * n_list[0]:
        raise ConfigError("mc.n_list", "gap traces need a factor-8 range of sample sizes")
    if replicates < 1:
        raise ConfigError("mc.replicates", f"must be >= 1, got {replicates}")
    params = [(float(th), float(s2)) for th, s2 in params_grid]
    models = [truth.with_params(theta=th, sigma2=s2) for th, s2 in params]

    def replicate(job: tuple[int, int]) -> np.ndarray:
        n, r = job
        data = simulate_truth(regular_design(n), truth, seed, r)
        out = np.empty((3, len(models)))
        for p, model in enumerate(models):
            out[0, p] = abs(
                tapered_loglik(data, model, taper, strict=True)
                - exact_loglik(data, model, strict=True)
            )
            if derivatives:
                dtheta = tapered_dloglik_dtheta(data, model, taper) - dloglik_dtheta(data, model)
                out[1, p] = abs(dtheta)
                out[2, p] = abs(
                    tapered_dloglik_dsigma2(data, model, taper) - dloglik_dsigma2(data, model)
                )
        return out

    jobs = [(n, r) for n in n_list for r in range(replicates)]
    blocks = run_ordered(replicate, jobs, threads=threads, label="gap trace", quiet=quiet)
    stacked = np.array(blocks).reshape(len(n_list), replicates, 3, len(models))
    return GapTrace(
        family=truth.family,
        n_list=n_list,
        params=params,
        gaps=stacked[:, :, 0, :],
        dtheta_gaps=stacked[:, :, 1, :] if derivatives else None,
        dsigma2_gaps=stacked[:, :, 2, :] if derivatives else None,
    )


def trace_gap_theorem3(design: Design, f0_model: CovModel, f1_model: CovModel) -> float:
    """
    trace(V₀V₁⁻¹) - n, by factorizing V₁ and solving against the columns of V₀.

    Equal models give exactly 0.

    Raises:
        FactorizationError: If V₁ is not PD on the design.
    """
    if f0_model == f1_model:
        return 0.0
    v0 = build_dense(design, f0_model).entries
    solved = factorize(build_dense(design, f1_model)).solve(v0)
    return float(np.trace(solved) - design.n)


@dataclasses.dataclass(frozen=True, eq=False)
class TraceSeries:
    n_list: tuple[int, ...]
    values: np.ndarray

    @property
    def band_ratio(self) -> float:
        """max/min of |value| over the grid; 1 when all values vanish."""
        mags = np.abs(self.values)
        if np.all(mags == 0):
            return 1.0
        low = float(np.min(mags))
        return float(np.max(mags)) / low if low > 0 else math.inf

    @property
    def growth(self) -> float:
        """|value at n_max| / |value at n_min|."""
        first = abs(float(self.values[0]))
        return abs(float(self.values[-1])) / first if first > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "n_list": list(self.n_list),
            "values": self.values,
            "band_ratio": self.band_ratio,
            "growth": self.growth,
        }


def trace_gap_series(
    f0_model: CovModel,
    f1_model: CovModel,
    n_list: Sequence[int],
    design_kind: DesignKind = DesignKind.REGULAR,
    jitter: float = 0.0,
    seed: Optional[Seed] = None,
) -> TraceSeries:
    """trace_gap_theorem3 over increasing n on designs of one kind."""
    n_list = _check_n_list(n_list)
    values = [
        trace_gap_theorem3(make_design(design_kind, n, jitter, seed), f0_model, f1_model)
        for n in n_list
    ]
    return TraceSeries(n_list=n_list, values=np.array(values))


@dataclasses.dataclass(frozen=True, eq=False)
class ProximityTrace:
    """n·|σ̂²_tap - σ̂²| with shape (len(n_list), replicates)."""

    n_list: tuple[int, ...]
    values: np.ndarray
    envelope: float = 4.0

    @property
    def medians(self) -> np.ndarray:
        return np.median(self.values, axis=1)

    def envelope_check(self) -> dict:
        """Max over n of the per-n medians against envelope x the first median."""
        med = self.medians
        limit = self.envelope * float(med[0])
        top = float(np.max(med))
        return {"max_median": top, "limit": limit, "passes": bool(top <= limit)}

    def to_dict(self) -> dict:
        return {
            "experiment": "proximity",
            "n_list": list(self.n_list),
            "median": self.medians,
            "envelope_check": self.envelope_check(),
        }


def sigma2_proximity(
    truth: CovModel,
    theta1: float,
    taper: TaperSpec,
    n_list: Sequence[int],
    seed: Seed,
    replicates: int = 20,
    threads: int = 1,
    quiet: bool = True,
) -> ProximityTrace:
    """Closed-form σ̂² with and without the taper on the same realizations."""
    n_list = _check_n_list(n_list)
    if taper.is_identity:
        raise ConfigError("taper.family", "proximity needs a compactly supported taper")

    def replicate(job: tuple[int, int]) -> float:
        n, r = job
        data = simulate_truth(regular_design(n), truth, seed, r)
        exact = sigma2_mle_fixed_theta(data, theta1, truth.nu)
        tapered = sigma2_mle_fixed_theta(data, theta1, truth.nu, taper)
        return n * abs(tapered.sigma2_hat - exact.sigma2_hat)

    jobs = [(n, r) for n in n_list for r in range(replicates)]
    values = run_ordered(replicate, jobs, threads=threads, label="proximity", quiet=quiet)
    return ProximityTrace(n_list=n_list, values=np.array(values).reshape(len(n_list), replicates))
