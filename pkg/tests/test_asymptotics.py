import numpy as np
import pytest

from tapermle.asymptotics import (
    GapTrace,
    McConfig,
    ProximityTrace,
    box_grid,
    fixed_theta_moments,
    gap_trace,
    mc_microergodic,
    normality_check,
    sigma2_proximity,
    trace_gap_series,
    trace_gap_theorem3,
)
from tapermle.covmodel import CovFamily, CovModel, TaperSpec
from tapermle.errors import ConfigError, ConvergenceError, DiagnosticError, DomainError
from tapermle.likelihood import ParamBox
from tapermle.simulate import Seed, regular_design


def small_config(**kwargs) -> McConfig:
    fields = {
        "truth": CovModel.exponential(1.0, 1.0),
        "taper": TaperSpec.wendland2(0.3),
        "n_list": (16, 32),
        "replicates": 2,
        "seed": Seed(123),
        "theta1": 2.0,
    }
    fields.update(kwargs)
    return McConfig(**fields)


def test_normality_check_errors():
    with pytest.raises(DiagnosticError):
        normality_check(np.zeros(50), 2.0)
    with pytest.raises(DiagnosticError):
        normality_check(np.ones(10), 2.0)
    with pytest.raises(DiagnosticError):
        normality_check([np.nan] + [0.1 * i for i in range(40)], 2.0)
    with pytest.raises(DomainError):
        normality_check(np.arange(40.0), 0.0)


def test_normality_check_is_calibrated():
    rng = np.random.default_rng(2718)
    passed = 0
    for _ in range(100):
        rep = normality_check(rng.normal(0.0, np.sqrt(2.0), 500), 2.0)
        passed += rep.ks_p > 0.01
        assert rep.count == 500
        assert rep.var_ratio == pytest.approx(rep.var / 2.0)
    assert passed >= 95


def test_normality_check_detects_wrong_variance():
    z = np.random.default_rng(1).normal(0.0, 1.0, 2000)
    assert normality_check(z, 4.0).ks_p < 0.01


def test_mc_config_validation():
    with pytest.raises(ConfigError):
        small_config(replicates=1)
    with pytest.raises(ConfigError):
        small_config(theta1=None)
    with pytest.raises(ConfigError):
        small_config(box=ParamBox.from_bounds(0.25, 4, 0.25, 4))
    with pytest.raises(ConfigError):
        small_config(
            theta1=None, truth=CovModel.matern(1, 1, 1), box=ParamBox.from_bounds(1, 2, 1, 2)
        )
    with pytest.raises(ConfigError):
        small_config(n_list=(32, 16))
    with pytest.raises(ConfigError):
        small_config(theta1=-1.0)


def test_mc_config_targets():
    config = small_config(truth=CovModel.matern(1.0, 1.0, 1.0))
    assert config.target_microergodic == 1.0
    assert config.target_var == 2.0
    assert config.estimator == "fixed"
    joint = small_config(theta1=None, box=ParamBox.from_bounds(0.25, 4, 0.25, 4))
    assert joint.estimator == "joint"
    assert joint.to_dict()["box"] == {"a": 0.25, "b": 4.0, "w": 0.25, "v": 4.0}


def test_mc_microergodic_is_reproducible():
    config = small_config()
    first = mc_microergodic(config, threads=1, quiet=True)
    again = mc_microergodic(config, threads=2, quiet=True)
    assert len(first.samples) == 4
    for a, b in zip(first.samples, again.samples):
        assert (a.n, a.tapered) == (b.n, b.tapered)
        np.testing.assert_array_equal(a.z, b.z)
        assert a.failures == 0
    rows = list(first.z_rows())
    assert len(rows) == 8
    assert rows[0][:2] == (16, 0)


def test_mc_summary_with_few_replicates():
    summary = mc_microergodic(small_config(), quiet=True)
    checks = summary.accept()
    assert all(not c["passed"] for c in checks)
    assert all(c["reason"] == "too few replicates" for c in checks)
    record = summary.to_dict()
    assert record["experiment"] == "microergodic"
    assert record["target_var"] == 2.0
    assert [r["kept"] for r in record["results"]] == [2, 2, 2, 2]
    assert summary.sample(32, True).n == 32
    with pytest.raises(KeyError):
        summary.sample(64, True)


def test_mc_failures_over_the_cap(monkeypatch):
    def failing_fit(self, data, taper):
        raise DomainError("forced")

    monkeypatch.setattr(McConfig, "fit", failing_fit)
    with pytest.raises(ConvergenceError):
        mc_microergodic(small_config(), quiet=True)


def test_box_grid():
    grid = box_grid(ParamBox.from_bounds(0.25, 4.0, 1.0, 1.0))
    assert len(grid) == 9
    assert grid[0] == (0.25, 1.0)
    assert grid[-1] == pytest.approx((4.0, 1.0))


def test_gap_trace_without_taper_is_zero():
    trace = gap_trace(
        CovModel.exponential(1.0, 1.0),
        [(1.0, 1.0), (2.0, 0.5)],
        TaperSpec.none(),
        [8, 64],
        Seed(1),
        replicates=2,
        derivatives=True,
    )
    assert trace.gaps.shape == (2, 2, 2)
    assert np.all(trace.gaps == 0)
    assert np.all(trace.dtheta_gaps == 0)
    assert np.all(trace.dsigma2_gaps == 0)
    assert trace.rate_check()["passes"]
    assert trace.bounded_check()["passes"]


def test_gap_trace_needs_a_factor_eight_range():
    with pytest.raises(ConfigError):
        gap_trace(
            CovModel.exponential(), [(1.0, 1.0)], TaperSpec.wendland1(0.3), [16, 64], Seed(0)
        )


def test_gap_trace_is_positive_with_a_taper():
    trace = gap_trace(
        CovModel.exponential(1.0, 1.0), [(1.0, 1.0)], TaperSpec.wendland2(0.3), [16, 128], Seed(2)
    )
    assert np.all(trace.gaps > 0)
    record = trace.to_dict()
    assert record["family"] == "exponential"
    assert "median_dtheta_gap" not in record


def test_gap_checks_on_synthetic_traces():
    n_list = (128, 256, 512, 1024)
    shrinking = np.array([np.full((3, 2), n**0.4) for n in n_list])
    trace = GapTrace(CovFamily.EXPONENTIAL, n_list, [(1.0, 1.0), (2.0, 1.0)], shrinking)
    assert trace.rate_check()["passes"]
    assert not trace.bounded_check()["passes"]

    flat = np.array([np.full((3, 1), 2.0 + 0.01 * (-1) ** i) for i in range(4)])
    bounded = GapTrace(CovFamily.MATERN, n_list, [(2.0, 0.25)], flat)
    assert bounded.bounded_check()["passes"]
    assert bounded.rate_check()["passes"]

    growing = np.array([np.full((3, 1), n**0.75) for n in n_list])
    assert not GapTrace(CovFamily.EXPONENTIAL, n_list, [(1.0, 1.0)], growing).rate_check()["passes"]


def test_trace_gap_equal_models_is_zero():
    model = CovModel.matern(1.0, 2.0, 1.0)
    assert trace_gap_theorem3(regular_design(50), model, model) == 0.0


def test_trace_gap_small_case_by_brute_force():
    design = regular_design(6)
    f0 = CovModel.exponential(1.0, 1.0)
    f1 = CovModel.exponential(0.5, 2.0)
    t = design.t
    lags = np.abs(t[:, None] - t[None, :])
    v0 = np.exp(-lags)
    v1 = 0.5 * np.exp(-2 * lags)
    expected = np.trace(v0 @ np.linalg.inv(v1)) - 6
    assert trace_gap_theorem3(design, f0, f1) == pytest.approx(expected, rel=1e-9)


def test_trace_gap_equivalence_and_control():
    n_list = [64, 128, 256, 512, 1024]
    f0 = CovModel.exponential(1.0, 1.0)
    matched = trace_gap_series(f0, f0.matched(2.0), n_list)
    assert matched.band_ratio <= 3.0
    control = trace_gap_series(f0, CovModel.exponential(1.0, 2.0), n_list)
    assert control.growth >= 4.0
    assert control.to_dict()["n_list"] == n_list


def test_proximity_trace():
    trace = sigma2_proximity(
        CovModel.matern(1.0, 1.0, 1.0), 2.0, TaperSpec.wendland2(0.3), [32, 64], Seed(5), 3
    )
    assert trace.values.shape == (2, 3)
    assert np.all(trace.values >= 0)
    with pytest.raises(ConfigError):
        sigma2_proximity(CovModel.exponential(), 2.0, TaperSpec.none(), [32, 64], Seed(5))


def test_proximity_envelope():
    values = np.array([[1.0, 2.0, 3.0], [2.0, 3.0, 4.0], [7.0, 8.0, 9.0]])
    trace = ProximityTrace((128, 256, 512), values)
    check = trace.envelope_check()
    assert check["limit"] == 8.0
    assert check["max_median"] == 8.0
    assert check["passes"]
    assert not ProximityTrace((128, 256), np.array([[1.0], [4.5]])).envelope_check()["passes"]


def test_fixed_theta_moments_at_the_truth():
    truth = CovModel.matern(1.0, 1.0, 1.0)
    exact = fixed_theta_moments(truth, 1.0, TaperSpec.none(), regular_design(64))
    assert not exact.tapered
    assert exact.mean == pytest.approx(0.0, abs=1e-6)
    assert exact.var == pytest.approx(2.0, rel=1e-6)
    tapered = fixed_theta_moments(truth, 1.0, TaperSpec.wendland2(0.3), regular_design(64))
    assert tapered.tapered
    assert tapered.mean < 0


def test_fixed_theta_moments_match_monte_carlo():
    config = small_config(
        truth=CovModel.matern(1.0, 1.0, 1.0), n_list=(64,), replicates=400, seed=Seed(31)
    )
    summary = mc_microergodic(config, quiet=True)
    assert len(summary.moments) == 2
    for sample in summary.samples:
        check = summary.moment_check(sample, sigmas=4.0, var_tol=0.25)
        assert check["passed"], check
    record = summary.to_dict()
    assert all("expected_mean" in e for e in record["results"])


def test_moments_skipped_for_joint_and_jittered():
    joint = small_config(theta1=None, box=ParamBox.from_bounds(0.25, 4, 0.25, 4))
    assert joint.exact_moments() == ()
    jittered = small_config(design_kind="jittered", jitter=0.2)
    assert jittered.exact_moments() == ()
    summary = mc_microergodic(joint, quiet=True)
    with pytest.raises(DiagnosticError):
        summary.moment_check(summary.samples[0])


def test_tapering_bias_shrinks_like_root_n():
    truth = CovModel.matern(1.0, 1.0, 1.0)
    taper = TaperSpec.wendland2(0.3)
    means = [
        fixed_theta_moments(truth, 1.0, taper, regular_design(n)).mean for n in (128, 512, 2048)
    ]
    assert all(m < 0 for m in means)
    # each 4x step in n halves the bias of the standardized statistic
    for coarse, fine in zip(means, means[1:]):
        assert 0.35 < fine / coarse < 0.7
