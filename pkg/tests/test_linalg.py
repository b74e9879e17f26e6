import math

import numpy as np
import pytest

from tapermle.covmodel import CovModel, TaperSpec, tapered_cov
from tapermle.data import Design
from tapermle.errors import DesignError, FactorizationError
from tapermle.linalg import (
    BandedSpd,
    DenseSpd,
    band_reach,
    build_dense,
    build_tapered,
    cholesky_logdet_solve,
    det_ratio_check,
    factorize,
    ou_precision,
    quad_form,
    write_band_dump,
)
from tapermle.simulate import Seed, jittered_design, regular_design, sample_gp


def test_build_dense_small():
    single = build_dense(Design([0.3]), CovModel.exponential(2.0, 1.0))
    np.testing.assert_array_equal(single.entries, [[2.0]])
    pair = build_dense(Design([0.0, 1.0]), CovModel.exponential(1.0, 1.0))
    np.testing.assert_allclose(pair.entries, [[1, math.exp(-1)], [math.exp(-1), 1]], rtol=1e-15)


def test_build_dense_matern_is_pd():
    matrix = build_dense(regular_design(50), CovModel.matern(1.0, 5.0, 1.5))
    np.testing.assert_allclose(matrix.entries, matrix.entries.T, rtol=1e-14)
    assert math.isfinite(factorize(matrix).log_det)


def test_build_rejects_near_duplicates():
    design = Design([0.0, 0.5, 0.5 + 1e-14, 1.0])
    with pytest.raises(DesignError):
        build_dense(design, CovModel.exponential())
    with pytest.raises(DesignError):
        build_tapered(design, CovModel.exponential(), TaperSpec.wendland1(0.2))


def test_build_tapered_bandwidth():
    design = regular_design(100)
    matrix = build_tapered(design, CovModel.exponential(1.0, 3.0), TaperSpec.wendland1(0.1))
    # points 9/99 apart are within 0.1, 10/99 apart are not
    assert matrix.bandwidth == 9
    assert band_reach(design, 0.1) == 9
    dense = matrix.to_dense()
    lags = np.abs(design.t[:, None] - design.t[None, :])
    assert np.all(dense[lags >= 0.1] == 0.0)


def test_build_tapered_diagonal_when_gamma_is_small():
    design = regular_design(20)
    matrix = build_tapered(design, CovModel.exponential(1.7, 2.0), TaperSpec.wendland2(0.01))
    assert matrix.bandwidth == 0
    np.testing.assert_array_equal(matrix.to_dense(), 1.7 * np.eye(20))
    assert matrix.nnz == 20


def test_build_tapered_none_is_dense():
    design = regular_design(15)
    model = CovModel.matern(1.0, 4.0, 1.0)
    matrix = build_tapered(design, model, TaperSpec.none())
    assert matrix.bandwidth == 14
    np.testing.assert_array_equal(matrix.to_dense(), build_dense(design, model).entries)


def test_cholesky_identity():
    rhs = np.array([1.0, -2.0, 3.5])
    result = cholesky_logdet_solve(DenseSpd(np.eye(3)), rhs)
    assert result.log_det == 0.0
    np.testing.assert_array_equal(result.solution, rhs)


@pytest.mark.parametrize("rho", [0.0, 0.3, -0.9, 0.999])
def test_cholesky_two_by_two(rho):
    result = cholesky_logdet_solve(DenseSpd(np.array([[1.0, rho], [rho, 1.0]])), np.ones(2))
    assert result.log_det == pytest.approx(math.log(1 - rho * rho), rel=1e-10, abs=1e-14)
    np.testing.assert_allclose(result.solution, np.full(2, 1 / (1 + rho)), rtol=1e-10)


def test_cholesky_reports_pivot():
    with pytest.raises(FactorizationError) as e:
        factorize(DenseSpd(np.array([[1.0, 2.0], [2.0, 1.0]])))
    assert e.value.pivot == 2
    assert e.value.size == 2
    banded = BandedSpd(n=2, bandwidth=1, bands=np.array([[1.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(FactorizationError) as e:
        factorize(banded)
    assert e.value.pivot == 2


@pytest.mark.parametrize(
    "model, taper",
    [
        (CovModel.exponential(1.0, 5.0), TaperSpec.wendland1(0.1)),
        (CovModel.matern(2.0, 10.0, 1.0), TaperSpec.wendland2(0.2)),
    ],
)
def test_banded_matches_dense(model, taper):
    design = jittered_design(200, 0.3, Seed(11))
    banded = build_tapered(design, model, taper)
    dense = DenseSpd(banded.to_dense())
    rhs = np.random.default_rng(3).standard_normal(design.n)
    band_result = cholesky_logdet_solve(banded, rhs)
    dense_result = cholesky_logdet_solve(dense, rhs)
    assert abs(band_result.log_det - dense_result.log_det) <= 1e-10 * design.n
    np.testing.assert_allclose(band_result.solution, dense_result.solution, rtol=1e-8, atol=1e-10)
    assert quad_form(factorize(banded), rhs) == pytest.approx(rhs @ dense_result.solution, rel=1e-9)


def test_ou_precision_boundary_values():
    design = Design([0.0, 0.1, 0.3, 1.0])
    prec = ou_precision(design, 1.0, 1.0)
    assert prec.b_super[0] == pytest.approx(-math.exp(-0.1), rel=1e-15)
    assert prec.b_super[0] == pytest.approx(-0.9048374, abs=1e-7)
    assert prec.d[0] == pytest.approx(-math.expm1(-0.2), rel=1e-15)
    assert prec.d[0] == pytest.approx(0.1812692, abs=1e-7)
    assert prec.b_sub[-1] == pytest.approx(-math.exp(-0.7), rel=1e-15)
    assert np.all(prec.d > 0)


def test_ou_precision_needs_two_points():
    with pytest.raises(DesignError):
        ou_precision(Design([0.5]), 1.0, 1.0)


def test_ou_precision_matches_dense_inverse():
    rng = np.random.default_rng(20240607)
    for trial in range(50):
        n = (5, 50, 200)[trial % 3]
        theta, sigma2 = rng.uniform(0.5, 5.0, size=2)
        design = jittered_design(n, 0.35, Seed(trial))
        model = CovModel.exponential(sigma2, theta)
        dense = build_dense(design, model).entries
        prec = ou_precision(design, theta, sigma2)
        inverse = np.linalg.inv(dense)
        np.testing.assert_allclose(
            prec.to_dense(), inverse, rtol=1e-8, atol=1e-8 * np.abs(inverse).max()
        )
        np.testing.assert_allclose(prec.to_dense() @ dense, np.eye(n), atol=1e-8)
        assert prec.log_det == pytest.approx(np.linalg.slogdet(dense)[1], rel=1e-10, abs=1e-8)


def test_quad_form_small_cases():
    assert quad_form(DenseSpd(np.eye(2)), np.array([3.0, 4.0])) == pytest.approx(25.0)
    prec = ou_precision(regular_design(10), 2.0, 1.0)
    assert prec.quad_form(np.zeros(10)) == 0.0
    assert quad_form(prec, np.zeros(10)) == 0.0


def test_quad_form_ou_matches_dense():
    design = jittered_design(100, 0.2, Seed(5))
    model = CovModel.exponential(1.5, 4.0)
    x = sample_gp(design, model, Seed(5)).x
    dense = quad_form(build_dense(design, model), x)
    assert quad_form(ou_precision(design, 4.0, 1.5), x) == pytest.approx(dense, rel=1e-8)


def test_quad_form_chi_square_mean():
    design = regular_design(50)
    model = CovModel.matern(1.0, 8.0, 1.0)
    factor = factorize(build_dense(design, model))
    seed = Seed(77)
    values = [factor.quad_form(sample_gp(design, model, seed, r).x) for r in range(1000)]
    assert np.mean(values) == pytest.approx(50.0, rel=0.05)


def test_det_ratio_none_is_one():
    design = regular_design(30)
    result = det_ratio_check(design, CovModel.exponential(1.0, 2.0), TaperSpec.none())
    assert result.ratio == 1.0
    assert result.log_ratio == 0.0
    assert result.passes


def test_det_ratio_two_points():
    design = Design([0.0, 0.5])
    model = CovModel.exponential(1.0, 1.0)
    taper = TaperSpec.wendland1(1.0)
    expected = (1 - tapered_cov(model, taper, 0.5) ** 2) / (1 - math.exp(-1))
    result = det_ratio_check(design, model, taper)
    assert result.ratio == pytest.approx(expected, rel=1e-12)
    assert result.ratio > 1
    assert det_ratio_check(regular_design(200), model, TaperSpec.wendland2(0.3)).passes


def test_det_ratio_random_configurations():
    rng = np.random.default_rng(99)
    for trial in range(100):
        theta = rng.uniform(2.0, 10.0)
        nu = (0.5, 1.0)[trial % 2]
        model = CovModel.exponential(1.0, theta) if nu == 0.5 else CovModel.matern(1.0, theta, nu)
        taper = (TaperSpec.wendland1, TaperSpec.wendland2)[trial % 3 % 2](rng.uniform(0.05, 0.5))
        design = jittered_design(int(rng.integers(10, 51)), 0.3, Seed(trial))
        result = det_ratio_check(design, model, taper)
        assert result.log_ratio >= -1e-10
        assert result.passes


def test_band_dump(tmp_path):
    model = CovModel.exponential(1.0, 1.0)
    matrix = build_tapered(regular_design(4), model, TaperSpec.wendland1(0.5))
    path = write_band_dump(matrix, tmp_path / "band" / "v.txt")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4 + 3
    i, j, value = lines[0].split()
    assert (i, j, float(value)) == ("1", "1", 1.0)
    assert lines[4].split()[:2] == ["2", "1"]
