import numpy as np
import pytest

from l2kl.errors import DegenerateDataError, InvalidInputError
from l2kl.minl2 import fit_min_l2, q_objective, v_jacobian, v_score
from l2kl.ml import fit_ml_normal
from l2kl.model import NormalModel, ParametricModel
from l2kl.weights import DivergentIntegralError, KernelSpec, WeightFunction, weighted_integral

from conftest import central_diff

WEIGHTS = {
    "constant": WeightFunction.constant(),
    "exp_delta": WeightFunction.exp_delta(0.6, 0.1, 1.1),
    "kernel": WeightFunction.kernel_local(0.3, KernelSpec(1.5)),
}


def test_integral_of_squared_density():
    for sigma in (0.3, 1.0, 4.0):
        val = weighted_integral(None, [0.7, sigma], NormalModel(), None, 2)
        assert abs(val - 1 / (2 * np.sqrt(np.pi) * sigma)) < 1e-13 / sigma


def test_single_datum_objective():
    expected = 1 / (2 * np.sqrt(np.pi)) - 2 / np.sqrt(2 * np.pi)
    assert abs(q_objective([0, 1], [0.0]) - expected) < 1e-13


@pytest.mark.parametrize("wname", sorted(WEIGHTS))
def test_estimating_function_is_half_negative_gradient(wname, rng):
    w = WEIGHTS[wname]
    x = rng.normal(0.2, 1.3, size=60)
    for theta in ([0.0, 1.0], [0.5, 0.7], [-0.4, 1.8]):
        fd = central_diff(lambda t: q_objective(t, x, w), theta)
        v = v_score(theta, x, w)
        np.testing.assert_allclose(v, -0.5 * fd, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("wname", sorted(WEIGHTS))
def test_jacobian_matches_finite_differences(wname, rng):
    w = WEIGHTS[wname]
    x = rng.normal(size=50)
    theta = np.array([0.3, 1.2])
    fd = central_diff(lambda t: v_score(t, x, w), theta)
    np.testing.assert_allclose(v_jacobian(theta, x, w), fd, rtol=1e-6, atol=1e-9)


def test_consistency(big_normal_sample):
    fit = fit_min_l2(3.0 + 2.0 * big_normal_sample)
    assert fit.converged
    assert abs(fit.theta[0] - 3.0) < 0.02 * 2 and abs(fit.theta[1] - 2.0) < 0.02 * 2


def test_plug_in_covariance_near_model_value(big_normal_sample):
    fit = fit_min_l2(big_normal_sample)
    np.testing.assert_allclose(np.diag(fit.covariance), [1.5396, 0.9241], rtol=0.1)


def test_resists_gross_contamination():
    rng = np.random.default_rng(20241016)
    x = rng.standard_normal(10_000)
    x[rng.random(x.size) < 0.05] = 10.0
    assert fit_ml_normal(x).theta[1] > 2
    fit = fit_min_l2(x)
    assert fit.converged and fit.theta[1] < 1.3 and abs(fit.theta[0]) < 0.1


@pytest.mark.parametrize("a,b", [(5.0, 3.0), (-2.0, 0.1), (1.0, -4.0)])
@pytest.mark.parametrize("wname", ["constant", "exp_delta"])
def test_affine_equivariance(a, b, wname, rng):
    x = rng.normal(size=300)
    w = WeightFunction.constant() if wname == "constant" else WeightFunction.exp_delta(0.5)
    base = fit_min_l2(x, w=w).theta
    moved = fit_min_l2(a + b * x, w=w).theta
    assert abs(moved[0] - (a + b * base[0])) < 1e-8 * (1 + abs(a) + abs(b))
    assert abs(moved[1] - abs(b) * base[1]) < 1e-8 * (1 + abs(b))


@pytest.mark.parametrize("scale", [1e-3, 7.0, 1e3])
def test_weight_scale_does_not_change_fit(scale, rng):
    x = rng.normal(size=200)
    for w in (WeightFunction.constant(scale=scale), WeightFunction.exp_delta(0.8, scale=scale)):
        ref = fit_min_l2(x, w=WeightFunction(**{**w.__dict__, "scale": 1.0})).theta
        np.testing.assert_allclose(fit_min_l2(x, w=w).theta, ref, atol=1e-9)


def test_delta_zero_equals_unweighted(rng):
    x = rng.normal(size=500)
    np.testing.assert_allclose(
        fit_min_l2(x, w=WeightFunction.exp_delta(0.0)).theta, fit_min_l2(x).theta, atol=1e-10
    )


def test_wide_kernel_weight_approaches_unweighted(rng):
    x = rng.normal(size=500)
    h = 1e3 * 1.4826 * np.median(np.abs(x - np.median(x)))
    wide = fit_min_l2(x, w=WeightFunction.kernel_local(np.median(x), KernelSpec(h))).theta
    np.testing.assert_allclose(wide, fit_min_l2(x).theta, atol=1e-4)


def test_weight_validation():
    with pytest.raises(InvalidInputError):
        WeightFunction.exp_delta(1.0)
    with pytest.raises(InvalidInputError):
        WeightFunction.exp_delta(-0.1)
    with pytest.raises(InvalidInputError):
        KernelSpec(0.0)
    with pytest.raises(InvalidInputError):
        WeightFunction.exp_delta(0.5).log_value(1.0)


def test_divergent_weighted_integral_detected():
    w = WeightFunction.exp_delta(0.9, 0.0, 0.5)
    with pytest.raises(DivergentIntegralError):
        weighted_integral(None, [0, 1], NormalModel(), w, 2)


def test_bad_inputs():
    with pytest.raises(InvalidInputError):
        fit_min_l2([])
    with pytest.raises(InvalidInputError):
        fit_min_l2([1.0, np.nan, 2.0])
    with pytest.raises(DegenerateDataError):
        fit_min_l2([1.0, 1.0, 1.0, 1.0, 2.0])


def test_non_normal_model_needs_start():
    class Wrapped(ParametricModel):
        # normal density without the Gaussian-shape hint, as a generic model
        param_dim, data_dim = 2, 1
        _inner = NormalModel()

        def log_density(self, x, theta):
            return self._inner.log_density(x, theta)

        def score(self, x, theta):
            return self._inner.score(x, theta)

        def score_deriv(self, x, theta):
            return self._inner.score_deriv(x, theta)

        def scale_hint(self, theta):
            return self._inner.scale_hint(theta)

    x = np.random.default_rng(3).normal(size=200)
    with pytest.raises(InvalidInputError):
        fit_min_l2(x, model=Wrapped())
    fit = fit_min_l2(x, model=Wrapped(), init=[0.1, 1.1])
    np.testing.assert_allclose(fit.theta, fit_min_l2(x).theta, atol=1e-6)


def test_result_fields(rng):
    fit = fit_min_l2(rng.normal(size=400))
    d = fit.to_dict()
    assert d["method"] == "l2" and len(fit.stderr) == 2
    np.testing.assert_allclose(fit.stderr, np.sqrt(np.diag(fit.covariance) / 400))
