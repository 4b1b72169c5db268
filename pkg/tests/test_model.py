import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, special, stats

from ergodiff.errors import InvalidDriftError, ParameterError
from ergodiff.model import (
    DriftSpec,
    build_law,
    compute_constants,
    estimate_C_mo,
    k_ratio,
    make_drift,
    moment_candidates,
    validate_drift,
)


# --- validate_drift


def test_ou_passes_class_check():
    rep = validate_drift(make_drift("ou"))
    assert rep.passed
    assert rep.first_violation is None
    assert rep.growth_margin >= 0 and rep.dissipativity_margin >= 0


def test_wrong_sign_drift_fails_beyond_A():
    d = DriftSpec(b=lambda x: np.asarray(x, dtype=float), C_growth=1.0, A=1.0, gamma=1.0)
    rep = validate_drift(d)
    assert not rep.passed
    assert rep.violation_kind == "dissipativity"
    assert rep.first_violation > d.A


def test_ou_sin_passes_on_wide_grid():
    d = make_drift("ou_sin")
    assert (d.C_growth, d.A, d.gamma) == (2.0, 2.0, 1.0)
    # brute force oracle over [-20, 20], step 1e-3
    xs = np.linspace(-20.0, 20.0, 40001)
    bx = -xs + np.sin(xs)
    assert np.all(np.abs(bx) <= 2.0 * (1.0 + np.abs(xs)))
    out = np.abs(xs) > 2.0
    assert np.all(bx[out] * np.sign(xs[out]) <= -1.0)
    assert validate_drift(d, (-20.0, 20.0, 1e-3)).passed


def test_nonfinite_drift_is_rejected():
    d = DriftSpec(b=lambda x: np.where(np.asarray(x) > 5, np.nan, -np.asarray(x)), C_growth=1, A=1, gamma=1)
    with pytest.raises(InvalidDriftError):
        validate_drift(d)


def test_certificate_invariants():
    with pytest.raises(ParameterError):
        DriftSpec(b=lambda x: -x, C_growth=0.5, A=1.0, gamma=1.0)
    with pytest.raises(ParameterError):
        DriftSpec(b=lambda x: -x, C_growth=1.0, A=0.0, gamma=1.0)
    with pytest.raises(ParameterError):
        make_drift("nope")
    with pytest.raises(ParameterError):
        make_drift("double_well")


def test_double_well_needs_linear_growth():
    # x - x^3 grows cubically, so no finite certificate survives a wide grid
    d = make_drift("double_well", certificate={"C_growth": 10.0, "A": 2.0, "gamma": 1.0})
    rep = validate_drift(d)
    assert not rep.passed and rep.violation_kind == "growth"


# --- build_law


def test_ou_normalizer_and_density(ou_law):
    ref, _ = integrate.quad(lambda x: math.exp(-x * x), -np.inf, np.inf, epsabs=1e-13)
    assert abs(ou_law.C_b - ref) <= 1e-8
    assert abs(ou_law.C_b - math.sqrt(math.pi)) <= 1e-8
    assert abs(ou_law.density(0.0) - 1.0 / math.sqrt(math.pi)) <= 1e-8
    assert abs(ou_law.cdf(0.0) - 0.5) <= 1e-10


@pytest.mark.parametrize("fixture", ["ou_law", "ou_sin_law"])
def test_normalization(fixture, request):
    law = request.getfixturevalue(fixture)
    r = law.trunc_radius
    mass = sum(integrate.quad(law.density, a, b, epsabs=1e-13, limit=200)[0]
               for a, b in [(-r, -2), (-2, 0), (0, 2), (2, r)])
    assert abs(mass - 1.0) <= law.quad_tol * 10


def test_truncation_radius(ou_law):
    peak = float(ou_law.log_weight(0.0)[0])
    edge = float(ou_law.log_weight(ou_law.trunc_radius)[0])
    assert edge - peak <= math.log(1e-16)


@pytest.mark.parametrize("fixture", ["ou_law", "ou_sin_law"])
def test_quantile_inverse(fixture, request):
    law = request.getfixturevalue(fixture)
    qs = np.array([0.01, 0.1, 0.5, 0.9, 0.99])
    assert_allclose(law.cdf(law.quantile(qs)), qs, rtol=0, atol=2 * law.quad_tol)
    grid = np.linspace(-4, 4, 401)
    assert np.all(np.diff(law.cdf(grid)) >= 0)


def test_ou_quantile_oracle(ou_law):
    assert abs(ou_law.quantile(0.5)) < 1e-10
    ref = stats.norm.ppf(0.975, scale=math.sqrt(0.5))
    assert_allclose(ou_law.quantile(0.975), ref, atol=1e-8)
    assert_allclose(ou_law.quantile(0.975), 1.3859, atol=1e-4)


@pytest.mark.parametrize("fixture", ["ou_law", "ou_sin_law"])
def test_density_derivative_relation(fixture, request):
    law = request.getfixturevalue(fixture)
    xs = np.linspace(-3, 3, 61)
    step = 1e-4
    fd = (law.density(xs + step) - law.density(xs - step)) / (2 * step)
    rhs = 2.0 * law.drift.b(xs) * law.density(xs)
    assert np.max(np.abs(fd - rhs)) <= 10 * law.quad_tol + 1e-6
    assert_allclose(law.density_derivative(xs), rhs, atol=1e-9)


def test_density_sup_bounds_grid(ou_sin_law):
    xs = np.linspace(-6, 6, 2001)
    assert np.all(ou_sin_law.density(xs) <= ou_sin_law.density_sup() + 1e-12)


# --- moment constant


def _ou_abs_moment(p):
    # N(0, 1/2): E|X|^p = (1/2)^{p/2} 2^{p/2} Gamma((p+1)/2) / sqrt(pi)
    return special.gamma((p + 1) / 2.0) / math.sqrt(math.pi)


def test_moment_candidates_ou(ou_law):
    cands = moment_candidates(ou_law, 8)
    assert_allclose(cands[0], 1.0 / math.sqrt(math.pi), rtol=1e-8)
    assert_allclose(cands[1], math.sqrt(0.5) / 2.0, rtol=1e-8)
    ref = np.array([_ou_abs_moment(p) ** (1.0 / p) / p for p in range(1, 9)])
    assert_allclose(cands, ref, rtol=1e-7)


def test_estimate_C_mo_is_max(ou_law):
    c = estimate_C_mo(ou_law, 32)
    assert np.all(moment_candidates(ou_law, 32) <= c)
    for p in range(1, 33):
        assert ou_law.moment(p) ** (1.0 / p) <= c * p * (1 + 1e-12)
    with pytest.raises(ParameterError):
        estimate_C_mo(ou_law, 1)


def test_k_ratio_and_constants(ou_law):
    d = ou_law.drift
    assert_allclose(k_ratio(d), 0.5 + math.exp(4.0) / 4.0)
    mc = compute_constants(ou_law)
    assert mc.C_mo > 0 and mc.K_ratio > 0
    assert_allclose(mc.density_sup, 1.0 / math.sqrt(math.pi), rtol=1e-8)
    # sup |rho'| for N(0, 1/2) sits at x = 1/sqrt(2)
    assert_allclose(mc.density_deriv_sup, 2 * (2 ** -0.5) * math.exp(-0.5) / math.sqrt(math.pi), rtol=1e-6)
