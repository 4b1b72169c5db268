"""Property tests of the invariants of every module."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from ergodiff.approx import _pnorm, indicator_h
from ergodiff.bounds import (
    BoundParams,
    centlt_bounds,
    localtime_sup_bound,
    localtime_sup_tail,
    maximal_inequality_threshold,
    moment_to_tail,
    phi_t,
    phi_t_b,
    stochint_bound,
    stochint_bound_improved,
)
from ergodiff.entropy import (
    class_from_members,
    covering_bound_vc,
    covering_number_empirical,
    greedy_cover,
    kernel_translate_class,
    l2_metric,
)
from ergodiff.estimators import kernel_density, make_kernel
from ergodiff.functionals import local_time_occupation, local_time_tanaka, tanaka_residual
from ergodiff.harness import ExperimentConfig
from ergodiff.harness.experiments import tail_pass_limit
from ergodiff.model import build_law, estimate_C_mo, make_drift, moment_candidates
from ergodiff.simulate import SeedStream, simulate_path

SETTINGS = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
SLOW = settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])

drifts = st.one_of(
    st.builds(lambda th: make_drift("ou", {"theta": th}), st.floats(0.3, 4.0)),
    st.builds(lambda th, a: make_drift("ou_sin", {"theta": th, "amplitude": a}),
              st.floats(1.0, 3.0), st.floats(0.1, 1.5)),
)


# --- model


@SETTINGS
@given(drifts)
def test_law_normalized_and_consistent(d):
    law = build_law(d)
    r = law.trunc_radius
    mass = integrate.quad(lambda y: float(law.density(y)), -r, r, points=[0.0], limit=400, epsabs=1e-12)[0]
    assert abs(mass - 1.0) <= 1e-8
    # rho' = 2 b rho
    xs = np.linspace(-2.0, 2.0, 41)
    e = 1e-4
    fd = (law.density(xs + e) - law.density(xs - e)) / (2 * e)
    assert_allclose(fd, 2 * d.b(xs) * law.density(xs), atol=1e-6)
    qs = np.array([0.01, 0.1, 0.5, 0.9, 0.99])
    assert_allclose(law.cdf(law.quantile(qs)), qs, atol=2 * law.quad_tol + 1e-12)


@SETTINGS
@given(st.floats(0.3, 4.0))
def test_ou_normalizing_constant(theta):
    law = build_law(make_drift("ou", {"theta": theta}))
    assert_allclose(law.C_b, math.sqrt(math.pi / theta), rtol=1e-8)


@SLOW
@given(drifts)
def test_moment_constant_dominates(d):
    law = build_law(d)
    C = estimate_C_mo(law, p_max=8)
    assert_allclose(moment_candidates(law, p_max=8), [law.moment(p) ** (1.0 / p) / p for p in range(1, 9)])
    for p in range(1, 9):
        assert law.moment(p) ** (1.0 / p) <= C * p * (1 + 1e-12)


# --- simulation and local time


@SETTINGS
@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 2 ** 40))
def test_path_reproducible(seed, idx):
    law = build_law(make_drift("ou"))
    a = simulate_path(law, 1e-3, 1.0, SeedStream(seed, idx))
    b = simulate_path(law, 1e-3, 1.0, SeedStream(seed, idx))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.dw, b.dw)


@SETTINGS
@given(st.integers(0, 2 ** 32), st.integers(1000, 20000))
def test_tanaka_identity_and_nonnegativity(seed, n_steps):
    horizon = n_steps * 1e-3
    law = build_law(make_drift("ou_sin"))
    path = simulate_path(law, 1e-3, horizon, SeedStream(seed, 0))
    tan = local_time_tanaka(path)
    assert np.max(np.abs(tanaka_residual(path, tan))) <= 1e-9
    assert np.all(tan.values >= 0)
    occ = local_time_occupation(path, epsilon=0.05)
    assert np.all(occ.values >= 0)


# --- estimators


@SETTINGS
@given(st.integers(0, 3), st.floats(0.05, 0.5), st.integers(0, 1000))
def test_kernel_density_has_unit_mass(order, h, seed):
    law = build_law(make_drift("ou"))
    path = simulate_path(law, 1e-2, 5.0, SeedStream(seed, 0))
    lo, hi = np.min(path.x) - h, np.max(path.x) + h
    xs = np.linspace(lo, hi, 4001)
    est = kernel_density(path, make_kernel(order), h, xs)
    assert_allclose(np.trapezoid(est.ys, xs), 1.0, atol=1e-4)


# --- approx


@SETTINGS
@given(st.floats(-2.5, 2.5))
def test_indicator_h_continuous_at_level(x):
    h = indicator_h(build_law(make_drift("ou")), x)
    assert abs(h(x - 1e-9) - h(x + 1e-9)) <= 1e-6


@SETTINGS
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50))
def test_empirical_pnorms_nondecreasing(values):
    norms = [_pnorm(values, p) for p in (1.0, 2.0, 3.0, 4.0, 8.0)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(norms[:-1], norms[1:]))


# --- entropy


classes = st.builds(
    lambda seed, n: class_from_members(
        np.random.default_rng(seed).normal(size=(n, 3)) @ np.vstack(
            [np.sin((k + 1) * np.pi * np.linspace(0, 1, 101)) for k in range(3)]),
        np.linspace(0, 1, 101)),
    st.integers(0, 10 ** 6), st.integers(1, 15),
)


@SETTINGS
@given(classes, st.lists(st.floats(1e-3, 5.0), min_size=2, max_size=6))
def test_covering_nonincreasing(fc, radii):
    radii = sorted(radii)
    counts = [covering_number_empirical(fc, l2_metric(), u) for u in radii]
    assert counts == sorted(counts, reverse=True)
    assert 1 <= counts[-1] and counts[0] <= fc.size


@SETTINGS
@given(classes, st.floats(1e-3, 5.0))
def test_greedy_cover_valid(fc, u):
    D = l2_metric().pairwise(fc)
    centers = greedy_cover(D, u)
    assert np.all(D[:, centers].min(axis=1) <= u)


@SETTINGS
@given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=6))
def test_vc_bound_nonincreasing(eps):
    fc = kernel_translate_class(make_kernel(1), 0.1, [0.0, 0.3])
    vals = [covering_bound_vc(fc, e) for e in sorted(eps)]
    assert vals == sorted(vals, reverse=True)


@SETTINGS
@given(st.integers(-200, 200))
def test_translation_invariance(shift):
    k = make_kernel(1)
    centers = np.linspace(-0.5, 0.5, 9)
    base = kernel_translate_class(k, 0.1, centers)
    moved = kernel_translate_class(k, 0.1, centers + shift * 0.1 / 64.0)
    for u in (0.03, 0.1, 0.3):
        assert covering_number_empirical(base, l2_metric(), u) == covering_number_empirical(moved, l2_metric(), u)


# --- bounds


params = st.builds(
    BoundParams,
    C_mo=st.floats(0.2, 3.0), C_growth=st.floats(1.0, 3.0), kappa=st.floats(0.1, 5.0),
    S_len=st.floats(0.05, 2.0), V_rad=st.floats(0.05, 0.2), LL=st.floats(0.1, 3.0), zeta=st.floats(0.1, 3.0),
)


@SETTINGS
@given(params, st.floats(1.0, 1e4), st.lists(st.floats(1.0, 50.0), min_size=2, max_size=6))
def test_evaluators_monotone(bp, t, grid):
    grid = sorted(grid)

    def check(fn):
        vals = [fn(x) for x in grid]
        assert all(b >= a * (1 - 1e-12) for a, b in zip(vals[:-1], vals[1:]))

    check(lambda u: maximal_inequality_threshold(bp, 4 * t, math.sqrt(t), u))
    check(lambda u: localtime_sup_tail(bp, t, u)[0])
    check(lambda p: localtime_sup_bound(bp, t, p))
    check(lambda u: phi_t(bp, t, u))
    check(lambda u: phi_t_b(bp, t, u))
    check(lambda p: stochint_bound(bp, t, p))
    check(lambda p: stochint_bound_improved(bp, t, p))
    check(lambda u: centlt_bounds(bp, t, 1.0, u)[1])
    check(lambda p: centlt_bounds(bp, t, p, 1.0)[0])


@SETTINGS
@given(st.floats(1.0, 700.0), st.floats(0.1, 10.0))
def test_moment_to_tail_shape(u, scale):
    thr, tail = moment_to_tail(lambda p: scale * p, u)
    assert_allclose(thr, math.e * scale * u)
    assert_allclose(tail, math.exp(-u))


@SETTINGS
@given(st.floats(1.0, 10.0), st.integers(1, 10 ** 6))
def test_pass_limit_decreases_in_n(u, n):
    assert tail_pass_limit(u, 2 * n) < tail_pass_limit(u, n)
    assert tail_pass_limit(u, n) > math.exp(-u)


# --- harness


@SETTINGS
@given(
    st.lists(st.floats(1.0, 1e5), min_size=1, max_size=5, unique=True),
    st.integers(1, 500), st.integers(0, 2 ** 64 - 1), st.sampled_from(["tanaka", "occupation"]),
)
def test_config_roundtrip(horizons, n, seed, method):
    cfg = ExperimentConfig(horizons=sorted(horizons), n_replicates=n, root_seed=seed, local_time_method=method)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
