import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from ergodiff.errors import ParameterError
from ergodiff.estimators import (
    bias_bound,
    evaluation_grid,
    exact_bias,
    kernel_density,
    local_time_density,
    make_kernel,
    sup_error,
    write_density_csv,
    DensityEstimate,
)
from ergodiff.functionals import LocalTimeField, local_time_occupation, local_time_tanaka
from ergodiff.simulate import Path, SeedStream, simulate_path


def _quad(f, pts=()):
    return integrate.quad(f, -0.5, 0.5, points=pts or None, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


# --- kernels


def test_order_one_kernel():
    k = make_kernel(1)
    assert_allclose(k.coeffs, [1.5, 0.0, -6.0], atol=1e-12)
    assert_allclose(k(0.0), 1.5)
    assert k(0.5) == pytest.approx(0.0, abs=1e-13)
    # second moment by independent quadrature: (3/2) int u^2 (1 - 4u^2) = 0.05
    m2 = _quad(lambda u: u * u * 1.5 * (1 - 4 * u * u))
    assert_allclose(m2, 0.05, atol=1e-13)
    assert_allclose(k.moment(2), m2, atol=1e-13)


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_kernel_invariants(order):
    k = make_kernel(order)
    assert abs(_quad(k.eval) - 1.0) <= 1e-12
    for j in range(1, order + 1):
        assert abs(_quad(lambda u: u ** j * k.eval(u))) <= 1e-10
    u = np.linspace(-0.7, 0.7, 141)
    assert_allclose(k(u), k(-u), atol=1e-14)
    assert np.all(k(u[np.abs(u) > 0.5]) == 0.0)


def test_orders_zero_and_one_coincide():
    assert_allclose(make_kernel(0).coeffs, make_kernel(1).coeffs)
    assert_allclose(make_kernel(2).coeffs, [2.8125, 0.0, -37.5, 0.0, 105.0], atol=1e-9)


@pytest.mark.parametrize("order", [1, 2])
def test_kernel_norms_against_quadrature(order):
    k = make_kernel(order)
    roots = [r.real for r in k.poly.roots() if abs(r.imag) < 1e-12 and abs(r.real) < 0.5]
    assert_allclose(k.l1_norm, _quad(lambda u: abs(k.eval(u)), roots), rtol=1e-10)
    assert_allclose(k.l2_norm, math.sqrt(_quad(lambda u: k.eval(u) ** 2)), rtol=1e-10)
    u = np.linspace(-0.5, 0.5, 200001)
    assert_allclose(k.sup_norm, np.max(np.abs(k(u))), rtol=1e-8)
    assert_allclose(k.tv_norm, np.sum(np.abs(np.diff(k(u)))), rtol=1e-6)
    assert_allclose(k.lip_const, np.max(np.abs(np.diff(k(u)) / np.diff(u))), rtol=1e-4)
    # v = s^2 removes the sqrt singularity at the origin; K is even
    kinks = [math.sqrt(r) for r in roots if r > 0]
    for beta in (0.5, 1.0, 2.0):
        ref = 2 * integrate.quad(lambda s: s ** (2 * beta) * abs(k.eval(s * s)) * 2 * s, 0, math.sqrt(0.5),
                                 points=kinks or None, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        assert_allclose(k.abs_beta_moment(beta), ref, rtol=1e-9)


def test_sqrt_abs_moment_order_one():
    # 2 (3/2) int_0^{1/2} (1 - 4u^2) sqrt(u) du
    ref = 3.0 * integrate.quad(lambda u: (1 - 4 * u * u) * math.sqrt(u), 0, 0.5, epsabs=1e-14)[0]
    assert_allclose(make_kernel(1).sqrt_abs_moment(), ref, rtol=1e-12)
    assert_allclose(ref, 0.404061, atol=1e-6)


def test_unsupported_order():
    with pytest.raises(ParameterError):
        make_kernel(4)


# --- density estimates


def test_local_time_density_zero_and_mass(ou_path):
    levels = np.linspace(-1, 1, 9)
    zero = LocalTimeField(levels, np.zeros(9), None, "tanaka", "x", 1.0)
    assert np.all(local_time_density(zero, 10.0).ys == 0)
    lt = local_time_occupation(ou_path)
    est = local_time_density(lt, ou_path.horizon)
    assert abs(np.sum(est.ys) * lt.grid_step - 1.0) <= 0.02


def test_kernel_density_support():
    x = np.full(1001, 0.3)
    path = Path(1e-3, 1.0, x, np.zeros(1000), 0, 0)
    k = make_kernel(1)
    est = kernel_density(path, k, 0.1, np.array([0.3 - 0.06, 0.3, 0.3 + 0.06]))
    assert est.ys[0] == 0.0 and est.ys[2] == 0.0
    assert_allclose(est.ys[1], 1.5 / 0.1)


def test_kernel_density_mass_and_definition(ou_path):
    k = make_kernel(1)
    h = 0.05
    xs = np.linspace(-4, 4, 1601)
    est = kernel_density(ou_path, k, h, xs)
    assert abs(np.sum(est.ys) * (xs[1] - xs[0]) - 1.0) <= 0.02
    # brute force definition at a few points
    for i in (400, 800, 1000):
        ref = 1e-3 / (400 * h) * np.sum(k((xs[i] - ou_path.x[:-1]) / h))
        assert_allclose(est.ys[i], ref, rtol=1e-10)


def test_kernel_density_rejects_bandwidths(ou_path):
    k = make_kernel(1)
    for h in (0.0, -0.1, 1.0, 1e-4):
        with pytest.raises(ParameterError):
            kernel_density(ou_path, k, h, np.zeros(1))


def test_smoothing_identity(ou_path):
    # the kernel estimate is the kernel smoothing of the local time field
    k = make_kernel(1)
    h = 0.1
    xs = np.linspace(-2, 2, 81)
    est = kernel_density(ou_path, k, h, xs)
    step = 0.002
    levels = np.arange(-4.5, 4.5, step)
    lt = local_time_tanaka(ou_path, levels)
    conv = np.array([np.sum(k((x - levels) / h) / h * lt.values) * step for x in xs]) / ou_path.horizon
    assert np.max(np.abs(conv - est.ys)) <= 0.02 * np.max(est.ys)


def test_difference_shrinks_with_bandwidth(ou_law):
    # at delta = 1e-4 the discrete Tanaka field is fine enough to show the trend
    k = make_kernel(1)
    med = []
    for h in (0.2, 0.1, 0.05):
        vals = []
        for r in range(20):
            p = simulate_path(ou_law, 1e-4, 400.0, SeedStream(5, r))
            g = evaluation_grid(ou_law, h)
            d = kernel_density(p, k, h, g).ys - local_time_tanaka(p, g).values / p.horizon
            vals.append(math.sqrt(p.horizon) * np.max(np.abs(d)))
        med.append(np.median(vals))
    assert med[0] > med[1] > med[2]


def test_mean_sup_errors_at_1600(ou_law):
    k = make_kernel(1)
    t = 1600.0
    h = t ** -0.5
    grid = evaluation_grid(ou_law, h)
    lt_err, kde_err = [], []
    for r in range(100):
        p = simulate_path(ou_law, 1e-3, t, SeedStream(41, r))
        kde_err.append(sup_error(kernel_density(p, k, h, grid), ou_law))
        lt_err.append(sup_error(local_time_density(local_time_tanaka(p, grid), t), ou_law))
    assert np.mean(lt_err) <= 0.06
    assert np.mean(kde_err) <= 0.07


# --- bias


def test_bias_vanishes_for_tiny_bandwidth(ou_law):
    xs = np.linspace(-2, 2, 41)
    assert np.max(np.abs(exact_bias(ou_law, make_kernel(1), 1e-5, xs).ys)) <= 1e-6


@pytest.mark.parametrize("h", [0.2, 0.1, 0.05])
def test_bias_taylor_bound(ou_law, h):
    k = make_kernel(1)
    xs = evaluation_grid(ou_law, h)
    bias = np.max(np.abs(exact_bias(ou_law, k, h, xs).ys))
    # rho'' = (4x^2 - 2) rho for OU; sup by a dense scan
    u = np.linspace(-6, 6, 120001)
    sup2 = np.max(np.abs((4 * u * u - 2) * np.exp(-u * u) / math.sqrt(math.pi)))
    assert_allclose(sup2, 2 / math.sqrt(math.pi), rtol=1e-9)
    assert bias <= h * h * sup2 / 2 * k.moment(2)
    hold = ou_law.drift.holder
    assert bias <= bias_bound(k, h, hold.beta, hold.L_holder)


def test_bias_bound_formula():
    k = make_kernel(1)
    assert_allclose(bias_bound(k, 0.1, 2.0, 3.0), 0.01 * 3.0 / 1.0 * 0.05)
    assert_allclose(bias_bound(k, 0.1, 1.5, 3.0), 0.1 ** 1.5 * 3.0 * k.abs_beta_moment(1.5))


# --- sup error and export


def test_sup_error_cases(ou_law):
    xs = np.linspace(-2, 2, 11)
    truth = ou_law.density(xs)
    assert sup_error(DensityEstimate(xs, truth, 0.1, "x"), ou_law) == 0.0
    assert_allclose(sup_error(DensityEstimate(xs, np.zeros(11), 0.1, "x"), ou_law), np.max(truth))
    rng = np.random.default_rng(1)
    ys = truth + rng.normal(scale=0.01, size=11)
    assert sup_error(DensityEstimate(xs, ys, 0.1, "x"), ou_law) == max(abs(a - b) for a, b in zip(ys, truth))


def test_evaluation_grid(ou_law):
    g = evaluation_grid(ou_law, 0.02)
    assert_allclose(np.diff(g), 0.005)
    assert_allclose(g[0], ou_law.quantile(0.001))
    assert g[-1] <= ou_law.quantile(0.999)
    assert_allclose(np.diff(evaluation_grid(ou_law, 0.2)), 0.01)


def test_density_csv(ou_law, ou_path, tmp_path):
    est = kernel_density(ou_path, make_kernel(1), 0.1, np.linspace(-1, 1, 5))
    f = tmp_path / "d.csv"
    write_density_csv(est, ou_law, f, {"estimator": "kernel"})
    lines = f.read_text().splitlines()
    assert lines[0] == "x,estimate,truth,abserr"
    assert len(lines) == 6
    side = json.loads((tmp_path / "d.json").read_text())
    assert side["bandwidth"] == 0.1 and side["estimator"] == "kernel"
    assert_allclose(side["sup_error"], sup_error(est, ou_law))
