import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal
from scipy import stats

from ergodiff.errors import DivergenceError, ParameterError
from ergodiff.simulate import SeedStream, sample_stationary_initial, simulate_path, write_path_csv


def test_recursion_is_exact(ou_law):
    path = simulate_path(ou_law, 1e-3, 1.0, SeedStream(5, 0))
    assert path.x.size == path.dw.size + 1 == 1001
    # the recursion is exact; its difference form holds up to rounding
    assert path.x[1] == path.x[0] + (-path.x[0]) * 1e-3 + path.dw[0]
    assert abs((path.x[1] - path.x[0]) - (-path.x[0] * 1e-3 + path.dw[0])) <= 4 * np.finfo(float).eps
    # every step, bit for bit
    xk = path.x[:-1]
    assert_array_equal(path.x[1:], xk + (-xk) * 1e-3 + path.dw)
    assert np.all(np.isfinite(path.x))


def test_reproducible_and_streams_differ(ou_law):
    a = simulate_path(ou_law, 1e-3, 10.0, SeedStream(9, 3))
    b = simulate_path(ou_law, 1e-3, 10.0, SeedStream(9, 3))
    c = simulate_path(ou_law, 1e-3, 10.0, SeedStream(9, 4))
    assert_array_equal(a.x, b.x)
    assert_array_equal(a.dw, b.dw)
    assert not np.array_equal(a.dw, c.dw)
    assert a.ident == "9:3"


def test_initial_value(ou_law):
    s = SeedStream(1, 2)
    x0 = sample_stationary_initial(ou_law, s)
    assert x0 == sample_stationary_initial(ou_law, s)
    assert x0 == simulate_path(ou_law, 1e-3, 1.0, s).x[0]
    assert abs(ou_law.quantile(0.5)) < 1e-10


def test_substream_independence(ou_law):
    a = simulate_path(ou_law, 1e-3, 10.0, SeedStream(0, 0)).dw[:10000]
    b = simulate_path(ou_law, 1e-3, 10.0, SeedStream(0, 1)).dw[:10000]
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02


def test_increments_are_gaussian(ou_law):
    dw = simulate_path(ou_law, 1e-3, 100.0, SeedStream(2, 0)).dw / math.sqrt(1e-3)
    assert abs(np.mean(dw)) < 4 / math.sqrt(dw.size)
    assert abs(np.var(dw) - 1) < 0.02
    assert stats.kstest(dw, "norm").pvalue > 1e-3


def test_ergodic_mean_and_variance(ou_law):
    path = simulate_path(ou_law, 1e-3, 1000.0, SeedStream(3, 0))
    t = path.horizon
    assert abs(np.mean(path.x)) <= 3 * math.sqrt(0.5 / t)
    assert 0.45 <= np.var(path.x) <= 0.55


def test_weak_stationarity_ks(ou_law):
    path = simulate_path(ou_law, 1e-3, 1000.0, SeedStream(4, 0))
    # samples two time units apart are close to independent
    sub = path.x[::2000]
    ks = stats.kstest(sub, lambda v: ou_law.cdf(v)).statistic
    assert ks < 0.1


def test_parameter_policies(ou_law):
    with pytest.raises(ParameterError):
        simulate_path(ou_law, 0.02, 1.0, SeedStream(0, 0))
    with pytest.raises(ParameterError):
        simulate_path(ou_law, 1e-3, 1.0005, SeedStream(0, 0))
    with pytest.raises(ParameterError):
        SeedStream(0, -1)
    with pytest.raises(ParameterError):
        SeedStream(2 ** 64, 0)


def test_divergence_guard(ou_law):
    with pytest.raises(DivergenceError):
        simulate_path(ou_law, 1e-3, 10.0, SeedStream(0, 0), overflow_guard=0.1)


def test_path_csv(ou_law, tmp_path):
    path = simulate_path(ou_law, 1e-2, 0.05, SeedStream(0, 0))
    f = tmp_path / "p.csv"
    write_path_csv(path, f)
    raw = f.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "k,t_k,x_k,dw_k"
    assert len(lines) == path.x.size + 1
    k, t, x, dw = lines[1].split(",")
    assert float(x) == path.x[0] and float(dw) == path.dw[0]
    assert lines[-1].endswith(",")
