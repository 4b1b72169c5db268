"""Path functionals: local time, empirical processes and stochastic integrals.

Time integrals are left-point Riemann sums over ``k = 0, ..., N-1`` and
stochastic integrals use the left-point (Ito) convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import EvaluationError, ParameterError
from .simulate import Path

DEFAULT_EPSILON = 0.05


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values ``ys`` on a strictly increasing grid ``xs``."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape:
            raise ParameterError("xs and ys must be 1-d arrays of equal length")
        if xs.size > 1 and not np.all(np.diff(xs) > 0):
            raise ParameterError("xs must be strictly increasing")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)


@dataclass(frozen=True, eq=False)
class LocalTimeField:
    """Estimated local time ``L_t^a`` on a level grid."""

    levels: np.ndarray
    values: np.ndarray = field(repr=False)
    epsilon: float | None
    method: str
    path_ref: str
    horizon: float

    @property
    def grid_step(self) -> float:
        return float(self.levels[1] - self.levels[0]) if self.levels.size > 1 else 1.0

    def total_occupation(self) -> float:
        """Riemann sum of the field over its levels, close to the horizon."""
        return float(np.sum(self.values) * self.grid_step)

    def as_grid_function(self) -> GridFunction:
        return GridFunction(self.levels, self.values)


def default_levels(path: Path, epsilon=DEFAULT_EPSILON) -> np.ndarray:
    """Step ``epsilon/2`` over ``[min x - epsilon, max x + epsilon]``."""
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    step = 0.5 * epsilon
    lo = float(np.min(path.x)) - epsilon
    hi = float(np.max(path.x)) + epsilon
    m = int(math.floor((hi - lo) / step)) + 1
    return lo + step * np.arange(m)


def _check_levels(levels):
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 1 or levels.size == 0:
        raise ParameterError("levels must be a nonempty 1-d array")
    if levels.size > 1 and not np.all(np.diff(levels) > 0):
        raise ParameterError("levels must be strictly increasing")
    return levels


def local_time_occupation(path: Path, levels=None, epsilon=DEFAULT_EPSILON) -> LocalTimeField:
    """Band-occupation local time ``(delta/epsilon) #{k : a <= x[k] <= a + epsilon}``."""
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    levels = default_levels(path, epsilon) if levels is None else _check_levels(levels)
    samples = np.sort(path.x[:-1])
    upper = np.searchsorted(samples, levels + epsilon, side="right")
    lower = np.searchsorted(samples, levels, side="left")
    values = path.delta * (upper - lower) / epsilon
    return LocalTimeField(levels, values, float(epsilon), "occupation", path.ident, path.horizon)


@numba.njit(cache=True)
def _crossing_overshoots(x, levels):
    # 0.5 * L^a equals the sum, over steps that cross a, of the distance the
    # step ends beyond a; steps that do not cross a contribute nothing.
    out = np.zeros(levels.size)
    for k in range(x.size - 1):
        a = x[k]
        b = x[k + 1]
        lo = min(a, b)
        hi = max(a, b)
        i = np.searchsorted(levels, lo)
        while i < levels.size and levels[i] < hi:
            out[i] += abs(b - levels[i])
            i += 1
    return out


def local_time_tanaka(path: Path, levels=None) -> LocalTimeField:
    """Tanaka local time ``2[(x_T-a)^- - (x_0-a)^- + sum_k 1{x[k]<=a}(x[k+1]-x[k])]``.

    The sum is rearranged into per-crossing overshoots, which is algebraically
    identical, nonnegative, and exactly zero at levels the path never crosses.
    """
    levels = default_levels(path) if levels is None else _check_levels(levels)
    values = 2.0 * _crossing_overshoots(np.ascontiguousarray(path.x), levels)
    return LocalTimeField(levels, values, None, "tanaka", path.ident, path.horizon)


def tanaka_terms(path: Path, levels) -> np.ndarray:
    """Right-hand side ``(x_T-a)^- - (x_0-a)^- + sum_k 1{x[k]<=a} dx[k]`` per level.

    Computed literally, by prefix sums over the levels, as an independent
    check of ``local_time_tanaka``.
    """
    levels = _check_levels(levels)
    x = path.x
    dx = np.diff(x)
    idx = np.searchsorted(levels, x[:-1], side="left")
    s = np.cumsum(np.bincount(idx, weights=dx, minlength=levels.size + 1)[: levels.size])
    neg = lambda y: np.maximum(-y, 0.0)
    return neg(x[-1] - levels) - neg(x[0] - levels) + s


def tanaka_residual(path: Path, lt: LocalTimeField) -> np.ndarray:
    """``|tanaka_terms - L/2|`` per level."""
    return np.abs(tanaka_terms(path, lt.levels) - 0.5 * lt.values)


def _values(fun, xs):
    v = np.asarray(fun(xs), dtype=float)
    if v.shape != xs.shape:
        v = np.broadcast_to(v, xs.shape).astype(float)
    if not np.all(np.isfinite(v)):
        raise EvaluationError("integrand is not finite on the path")
    return v


def empirical_process(path: Path, f, b0=None, mean_fb0=0.0) -> float:
    """``sqrt(t) ((delta/t) sum_k f(x[k]) b0(x[k]) - mean_fb0)``.

    ``b0`` defaults to the constant 1.
    """
    xs = path.x[:-1]
    v = _values(f, xs)
    if b0 is not None:
        v = v * _values(b0, xs)
    t = path.horizon
    return math.sqrt(t) * (path.delta / t * float(np.sum(v)) - mean_fb0)


def stochastic_integral_process(path: Path, f, mean_fb=0.0) -> float:
    """``sqrt(t) ((1/t) sum_k f(x[k]) (x[k+1] - x[k]) - mean_fb)``."""
    v = _values(f, path.x[:-1])
    t = path.horizon
    return math.sqrt(t) * (float(np.dot(v, np.diff(path.x))) / t - mean_fb)


def sup_over_grid(values: GridFunction):
    """``(xs[i], |ys[i]|)`` at the first index maximizing ``|ys|``."""
    if values.xs.size == 0:
        raise ParameterError("empty grid")
    i = int(np.argmax(np.abs(values.ys)))
    return float(values.xs[i]), float(abs(values.ys[i]))


def occupation_discrepancy(path: Path, lt: LocalTimeField, f) -> float:
    """Relative gap in the occupation-times formula.

    ``|delta sum_k f(x[k]) - sum_a f(a) L^a step| / (t ||f||_inf)``, with the
    sup norm taken over the level grid and the path samples.
    """
    xs = path.x[:-1]
    fx = _values(f, xs)
    fa = _values(f, lt.levels)
    lhs = path.delta * float(np.sum(fx))
    rhs = float(np.sum(fa * lt.values)) * lt.grid_step
    scale = max(float(np.max(np.abs(fx))), float(np.max(np.abs(fa))))
    if scale == 0.0:
        return 0.0
    return abs(lhs - rhs) / (path.horizon * scale)


# continuous compactly supported test functions for the occupation formula
def _hat(center, half_width):
    def f(x):
        return np.maximum(1.0 - np.abs(np.asarray(x, dtype=float) - center) / half_width, 0.0)

    return f


def _bump(x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    out = np.zeros_like(x)
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
    return out


def _raised_cosine(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1.0, 0.5 * (1.0 + np.cos(np.pi * x)), 0.0)


def _tent_plateau(x):
    # trapezoid: flat on [-0.5, 0.5], linear to zero at +-1.5
    x = np.abs(np.asarray(x, dtype=float))
    return np.clip(1.5 - x, 0.0, 1.0)


TEST_FUNCTIONS = {
    "hat": _hat(0.0, 1.0),
    "shifted_hat": _hat(0.5, 1.0),
    "bump": _bump,
    "raised_cosine": _raised_cosine,
    "trapezoid": _tent_plateau,
}


def write_local_time_csv(lt: LocalTimeField, file) -> None:
    """CSV of ``(level, value)`` preceded by ``#`` metadata lines."""
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    fh = open(file, "w", newline="\n") if own else file
    try:
        fh.write(f"# method={lt.method}\n")
        fh.write(f"# epsilon={lt.epsilon!r}\n")
        fh.write(f"# horizon={lt.horizon!r}\n")
        fh.write(f"# path={lt.path_ref}\n")
        fh.write("level,value\n")
        for a, v in zip(lt.levels, lt.values):
            fh.write(f"{float(a)!r},{float(v)!r}\n")
    finally:
        if own:
            fh.close()
