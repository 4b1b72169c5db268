"""Euler-Maruyama paths started from the invariant law.

Randomness comes from a Philox counter-based generator keyed by
``(root_seed, stream_index)``, so a replicate can be regenerated anywhere
without replaying any other stream. Gaussian increments are inverse-CDF
transforms of uniforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import ndtri

from .errors import DivergenceError, ParameterError
from .model import DriftSpec, StationaryLaw

OVERFLOW_GUARD = 1e6
MAX_STEPS = 10 ** 9


@dataclass(frozen=True)
class SeedStream:
    """Independent random substream identified by ``(root_seed, stream_index)``."""

    root_seed: int
    stream_index: int

    def __post_init__(self):
        if not 0 <= int(self.root_seed) < 2 ** 64:
            raise ParameterError("root_seed must be a 64-bit unsigned integer")
        if int(self.stream_index) < 0:
            raise ParameterError("stream_index must be nonnegative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.root_seed), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.Philox(seq))


def open_uniforms(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` uniforms on the open interval (0, 1)."""
    u = rng.random(n)
    u[u == 0.0] = 2.0 ** -54
    return u


@dataclass(frozen=True, eq=False)
class Path:
    """A discretized trajectory.

    ``x[k]`` approximates ``X_{k delta}`` and ``dw[k]`` is the Brownian
    increment over ``[k delta, (k+1) delta]``.
    """

    delta: float
    horizon: float
    x: np.ndarray = field(repr=False)
    dw: np.ndarray = field(repr=False)
    seed: int
    stream_index: int
    scheme: str = "euler_maruyama"

    @property
    def n_steps(self) -> int:
        return self.dw.size

    @property
    def ident(self) -> str:
        return f"{self.seed}:{self.stream_index}"

    @property
    def times(self) -> np.ndarray:
        return self.delta * np.arange(self.x.size)


def sample_stationary_initial(law: StationaryLaw, stream: SeedStream) -> float:
    """``law.quantile(U)`` for the first uniform of the stream."""
    return float(law.quantile(open_uniforms(stream.generator(), 1)[0]))


@numba.njit(cache=False)
def _euler_jit(drift, x0, dw, delta, guard):
    n = dw.size
    x = np.empty(n + 1)
    x[0] = x0
    for k in range(n):
        nxt = x[k] + drift(x[k]) * delta + dw[k]
        if not abs(nxt) <= guard:
            x[k + 1] = nxt
            return x, k + 1
        x[k + 1] = nxt
    return x, -1


def _euler_python(b, x0, dw, delta, guard):
    x = np.empty(dw.size + 1)
    x[0] = x0
    cur = float(x0)
    for k in range(dw.size):
        cur = cur + float(b(np.array([cur]))[0]) * delta + dw[k]
        x[k + 1] = cur
        if not abs(cur) <= guard:
            return x, k + 1
    return x, -1


_JIT_CACHE: dict = {}


def compiled_drift(d: DriftSpec):
    """JIT version of the drift's scalar form, or None when not available.

    Registry drifts are cached by name and parameters; custom drifts by the
    identity of their scalar function, which the cache keeps alive.
    """
    if d.scalar is None:
        return None
    if d.name == "custom":
        key = ("custom", id(d.scalar))
    else:
        key = (d.name, tuple(sorted(d.params.items())))
    hit = _JIT_CACHE.get(key)
    if hit is None:
        hit = (numba.njit(d.scalar), d.scalar)
        _JIT_CACHE[key] = hit
    return hit[0]


def euler_maruyama(d: DriftSpec, x0: float, dw: np.ndarray, delta: float, guard=OVERFLOW_GUARD):
    """Run the recursion ``x[k+1] = x[k] + b(x[k]) delta + dw[k]``.

    Raises
    ------
    DivergenceError
        If ``|x[k]| > guard`` for some ``k``.
    """
    jit = compiled_drift(d)
    if jit is not None:
        x, bad = _euler_jit(jit, float(x0), dw, float(delta), float(guard))
    else:
        x, bad = _euler_python(d.b, float(x0), dw, float(delta), float(guard))
    if bad >= 0:
        raise DivergenceError(bad, x[bad], guard)
    return x


def n_steps_for(delta: float, horizon: float) -> int:
    if not (delta > 0 and horizon > 0):
        raise ParameterError("delta and horizon must be positive")
    n = int(round(horizon / delta))
    if n < 1 or abs(n * delta - horizon) > 1e-9 * horizon:
        raise ParameterError(f"horizon/delta must be an integer, got {horizon / delta}")
    if n > MAX_STEPS:
        raise ParameterError("horizon/delta exceeds 1e9 steps")
    return n


def simulate_path(
    law: StationaryLaw,
    delta: float,
    horizon: float,
    stream: SeedStream,
    *,
    overflow_guard=OVERFLOW_GUARD,
    max_delta=0.01,
) -> Path:
    """Simulate a stationary Euler-Maruyama path.

    The first uniform of the stream sets ``x[0]`` through the quantile
    function; the next ``horizon/delta`` uniforms give the increments.

    Parameters
    ----------
    law : StationaryLaw
    delta : float
        Time step, at most ``max_delta``.
    horizon : float
        Must be an integer multiple of ``delta``.
    stream : SeedStream
    overflow_guard : float
    max_delta : float

    Raises
    ------
    DivergenceError
    ParameterError
    """
    if delta > max_delta:
        raise ParameterError(f"delta={delta} exceeds the step policy {max_delta}")
    n = n_steps_for(delta, horizon)
    rng = stream.generator()
    x0 = float(law.quantile(open_uniforms(rng, 1)[0]))
    dw = open_uniforms(rng, n)
    ndtri(dw, out=dw)
    dw *= math.sqrt(delta)
    x = euler_maruyama(law.drift, x0, dw, delta, overflow_guard)
    x.setflags(write=False)
    dw.setflags(write=False)
    return Path(
        delta=float(delta),
        horizon=float(horizon),
        x=x,
        dw=dw,
        seed=int(stream.root_seed),
        stream_index=int(stream.stream_index),
    )


def write_path_csv(path: Path, file) -> None:
    """Write columns ``k, t_k, x_k, dw_k``; the last row has an empty ``dw_k``."""
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    fh = open(file, "w", newline="\n") if own else file
    try:
        fh.write("k,t_k,x_k,dw_k\n")
        n = path.x.size
        k = np.arange(n)
        t = path.delta * k
        dw = np.append(path.dw, np.nan)
        for row in zip(k, t, path.x, dw):
            last = "" if math.isnan(row[3]) else repr(float(row[3]))
            fh.write(f"{row[0]},{float(row[1])!r},{float(row[2])!r},{last}\n")
    finally:
        if own:
            fh.close()
