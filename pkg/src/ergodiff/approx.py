"""Martingale approximation of additive functionals.

For a centered integrand ``g - mean_g`` the function

    h(u) = (2 / rho(u)) * int_{-inf}^{u} (g(y) - mean_g) rho(y) dy

solves ``h'/2 + b h = g - mean_g``, so with ``G' = h`` Ito's formula gives

    int_0^t (g(X_s) - mean_g) ds = -int_0^t h(X_s) dW_s + G(X_t) - G(X_0),

that is ``sqrt(t) * empirical_process = M + R``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, WindowError
from .functionals import empirical_process
from .model import NODE_STEP, StationaryLaw
from .quadrature import integrate_cells
from .simulate import Path, SeedStream, simulate_path

DEFAULT_STEP = 1e-3
DEFAULT_WINDOW_MASS = 1e-6
# smallest density we are prepared to divide by
DENSITY_FLOOR = 1e-250


def default_window(law: StationaryLaw, mass=DEFAULT_WINDOW_MASS):
    """``[q(mass), q(1 - mass)]`` of the invariant law."""
    lo, hi = law.quantile([mass, 1.0 - mass])
    return float(lo), float(hi)


def _vector(fun):
    def f(y):
        y = np.asarray(y, dtype=float)
        v = np.asarray(fun(y), dtype=float)
        return np.broadcast_to(v, y.shape).astype(float) if v.shape != y.shape else v

    return f


@dataclass(frozen=True, eq=False)
class ApproxKit:
    """Tabulated ``h^g`` and ``G^g`` on a window.

    Attributes
    ----------
    law : StationaryLaw
    g : callable
        The integrand, typically ``f * b0``.
    mean_g : float
        ``int g d mu_b``.
    eta, C_env : float
        Growth envelope ``|b0(x)| <= C_env (1 + |x|^eta)``.
    xs, hs, Gs : ndarray
        Grid, ``h^g`` and ``G^g`` on the grid. ``G`` is the exact integral of
        the piecewise linear interpolant of ``h``.
    base_point : float
        Where ``G`` vanishes: 0 when inside the window, else the left edge.
    centering_residual : float
        ``int (g - mean_g) rho_b`` by quadrature.
    """

    law: StationaryLaw
    g: object
    mean_g: float
    eta: float
    C_env: float
    xs: np.ndarray = field(repr=False)
    hs: np.ndarray = field(repr=False)
    Gs: np.ndarray = field(repr=False)
    base_point: float
    centering_residual: float

    @property
    def window(self):
        return float(self.xs[0]), float(self.xs[-1])

    @property
    def step(self):
        return float(self.xs[1] - self.xs[0])

    def _locate(self, u):
        u = np.asarray(u, dtype=float)
        lo, hi = self.window
        if u.size and (np.min(u) < lo or np.max(u) > hi):
            raise WindowError(
                f"argument outside the window [{lo:.6g}, {hi:.6g}]",
                max_abs=float(np.max(np.abs(u))),
            )
        i = np.clip(((u - lo) / self.step).astype(np.int64), 0, self.xs.size - 2)
        return u, i, u - self.xs[i]

    def h_fun(self, u):
        """Linear interpolation of ``h^g``."""
        u, i, r = self._locate(u)
        slope = (self.hs[i + 1] - self.hs[i]) / self.step
        v = self.hs[i] + slope * r
        return float(v) if np.ndim(u) == 0 else v

    def G_fun(self, z):
        """``G^g(z) = int_{base}^z h``, exact for the interpolant."""
        z, i, r = self._locate(z)
        slope = (self.hs[i + 1] - self.hs[i]) / self.step
        v = self.Gs[i] + self.hs[i] * r + 0.5 * slope * r * r
        return float(v) if np.ndim(z) == 0 else v

    def G_range(self):
        """``max G - min G`` over the window, a bound on every ``|R|``."""
        # the interpolant of G is quadratic per cell; extremes sit at nodes
        # or where h changes sign
        vals = [self.Gs]
        cross = np.nonzero(np.sign(self.hs[:-1]) * np.sign(self.hs[1:]) < 0)[0]
        if cross.size:
            a, b = self.hs[cross], self.hs[cross + 1]
            roots = self.xs[cross] + self.step * a / (a - b)
            vals.append(np.atleast_1d(self.G_fun(roots)))
        allv = np.concatenate(vals)
        return float(np.max(allv) - np.min(allv))


def build_h(
    law: StationaryLaw,
    g,
    window=None,
    *,
    step=DEFAULT_STEP,
    eta=0.0,
    C_env=1.0,
) -> ApproxKit:
    """Tabulate ``h^g`` on ``window`` with grid step ``step``.

    The cumulative integrals are taken from the left below the median and
    from the right above it, where each is a sum of small terms.

    Raises
    ------
    WindowError
        If the invariant density drops below ``DENSITY_FLOOR`` in the window
        or the window exceeds the tabulated support of the law.
    """
    if not step > 0:
        raise ParameterError("step must be positive")
    lo, hi = default_window(law) if window is None else (float(window[0]), float(window[1]))
    if not hi > lo:
        raise ParameterError("window must have positive length")
    reach = float(np.floor(law.trunc_radius / NODE_STEP) + 1) * NODE_STEP
    if lo <= -reach or hi >= reach:
        raise WindowError(f"window [{lo:.6g}, {hi:.6g}] exceeds the law support radius {reach:.6g}")
    # uniform grid; the right edge may move up by less than one step
    m = int(math.ceil((hi - lo) / step - 1e-9))
    xs = lo + step * np.arange(m + 1)
    if xs[-1] >= reach:
        raise WindowError(f"window [{lo:.6g}, {hi:.6g}] exceeds the law support radius {reach:.6g}")
    rho = np.atleast_1d(law.density(xs))
    if np.min(rho) < DENSITY_FLOOR:
        raise WindowError("invariant density underflows inside the window")

    g = _vector(g)
    left = law.nodes[(law.nodes > -reach) & (law.nodes < lo)]
    right = law.nodes[(law.nodes > hi) & (law.nodes < reach)]
    edges = np.concatenate(([-reach], left, xs, right, [reach]))
    inner = slice(1 + left.size, 1 + left.size + xs.size)

    density = lambda y: np.atleast_1d(law.density(y))
    mass_cells = integrate_cells(density, edges, law.quad_tol)
    g_probe = g(edges)
    scale = max(float(np.max(np.abs(g_probe))), 1e-300)
    g_cells = integrate_cells(lambda y: g(y) * density(y), edges, law.quad_tol * scale)
    mean_g = float(np.sum(g_cells) / np.sum(mass_cells))
    if np.all(g_probe == 0.0) and np.all(g_cells == 0.0):
        mean_g = 0.0
    centered = g_cells - mean_g * mass_cells

    H_left = np.concatenate(([0.0], np.cumsum(centered)))
    H_right = -np.concatenate((np.cumsum(centered[::-1])[::-1], [0.0]))
    use_left = xs <= float(law.quantile(0.5))
    H = np.where(use_left, H_left[inner], H_right[inner])
    hs = 2.0 * H / rho

    base = 0.0 if lo <= 0.0 <= hi else lo
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (hs[:-1] + hs[1:]) * np.diff(xs))))
    i = min(int((base - lo) / step), xs.size - 2)
    r = base - xs[i]
    cum = cum - (cum[i] + hs[i] * r + 0.5 * (hs[i + 1] - hs[i]) / (xs[i + 1] - xs[i]) * r * r)
    for arr in (xs, hs, cum):
        arr.setflags(write=False)
    return ApproxKit(law, g, mean_g, float(eta), float(C_env), xs, hs, cum, base, float(np.sum(centered)))


def indicator_h(law: StationaryLaw, x: float):
    """Closed-form ``h^{f_x}`` for ``f_x = 1{. <= x} b``.

    ``u -> rho(x)(1{u > x} - F(u)) / rho(u) + 1{u <= x}``, evaluated with
    log-density ratios and the survival function above ``x``.
    """
    x = float(x)
    lw_x = float(law.log_weight(x)[0])

    def h(u):
        ua = np.atleast_1d(np.asarray(u, dtype=float))
        ratio = np.exp(lw_x - law.log_weight(ua))
        above = ua > x
        out = np.empty_like(ua)
        if np.any(above):
            out[above] = ratio[above] * np.atleast_1d(law.sf(ua[above]))
        if np.any(~above):
            out[~above] = 1.0 - ratio[~above] * np.atleast_1d(law.cdf(ua[~above]))
        return float(out[0]) if np.ndim(u) == 0 else out

    return h


@dataclass(frozen=True)
class Decomposition:
    G: float
    M: float
    R: float
    residual: float

    def __iter__(self):
        return iter((self.G, self.M, self.R, self.residual))


def decompose(kit: ApproxKit, path: Path) -> Decomposition:
    """Split the empirical process on ``path`` into martingale and remainder.

    ``G`` is the empirical process of ``g``, ``M = -sum_k h(x[k]) dw[k]``,
    ``R = G^g(x_T) - G^g(x_0)`` and ``residual = |sqrt(t) G - (M + R)| / sqrt(t)``.

    Raises
    ------
    WindowError
        If the path leaves the window of ``kit``; carries ``max |x|``.
    """
    lo, hi = kit.window
    xmin, xmax = float(np.min(path.x)), float(np.max(path.x))
    if xmin < lo or xmax > hi:
        raise WindowError(
            f"path range [{xmin:.6g}, {xmax:.6g}] leaves the window [{lo:.6g}, {hi:.6g}]",
            max_abs=max(abs(xmin), abs(xmax)),
        )
    emp = empirical_process(path, kit.g, mean_fb0=kit.mean_g)
    M = -float(np.dot(kit.h_fun(path.x[:-1]), path.dw))
    R = float(kit.G_fun(path.x[-1]) - kit.G_fun(path.x[0]))
    rt = math.sqrt(path.horizon)
    return Decomposition(emp, M, R, abs(rt * emp - (M + R)) / rt)


def _pnorm(values, p):
    v = np.abs(np.asarray(values, dtype=float))
    top = float(np.max(v)) if v.size else 0.0
    if top == 0.0:
        return 0.0
    # scale first so large p does not overflow
    return top * float(np.mean((v / top) ** p)) ** (1.0 / p)


def moment_table(Ms, Rs, horizon, p_list, bound_fn=None):
    """Rows ``(p, ||M||_p / sqrt(t), ||R||_p, bound_I_M, bound_I_R, pass)``.

    ``bound_fn(p)`` returns the pair of bounds; without it the bound columns
    are NaN and ``pass`` is None.
    """
    rows = []
    for p in p_list:
        mn = _pnorm(Ms, p) / math.sqrt(horizon)
        rn = _pnorm(Rs, p)
        if bound_fn is None:
            bm, br, ok = math.nan, math.nan, None
        else:
            bm, br = bound_fn(p)
            ok = bool(mn <= bm and rn <= br)
        rows.append({"p": float(p), "M_norm": mn, "R_norm": rn, "bound_I_M": bm, "bound_I_R": br, "pass": ok})
    return rows


def moment_probe(
    kit: ApproxKit,
    n_reps: int,
    p_list,
    *,
    delta: float,
    horizon: float,
    root_seed: int = 0,
    bound_fn=None,
    file=None,
):
    """Monte Carlo p-norms of ``M / sqrt(t)`` and ``R`` over replicates.

    Replicate ``r`` uses stream ``(root_seed, r)``.

    Parameters
    ----------
    kit : ApproxKit
    n_reps : int
        At least 30.
    p_list : sequence of float
    delta, horizon : float
    root_seed : int
    bound_fn : callable, optional
        ``p -> (bound_M, bound_R)``.
    file : path-like, optional
        Where to write the CSV table.
    """
    if n_reps < 30:
        raise ParameterError("moment_probe needs at least 30 replicates")
    Ms, Rs = [], []
    for r in range(int(n_reps)):
        path = simulate_path(kit.law, delta, horizon, SeedStream(root_seed, r))
        d = decompose(kit, path)
        Ms.append(d.M)
        Rs.append(d.R)
    rows = moment_table(Ms, Rs, horizon, p_list, bound_fn)
    if file is not None:
        write_moment_csv(rows, file)
    return rows


def write_moment_csv(rows, file) -> None:
    cols = ["p", "M_norm", "R_norm", "bound_I_M", "bound_I_R", "pass"]
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
