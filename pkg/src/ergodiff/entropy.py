"""Covering numbers, entropy integrals and their closed-form bounds.

Function classes are finite families sampled on a shared uniform grid.
Covering numbers are computed from the pairwise distance matrix.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

SUPPORTED_ALPHA = (2.0 / 3.0, 1.0, 2.0)
EXACT_LIMIT = 12
_REL = 1e-9
_L2_SLACK = 1e-3


def _alpha(alpha) -> float:
    for a in SUPPORTED_ALPHA:
        if math.isclose(float(alpha), a, rel_tol=1e-12):
            return a
    raise ParameterError(f"unsupported alpha {alpha}; use 2/3, 1 or 2")


def _l2(values, step):
    # trapezoid rule on a uniform grid
    sq = values ** 2
    return math.sqrt(step * (float(np.sum(sq)) - 0.5 * float(sq[0] + sq[-1])))


@dataclass(frozen=True, eq=False)
class FunctionClass:
    """Finite representative family of a function class.

    Attributes
    ----------
    members : ndarray, shape (n, m)
        Member values on ``xs``.
    xs : ndarray, shape (m,)
        Shared uniform grid.
    U_env : float
        Uniform bound.
    V_rad : float
        Bound on the L2(Lebesgue) norms.
    S_len : float
        Bound on the support lengths.
    vc_A, vc_v : float
        Uniform entropy constants, ``N(eps) <= (vc_A/eps)^vc_v``.
    index : ndarray, optional
        A real parameter per member (centers, levels).
    """

    members: np.ndarray = field(repr=False)
    xs: np.ndarray = field(repr=False)
    U_env: float
    V_rad: float
    S_len: float
    vc_A: float = 20.0
    vc_v: float = 2.0
    index: np.ndarray | None = field(default=None, repr=False)
    name: str = "custom"

    def __post_init__(self):
        members = np.atleast_2d(np.asarray(self.members, dtype=float))
        xs = np.asarray(self.xs, dtype=float)
        if members.shape[1] != xs.size or xs.size < 2:
            raise ParameterError("members must be sampled on xs")
        steps = np.diff(xs)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ParameterError("xs must be a uniform grid")
        if not (self.U_env > 0 and self.V_rad > 0 and self.S_len > 0):
            raise ParameterError("U_env, V_rad and S_len must be positive")
        if not self.vc_A > math.e ** 2:
            raise ParameterError("vc_A must exceed e^2")
        if not self.vc_v >= 2:
            raise ParameterError("vc_v must be at least 2")
        if self.V_rad > math.sqrt(self.S_len) * (1 + _REL):
            raise ParameterError("V_rad must not exceed sqrt(S_len)")
        step = float(steps[0])
        for k, f in enumerate(members):
            if np.max(np.abs(f)) > self.U_env * (1 + _REL):
                raise ParameterError(f"member {k} exceeds U_env")
            # the trapezoid rule overestimates norms of kinked members by
            # O(step^2); allow that much
            if _l2(f, step) > self.V_rad * (1 + _L2_SLACK):
                raise ParameterError(f"member {k} exceeds V_rad")
            nz = np.nonzero(f)[0]
            if nz.size and (xs[nz[-1]] - xs[nz[0]]) > self.S_len + step * (1 + _REL):
                raise ParameterError(f"member {k} has support longer than S_len")
        index = None if self.index is None else np.asarray(self.index, dtype=float)
        if index is not None and index.shape != (members.shape[0],):
            raise ParameterError("index needs one value per member")
        for name, arr in (("members", members), ("xs", xs), ("index", index)):
            if arr is not None:
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def grid_step(self) -> float:
        return float(self.xs[1] - self.xs[0])


def class_from_members(members, xs, *, vc_A=20.0, vc_v=2.0, index=None, name="custom") -> FunctionClass:
    """Class whose constants are the tightest ones the sampled members allow."""
    members = np.atleast_2d(np.asarray(members, dtype=float))
    xs = np.asarray(xs, dtype=float)
    step = float(xs[1] - xs[0])
    U = max(float(np.max(np.abs(members))), np.finfo(float).tiny)
    V = max(max(_l2(f, step) for f in members), np.finfo(float).tiny)
    S = step
    for f in members:
        nz = np.nonzero(f)[0]
        if nz.size:
            S = max(S, float(xs[nz[-1]] - xs[nz[0]]) + step)
    S = max(S, V * V)
    return FunctionClass(members, xs, U, V, S, vc_A, vc_v, index, name)


def _grid_for(centers, half_width, step):
    lo = math.floor((float(np.min(centers)) - half_width) / step - 1) * step
    hi = math.ceil((float(np.max(centers)) + half_width) / step + 1) * step
    m = int(round((hi - lo) / step))
    return lo + step * np.arange(m + 1)


def kernel_translate_class(kernel, h, centers, *, step=None, vc_A=20.0, vc_v=2.0) -> FunctionClass:
    """``{K((x - .)/h) : x in centers}`` with ``S = h max(||K||^2, 1)``, ``V = sqrt(h)||K||``."""
    if not 0 < h < 1:
        raise ParameterError("h must lie in (0, 1)")
    centers = np.asarray(centers, dtype=float)
    step = h / 64.0 if step is None else float(step)
    xs = _grid_for(centers, 0.5 * h, step)
    members = kernel.eval((centers[:, None] - xs[None, :]) / h)
    S = h * max(kernel.l2_norm ** 2, 1.0)
    V = math.sqrt(h) * kernel.l2_norm
    return FunctionClass(members, xs, kernel.sup_norm, V, S, vc_A, vc_v, centers, f"kernel_translate(h={h})")


def hat_translate_class(half_width, centers, *, step=None, vc_A=20.0, vc_v=2.0) -> FunctionClass:
    """Translates of ``max(1 - |. - x|/w, 0)``: ``U = 1``, ``S = 2w``, ``V = sqrt(2w/3)``."""
    if not half_width > 0:
        raise ParameterError("half_width must be positive")
    centers = np.asarray(centers, dtype=float)
    step = half_width / 64.0 if step is None else float(step)
    xs = _grid_for(centers, half_width, step)
    members = np.maximum(1.0 - np.abs(xs[None, :] - centers[:, None]) / half_width, 0.0)
    w = float(half_width)
    return FunctionClass(
        members, xs, 1.0, math.sqrt(2.0 * w / 3.0), 2.0 * w, vc_A, vc_v, centers, f"hat_translate(w={w})"
    )


# --------------------------------------------------------------------------
# semi-metrics


@dataclass(frozen=True)
class SemiMetric:
    """A semi-metric on the members of a class.

    ``kind`` is ``"l2"`` (scaled L2(Lebesgue) distance of the members) or
    ``"level"`` (``scale * min(8 sqrt|a - b|, 1)`` on the class index).
    """

    name: str
    kind: str
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("l2", "level"):
            raise ParameterError(f"unknown metric kind {self.kind!r}")
        if not self.scale > 0:
            raise ParameterError("metric scale must be positive")

    def pairwise(self, fc: FunctionClass) -> np.ndarray:
        if self.kind == "l2":
            F = fc.members
            step = fc.grid_step
            w = np.full(F.shape[1], step)
            w[0] = w[-1] = 0.5 * step
            G = (F * w) @ F.T
            sq = np.diag(G)[:, None] + np.diag(G)[None, :] - 2.0 * G
            D = np.sqrt(np.maximum(sq, 0.0))
        else:
            if fc.index is None:
                raise ParameterError("the level metric needs a class index")
            a = fc.index
            D = np.minimum(8.0 * np.sqrt(np.abs(a[:, None] - a[None, :])), 1.0)
        D = 0.5 * (D + D.T) * self.scale
        np.fill_diagonal(D, 0.0)
        return D

    def dist(self, fc: FunctionClass, i: int, j: int) -> float:
        return float(self.pairwise(fc)[i, j])


def l2_metric(scale=1.0) -> SemiMetric:
    """``scale * ||f - g||_{L2(Lebesgue)}``, the metric of the chaining step."""
    return SemiMetric(f"l2(scale={scale})", "l2", float(scale))


def level_metric(scale=1.0) -> SemiMetric:
    """``scale * min(8 sqrt|a - b|, 1)`` on level indices."""
    return SemiMetric(f"level(scale={scale})", "level", float(scale))


# --------------------------------------------------------------------------
# covering numbers


def greedy_cover(D: np.ndarray, u: float) -> list:
    """Greedy set cover by closed ``u``-balls around members.

    Each step picks the member whose ball holds the most uncovered members,
    the lowest index on ties.
    """
    n = D.shape[0]
    balls = D <= u
    uncovered = np.ones(n, dtype=bool)
    centers = []
    while uncovered.any():
        gain = (balls & uncovered[None, :]).sum(axis=1)
        k = int(np.argmax(gain))
        centers.append(k)
        uncovered &= ~balls[k]
    return centers


def exact_cover_number(D: np.ndarray, u: float) -> int:
    """Smallest number of closed ``u``-balls around members covering all."""
    n = D.shape[0]
    if n > EXACT_LIMIT:
        raise ParameterError(f"exact covering limited to {EXACT_LIMIT} members")
    masks = [int(sum(1 << j for j in range(n) if D[i, j] <= u)) for i in range(n)]
    full = (1 << n) - 1
    for size in range(1, n + 1):
        for combo in itertools.combinations(masks, size):
            acc = 0
            for m in combo:
                acc |= m
            if acc == full:
                return size
    return n


def _cover_profile(D: np.ndarray):
    # greedy counts at every distinct distance, made nonincreasing by a
    # running minimum: a cover at a smaller radius also covers at a larger one
    radii = np.unique(D)
    counts = np.array([len(greedy_cover(D, r)) for r in radii])
    return radii, np.minimum.accumulate(counts)


def covering_number_empirical(fc: FunctionClass, d: SemiMetric, u: float, *, exact=False) -> int:
    """Upper bound on ``N(u, F, d)`` from a greedy cover of the members.

    With ``exact=True`` (at most 12 members) the minimal cover size.
    """
    if not u > 0:
        raise ParameterError("radius must be positive")
    D = d.pairwise(fc)
    if exact:
        return exact_cover_number(D, u)
    radii, counts = _cover_profile(D)
    return int(counts[np.searchsorted(radii, u, side="right") - 1])


def covering_bound_vc(fc: FunctionClass, eps: float) -> float:
    """``(vc_A / eps)^vc_v`` for ``eps`` in ``(0, 1)``."""
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    return (fc.vc_A / eps) ** fc.vc_v


# --------------------------------------------------------------------------
# entropy integrals


def closed_form_entropy(alpha, *, vc_A, vc_v, V_rad, S_len, Gamma, p, Lambda_t) -> float:
    """Closed-form upper bound on ``E(F_k, Gamma ||.||_2, alpha)``.

    With ``L = log((vc_A/V) sqrt(S + p Lambda_t))``:
    alpha=1: ``2 v V Gamma (1 + L)``; alpha=2: ``4 V Gamma sqrt(v L)``;
    alpha=2/3: ``2 V Gamma (v L)^{3/2} + 6 v V Gamma sqrt(v L)``.
    """
    a = _alpha(alpha)
    if not Gamma >= 1:
        raise ParameterError("Gamma must be at least 1")
    L = math.log(vc_A / V_rad * math.sqrt(S_len + p * Lambda_t))
    v, V = float(vc_v), float(V_rad)
    if a == 1.0:
        return 2.0 * v * V * Gamma * (1.0 + L)
    if a == 2.0:
        return 4.0 * V * Gamma * math.sqrt(v * L)
    return 2.0 * V * Gamma * (v * L) ** 1.5 + 6.0 * v * V * Gamma * math.sqrt(v * L)


def numeric_entropy(D: np.ndarray, alpha) -> float:
    """``int_0^inf (log N(u))^{1/alpha} du`` for the greedy step function.

    The integrand is piecewise constant between distinct distances, so the
    integral is a finite sum.
    """
    a = _alpha(alpha)
    radii, counts = _cover_profile(D)
    logs = np.log(counts.astype(float)) ** (1.0 / a)
    # N(u) = counts[i] on [radii[i], radii[i+1])
    return float(np.sum(logs[:-1] * np.diff(radii)))


def entropy_integral(fc: FunctionClass, d: SemiMetric | None, alpha, by="numeric", ctx=None) -> float:
    """Entropy integral ``E(F, d, alpha)``.

    Parameters
    ----------
    fc : FunctionClass
    d : SemiMetric
        Required for ``by="numeric"``.
    alpha : {2/3, 1, 2}
    by : {"numeric", "closed_form"}
    ctx : dict
        For the closed form: ``Gamma`` (>= 1, the metric scale), ``p`` and
        ``Lambda_t``.
    """
    a = _alpha(alpha)
    if by == "numeric":
        if d is None:
            raise ParameterError("numeric entropy needs a metric")
        return numeric_entropy(d.pairwise(fc), a)
    if by == "closed_form":
        ctx = dict(ctx or {})
        missing = {"Gamma", "p", "Lambda_t"} - set(ctx)
        if missing:
            raise ParameterError(f"closed form needs {sorted(missing)}")
        return closed_form_entropy(
            a, vc_A=fc.vc_A, vc_v=fc.vc_v, V_rad=fc.V_rad, S_len=fc.S_len,
            Gamma=float(ctx["Gamma"]), p=float(ctx["p"]), Lambda_t=float(ctx["Lambda_t"]),
        )
    raise ParameterError(f"unknown mode {by!r}")


def interval_entropy_bound(p0: float, Lambda_t: float, d1t: float) -> float:
    """``d1t (4 + 2 log(8 sqrt(2 p0 Lambda_t)))``, the level-metric entropy bound."""
    if not (p0 >= 1 and Lambda_t > 0 and d1t > 0):
        raise ParameterError("need p0 >= 1 and positive Lambda_t, d1t")
    return d1t * (4.0 + 2.0 * math.log(8.0 * math.sqrt(2.0 * p0 * Lambda_t)))


def chaining_bound(entropy_term: float, sup_pnorm: float, alpha_const: float = 1.0) -> float:
    """``alpha_const * entropy_term + 2 * sup_pnorm``."""
    if entropy_term < 0 or sup_pnorm < 0 or not alpha_const > 0:
        raise ParameterError("chaining inputs must be nonnegative")
    return alpha_const * entropy_term + 2.0 * sup_pnorm


def two_metric_chaining_bound(entropy_d1: float, entropy_d2: float, sup_pnorm: float, C1=1.0, C2=1.0) -> float:
    """``C1 * E(d1, alpha=1) + C2 * E(d2, alpha=2) + 2 * sup_pnorm``."""
    if min(entropy_d1, entropy_d2, sup_pnorm) < 0 or not (C1 > 0 and C2 > 0):
        raise ParameterError("chaining inputs must be nonnegative")
    return C1 * entropy_d1 + C2 * entropy_d2 + 2.0 * sup_pnorm


def entropy_report(fc: FunctionClass, d: SemiMetric | None, alpha, mode, ctx=None) -> dict:
    value = entropy_integral(fc, d, alpha, by=mode, ctx=ctx)
    params = {"size": fc.size, "U_env": fc.U_env, "V_rad": fc.V_rad, "S_len": fc.S_len,
              "vc_A": fc.vc_A, "vc_v": fc.vc_v}
    params.update(ctx or {})
    return {"class": fc.name, "metric": None if d is None else d.name, "alpha": float(alpha),
            "mode": mode, "value": value, "params": params}


def write_entropy_report(report: dict, file) -> None:
    with open(file, "w", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
