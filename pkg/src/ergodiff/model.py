"""Scalar diffusion model class and its invariant law.

The model is ``dX = b(X) dt + dW`` with a drift ``b`` of at most linear
growth that pulls the process back towards the origin outside ``[-A, A]``.
The invariant density is ``exp(2 * int_0^x b) / C_b`` and every quantity of
the law is obtained by adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import InvalidDriftError, ParameterError, QuadratureError
from .quadrature import integrate_cells, integrate_panels

NODE_STEP = 2.0 ** -6
TAIL_RATIO = 1e-16
_LOG_TAIL = math.log(TAIL_RATIO)
_MAX_RADIUS = 1e4


@dataclass(frozen=True)
class HolderCertificate:
    """Declared smoothness of the invariant density: ``rho_b in H(beta, L)``."""

    beta: float
    L_holder: float

    def __post_init__(self):
        if not (self.beta > 0 and self.L_holder > 0):
            raise ParameterError("Hoelder certificate needs beta > 0 and L > 0")


@dataclass(frozen=True)
class DriftSpec:
    """A drift function together with its class certificate.

    Parameters
    ----------
    b : callable
        Vectorized drift, ``b(ndarray) -> ndarray``.
    C_growth : float
        Growth constant, ``|b(x)| <= C_growth * (1 + |x|)``. Must be >= 1.
    A : float
        Onset of dissipativity.
    gamma : float
        Restoring strength, ``b(x) sgn(x) <= -gamma`` for ``|x| > A``.
    holder : HolderCertificate, optional
        Smoothness certificate for the invariant density.
    name, params
        Registry name and parameters, used to rebuild the drift in workers.
    scalar : callable, optional
        Scalar version of ``b`` that uses only the ``math`` module, so that it
        can be JIT compiled for path simulation.
    """

    b: Callable
    C_growth: float
    A: float
    gamma: float
    holder: HolderCertificate | None = None
    name: str = "custom"
    params: Mapping = field(default_factory=dict)
    scalar: Callable | None = None

    def __post_init__(self):
        if not self.C_growth >= 1:
            raise ParameterError(f"C_growth must be >= 1, got {self.C_growth}")
        if not self.A > 0:
            raise ParameterError(f"A must be > 0, got {self.A}")
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be > 0, got {self.gamma}")

    def __call__(self, x):
        return self.b(x)


# --------------------------------------------------------------------------
# registry


def _ou(params, certificate, holder):
    theta = float(params.get("theta", 1.0))
    if theta <= 0:
        raise ParameterError("ou needs theta > 0")

    def b(x):
        return -theta * np.asarray(x, dtype=float)

    def scalar(x):
        return -theta * x

    cert = {"C_growth": max(1.0, theta), "A": 1.0, "gamma": theta}
    cert.update(certificate or {})
    if holder is None:
        # rho = sqrt(theta/pi) exp(-theta x^2); bounds on rho, rho', rho''
        amp = math.sqrt(theta / math.pi)
        lip = max(amp, theta * math.sqrt(2.0 / (math.e * math.pi)), 2.0 * theta * amp)
        holder = {"beta": 2.0, "L_holder": lip}
    return b, scalar, cert, holder, {"theta": theta}


def _ou_sin(params, certificate, holder):
    theta = float(params.get("theta", 1.0))
    amp = float(params.get("amplitude", 1.0))
    if theta <= 0 or amp <= 0:
        raise ParameterError("ou_sin needs theta > 0 and amplitude > 0")

    def b(x):
        x = np.asarray(x, dtype=float)
        return -theta * x + amp * np.sin(x)

    def scalar(x):
        return -theta * x + amp * math.sin(x)

    cert = {"C_growth": max(1.0, theta) + amp, "A": 2.0 * amp / theta, "gamma": amp}
    cert.update(certificate or {})
    return b, scalar, cert, holder, {"theta": theta, "amplitude": amp}


def _double_well(params, certificate, holder):
    if not certificate or not {"C_growth", "A", "gamma"} <= set(certificate):
        raise ParameterError("double_well needs an explicit certificate (C_growth, A, gamma)")

    def b(x):
        x = np.asarray(x, dtype=float)
        return x - x ** 3

    def scalar(x):
        return x - x * x * x

    return b, scalar, dict(certificate), holder, {}


DRIFT_REGISTRY = {"ou": _ou, "ou_sin": _ou_sin, "double_well": _double_well}


def make_drift(name, params=None, certificate=None, holder=None):
    """Build a registry drift.

    Parameters
    ----------
    name : {"ou", "ou_sin", "double_well"}
    params : dict, optional
        ``ou``: ``theta``; ``ou_sin``: ``theta``, ``amplitude``.
    certificate : dict, optional
        Keys among ``C_growth``, ``A``, ``gamma``; overrides the defaults.
        Required for ``double_well``.
    holder : dict, optional
        ``beta`` and ``L_holder``.
    """
    try:
        factory = DRIFT_REGISTRY[name]
    except KeyError:
        raise ParameterError(f"unknown drift {name!r}; known: {sorted(DRIFT_REGISTRY)}") from None
    params = dict(params or {})
    unknown = set(params) - {"theta", "amplitude"}
    if unknown:
        raise ParameterError(f"unknown drift parameters {sorted(unknown)}")
    b, scalar, cert, hold, used = factory(params, certificate, holder)
    extra = set(cert) - {"C_growth", "A", "gamma"}
    if extra:
        raise ParameterError(f"unknown certificate keys {sorted(extra)}")
    cert_obj = None if hold is None else HolderCertificate(float(hold["beta"]), float(hold["L_holder"]))
    return DriftSpec(
        b=b,
        C_growth=float(cert["C_growth"]),
        A=float(cert["A"]),
        gamma=float(cert["gamma"]),
        holder=cert_obj,
        name=name,
        params=used,
        scalar=scalar,
    )


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class DriftReport:
    """Outcome of a grid sweep of the class inequalities.

    ``growth_margin`` is ``min C(1+|x|) - |b(x)|`` over the grid and
    ``dissipativity_margin`` is ``min -gamma - b(x) sgn(x)`` over ``|x| > A``.
    Both are nonnegative exactly when the drift passes.
    """

    passed: bool
    first_violation: float | None
    violation_kind: str | None
    growth_margin: float
    dissipativity_margin: float
    grid: tuple


def default_validation_grid(d: DriftSpec, step=1e-3):
    half = max(3.0 * d.A, 20.0)
    return (-half, half, step)


def validate_drift(d: DriftSpec, grid=None) -> DriftReport:
    """Check the growth and dissipativity inequalities on a grid.

    Parameters
    ----------
    d : DriftSpec
    grid : tuple (lo, hi, step), optional
        Defaults to step 1e-3 on ``[-max(3A, 20), max(3A, 20)]``.

    Returns
    -------
    DriftReport
        The first violation is searched outward from the origin, positive
        side first at equal distance.

    Raises
    ------
    InvalidDriftError
        If ``b`` is not finite somewhere on the grid.
    """
    lo, hi, step = default_validation_grid(d) if grid is None else grid
    if not (hi > lo and step > 0):
        raise ParameterError("grid needs hi > lo and step > 0")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    xs = lo + step * np.arange(n)
    bx = np.asarray(d.b(xs), dtype=float)
    if bx.shape != xs.shape or not np.all(np.isfinite(bx)):
        raise InvalidDriftError("drift is not finite on the validation grid")
    growth = d.C_growth * (1.0 + np.abs(xs)) - np.abs(bx)
    outside = np.abs(xs) > d.A
    dissip = np.where(outside, -d.gamma - bx * np.sign(xs), np.inf)
    bad_growth = growth < 0
    bad_dissip = dissip < 0
    bad = bad_growth | bad_dissip
    first = None
    kind = None
    if bad.any():
        order = np.lexsort((-np.sign(xs), np.abs(xs)))
        k = order[np.argmax(bad[order])]
        first = float(xs[k])
        kind = "growth" if bad_growth[k] else "dissipativity"
    dmargin = float(np.min(dissip)) if outside.any() else math.inf
    return DriftReport(
        passed=not bad.any(),
        first_violation=first,
        violation_kind=kind,
        growth_margin=float(np.min(growth)),
        dissipativity_margin=dmargin,
        grid=(float(lo), float(hi), float(step)),
    )


# --------------------------------------------------------------------------
# invariant law


def _as_output(x, values):
    return float(values[0]) if np.ndim(x) == 0 else values


@dataclass(frozen=True, eq=False)
class StationaryLaw:
    """Invariant law of a drift, backed by a node grid and local quadrature.

    Values of ``2 int_0^x b`` and of the distribution function are stored on
    nodes of step ``2**-6``. Evaluation at an arbitrary point integrates from
    the nearest node, so every returned value carries quadrature accuracy.

    Attributes
    ----------
    drift : DriftSpec
    C_b : float
        Normalizer ``int exp(2 int_0^x b) dx``.
    trunc_radius : float
        Beyond this radius the unnormalized density is below 1e-16 of its
        peak.
    quad_tol : float
    """

    drift: DriftSpec
    C_b: float
    trunc_radius: float
    quad_tol: float
    log_C_b: float
    nodes: np.ndarray = field(repr=False)
    log_weight_nodes: np.ndarray = field(repr=False)
    cdf_nodes: np.ndarray = field(repr=False)
    sf_nodes: np.ndarray = field(repr=False)

    # --- log of the unnormalized density

    def log_weight(self, x):
        """``2 * int_0^x b`` at ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        J = (self.nodes.size - 1) // 2
        j = np.clip(np.rint(x / NODE_STEP), -J, J).astype(np.int64)
        anchor = j * NODE_STEP
        base = self.log_weight_nodes[j + J]
        tol = 1e-3 * self.quad_tol * np.maximum(1.0, np.abs(x - anchor) / NODE_STEP)
        inc = integrate_panels(lambda s, _: self.drift.b(s), anchor, x, tol)
        return base + 2.0 * inc

    def density(self, x):
        """Invariant density ``rho_b``."""
        v = np.exp(self.log_weight(x) - self.log_C_b)
        return _as_output(x, v)

    def density_derivative(self, x):
        """``rho_b' = 2 b rho_b``."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        v = 2.0 * np.asarray(self.drift.b(xa), dtype=float) * np.exp(self.log_weight(xa) - self.log_C_b)
        return _as_output(x, v)

    def _mass(self, lo, hi):
        tol = 1e-3 * self.quad_tol
        return integrate_panels(
            lambda s, _: np.exp(self.log_weight(s) - self.log_C_b), lo, hi, tol
        )

    def cdf(self, x):
        """Distribution function ``F_b``."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        ncell = self.nodes.size - 1
        j = np.clip(np.floor((xa - self.nodes[0]) / NODE_STEP), 0, ncell - 1).astype(np.int64)
        v = self.cdf_nodes[j] + self._mass(self.nodes[j], xa)
        return _as_output(x, np.clip(v, 0.0, 1.0))

    def sf(self, x):
        """Survival function ``1 - F_b``, accurate in the upper tail."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        ncell = self.nodes.size - 1
        j = np.clip(np.floor((xa - self.nodes[0]) / NODE_STEP), 0, ncell - 1).astype(np.int64)
        v = self.sf_nodes[j + 1] + self._mass(xa, self.nodes[j + 1])
        return _as_output(x, np.clip(v, 0.0, 1.0))

    def quantile(self, q):
        """Inverse of ``F_b`` by bracketed root finding."""
        qa = np.atleast_1d(np.asarray(q, dtype=float))
        if np.any((qa <= 0) | (qa >= 1)):
            raise ParameterError("quantile level must lie in (0, 1)")
        out = np.empty_like(qa)
        for i, level in enumerate(qa):
            if level <= 0.5:
                k = int(np.searchsorted(self.cdf_nodes, level))
                fn = lambda y, level=level: float(self.cdf(y)) - level
            else:
                k = int(np.searchsorted(-self.sf_nodes, -(1.0 - level)))
                fn = lambda y, level=level: (1.0 - level) - float(self.sf(y))
            k = min(max(k, 1), self.nodes.size - 1)
            a, b = self.nodes[k - 1], self.nodes[k]
            fa, fb = fn(a), fn(b)
            if fa == 0.0:
                out[i] = a
            elif fb == 0.0:
                out[i] = b
            else:
                if fa * fb > 0:
                    # node values and local quadrature disagree by rounding
                    a, b = self.nodes[max(k - 2, 0)], self.nodes[min(k + 1, self.nodes.size - 1)]
                out[i] = brentq(fn, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
        return _as_output(q, out)

    # --- moments and suprema

    def moment(self, p):
        """``E|X_0|^p`` under the invariant law."""
        p = float(p)
        total = 0.0
        for sign in (1.0, -1.0):
            ends = self._moment_range(p, sign)
            edges = np.linspace(0.0, sign * ends, max(16, int(math.ceil(ends / 0.25))) + 1)
            integrand = lambda s: np.abs(s) ** p * np.exp(self.log_weight(s) - self.log_C_b)
            rough = abs(np.trapezoid(integrand(edges), edges))
            part = integrate_cells(integrand, edges, self.quad_tol * max(rough, 1e-300))
            total += abs(float(np.sum(part)))
        return total

    def _moment_range(self, p, sign):
        half = self.nodes.size // 2
        if sign > 0:
            xs, lw = self.nodes[half:], self.log_weight_nodes[half:]
        else:
            xs, lw = self.nodes[: half + 1][::-1], self.log_weight_nodes[: half + 1][::-1]
        peak = float(np.max(p * np.log(np.maximum(np.abs(xs), 1e-300)) + lw))
        radius = abs(float(xs[-1]))
        while radius <= _MAX_RADIUS:
            edge = p * math.log(radius) + float(self.log_weight(sign * radius)[0])
            if edge < peak + _LOG_TAIL - 2.0:
                return radius
            radius *= 1.25
        raise QuadratureError(f"moment of order {p} does not decay within radius {_MAX_RADIUS}")

    def _refine_max(self, objective, x0):
        lo, hi = x0 - NODE_STEP, x0 + NODE_STEP
        res = minimize_scalar(
            lambda y: -objective(np.array([y]))[0],
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12},
        )
        return max(float(-res.fun), float(objective(np.array([x0]))[0]))

    def sup_weighted_density(self, power):
        """``sup_x |x|^power rho_b(x)``, bounded search around the grid maximum."""

        def objective(y):
            return np.abs(y) ** power * np.exp(self.log_weight(y) - self.log_C_b)

        vals = objective(self.nodes)
        return self._refine_max(objective, float(self.nodes[int(np.argmax(vals))]))

    def density_sup(self):
        return self.sup_weighted_density(0.0)

    def density_deriv_sup(self):
        def objective(y):
            return np.abs(2.0 * self.drift.b(y) * np.exp(self.log_weight(y) - self.log_C_b))

        vals = objective(self.nodes)
        return self._refine_max(objective, float(self.nodes[int(np.argmax(vals))]))


def _side_log_weights(b, radius, tol):
    J = int(round(radius / NODE_STEP))
    pos = NODE_STEP * np.arange(J + 1)
    inc_pos = integrate_cells(b, pos, tol)
    inc_neg = integrate_cells(b, -pos, tol)
    lw_pos = 2.0 * np.concatenate(([0.0], np.cumsum(inc_pos)))
    lw_neg = 2.0 * np.concatenate(([0.0], np.cumsum(inc_neg)))
    nodes = NODE_STEP * np.arange(-J, J + 1)
    return nodes, np.concatenate((lw_neg[:0:-1], lw_pos))


def build_law(d: DriftSpec, quad_tol=1e-10) -> StationaryLaw:
    """Compute the invariant law of ``d`` by quadrature.

    Raises
    ------
    QuadratureError
        If a quadrature fails or the density does not decay within a radius
        of 1e4.
    """
    if not quad_tol > 0:
        raise ParameterError("quad_tol must be positive")
    radius = math.ceil(max(3.0 * d.A, 20.0) / NODE_STEP) * NODE_STEP
    while True:
        nodes, lw = _side_log_weights(d.b, radius, 1e-2 * quad_tol)
        if not np.all(np.isfinite(lw)):
            raise InvalidDriftError("drift integral is not finite")
        peak = float(np.max(lw))
        above = np.nonzero(lw > peak + _LOG_TAIL)[0]
        reach = float(max(abs(nodes[above[0]]), abs(nodes[above[-1]]))) + NODE_STEP
        # keep a margin beyond the truncation point for moments and tails
        if reach + 4.0 <= radius:
            break
        radius *= 2.0
        if radius > _MAX_RADIUS:
            raise QuadratureError("invariant density does not decay within radius 1e4")

    def weight(s):
        J = (nodes.size - 1) // 2
        j = np.clip(np.rint(s / NODE_STEP), -J, J).astype(np.int64)
        anchor = j * NODE_STEP
        inc = integrate_panels(lambda y, _: d.b(y), anchor, s, 1e-3 * quad_tol)
        return np.exp(lw[j + J] + 2.0 * inc - peak)

    rough = np.trapezoid(np.exp(lw - peak), nodes)
    cells = integrate_cells(weight, nodes, 1e-2 * quad_tol * rough)
    Z = float(np.sum(cells))
    log_C = peak + math.log(Z)
    cdf_nodes = np.concatenate(([0.0], np.cumsum(cells))) / Z
    sf_nodes = np.concatenate((np.cumsum(cells[::-1])[::-1], [0.0])) / Z
    for arr in (nodes, lw, cdf_nodes, sf_nodes):
        arr.setflags(write=False)
    return StationaryLaw(
        drift=d,
        C_b=math.exp(log_C),
        trunc_radius=reach,
        quad_tol=quad_tol,
        log_C_b=log_C,
        nodes=nodes,
        log_weight_nodes=lw,
        cdf_nodes=cdf_nodes,
        sf_nodes=sf_nodes,
    )


# --------------------------------------------------------------------------
# constants


def moment_candidates(law: StationaryLaw, p_max=32):
    """``(E|X_0|^p)^{1/p} / p`` for ``p = 1, ..., p_max``."""
    if p_max < 1:
        raise ParameterError("p_max must be >= 1")
    ps = np.arange(1, int(p_max) + 1)
    return np.array([law.moment(p) ** (1.0 / p) / p for p in ps])


def estimate_C_mo(law: StationaryLaw, p_max=32) -> float:
    """Moment constant: max over ``p <= p_max`` of ``(E|X_0|^p)^{1/p} / p``."""
    if p_max < 2:
        raise ParameterError("p_max must be >= 2")
    return float(np.max(moment_candidates(law, p_max)))


def k_ratio(d: DriftSpec) -> float:
    """``1/(2 gamma) + exp(2 C A (1 + A)) / (2 C (1 + A))``."""
    C, A = d.C_growth, d.A
    return 1.0 / (2.0 * d.gamma) + math.exp(2.0 * C * A * (1.0 + A)) / (2.0 * C * (1.0 + A))


@dataclass(frozen=True)
class ModelConstants:
    C_mo: float
    K_ratio: float
    density_sup: float
    density_deriv_sup: float

    def __post_init__(self):
        for name in ("C_mo", "K_ratio", "density_sup", "density_deriv_sup"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")

    @property
    def density_bound(self):
        """Bound on ``max(|rho_b|, |rho_b'|)``, the role of the regularity constant."""
        return max(self.density_sup, self.density_deriv_sup)


def compute_constants(law: StationaryLaw, p_max=32) -> ModelConstants:
    return ModelConstants(
        C_mo=estimate_C_mo(law, p_max),
        K_ratio=k_ratio(law.drift),
        density_sup=law.density_sup(),
        density_deriv_sup=law.density_deriv_sup(),
    )
