"""Invariant density estimators, polynomial kernels and exact biases."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from numpy.polynomial import Polynomial

from .errors import ParameterError
from .functionals import GridFunction, LocalTimeField
from .model import StationaryLaw
from .quadrature import integrate_panels
from .simulate import Path

HALF = 0.5


def lower_integer(beta: float) -> int:
    """Greatest integer strictly smaller than ``beta``."""
    return int(math.ceil(beta)) - 1


def _abs_moment(poly, beta):
    # K is even, so integrate |u^beta K| over [0, 1/2] exactly, piece by piece
    # between sign changes, and double
    roots = [r.real for r in poly.roots() if abs(r.imag) < 1e-12 and 0.0 < r.real < HALF]
    pts = np.unique(np.concatenate(([0.0, HALF], roots)))
    c = np.asarray(poly.coef, dtype=float)
    powers = beta + np.arange(c.size) + 1.0
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += abs(float(np.sum(c * (b ** powers - a ** powers) / powers)))
    return 2.0 * total


@dataclass(frozen=True, eq=False)
class Kernel:
    """Symmetric polynomial kernel supported on ``[-1/2, 1/2]``.

    Attributes
    ----------
    poly : numpy.polynomial.Polynomial
        The kernel on its support.
    order : int
        ``int u^j K(u) du = 0`` for ``j = 1, ..., order``.
    """

    poly: Polynomial
    order: int
    lip_const: float
    sup_norm: float
    l1_norm: float
    l2_norm: float
    tv_norm: float

    @property
    def coeffs(self) -> np.ndarray:
        return np.asarray(self.poly.coef, dtype=float)

    def eval(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= HALF, self.poly(u), 0.0)

    def __call__(self, u):
        return self.eval(u)

    def abs_beta_moment(self, beta: float) -> float:
        """``int |u^beta K(u)| du``."""
        return _abs_moment(self.poly, beta)

    def sqrt_abs_moment(self) -> float:
        """``int |K(z)| sqrt(|z|) dz``."""
        return self.abs_beta_moment(0.5)

    def moment(self, j: int) -> float:
        """``int u^j K(u) du``, exact polynomial integral."""
        piece = (self.poly * Polynomial([0, 1]) ** int(j)).integ()
        return float(piece(HALF) - piece(-HALF))


def _weight():
    return Polynomial([1.0, 0.0, -4.0])


def _inner(p, q):
    r = (p * q * _weight()).integ()
    return float(r(HALF) - r(-HALF))


def make_kernel(order: int) -> Kernel:
    """Minimal-degree polynomial kernel of the given order.

    The kernel is ``w(u) sum_j p_j(0) p_j(u)`` with ``w(u) = 1 - 4u^2`` and
    ``p_j`` the orthonormal polynomials for ``w`` on ``[-1/2, 1/2]`` obtained
    by Gram-Schmidt on monomials of degree up to ``2 floor(order/2)``. The
    weight makes the kernel vanish at the edges, hence Lipschitz on the line;
    by symmetry odd moments vanish, so order ``2m`` and ``2m+1`` coincide.

    Parameters
    ----------
    order : {0, 1, 2, 3}
    """
    if order not in (0, 1, 2, 3):
        raise ParameterError(f"unsupported kernel order {order}")
    degree = 2 * (order // 2)
    basis = []
    for j in range(degree + 1):
        p = Polynomial([0.0] * j + [1.0])
        for q in basis:
            p = p - _inner(p, q) * q
        basis.append(p / math.sqrt(_inner(p, p)))
    repro = sum((q(0.0) * q for q in basis), Polynomial([0.0]))
    coef = (repro * _weight()).coef
    # odd coefficients vanish by symmetry; drop their rounding residue
    coef[1::2] = 0.0
    poly = Polynomial(coef)

    deriv = poly.deriv()
    crit = [r.real for r in deriv.roots() if abs(r.imag) < 1e-12 and -HALF < r.real < HALF]
    pts = np.unique(np.concatenate(([-HALF, HALF], crit)))
    sup_norm = float(np.max(np.abs(poly(pts))))
    tv_norm = float(np.sum(np.abs(np.diff(poly(pts)))))
    if deriv.degree() >= 1:
        crit2 = [r.real for r in deriv.deriv().roots() if abs(r.imag) < 1e-12 and -HALF < r.real < HALF]
    else:
        crit2 = []
    pts2 = np.unique(np.concatenate(([-HALF, HALF], crit2)))
    lip = float(np.max(np.abs(deriv(pts2))))
    sq = (poly * poly).integ()
    l2 = math.sqrt(float(sq(HALF) - sq(-HALF)))
    return Kernel(poly=poly, order=int(order), lip_const=lip, sup_norm=sup_norm,
                  l1_norm=_abs_moment(poly, 0), l2_norm=l2, tv_norm=tv_norm)


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    xs: np.ndarray
    ys: np.ndarray = field(repr=False)
    bandwidth: object
    path_ref: str

    def as_grid_function(self) -> GridFunction:
        return GridFunction(self.xs, self.ys)


def local_time_density(lt: LocalTimeField, horizon: float) -> DensityEstimate:
    """``L_t^a / t`` on the field's levels."""
    return DensityEstimate(lt.levels, lt.values / float(horizon), "localtime", lt.path_ref)


@numba.njit(cache=True)
def _kernel_sums(samples, xs, coefs, h):
    out = np.zeros(xs.size)
    half = 0.5 * h
    m = coefs.size
    for k in range(samples.size):
        s = samples[k]
        i = np.searchsorted(xs, s - half)
        while i < xs.size and xs[i] <= s + half:
            u = (xs[i] - s) / h
            acc = coefs[m - 1]
            for j in range(m - 2, -1, -1):
                acc = acc * u + coefs[j]
            out[i] += acc
            i += 1
    return out


def kernel_density(path: Path, kernel: Kernel, h: float, xs) -> DensityEstimate:
    """``(delta/(t h)) sum_k K((xs - x[k])/h)``.

    Raises
    ------
    ParameterError
        If ``h`` is not in ``(0, 1)`` or is below the time step.
    """
    if not h > 0:
        raise ParameterError("bandwidth must be positive")
    if not h < 1:
        raise ParameterError("bandwidth must be below 1")
    if h < path.delta:
        raise ParameterError("bandwidth must be at least the time step")
    xs = np.asarray(xs, dtype=float)
    sums = _kernel_sums(np.ascontiguousarray(path.x[:-1]), xs, kernel.coeffs, float(h))
    ys = sums * (path.delta / (path.horizon * h))
    return DensityEstimate(xs, ys, float(h), path.ident)


def evaluation_grid(law: StationaryLaw, h: float | None = None, *, lo_q=1e-3, hi_q=1 - 1e-3) -> np.ndarray:
    """Step ``min(h/4, 0.01)`` over ``[q(0.001), q(0.999)]``."""
    step = 0.01 if h is None else min(h / 4.0, 0.01)
    lo, hi = law.quantile([lo_q, hi_q])
    m = int(math.floor((hi - lo) / step)) + 1
    return lo + step * np.arange(m)


def exact_bias(law: StationaryLaw, kernel: Kernel, h: float, xs) -> GridFunction:
    """``int K(u) (rho(x - u h) - rho(x)) du`` at every grid point."""
    xs = np.asarray(xs, dtype=float)
    base = np.atleast_1d(law.density(xs))

    def integrand(u, owner):
        return kernel.poly(u) * (np.atleast_1d(law.density(xs[owner] - u * h)) - base[owner])

    tol = 1e-3 * law.quad_tol
    vals = integrate_panels(integrand, np.full(xs.size, -HALF), np.full(xs.size, HALF), tol)
    return GridFunction(xs, vals)


def bias_bound(kernel: Kernel, h: float, beta: float, L_holder: float) -> float:
    """``h^beta (L / floor(beta)!) int |u^beta K|``."""
    return h ** beta * L_holder / math.factorial(lower_integer(beta)) * kernel.abs_beta_moment(beta)


def sup_error(est: DensityEstimate, law: StationaryLaw) -> float:
    """``max_i |ys[i] - rho_b(xs[i])|``."""
    return float(np.max(np.abs(est.ys - np.atleast_1d(law.density(est.xs)))))


def write_density_csv(est: DensityEstimate, law: StationaryLaw, file, meta=None) -> None:
    """CSV ``x, estimate, truth, abserr`` plus a ``.json`` sidecar."""
    truth = np.atleast_1d(law.density(est.xs))
    path = str(file)
    with open(path, "w", newline="\n") as fh:
        fh.write("x,estimate,truth,abserr\n")
        for x, y, r in zip(est.xs, est.ys, truth):
            fh.write(f"{float(x)!r},{float(y)!r},{float(r)!r},{abs(float(y) - float(r))!r}\n")
    side = {
        "bandwidth": est.bandwidth,
        "path": est.path_ref,
        "n_points": int(est.xs.size),
        "sup_error": float(np.max(np.abs(est.ys - truth))),
    }
    side.update(meta or {})
    base = path[:-4] if path.endswith(".csv") else path
    with open(base + ".json", "w", newline="\n") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
        fh.write("\n")
