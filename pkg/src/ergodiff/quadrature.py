"""Batched adaptive Simpson quadrature.

All intervals of a batch are refined together, so the integrand is called on
whole arrays and the cost per refinement level is a handful of numpy calls.
"""

import numpy as np

from .errors import QuadratureError

_EPS = np.finfo(float).eps


def integrate_panels(f, lo, hi, tol, *, max_depth=48):
    """Integrate over many intervals with adaptive Simpson bisection.

    Parameters
    ----------
    f : callable
        ``f(y, owner)`` returns integrand values at points ``y``. ``owner``
        holds, for every point, the index of the interval it belongs to, which
        lets one call serve a family of integrands.
    lo, hi : array_like
        Interval endpoints, same shape. ``hi < lo`` gives a signed integral.
    tol : float or array_like
        Absolute tolerance per interval. Halved at each bisection.
    max_depth : int
        Maximum number of bisections of any panel.

    Returns
    -------
    ndarray
        One integral per interval.

    Raises
    ------
    QuadratureError
        If the integrand is not finite or a panel needs more than
        ``max_depth`` bisections.
    """
    lo = np.asarray(lo, dtype=float).ravel()
    hi = np.asarray(hi, dtype=float).ravel()
    if lo.shape != hi.shape:
        raise ValueError("lo and hi must have the same shape")
    m = lo.size
    out = np.zeros(m)
    if m == 0:
        return out
    tol = np.array(np.broadcast_to(np.asarray(tol, dtype=float), (m,)))
    owner = np.arange(m)

    def call(y, idx):
        v = np.asarray(f(y, idx), dtype=float)
        if v.shape != y.shape:
            v = np.broadcast_to(v, y.shape).astype(float)
        if not np.all(np.isfinite(v)):
            raise QuadratureError("integrand returned a non-finite value")
        return v

    a, b = lo, hi
    mid = 0.5 * (a + b)
    fa, fm, fb = call(a, owner), call(mid, owner), call(b, owner)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    depth = 0
    while a.size:
        lm = 0.5 * (a + mid)
        rm = 0.5 * (mid + b)
        flm = call(lm, owner)
        frm = call(rm, owner)
        left = (mid - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - mid) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        # second test guards against tolerances below rounding noise
        done = (np.abs(err) <= 15.0 * tol) | (
            np.abs(err) <= 64.0 * _EPS * (np.abs(left) + np.abs(right))
        )
        np.add.at(out, owner[done], (left + right + err / 15.0)[done])
        keep = ~done
        if not keep.any():
            break
        if depth >= max_depth:
            bad = owner[keep][0]
            raise QuadratureError(
                f"no convergence after {max_depth} bisections on "
                f"[{lo[bad]:.6g}, {hi[bad]:.6g}]"
            )
        a, b, mid = (
            np.concatenate((a[keep], mid[keep])),
            np.concatenate((mid[keep], b[keep])),
            np.concatenate((lm[keep], rm[keep])),
        )
        fa, fm, fb = (
            np.concatenate((fa[keep], fm[keep])),
            np.concatenate((flm[keep], frm[keep])),
            np.concatenate((fm[keep], fb[keep])),
        )
        whole = np.concatenate((left[keep], right[keep]))
        owner = np.concatenate((owner[keep], owner[keep]))
        half = 0.5 * tol[keep]
        tol = np.concatenate((half, half))
        depth += 1
    return out


def adaptive_simpson(f, a, b, tol=1e-10, *, max_depth=48):
    """Integrate a vectorized function of one variable over ``[a, b]``."""
    return float(integrate_panels(lambda y, _: f(y), [a], [b], tol, max_depth=max_depth)[0])


def integrate_cells(f, edges, tol, *, max_depth=48):
    """Integrate ``f`` over consecutive cells ``[edges[i], edges[i+1]]``.

    The total tolerance is shared among cells in proportion to their width.
    """
    edges = np.asarray(edges, dtype=float)
    widths = np.diff(edges)
    total = np.sum(np.abs(widths))
    cell_tol = tol * np.abs(widths) / total if total > 0 else np.full(widths.size, tol)
    return integrate_panels(lambda y, _: f(y), edges[:-1], edges[1:], cell_tol, max_depth=max_depth)
