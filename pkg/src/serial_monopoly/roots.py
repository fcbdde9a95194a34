"""Bracketed root finding: geometric bracket search and safeguarded Newton.

Both the scalar and the array solvers keep a sign-change bracket at all
times and fall back to bisection whenever a Newton step leaves it, so they
cannot diverge on the monotone residuals used throughout the package.
"""

from __future__ import annotations

import numpy as np

from .errors import RootBracketFailure

ROOT_TOL = 1e-12


def expand_bracket(f, start=0.0, step=1.0, factor=2.0, max_iter=80, direction=1.0):
    """Walk away from ``start`` in geometrically growing steps until ``f`` changes sign.

    Returns ``(a, b)`` ordered so that ``a < b`` and ``f(a) * f(b) <= 0``.
    """
    a = float(start)
    fa = f(a)
    if fa == 0.0:
        return a, a
    width = float(step)
    for _ in range(max_iter):
        b = start + direction * width
        fb = f(b)
        if fa * fb <= 0.0:
            return (a, b) if a < b else (b, a)
        a, fa = b, fb
        width *= factor
    raise RootBracketFailure(
        f"no sign change found within {width:g} of {start:g} (direction {direction:+g})"
    )


def safe_newton(f, fprime, lo, hi, tol=ROOT_TOL, maxiter=200, x0=None):
    """Root of ``f`` in ``[lo, hi]`` by Newton steps guarded by bisection.

    ``tol`` bounds the residual ``|f(x)|``; the iteration also stops once the
    bracket has collapsed to adjacent floating point numbers.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0.0:
        raise RootBracketFailure(f"f({lo:g})={flo:g} and f({hi:g})={fhi:g} share a sign")
    # orient so that f(neg) < 0 < f(pos)
    neg, pos = (lo, hi) if flo < 0.0 else (hi, lo)
    x = 0.5 * (lo + hi) if x0 is None else float(np.clip(x0, min(lo, hi), max(lo, hi)))
    for _ in range(maxiter):
        fx = f(x)
        if abs(fx) <= tol:
            return float(x)
        if fx < 0.0:
            neg = x
        else:
            pos = x
        d = fprime(x)
        step_ok = d != 0.0 and np.isfinite(d)
        if step_ok:
            xn = x - fx / d
            step_ok = min(neg, pos) < xn < max(neg, pos)
        x_new = xn if step_ok else 0.5 * (neg + pos)
        if x_new == x or abs(pos - neg) <= 4 * np.spacing(max(abs(pos), abs(neg), 1.0)):
            return float(x_new)
        x = x_new
    return float(x)


def safe_newton_array(f, fprime, lo, hi, tol=ROOT_TOL, maxiter=200):
    """Elementwise :func:`safe_newton` for arrays of independent problems.

    ``f`` and ``fprime`` receive ``(x, idx)`` where ``idx`` selects the
    still-active problems, so callers can index their own parameter arrays.
    Converged entries are frozen, which makes each result independent of
    which other problems share the batch.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    n = lo.size
    lo, hi = lo.reshape(n), hi.reshape(n)
    all_idx = np.arange(n)
    flo = f(lo, all_idx)
    fhi = f(hi, all_idx)
    if np.any(flo * fhi > 0.0):
        bad = int(np.flatnonzero(flo * fhi > 0.0)[0])
        raise RootBracketFailure(
            f"problem {bad}: f({lo[bad]:g})={flo[bad]:g}, f({hi[bad]:g})={fhi[bad]:g} share a sign"
        )
    neg = np.where(flo < 0.0, lo, hi)
    pos = np.where(flo < 0.0, hi, lo)
    x = 0.5 * (lo + hi)
    out = np.empty(n)
    done = np.zeros(n, dtype=bool)
    exact_lo, exact_hi = flo == 0.0, fhi == 0.0
    out[exact_lo] = lo[exact_lo]
    out[exact_hi & ~exact_lo] = hi[exact_hi & ~exact_lo]
    done |= exact_lo | exact_hi
    for _ in range(maxiter):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        xa = x[act]
        fx = f(xa, act)
        conv = np.abs(fx) <= tol
        out[act[conv]] = xa[conv]
        done[act[conv]] = True
        keep = ~conv
        act, xa, fx = act[keep], xa[keep], fx[keep]
        if act.size == 0:
            break
        na, pa = neg[act], pos[act]
        na = np.where(fx < 0.0, xa, na)
        pa = np.where(fx < 0.0, pa, xa)
        neg[act], pos[act] = na, pa
        d = fprime(xa, act)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = xa - fx / d
        inside = np.isfinite(xn) & (xn > np.minimum(na, pa)) & (xn < np.maximum(na, pa))
        x_new = np.where(inside, xn, 0.5 * (na + pa))
        width = np.abs(pa - na)
        scale = np.maximum(np.maximum(np.abs(pa), np.abs(na)), 1.0)
        stuck = (x_new == xa) | (width <= 4 * np.spacing(scale))
        out[act[stuck]] = x_new[stuck]
        done[act[stuck]] = True
        x[act] = x_new
    left = ~done
    out[left] = x[left]
    return out
