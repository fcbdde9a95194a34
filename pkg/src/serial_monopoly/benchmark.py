"""First-best allocation and the observable-consumption benchmark."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import NoInteriorSolution, NonFiniteInput, OrderingViolation, RootBracketFailure
from .model import MarketPrimitives, cross_sign
from .roots import ROOT_TOL, expand_bracket, safe_newton, safe_newton_array


@dataclass(frozen=True)
class FirstBestAllocation:
    x_star: float
    y_star: float
    W_star: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ObservableOutcome:
    x_o: float
    y_o: float
    p_o: float
    q_o: float
    pi1_o: float
    pi2_o: float
    V_o: float
    W_o: float
    Sigma_o: float

    def to_dict(self):
        return asdict(self)


def _upper_brackets(g, n, start=1.0, max_iter=80):
    """Per-problem points ``b`` with ``g(b, idx) < 0``, found by doubling."""
    hi = np.full(n, float(start))
    todo = np.arange(n)
    for _ in range(max_iter):
        if todo.size == 0:
            return hi
        pos = g(hi[todo], todo) >= 0
        todo = todo[pos]
        hi[todo] *= 2.0
    raise RootBracketFailure("could not bracket the conditional optimum")


def conditional_optimal_y(primitives: MarketPrimitives, x, tol=ROOT_TOL):
    """Efficient second-period quantity given first-period consumption ``x``.

    Solves u2(x, y) = k in y when u2(x, 0) > k and returns exactly 0 otherwise.
    Accepts scalars or arrays.
    """
    util, k = primitives.utility, primitives.k
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(xa)):
        raise NonFiniteInput(f"non-finite consumption {x!r}")
    out = np.zeros(xa.shape)
    flat_x = xa.ravel()
    interior = np.flatnonzero(util.u2(flat_x, 0.0 * flat_x) - k > 0)
    if interior.size:
        xs = flat_x[interior]

        def g(y, idx):
            return util.u2(xs[idx], y) - k

        def dg(y, idx):
            return util.u22(xs[idx], y)

        hi = _upper_brackets(g, xs.size)
        lo = np.zeros(xs.size)
        # residual of u2 - k is decreasing in y, so the root lies in [0, hi]
        roots = safe_newton_array(g, dg, lo, hi, tol=tol)
        flat = out.ravel()
        flat[interior] = roots
        out = flat.reshape(xa.shape)
    if np.ndim(x) == 0:
        return float(out.reshape(-1)[0])
    return out


def observable_first_period(primitives: MarketPrimitives, tol=ROOT_TOL) -> float:
    """The maximiser of u(x, 0) - k x, i.e. the root of u1(x, 0) = k."""
    util, k = primitives.utility, primitives.k

    def g(x):
        return float(util.u1(x, 0.0)) - k

    if g(0.0) <= 0:
        raise NoInteriorSolution("u1(0, 0) <= k: nothing is bought in the first period")
    a, b = expand_bracket(g, start=0.0, step=max(primitives.x_max, 1e-3) / 16)
    return safe_newton(g, lambda x: float(util.u11(x, 0.0)), a, b, tol=tol)


def _first_best_newton(primitives, x, y, tol, maxiter=60):
    """Damped Newton on (u1 - k, u2 - k); returns None if it fails to converge."""
    util, k = primitives.utility, primitives.k

    def resid(x, y):
        return np.array([float(util.u1(x, y)) - k, float(util.u2(x, y)) - k])

    r = resid(x, y)
    for _ in range(maxiter):
        if np.max(np.abs(r)) <= tol:
            return x, y
        H = np.array([[float(util.u11(x, y)), float(util.u12(x, y))],
                      [float(util.u12(x, y)), float(util.u22(x, y))]])
        try:
            step = np.linalg.solve(H, -r)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        norm0 = np.linalg.norm(r)
        while t > 1e-8:
            xn, yn = x + t * step[0], y + t * step[1]
            if xn > 0 and yn > 0:
                rn = resid(xn, yn)
                if np.linalg.norm(rn) < norm0 or np.max(np.abs(rn)) <= tol:
                    break
            t *= 0.5
        else:
            return None
        x, y, r = xn, yn, rn
    return (x, y) if np.max(np.abs(r)) <= tol else None


def _first_best_nested(primitives, tol):
    """Bracketed fallback: the root of u1(x, y*(x)) = k along the conditional optimum."""
    util, k = primitives.utility, primitives.k

    def g(x):
        return float(util.u1(x, conditional_optimal_y(primitives, x))) - k

    if g(0.0) <= 0:
        raise NoInteriorSolution("u1(0, y*(0)) <= k: first best has no first-period consumption")
    a, b = expand_bracket(g, start=0.0, step=max(primitives.x_max, 1e-3) / 16)
    x = safe_newton(g, lambda x: np.nan, a, b, tol=tol)
    return x, conditional_optimal_y(primitives, x)


def _polish(primitives, x, y):
    """Pick the floating point neighbour with the smallest first-order residual."""
    util, k = primitives.utility, primitives.k
    best, best_r = (x, y), np.inf
    for xc in (np.nextafter(x, -np.inf), x, np.nextafter(x, np.inf)):
        for yc in (np.nextafter(y, -np.inf), y, np.nextafter(y, np.inf)):
            r = abs(float(util.u1(xc, yc)) - k) + abs(float(util.u2(xc, yc)) - k)
            if r < best_r:
                best, best_r = (float(xc), float(yc)), r
    return best


def solve_first_best(primitives: MarketPrimitives, tol=ROOT_TOL) -> FirstBestAllocation:
    """Joint root of u1 = k and u2 = k with a second-order check."""
    util, k = primitives.utility, primitives.k
    x0 = observable_first_period(primitives, tol)
    y0 = max(conditional_optimal_y(primitives, x0), 1e-3)
    sol = _first_best_newton(primitives, x0, y0, tol)
    if sol is None:
        sol = _first_best_nested(primitives, tol)
    x, y = _polish(primitives, *sol)
    if not (x > 0 and y > 0):
        raise NoInteriorSolution(f"first best ({x:g}, {y:g}) is not interior")
    u11, u12, u22 = float(util.u11(x, y)), float(util.u12(x, y)), float(util.u22(x, y))
    if not (u11 < 0 and u11 * u22 - u12 * u12 > 0):
        raise NoInteriorSolution(f"second-order condition fails at ({x:g}, {y:g})")
    if not (x < primitives.x_max and y < primitives.y_max):
        raise NoInteriorSolution(f"first best ({x:g}, {y:g}) lies outside the domain box")
    W = float(util.u(x, y)) - k * (x + y)
    return FirstBestAllocation(float(x), float(y), float(W))


def solve_observable(primitives: MarketPrimitives, first_best: FirstBestAllocation | None = None,
                     tol=ROOT_TOL) -> ObservableOutcome:
    """Stackelberg outcome when the second seller observes first-period consumption."""
    util, k = primitives.utility, primitives.k
    x_o = observable_first_period(primitives, tol)
    y_o = conditional_optimal_y(primitives, x_o, tol)
    if y_o <= 0:
        raise NoInteriorSolution(f"y*(x_o) = {y_o:g}: second seller inactive at the benchmark")
    u00 = float(util.u(0.0, 0.0))
    ux0 = float(util.u(x_o, 0.0))
    uxy = float(util.u(x_o, y_o))
    p_o = ux0 - u00
    q_o = uxy - ux0
    pi1 = p_o - k * x_o
    pi2 = q_o - k * y_o
    out = ObservableOutcome(
        x_o=x_o, y_o=y_o, p_o=p_o, q_o=q_o, pi1_o=pi1, pi2_o=pi2,
        V_o=u00, W_o=uxy - k * (x_o + y_o), Sigma_o=pi1 + u00,
    )
    fb = first_best if first_best is not None else solve_first_best(primitives, tol)
    sign = cross_sign(primitives, x_o, y_o)
    if sign < 0 and not x_o > fb.x_star:
        raise OrderingViolation(f"submodular but x_o = {x_o:g} <= x* = {fb.x_star:g}")
    if sign > 0 and not x_o < fb.x_star:
        raise OrderingViolation(f"supermodular but x_o = {x_o:g} >= x* = {fb.x_star:g}")
    return out
