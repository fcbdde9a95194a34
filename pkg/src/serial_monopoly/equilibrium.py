"""Private-transactions equilibrium: allocation curve, consumption distribution and menus.

All objects are built on one code path parameterised by two support
endpoints: the *top* type, whose second-period consumption is efficient
(first-best x*), and the *bottom* type, who is excluded in the second
period (observable-benchmark x_o). With substitutes the top type sits at
the left end of the support, with complements at the right end.

The first-period distribution is handled through the distance from the top
type, ``delta = |x - x*|``. Let ``G(delta)`` be the probability that the
consumer lands within ``delta`` of the top type. Its logarithm satisfies
``d ln G / d delta = rate(delta)`` with ``rate = -s u12 / (u2 - k)``
evaluated on the allocation curve (``s = +1`` for substitutes, ``-1`` for
complements), and ``G = 1`` at the bottom type. The rate has a simple pole
at the top type, so the integral is carried out in the variable
``t = ln(delta)``, where the integrand ``rate * delta`` is smooth and
bounded. ``F = G`` for substitutes and ``F = 1 - G`` for complements.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from .benchmark import (
    FirstBestAllocation,
    ObservableOutcome,
    conditional_optimal_y,
    solve_first_best,
    solve_observable,
)
from .errors import (
    InvalidExtension,
    MonotonicityViolation,
    PriceFormMismatch,
    QuadratureDivergence,
    RootBracketFailure,
)
from .model import SUBMODULAR, SUPERMODULAR, MarketPrimitives, classify
from .quadrature import gauss_kronrod
from .roots import ROOT_TOL, safe_newton_array

N_GRID = 2001
PRICE_TOL = 1e-8
FOC_TOL = 1e-6
IC_TOL = 1e-8
# relative distance from the top type where the pole tail is handed to the power-law estimate
TAIL_EPS = 1e-8
ATOM_FLOOR = 1e-10
# relative distance below which sampling extrapolates the log-log profile linearly
SAMPLING_FLOOR = 1e-13
QUAD_ABS_TOL = 1e-14
QUAD_REL_TOL = 1e-13


@dataclass(frozen=True)
class Support:
    """Support of first-period consumption, oriented from the top type."""

    x_top: float
    x_bottom: float

    @property
    def sign(self) -> int:
        return 1 if self.x_bottom > self.x_top else -1

    @property
    def lo(self) -> float:
        return min(self.x_top, self.x_bottom)

    @property
    def hi(self) -> float:
        return max(self.x_top, self.x_bottom)

    @property
    def width(self) -> float:
        return abs(self.x_bottom - self.x_top)

    @property
    def modularity(self) -> str:
        return SUBMODULAR if self.sign > 0 else SUPERMODULAR

    def x_of(self, delta):
        return self.x_top + self.sign * np.asarray(delta, dtype=float)

    def delta_of(self, x):
        return np.maximum(self.sign * (np.asarray(x, dtype=float) - self.x_top), 0.0)


def allocation_at(primitives: MarketPrimitives, x, y_top: float, tol=ROOT_TOL):
    """Second-period quantity y solving u1(x, y) = k, for x in the support.

    The root lies in ``[0, y_top]``; endpoint residuals within ``tol`` are
    snapped to the endpoint so rounding at the support ends cannot break the
    bracket.
    """
    util, k = primitives.utility, primitives.k
    xa = np.asarray(x, dtype=float)
    xs = xa.ravel()

    def g(y, idx):
        return util.u1(xs[idx], y) - k

    def dg(y, idx):
        return util.u12(xs[idx], y)

    idx = np.arange(xs.size)
    lo = np.zeros(xs.size)
    hi = np.full(xs.size, float(y_top))
    g_lo, g_hi = g(lo, idx), g(hi, idx)
    out = np.empty(xs.size)
    at_lo = np.abs(g_lo) <= tol
    at_hi = ~at_lo & (np.abs(g_hi) <= tol)
    out[at_lo] = 0.0
    out[at_hi] = y_top
    rest = np.flatnonzero(~(at_lo | at_hi))
    if rest.size:
        bad = g_lo[rest] * g_hi[rest] > 0
        if np.any(bad):
            j = rest[np.flatnonzero(bad)[0]]
            raise RootBracketFailure(
                f"u1({xs[j]:g}, y) = k has no root in [0, {y_top:g}]; "
                "the model violates the standing assumptions"
            )
        xr = xs[rest]
        out[rest] = safe_newton_array(
            lambda y, i: util.u1(xr[i], y) - k,
            lambda y, i: util.u12(xr[i], y),
            lo[rest], hi[rest], tol=tol,
        )
    out = np.maximum(out, 0.0)
    return out.reshape(xa.shape) if xa.ndim else float(out[0])


@dataclass(frozen=True)
class AllocationCurve:
    """Second-period allocation sampled on a uniform grid of the support."""

    primitives: MarketPrimitives
    support: Support
    y_top: float
    x: np.ndarray
    y: np.ndarray

    @property
    def modularity(self) -> str:
        return self.support.modularity

    def __call__(self, x):
        """Monotone piecewise-cubic interpolation of the sampled curve."""
        return PchipInterpolator(self.x, self.y, extrapolate=False)(x)

    def exact(self, x):
        """Fresh root solve at arbitrary support points."""
        return allocation_at(self.primitives, x, self.y_top)


def solve_allocation_curve(primitives: MarketPrimitives, first_best: FirstBestAllocation,
                           observable: ObservableOutcome, n_grid: int = N_GRID,
                           tol=ROOT_TOL) -> AllocationCurve:
    support = Support(first_best.x_star, observable.x_o)
    x = np.linspace(support.lo, support.hi, n_grid)
    y = allocation_at(primitives, x, first_best.y_star, tol)
    steps = np.diff(y)
    if support.sign > 0 and not np.all(steps < 0):
        raise MonotonicityViolation("allocation is not strictly decreasing for substitutes")
    if support.sign < 0 and not np.all(steps > 0):
        raise MonotonicityViolation("allocation is not strictly increasing for complements")
    return AllocationCurve(primitives, support, first_best.y_star, x, y)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)
# below this fraction of the support width, u2 - k is rebuilt from its derivative
NEAR_POLE = 1e-2


def _gap_slope(primitives, x, y):
    """d/dx [u2(x, y(x)) - k] along the allocation curve (no cancellation)."""
    util = primitives.utility
    u11, u12, u22 = util.u11(x, y), util.u12(x, y), util.u22(x, y)
    return (u11 * u22 - u12 * u12) / (-u12)


def _log_rate(primitives, curve, delta):
    """``rate(delta) * delta``: the log-variable integrand of ln G.

    Next to the top type u2 - k vanishes linearly and direct subtraction
    loses all precision, so there the gap is obtained by integrating its
    derivative with a 6-point Gauss rule.
    """
    sup = curve.support
    util = primitives.utility
    delta = np.asarray(delta, dtype=float)
    x = sup.x_of(delta)
    y = allocation_at(primitives, x, curve.y_top)
    cross = util.u12(x, y)
    near = delta < NEAR_POLE * sup.width
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -sup.sign * cross / (util.u2(x, y) - primitives.k) * delta
        if np.any(near):
            dn = delta[near]
            tau = 0.5 * dn[..., None] * (1.0 + _GL_NODES)
            xz = sup.x_of(tau)
            yz = allocation_at(primitives, xz, curve.y_top)
            mean_slope = 0.5 * (_gap_slope(primitives, xz, yz) @ _GL_WEIGHTS)
            out[near] = -cross[near] / mean_slope
    return out


def pole_strength(primitives: MarketPrimitives, x_top: float, y_top: float) -> float:
    """Limit of ``rate * delta`` at the top type: u12^2 / (u11 u22 - u12^2)."""
    util = primitives.utility
    u11, u12, u22 = (float(util.u11(x_top, y_top)), float(util.u12(x_top, y_top)),
                     float(util.u22(x_top, y_top)))
    return u12 * u12 / (u11 * u22 - u12 * u12)


def _tail(primitives, curve, eps=TAIL_EPS):
    """Power-law fit of ``rate`` near the top type.

    Returns ``(exponent, tail_integral, phi_limit)`` where the fitted local
    behaviour is ``rate ~ C delta^(exponent - 1)``. ``tail_integral`` is the
    integral of ``rate`` over ``[0, eps * width]`` and is infinite when the
    exponent vanishes (a simple pole, which rules out an atom).
    """
    width = curve.support.width
    da, db = eps * width, 0.1 * eps * width
    pa, pb = _log_rate(primitives, curve, np.array([da, db]))
    if not (pa > 0 and pb > 0):
        raise QuadratureDivergence("density rate is not positive next to the top type")
    exponent = np.log(pa / pb) / np.log(da / db)
    if exponent < 1e-3:
        return 0.0, np.inf, float(pb)
    return float(exponent), float(pa / exponent), 0.0


@dataclass(frozen=True)
class EquilibriumCdf:
    """Equilibrium distribution of first-period consumption on the support grid.

    ``log_mass`` holds ln G in grid order; ``F`` and ``f`` are the CDF and
    density in the usual orientation.
    """

    primitives: MarketPrimitives
    curve: AllocationCurve
    log_mass: np.ndarray
    F: np.ndarray
    f: np.ndarray
    atom_mass: float
    pole_strength: float

    @property
    def support(self) -> Support:
        return self.curve.support

    @property
    def modularity(self) -> str:
        return self.curve.modularity

    def _sorted_grid(self):
        sup = self.support
        delta = sup.delta_of(self.curve.x)
        order = np.argsort(delta, kind="stable")
        return delta[order], self.log_mass[order]

    def log_mass_at(self, delta):
        """ln G at arbitrary distances from the top type (anchored on the grid)."""
        d_grid, lg_grid = self._sorted_grid()
        d = np.atleast_1d(np.asarray(delta, dtype=float))
        out = np.empty(d.shape)
        exact = np.searchsorted(d_grid, d, side="left")
        exact = np.minimum(exact, d_grid.size - 1)
        on_grid = d_grid[exact] == d
        out[on_grid] = lg_grid[exact[on_grid]]
        beyond = d >= d_grid[-1]
        out[beyond & ~on_grid] = 0.0
        need = np.flatnonzero(~on_grid & ~beyond)
        if need.size:
            upper = np.searchsorted(d_grid, d[need], side="right")
            partial, _ = gauss_kronrod(
                lambda t: _log_rate(self.primitives, self.curve, np.exp(t)),
                np.log(d[need]), np.log(d_grid[upper]),
                abs_tol=QUAD_ABS_TOL, rel_tol=QUAD_REL_TOL,
            )
            out[need] = lg_grid[upper] - partial
        return out if np.ndim(delta) else float(out[0])

    def mass_within(self, delta):
        """G: probability of landing within ``delta`` of the top type (atom included)."""
        return np.exp(self.log_mass_at(delta))

    def __call__(self, x):
        """CDF at arbitrary points (0 below the support, 1 above)."""
        sup = self.support
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        g = np.asarray(self.mass_within(sup.delta_of(np.clip(xa, sup.lo, sup.hi))), dtype=float)
        F = g if sup.sign > 0 else 1.0 - g
        if sup.sign < 0:
            F = np.where(xa >= sup.hi, 1.0, F)
        F = np.where(xa < sup.lo, 0.0, np.where(xa > sup.hi, 1.0, F))
        return F if np.ndim(x) else float(F[0])

    def quantile(self, u):
        """Inverse CDF, exact at the grid and interpolated in log-log coordinates between."""
        return _quantile(self, u)

    def quantile_delta(self, u):
        """Distance from the top type at CDF level ``u``.

        Next to the top type most of the mass can sit within one rounding
        unit of x*, so draws are best kept in this coordinate.
        """
        return _quantile(self, u, as_delta=True)


def _inverse_table(cdf: EquilibriumCdf):
    """(ln delta, ln G) pairs on the grid plus a geometric refinement of the pole cell."""
    d_grid, lg_grid = cdf._sorted_grid()
    width = cdf.support.width
    d1 = d_grid[1]
    extra = np.geomspace(SAMPLING_FLOOR * width, d1, 48)[:-1]
    lg_extra = cdf.log_mass_at(extra)
    ld = np.concatenate([np.log(extra), np.log(d_grid[1:])])
    lg = np.concatenate([lg_extra, lg_grid[1:]])
    slope = float(_log_rate(cdf.primitives, cdf.curve, np.array([extra[0]]))[0])
    return ld, lg, slope


def _quantile(cdf: EquilibriumCdf, u, as_delta=False):
    ua = np.atleast_1d(np.asarray(u, dtype=float))
    sup = cdf.support
    if not hasattr(cdf, "_inv_cache"):
        ld, lg, slope = _inverse_table(cdf)
        object.__setattr__(cdf, "_inv_cache", (PchipInterpolator(lg, ld), ld, lg, slope))
    interp, ld, lg, slope = cdf._inv_cache
    # mass within delta of the top type, expressed from the CDF level
    g = ua if sup.sign > 0 else 1.0 - ua
    delta = np.zeros(ua.shape)
    cont = g > cdf.atom_mass
    with np.errstate(divide="ignore"):
        lgt = np.log(np.where(cont, g, 1.0))
    mid = cont & (lgt >= lg[0])
    delta[mid] = np.exp(interp(np.minimum(lgt[mid], 0.0)))
    low = cont & (lgt < lg[0])
    delta[low] = np.exp(ld[0] + (lgt[low] - lg[0]) / slope)
    delta = np.minimum(delta, sup.width)
    if as_delta:
        return delta if np.ndim(u) else float(delta[0])
    x = sup.x_of(delta)
    return x if np.ndim(u) else float(x[0])


def solve_distribution(primitives: MarketPrimitives, curve: AllocationCurve) -> EquilibriumCdf:
    """Integrate the seller-2 first-order condition for the consumption distribution."""
    util, k = primitives.utility, primitives.k
    sup = curve.support
    delta = sup.delta_of(curve.x)
    gap = util.u2(curve.x, curve.y) - k
    top_idx = int(np.argmin(delta))
    interior = np.ones(delta.size, dtype=bool)
    interior[top_idx] = False
    if np.any(gap[interior] <= 0):
        j = int(np.flatnonzero(interior & (gap <= 0))[0])
        raise QuadratureDivergence(
            f"u2 - k = {gap[j]:g} <= 0 at interior point x = {curve.x[j]:g}; "
            "the density integrand is singular inside the support"
        )
    order = np.argsort(delta, kind="stable")
    d = delta[order]
    integrand = lambda t: _log_rate(primitives, curve, np.exp(t))  # noqa: E731
    seg, _ = gauss_kronrod(integrand, np.log(d[1:-1]), np.log(d[2:]),
                           abs_tol=QUAD_ABS_TOL, rel_tol=QUAD_REL_TOL)
    if np.any(seg < 0) or not np.all(np.isfinite(seg)):
        raise QuadratureDivergence("negative or non-finite density increments")
    lg_sorted = np.zeros(d.size)
    # reverse cumulative sum from the bottom type, where G = 1
    lg_sorted[1:-1] = -np.cumsum(seg[::-1])[::-1]
    exponent, tail, _ = _tail(primitives, curve)
    phi0 = pole_strength(primitives, sup.x_top, curve.y_top)
    if np.isfinite(tail):
        first, _ = gauss_kronrod(integrand, np.log(TAIL_EPS * sup.width), np.log(d[1]),
                                 abs_tol=QUAD_ABS_TOL, rel_tol=QUAD_REL_TOL)
        atom = float(np.exp(lg_sorted[1] - first[0] - tail))
        if atom < ATOM_FLOOR:
            atom = 0.0
    else:
        atom = 0.0
    lg_sorted[0] = np.log(atom) if atom > 0 else -np.inf
    log_mass = np.empty(d.size)
    log_mass[order] = lg_sorted
    G = np.exp(log_mass)
    F = G if sup.sign > 0 else 1.0 - G
    if sup.sign < 0:
        F[top_idx] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = -sup.sign * util.u12(curve.x, curve.y) / gap
        f = G * rate
    # density at the top type follows from G ~ delta^phi0 next to the pole
    if atom == 0.0:
        f[top_idx] = np.inf if phi0 < 1 else (0.0 if phi0 > 1 else phi0 * G[order[1]] / d[1])
    else:
        f[top_idx] = np.inf if exponent < 1 else atom * rate[order[1]]
    return EquilibriumCdf(primitives, curve, log_mass, F, f, atom, phi0)


@dataclass(frozen=True)
class EquilibriumSolution:
    """Constructed equilibrium: curve, distribution, second-period menu and first-period tariff.

    ``q`` and ``U`` are sampled on ``curve.x``. ``entry_fee`` is the
    fixed part of seller 1's two-part tariff; the per-unit price is ``k``.
    ``extension_y`` is the largest quantity of the off-path menu extension,
    ``None`` for the minimal menu.
    """

    primitives: MarketPrimitives
    first_best: FirstBestAllocation
    observable: ObservableOutcome
    curve: AllocationCurve
    cdf: EquilibriumCdf
    q: np.ndarray
    U: np.ndarray
    sigma: float
    entry_fee: float
    outside_value: float
    extension_y: float | None = None
    price_tol: float = PRICE_TOL
    integral_form_gap: float = field(default=0.0, compare=False)

    @property
    def support(self) -> Support:
        return self.curve.support

    @property
    def modularity(self) -> str:
        return self.curve.modularity

    @property
    def x(self):
        return self.curve.x

    @property
    def y_hat(self):
        return self.curve.y

    @property
    def per_unit_price(self) -> float:
        return self.primitives.k

    def menu_price(self, x):
        """Price of the item designed for first-period consumption ``x``."""
        util, k = self.primitives.utility, self.primitives.k
        y = self.curve.exact(x)
        return util.u(x, y) - k * np.asarray(x) - self.sigma

    def indirect_utility(self, x):
        return self.primitives.k * np.asarray(x, dtype=float) + self.sigma

    def table(self) -> dict:
        return {"x": self.x, "y_hat": self.y_hat, "F": self.cdf.F, "f": self.cdf.f,
                "q": self.q, "U": self.U, "log_mass": self.cdf.log_mass}


def _price_integral_form(primitives, curve, sigma):
    """Menu prices from the information-rent integral, anchored at the bottom type."""
    util, k = primitives.utility, primitives.k
    sup = curve.support
    x = curve.x
    cells, _ = gauss_kronrod(
        lambda z: util.u1(z, allocation_at(primitives, z, curve.y_top)),
        x[:-1], x[1:], abs_tol=QUAD_ABS_TOL, rel_tol=QUAD_REL_TOL,
    )
    # U(x) = u(x_o, 0) + integral from x_o to x of u1(z, y(z)) dz
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    if sup.sign > 0:
        rent = cum - cum[-1]
    else:
        rent = cum
    U = float(util.u(sup.x_bottom, 0.0)) + rent
    return util.u(x, curve.y) - U


def skip_value(solution: EquilibriumSolution, extension_y: float | None = None) -> float:
    """Best payoff over the menu for a consumer who bought nothing in period 1.

    Covers the null item, every on-path item (grid search polished by a
    bounded scalar search) and, if present, the marginal-cost extension
    above the top item.
    """
    util, k = solution.primitives.utility, solution.primitives.k
    x, y, q = solution.x, solution.y_hat, solution.q
    best = float(util.u(0.0, 0.0))
    vals = util.u(0.0, y) - q
    j = int(np.argmax(vals))
    best = max(best, float(vals[j]))
    lo_x, hi_x = x[max(j - 1, 0)], x[min(j + 1, x.size - 1)]
    if hi_x > lo_x:
        def neg(t):
            yt = solution.curve.exact(t)
            return -(float(util.u(0.0, yt)) - float(util.u(t, yt)) + k * t + solution.sigma)

        res = minimize_scalar(neg, bounds=(lo_x, hi_x), method="bounded",
                              options={"xatol": 1e-13})
        best = max(best, -float(res.fun))
    if extension_y is not None:
        y_top = solution.first_best.y_star
        q_top = float(solution.menu_price(solution.support.x_top))
        y_skip = conditional_optimal_y(solution.primitives, 0.0)
        y_best = min(max(y_skip, y_top), extension_y)
        best = max(best, float(util.u(0.0, y_best)) - q_top - k * (y_best - y_top))
    return best


def solve_menu(primitives: MarketPrimitives, curve: AllocationCurve, price_tol=PRICE_TOL):
    """Closed-form menu prices checked against the rent-integral form.

    Returns ``(q, U, sigma, gap)`` on the curve grid.
    """
    util, k = primitives.utility, primitives.k
    x_b = curve.support.x_bottom
    sigma = float(util.u(x_b, 0.0)) - k * x_b
    q = util.u(curve.x, curve.y) - k * curve.x - sigma
    U = util.u(curve.x, curve.y) - q
    q_int = _price_integral_form(primitives, curve, sigma)
    gap = float(np.max(np.abs(q - q_int)))
    if gap > price_tol:
        raise PriceFormMismatch(f"closed-form and integral menu prices differ by {gap:.3e}")
    return q, U, sigma, gap


def solve_equilibrium(primitives: MarketPrimitives, n_grid: int = N_GRID,
                      root_tol=ROOT_TOL, price_tol=PRICE_TOL) -> EquilibriumSolution:
    """Run the whole construction: benchmarks, curve, distribution, menu and tariff."""
    classify(primitives)
    fb = solve_first_best(primitives, root_tol)
    obs = solve_observable(primitives, fb, root_tol)
    curve = solve_allocation_curve(primitives, fb, obs, n_grid, root_tol)
    cdf = solve_distribution(primitives, curve)
    q, U, sigma, gap = solve_menu(primitives, curve, price_tol)
    sol = EquilibriumSolution(primitives, fb, obs, curve, cdf, q, U, sigma,
                              entry_fee=np.nan, outside_value=np.nan,
                              price_tol=price_tol, integral_form_gap=gap)
    v = skip_value(sol)
    return replace(sol, outside_value=v, entry_fee=sigma - v)


def maximal_extension(solution: EquilibriumSolution) -> float:
    """Largest admissible extension quantity, the skipper's efficient quantity y*(0)."""
    return conditional_optimal_y(solution.primitives, 0.0)


def extend_menu(solution: EquilibriumSolution, y_tilde) -> EquilibriumSolution:
    """Add marginal-cost items above the top item, up to ``y_tilde``.

    ``y_tilde`` may be a number, ``"minimal"`` (no extension) or
    ``"maximal"``. On-path choices are re-checked: no support type may
    strictly prefer an extension item to its designated item.
    """
    if solution.modularity != SUBMODULAR:
        raise InvalidExtension("menu extensions are defined for substitutes only")
    y_top = solution.first_best.y_star
    y_cap = maximal_extension(solution)
    if isinstance(y_tilde, str):
        if y_tilde == "minimal":
            y_tilde = y_top
        elif y_tilde == "maximal":
            y_tilde = y_cap
        else:
            raise InvalidExtension(f"unknown extension directive {y_tilde!r}")
    y_tilde = float(y_tilde)
    if not (y_top - 1e-12 <= y_tilde <= y_cap + 1e-12):
        raise InvalidExtension(f"extension {y_tilde:g} outside [y*, y*(0)] = [{y_top:g}, {y_cap:g}]")
    if y_tilde <= y_top:
        return replace(solution, extension_y=None, outside_value=skip_value(solution),
                       entry_fee=solution.sigma - skip_value(solution))
    util, k = solution.primitives.utility, solution.primitives.k
    x = solution.x
    q_top = float(solution.menu_price(solution.support.x_top))
    y_best = np.clip(conditional_optimal_y(solution.primitives, x), y_top, y_tilde)
    ext_payoff = util.u(x, y_best) - q_top - k * (y_best - y_top)
    excess = float(np.max(ext_payoff - solution.U))
    if excess > solution.price_tol:
        raise InvalidExtension(f"extension item preferred on path by {excess:.3e}")
    v = skip_value(solution, y_tilde)
    return replace(solution, extension_y=y_tilde, outside_value=v, entry_fee=solution.sigma - v)
