"""Equilibrium payoffs, the consumer-payoff interval, welfare and benchmark comparisons."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .benchmark import ObservableOutcome, conditional_optimal_y
from .equilibrium import (
    SAMPLING_FLOOR,
    EquilibriumCdf,
    EquilibriumSolution,
    _log_rate,
    extend_menu,
    skip_value,
)
from .errors import ComparisonViolation
from .model import SUBMODULAR, MarketPrimitives
from .quadrature import GAUSS_WEIGHTS, KRONROD_WEIGHTS, NODES

EXPECTATION_TOL = 1e-6
# strictness margins smaller than this are reported as indeterminate
MARGIN_TOL = 1e-9

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)


def _mass_table(cdf: EquilibriumCdf, floor=SAMPLING_FLOOR):
    """Sorted distances from the top type with ln G, the pole cell refined geometrically."""
    d_grid, lg_grid = cdf._sorted_grid()
    d1 = d_grid[1]
    extra = np.geomspace(floor * cdf.support.width, d1, 64)[:-1]
    return (np.concatenate([extra, d_grid[1:]]),
            np.concatenate([cdf.log_mass_at(extra), lg_grid[1:]]))


def expectation(cdf: EquilibriumCdf, g, with_error=False):
    """E_F[g(x)] for a vectorised function ``g`` of first-period consumption.

    The measure is written in ``t = ln(delta)``, where ``dG = G * phi dt``
    with ``phi = rate * delta`` bounded. Each cell of the (pole-refined)
    grid is integrated with a 15-point Kronrod rule, and G at the nodes is
    rebuilt from the cell's right end by an inner Gauss-Legendre rule. The
    mass within the innermost distance is placed at that point, which costs
    at most its mass times the variation of ``g`` over a ~1e-13 interval.
    """
    sup = cdf.support
    d, lg = _mass_table(cdf)
    ta, tb = np.log(d[:-1]), np.log(d[1:])
    mid, half = 0.5 * (ta + tb), 0.5 * (tb - ta)
    t = mid[:, None] + half[:, None] * NODES[None, :]
    # inner integral of phi from each node to the right end of its cell
    span = tb[:, None] - t
    s = t[..., None] + 0.5 * span[..., None] * (1.0 + _GL_NODES)
    phi_inner = _log_rate(cdf.primitives, cdf.curve, np.exp(s))
    inner = 0.5 * span * (phi_inner @ _GL_WEIGHTS)
    G = np.exp(lg[1:, None] - inner)
    delta = np.exp(t)
    phi = _log_rate(cdf.primitives, cdf.curve, delta)
    vals = np.asarray(g(sup.x_of(delta)), dtype=float) * G * phi
    k15 = half * (vals @ KRONROD_WEIGHTS)
    g7 = half * (vals @ GAUSS_WEIGHTS)
    head = np.exp(lg[0]) * float(np.asarray(g(sup.x_of(d[0]))))
    total = head + float(np.sum(k15))
    if with_error:
        # the innermost mass is placed at d[0]; bound its displacement by that mass times d[0]
        return total, float(np.sum(np.abs(k15 - g7))) + np.exp(lg[0]) * d[0]
    return total


def conditional_welfare(primitives: MarketPrimitives, solution: EquilibriumSolution, x):
    """W(x) = u(x, y(x)) - k (x + y(x)) for support points ``x``."""
    util, k = primitives.utility, primitives.k
    y = solution.curve.exact(x)
    return util.u(x, y) - k * (np.asarray(x, dtype=float) + y)


def outside_option_value(solution: EquilibriumSolution, y_tilde="minimal") -> float:
    """Best payoff from the second-period menu for a consumer who skipped period 1.

    ``"minimal"`` uses the equilibrium menu, ``"maximal"`` the marginal-cost
    extension up to the skipper's efficient quantity, a number any
    intermediate extension. With complements no extension is admissible and
    ``"maximal"`` falls back to the equilibrium menu.
    """
    if isinstance(y_tilde, str) and y_tilde == "minimal":
        return skip_value(solution)
    if solution.modularity != SUBMODULAR and isinstance(y_tilde, str) and y_tilde == "maximal":
        return skip_value(solution)
    return extend_menu(solution, y_tilde).outside_value


@dataclass(frozen=True)
class Comparison:
    name: str
    lhs: float
    rhs: float
    relation: str
    margin: float
    status: str
    asserted: bool = True

    def to_dict(self):
        return dict(self.__dict__)


def _compare(name, lhs, rhs, relation, asserted=True, need=MARGIN_TOL):
    lhs, rhs = float(lhs), float(rhs)
    if relation == ">":
        margin = lhs - rhs
    elif relation == "<":
        margin = rhs - lhs
    else:
        margin = -abs(lhs - rhs)
    if relation == "=":
        status = "pass" if -margin <= need else "fail"
    elif abs(margin) < need:
        status = "indeterminate"
    else:
        status = "pass" if margin > 0 else "fail"
    return Comparison(name, lhs, rhs, relation, margin, status, asserted)


@dataclass(frozen=True)
class PayoffReport:
    modularity: str
    Sigma: float
    V_lower: float
    V_upper: float
    pi1_lower: float
    pi1_upper: float
    pi2: float
    W: float
    V_menu: float
    pi1_menu: float
    expectation_error: float
    deltas: dict
    proof_formula_V: dict
    comparisons: list
    conditional_x: np.ndarray = field(repr=False)
    conditional_W: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.comparisons if c.asserted)

    def to_dict(self) -> dict:
        return {
            "modularity": self.modularity,
            "Sigma": self.Sigma,
            "V_lower": self.V_lower,
            "V_upper": self.V_upper,
            "pi1_lower": self.pi1_lower,
            "pi1_upper": self.pi1_upper,
            "pi2": self.pi2,
            "W": self.W,
            "V_menu": self.V_menu,
            "pi1_menu": self.pi1_menu,
            "expectation_error": self.expectation_error,
            "deltas": dict(self.deltas),
            "proof_formula_V": dict(self.proof_formula_V),
            "comparisons": [c.to_dict() for c in self.comparisons],
        }


def _proof_formula_values(primitives, solution):
    """Closed-form consumer payoffs written in terms of first-best quantities.

    With complements the skipper's value is simply u(0, 0).
    """
    util, k = primitives.utility, primitives.k
    if solution.modularity != SUBMODULAR:
        v = float(util.u(0.0, 0.0))
        return {"V_lower": v, "V_upper": v}
    fb = solution.first_best
    xs, ys = fb.x_star, fb.y_star
    base = float(util.u(xs, 0.0))
    lower = float(util.u(0.0, ys)) - float(util.u(xs, ys)) + base
    y0 = conditional_optimal_y(primitives, 0.0)
    upper = float(util.u(0.0, y0)) - float(util.u(xs, ys)) - k * (y0 - ys) + base
    return {"V_lower": lower, "V_upper": upper}


def payoff_report(primitives: MarketPrimitives, solution: EquilibriumSolution,
                  observable: ObservableOutcome | None = None, strict=True,
                  n_conditional=None) -> PayoffReport:
    """Expected payoffs under the equilibrium distribution and their comparison with the benchmark.

    With ``strict`` a failed asserted comparison raises
    :class:`ComparisonViolation`; otherwise it is only recorded.
    """
    util, k = primitives.utility, primitives.k
    obs = observable if observable is not None else solution.observable
    sigma = solution.sigma
    curve = solution.curve

    def profit2(x):
        y = curve.exact(x)
        return util.u(x, y) - k * x - sigma - k * y

    pi2, err2 = expectation(solution.cdf, profit2, with_error=True)
    W = sigma + pi2
    V_lower = outside_option_value(solution, "minimal")
    V_upper = outside_option_value(solution, "maximal")
    pi1_upper, pi1_lower = sigma - V_lower, sigma - V_upper
    deltas = {
        "W": W - obs.W_o,
        "pi2": pi2 - obs.pi2_o,
        "V_lower": V_lower - obs.V_o,
        "pi1_upper": pi1_upper - obs.pi1_o,
    }
    xs = solution.x if n_conditional is None else np.linspace(
        solution.support.lo, solution.support.hi, n_conditional)
    Wx = conditional_welfare(primitives, solution, xs)

    comps = [_compare("Sigma = Sigma_o", sigma, obs.Sigma_o, "=", need=1e-10),
             _compare("W > W_o", W, obs.W_o, ">"),
             _compare("pi2 > pi2_o", pi2, obs.pi2_o, ">"),
             _compare("pi2 > singleton menu profit", pi2, obs.q_o - k * obs.y_o, ">")]
    # conditional welfare falls as consumption moves away from the top type
    steps = np.diff(Wx) * solution.support.sign
    comps.append(_compare("W(x) strictly monotone", -float(np.max(steps)), 0.0, ">", need=0.0))
    if solution.modularity == SUBMODULAR:
        comps += [_compare("V_lower > V_o", V_lower, obs.V_o, ">"),
                  _compare("pi1_upper < pi1_o", pi1_upper, obs.pi1_o, "<"),
                  _compare("V_upper > V_lower", V_upper, V_lower, ">")]
    else:
        comps += [_compare("V = u(0,0)", V_lower, float(util.u(0.0, 0.0)), "="),
                  _compare("V_upper = V_lower", V_upper, V_lower, "="),
                  # strict claims that do not hold for complements (V equals V_o), reported only
                  _compare("V_lower > V_o", V_lower, obs.V_o, ">", asserted=False),
                  _compare("pi1_upper < pi1_o", pi1_upper, obs.pi1_o, "<", asserted=False)]
    report = PayoffReport(
        modularity=solution.modularity, Sigma=sigma, V_lower=V_lower, V_upper=V_upper,
        pi1_lower=pi1_lower, pi1_upper=pi1_upper, pi2=pi2, W=W,
        V_menu=solution.outside_value, pi1_menu=sigma - solution.outside_value,
        expectation_error=err2,
        deltas=deltas, proof_formula_V=_proof_formula_values(primitives, solution),
        comparisons=comps, conditional_x=np.asarray(xs), conditional_W=np.asarray(Wx),
    )
    if strict:
        failed = [c for c in comps if c.asserted and c.status == "fail"]
        if failed:
            c = failed[0]
            raise ComparisonViolation(
                f"{c.name} fails: lhs={c.lhs:.12g}, rhs={c.rhs:.12g}, margin={c.margin:.3e}")
    return report


def expected_welfare(solution: EquilibriumSolution) -> float:
    """E_F[W(x)] computed directly, an independent check of Sigma + pi2."""
    return expectation(solution.cdf, lambda x: conditional_welfare(solution.primitives, solution, x))


def table_rows(solution: EquilibriumSolution, report: PayoffReport) -> list:
    """Rows (label, x, y, W, pi1, pi2, V) for the main model and both benchmarks.

    Interval-valued entries are given as ``(low, high)`` pairs; for the main
    model x and y are the expected consumptions.
    """
    cdf = solution.cdf
    Ex = expectation(cdf, lambda x: np.asarray(x, dtype=float))
    Ey = expectation(cdf, lambda x: solution.curve.exact(x))
    fb, obs = solution.first_best, solution.observable
    return [
        ("main model", Ex, Ey, report.W, (report.pi1_lower, report.pi1_upper), report.pi2,
         (report.V_lower, report.V_upper)),
        ("first best", fb.x_star, fb.y_star, fb.W_star, None, None, None),
        ("observable", obs.x_o, obs.y_o, obs.W_o, obs.pi1_o, obs.pi2_o, obs.V_o),
    ]
