"""Independent checkers for an equilibrium solution.

Checkers read only the primitives and the solution tables (x, y_hat, F,
f, q, U) and recompute everything else from the utility evaluators, so a
solution reloaded from disk is checked exactly like one held in memory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .benchmark import conditional_optimal_y, observable_first_period, solve_first_best
from .equilibrium import FOC_TOL, IC_TOL, PRICE_TOL, EquilibriumSolution
from .errors import NoDeviationFound
from .model import MarketPrimitives, classify
from .roots import safe_newton

IR_TOL = 1e-8
ENDPOINT_TOL = 1e-10
SURPLUS_TOL = 1e-8
DEVIATION_GRID = 4001
MIN_GAIN = 1e-10
KEEP = "keep-second-period-item"
OUTSIDE = "take-outside-option"


def _orientation(primitives, solution):
    """(top index, bottom index, +1 substitutes / -1 complements) read off the tables."""
    y = np.asarray(solution.y_hat)
    top = int(np.argmax(y))
    bottom = int(np.argmin(y))
    cross = float(primitives.utility.u12(solution.x[top], y[top]))
    return top, bottom, (1 if cross < 0 else -1)


def _subsample(n, grid_n):
    return np.unique(np.round(np.linspace(0, n - 1, min(grid_n, n))).astype(int))


@dataclass(frozen=True)
class ICResult:
    max_violation: float
    type_x: float
    item_x: float
    consistency: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def check_ic(solution: EquilibriumSolution, grid_n=200, tol=IC_TOL) -> ICResult:
    """Largest gain from mimicking another type, over a ``grid_n`` x ``grid_n`` grid.

    A type's own payoff is the tabulated U; ``consistency`` is the largest
    gap between U and u(x, y_hat) - q, which is folded into the violation.
    """
    util = solution.primitives.utility
    x, y, q, U = (np.asarray(a, dtype=float) for a in
                  (solution.x, solution.y_hat, solution.q, solution.U))
    idx = _subsample(x.size, grid_n)
    xs, ys, qs, Us = x[idx], y[idx], q[idx], U[idx]
    gain = util.u(xs[:, None], ys[None, :]) - qs[None, :] - Us[:, None]
    i, j = np.unravel_index(int(np.argmax(gain)), gain.shape)
    worst = float(gain[i, j])
    consistency = float(np.max(np.abs(util.u(x, y) - q - U)))
    violation = max(worst, consistency)
    return ICResult(violation, float(xs[i]), float(xs[j]), consistency, violation <= tol)


@dataclass(frozen=True)
class IRResult:
    min_slack: float
    binding_x: float
    bottom_slack: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def check_ir(solution: EquilibriumSolution, tol=IR_TOL, bind_tol=PRICE_TOL) -> IRResult:
    """Slack U(x) - u(x, 0); must be non-negative and zero at the bottom type."""
    primitives = solution.primitives
    x, U = np.asarray(solution.x), np.asarray(solution.U)
    slack = U - primitives.utility.u(x, 0.0 * x)
    j = int(np.argmin(slack))
    _, bottom, _ = _orientation(primitives, solution)
    bottom_slack = float(slack[bottom])
    ok = float(slack[j]) >= -tol and abs(bottom_slack) <= bind_tol
    return IRResult(float(slack[j]), float(x[j]), bottom_slack, ok)


@dataclass(frozen=True)
class FocResult:
    foc1_max_residual: float
    foc1_at: float
    foc2_max_residual: float
    foc2_at: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def check_focs(solution: EquilibriumSolution, tol=FOC_TOL, eps=1e-8) -> FocResult:
    """Residuals of u1(x, y_hat) = k and of the second seller's pointwise condition.

    The second residual is (u2 - k) f + u12 (F - c) with c = 0 for
    substitutes and 1 for complements, taken over interior points more than
    ``eps`` times the support width away from the top type.
    """
    primitives = solution.primitives
    util, k = primitives.utility, primitives.k
    x, y = np.asarray(solution.x), np.asarray(solution.y_hat)
    F, f = np.asarray(solution.cdf.F), np.asarray(solution.cdf.f)
    r1 = np.abs(util.u1(x, y) - k)
    top, bottom, sign = _orientation(primitives, solution)
    width = abs(x[bottom] - x[top])
    keep = np.abs(x - x[top]) > eps * width
    keep[bottom] = False
    c = 0.0 if sign > 0 else 1.0
    r2 = np.zeros_like(x)
    with np.errstate(invalid="ignore"):
        r2[keep] = np.abs((util.u2(x[keep], y[keep]) - k) * f[keep]
                          + util.u12(x[keep], y[keep]) * (F[keep] - c))
    r2 = np.where(np.isfinite(r2), r2, np.inf)
    i, j = int(np.argmax(r1)), int(np.argmax(r2))
    return FocResult(float(r1[i]), float(x[i]), float(r2[j]), float(x[j]),
                     bool(r1[i] <= tol and r2[j] <= tol))


@dataclass(frozen=True)
class CdfFlags:
    monotone: bool
    starts_at_atom: bool
    terminal_one: bool
    no_interior_atoms: bool
    atom_mass: float
    max_excess_jump: float

    @property
    def passed(self) -> bool:
        return self.monotone and self.starts_at_atom and self.terminal_one and self.no_interior_atoms

    def to_dict(self):
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def check_cdf(solution: EquilibriumSolution, tol=1e-12) -> CdfFlags:
    """Validity of the tabulated CDF.

    Jumps between neighbouring grid points are compared with the
    continuity bound h * max(f) over the cell; the cell touching the top
    type, where f is unbounded, is exempt.
    """
    x = np.asarray(solution.x, dtype=float)
    F, f = np.asarray(solution.cdf.F, dtype=float), np.asarray(solution.cdf.f, dtype=float)
    atom = float(solution.cdf.atom_mass)
    order = np.argsort(x, kind="stable")
    x, F, f = x[order], F[order], f[order]
    _, _, sign = _orientation(solution.primitives, solution)
    jumps = np.diff(F)
    monotone = bool(np.all(jumps >= -tol) and F[0] >= -tol)
    if sign > 0:
        # substitutes: the top type sits at the left end and carries the atom
        starts = abs(F[0] - atom) <= tol
    else:
        starts = abs(F[0]) <= tol
    terminal = abs(F[-1] - 1.0) <= tol
    h = np.diff(x)
    bound = 1.05 * h * np.maximum(f[:-1], f[1:]) + tol
    excess = jumps - bound
    pole_cell = 0 if sign > 0 else excess.size - 1
    excess[pole_cell] = -np.inf
    excess = np.where(np.isnan(excess), np.inf, excess)
    worst = float(np.max(excess)) if excess.size else -np.inf
    return CdfFlags(monotone, bool(starts), bool(terminal), worst <= 0.0, atom, worst)


@dataclass(frozen=True)
class EndpointResult:
    bottom_error: float
    top_error: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def check_endpoints(solution: EquilibriumSolution, tol=ENDPOINT_TOL) -> EndpointResult:
    """y_hat = 0 at the bottom type and y_hat = y* at the top type."""
    fb = solve_first_best(solution.primitives)
    top, bottom, _ = _orientation(solution.primitives, solution)
    y = np.asarray(solution.y_hat)
    eb, et = abs(float(y[bottom])), abs(float(y[top]) - fb.y_star)
    return EndpointResult(eb, et, eb <= tol and et <= tol)


@dataclass(frozen=True)
class SurplusResult:
    sigma: float
    spread: float
    benchmark_gap: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def check_surplus(solution: EquilibriumSolution, tol=SURPLUS_TOL) -> SurplusResult:
    """U(x) - k x must be constant on the support and equal u(x_o, 0) - k x_o."""
    primitives = solution.primitives
    s = np.asarray(solution.U) - primitives.k * np.asarray(solution.x)
    x_o = observable_first_period(primitives)
    target = float(primitives.utility.u(x_o, 0.0)) - primitives.k * x_o
    spread = float(np.max(s) - np.min(s))
    gap = float(np.max(np.abs(s - target)))
    return SurplusResult(float(np.mean(s)), spread, gap, spread <= tol and gap <= tol)


@dataclass(frozen=True)
class DeviationCertificate:
    x_tilde: float
    x_prime: float
    gain: float
    branch: str

    def to_dict(self):
        return dict(self.__dict__)


def _keep_branch_optimum(primitives, y2, lo, hi):
    """Maximiser of u(x, y2) - k x on [lo, hi] (concave in x)."""
    util, k = primitives.utility, primitives.k

    def g(x):
        return float(util.u1(x, y2)) - k

    if g(lo) <= 0:
        return lo
    if g(hi) >= 0:
        return hi
    return safe_newton(g, lambda x: float(util.u11(x, y2)), lo, hi)


def check_pure_strategy_deviations(primitives: MarketPrimitives, x_tilde_grid,
                                   n_grid=DEVIATION_GRID, unsafe=False, min_gain=MIN_GAIN):
    """Profitable joint deviations of seller 1 and the consumer from deterministic consumption.

    For each candidate x~ seller 2 best-responds with the single item
    (y*(x~), u(x~, y*(x~)) - u(x~, 0)). The deviation value is the larger
    of keeping that item and skipping it, maximised over x in
    [0, 1.5 x_o]: a grid search, then each branch is polished at its own
    first-order condition. ``unsafe`` skips the modularity check and the
    failure on non-positive gains.
    """
    util, k = primitives.utility, primitives.k
    if not unsafe:
        classify(primitives)
    x_o = observable_first_period(primitives)
    hi = 1.5 * x_o
    xs = np.linspace(0.0, hi, n_grid)
    outside = util.u(xs, 0.0 * xs) - k * xs
    j_out = int(np.argmax(outside))
    # polishing the skip branch lands on x_o itself
    out_x, out_val = x_o, float(util.u(x_o, 0.0)) - k * x_o
    if float(outside[j_out]) > out_val:
        out_x, out_val = float(xs[j_out]), float(outside[j_out])
    certs = []
    for xt in np.atleast_1d(np.asarray(x_tilde_grid, dtype=float)):
        y2 = conditional_optimal_y(primitives, float(xt))
        q2 = float(util.u(xt, y2)) - float(util.u(xt, 0.0))
        base = float(util.u(xt, 0.0)) - k * xt
        keep = util.u(xs, y2) - q2 - k * xs
        j = int(np.argmax(keep))
        keep_x, keep_val = float(xs[j]), float(keep[j])
        xp = _keep_branch_optimum(primitives, y2, 0.0, hi)
        val = float(util.u(xp, y2)) - q2 - k * xp
        if val > keep_val:
            keep_x, keep_val = xp, val
        if keep_val > out_val:
            cert = DeviationCertificate(float(xt), keep_x, float(keep_val - base), KEEP)
        else:
            cert = DeviationCertificate(float(xt), float(out_x), float(out_val - base), OUTSIDE)
        if not unsafe and not cert.gain > min_gain:
            raise NoDeviationFound(
                f"no profitable deviation from x~ = {xt:g}: best gain {cert.gain:.3e}")
        certs.append(cert)
    return certs


def common_agency_gap(primitives: MarketPrimitives) -> float:
    """[u(x_o, 0) - k x_o] - [u(x*, 0) - k x*]: the gain from selling x_o instead of x*."""
    util, k = primitives.utility, primitives.k
    x_o = observable_first_period(primitives)
    x_s = solve_first_best(primitives).x_star
    return (float(util.u(x_o, 0.0)) - k * x_o) - (float(util.u(x_s, 0.0)) - k * x_s)


def default_candidates(primitives: MarketPrimitives, n=50):
    """``n`` candidate consumptions spanning [0.5 x*, 1.2 x_o]."""
    x_s = solve_first_best(primitives).x_star
    x_o = observable_first_period(primitives)
    return np.linspace(0.5 * x_s, 1.2 * x_o, n)


@dataclass
class VerificationReport:
    ic: ICResult
    ir: IRResult
    focs: FocResult
    cdf: CdfFlags
    endpoints: EndpointResult
    surplus: SurplusResult
    deviations: list = field(default_factory=list)
    deviation_error: str | None = None
    common_agency_gap: float | None = None

    @property
    def checks(self) -> dict:
        return {
            "check_ic": self.ic.passed,
            "check_ir": self.ir.passed,
            "check_focs": self.focs.passed,
            "check_cdf": self.cdf.passed,
            "check_endpoints": self.endpoints.passed,
            "check_surplus": self.surplus.passed,
            "check_pure_strategy_deviations": self.deviation_error is None,
            "common_agency_gap": self.common_agency_gap is None or self.common_agency_gap > 0,
        }

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def failed(self) -> list:
        return [name for name, ok in self.checks.items() if not ok]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "failed": self.failed,
            "checks": self.checks,
            "check_ic": self.ic.to_dict(),
            "check_ir": self.ir.to_dict(),
            "check_focs": self.focs.to_dict(),
            "check_cdf": self.cdf.to_dict(),
            "check_endpoints": self.endpoints.to_dict(),
            "check_surplus": self.surplus.to_dict(),
            "deviations": [c.to_dict() for c in self.deviations],
            "deviation_error": self.deviation_error,
            "common_agency_gap": self.common_agency_gap,
        }


def verify_solution(solution: EquilibriumSolution, ic_grid=200, n_candidates=50,
                    deviation_grid=DEVIATION_GRID, ic_tol=IC_TOL, foc_tol=FOC_TOL,
                    price_tol=PRICE_TOL) -> VerificationReport:
    primitives = solution.primitives
    try:
        certs = check_pure_strategy_deviations(
            primitives, default_candidates(primitives, n_candidates), deviation_grid)
        dev_err = None
    except NoDeviationFound as exc:
        certs, dev_err = [], str(exc)
    _, _, sign = _orientation(primitives, solution)
    return VerificationReport(
        ic=check_ic(solution, ic_grid, ic_tol),
        ir=check_ir(solution, bind_tol=price_tol),
        focs=check_focs(solution, foc_tol),
        cdf=check_cdf(solution),
        endpoints=check_endpoints(solution),
        surplus=check_surplus(solution, price_tol),
        deviations=certs,
        deviation_error=dev_err,
        common_agency_gap=common_agency_gap(primitives) if sign > 0 else None,
    )
