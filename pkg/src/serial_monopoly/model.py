"""Utility models, market primitives and validation of the standing assumptions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AssumptionA3Failed, DomainError, MixedModularity, NoInteriorSolution, NonFiniteInput

SUBMODULAR = "submodular"
SUPERMODULAR = "supermodular"


@dataclass(frozen=True)
class DerivativeBundle:
    u: float
    u1: float
    u2: float
    u11: float
    u12: float
    u22: float


@dataclass(frozen=True)
class QuadraticUtility:
    """``u(x, y) = axx x^2 + ayy y^2 + axy x y + bx x + by y``.

    All evaluators broadcast over numpy arrays.
    """

    axx: float
    ayy: float
    axy: float
    bx: float
    by: float

    family = "quadratic"

    @classmethod
    def example(cls, a: float) -> "QuadraticUtility":
        """The two-parameter family -3x^2 - 3y^2 + a x y + 8x + 8y."""
        return cls(-3.0, -3.0, float(a), 8.0, 8.0)

    def u(self, x, y):
        return self.axx * x * x + self.ayy * y * y + self.axy * x * y + self.bx * x + self.by * y

    def u1(self, x, y):
        return 2.0 * self.axx * x + self.axy * y + self.bx

    def u2(self, x, y):
        return 2.0 * self.ayy * y + self.axy * x + self.by

    def u11(self, x, y):
        return np.broadcast_to(2.0 * self.axx, np.broadcast(x, y).shape) + 0.0

    def u12(self, x, y):
        return np.broadcast_to(float(self.axy), np.broadcast(x, y).shape) + 0.0

    def u22(self, x, y):
        return np.broadcast_to(2.0 * self.ayy, np.broadcast(x, y).shape) + 0.0

    def to_dict(self) -> dict:
        return {"family": "quadratic", "axx": self.axx, "ayy": self.ayy,
                "axy": self.axy, "bx": self.bx, "by": self.by}

    def satiation(self) -> tuple[float, float]:
        """Points where u1(x, 0) and u2(0, y) reach zero."""
        return -self.bx / (2.0 * self.axx), -self.by / (2.0 * self.ayy)


@dataclass(frozen=True)
class CustomUtility:
    """Utility given by user-supplied evaluators.

    Second derivatives must be analytic: the sign of the cross partial
    decides the whole orientation of the equilibrium, so it is never
    approximated by finite differences.
    """

    u: Callable
    u1: Callable
    u2: Callable
    u11: Callable
    u12: Callable
    u22: Callable
    name: str = "custom"

    family = "custom-evaluator"

    def to_dict(self) -> dict:
        return {"family": "custom-evaluator", "name": self.name}

    def satiation(self):
        return None


UtilityModel = QuadraticUtility | CustomUtility


@dataclass(frozen=True)
class MarketPrimitives:
    utility: UtilityModel
    k: float
    x_max: float | None = None
    y_max: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.k) and self.k > 0):
            raise ValueError(f"marginal cost must be positive, got {self.k!r}")
        x_max, y_max = self.x_max, self.y_max
        if x_max is None or y_max is None:
            sat = self.utility.satiation()
            if sat is None:
                raise ValueError("custom utilities need an explicit domain box (x_max, y_max)")
            x_max = 1.5 * sat[0] if x_max is None else x_max
            y_max = 1.5 * sat[1] if y_max is None else y_max
            object.__setattr__(self, "x_max", float(x_max))
            object.__setattr__(self, "y_max", float(y_max))
        if not (self.x_max > 0 and self.y_max > 0):
            raise ValueError("domain box must have positive extent")


def evaluate(model: UtilityModel, x, y) -> DerivativeBundle:
    """Utility and its first and second derivatives at ``(x, y)``."""
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteInput(f"non-finite consumption ({x!r}, {y!r})")
    if np.any(np.asarray(x) < 0) or np.any(np.asarray(y) < 0):
        raise ValueError("consumption must be non-negative")
    return DerivativeBundle(
        u=model.u(x, y), u1=model.u1(x, y), u2=model.u2(x, y),
        u11=model.u11(x, y), u12=model.u12(x, y), u22=model.u22(x, y),
    )


@dataclass(frozen=True)
class Violation:
    assumption: str
    x: float
    y: float
    value: float


@dataclass(frozen=True)
class ValidationReport:
    modularity: str
    violations: list = field(default_factory=list)
    second_period_at_observable: float = float("nan")

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "modularity": self.modularity,
            "ok": self.ok,
            "second_period_at_observable": self.second_period_at_observable,
            "violations": [v.__dict__ for v in self.violations],
        }


def classify(primitives: MarketPrimitives, grid_n: int = 101) -> str:
    """Sign of the cross partial on the domain grid; raises unless it is strict and constant."""
    xs = np.linspace(0.0, primitives.x_max, grid_n)
    ys = np.linspace(0.0, primitives.y_max, grid_n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    cross = np.asarray(primitives.utility.u12(X, Y), dtype=float)
    if np.all(cross < 0):
        return SUBMODULAR
    if np.all(cross > 0):
        return SUPERMODULAR
    i, j = np.unravel_index(int(np.argmin(np.abs(cross))), cross.shape)
    raise MixedModularity(
        f"u12 is not of strict constant sign on the domain box; "
        f"u12({xs[i]:g}, {ys[j]:g}) = {cross[i, j]:g}"
    )


def validate(primitives: MarketPrimitives, grid_n: int = 101) -> ValidationReport:
    """Check concavity, monotonicity and modularity on a ``grid_n`` x ``grid_n`` grid.

    Concavity is checked on the whole box. Monotonicity is checked along the
    two axes up to satiation, which is where outside options are evaluated;
    equilibrium points themselves satisfy u1 = k and u2 >= k by
    construction and are re-checked by :mod:`serial_monopoly.verify`.
    Also evaluates the second seller's activity at the observable benchmark
    and that the benchmark points lie inside the box.
    """
    from .benchmark import conditional_optimal_y, observable_first_period, solve_first_best

    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    modularity = classify(primitives, grid_n)
    util = primitives.utility
    xs = np.linspace(0.0, primitives.x_max, grid_n)
    ys = np.linspace(0.0, primitives.y_max, grid_n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    u11 = np.asarray(util.u11(X, Y), dtype=float)
    det = u11 * np.asarray(util.u22(X, Y)) - np.asarray(util.u12(X, Y)) ** 2
    violations = []
    for name, vals in (("concavity:u11<0", u11), ("concavity:det>0", -det)):
        bad = vals >= 0
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            violations.append(Violation(name, float(xs[i]), float(ys[j]), float(vals[i, j])))

    zeros = np.zeros_like(xs)
    u1_axis = np.asarray(util.u1(xs, zeros), dtype=float)
    u2_axis = np.asarray(util.u2(zeros, ys), dtype=float)
    # satiation points along each axis bound the monotone region
    x_sat = xs[np.argmax(u1_axis <= 0)] if np.any(u1_axis <= 0) else xs[-1]
    y_sat = ys[np.argmax(u2_axis <= 0)] if np.any(u2_axis <= 0) else ys[-1]
    px = np.concatenate([xs[xs < x_sat], zeros[ys < y_sat]])
    py = np.concatenate([zeros[xs < x_sat], ys[ys < y_sat]])
    for name, fn in (("monotonicity:u1>0", util.u1), ("monotonicity:u2>0", util.u2)):
        vals = np.asarray(fn(px, py), dtype=float)
        if vals.size and np.any(vals <= 0):
            i = int(np.argmax(vals <= 0))
            violations.append(Violation(name, float(px[i]), float(py[i]), float(vals[i])))

    x_o = observable_first_period(primitives)
    y_o = conditional_optimal_y(primitives, x_o)
    if y_o <= 0:
        raise AssumptionA3Failed(
            f"y*(x_o) = {y_o:g} at x_o = {x_o:g}: the second seller sells nothing"
        )
    y_skip = conditional_optimal_y(primitives, 0.0)
    points = [("domain:x_o", x_o, 0.0), ("domain:y*(0)", 0.0, y_skip)]
    try:
        fb = solve_first_best(primitives)
        points.insert(1, ("domain:x*", fb.x_star, fb.y_star))
    except NoInteriorSolution:
        violations.append(Violation("first-best:interior", float("nan"), float("nan"), float("nan")))
    for label, x, y in points:
        if not (x < primitives.x_max and y < primitives.y_max):
            violations.append(Violation(label, float(x), float(y), float("nan")))
    return ValidationReport(modularity, violations, float(y_o))


def require_inside(primitives: MarketPrimitives, x: float, y: float, what: str) -> None:
    if not (0 <= x < primitives.x_max and 0 <= y < primitives.y_max):
        raise DomainError(
            f"{what} = ({x:g}, {y:g}) lies outside the domain box "
            f"[0, {primitives.x_max:g}] x [0, {primitives.y_max:g}]"
        )


def cross_sign(primitives: MarketPrimitives, x: float, y: float) -> int:
    """+1 if supermodular at (x, y), -1 if submodular."""
    c = float(primitives.utility.u12(x, y))
    if c == 0:
        raise MixedModularity(f"u12({x:g}, {y:g}) = 0")
    return 1 if c > 0 else -1
