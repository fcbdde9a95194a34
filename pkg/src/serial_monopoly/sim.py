"""Monte Carlo market simulation under the equilibrium menus.

Uniform draws come from numpy's Philox4x64 counter-based generator. Draws
are produced in blocks of ``CHUNK``; block ``c`` uses key ``seed`` and
starting counter ``(0, 0, c, 0)``, so every block is an independent
substream and blocks can be generated in any order or in parallel with
identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .benchmark import conditional_optimal_y
from .equilibrium import EquilibriumSolution
from .errors import EmpiricalICViolation
from .model import MarketPrimitives

CHUNK = 1 << 16
# neighbouring menu items checked on each side of a draw, plus a coarse sweep of the menu
WINDOW = 4
SWEEP = 33


def uniforms(seed: int, n: int, chunk_size: int = CHUNK) -> np.ndarray:
    """``n`` uniforms on [0, 1) from the chunked Philox streams of ``seed``."""
    seed = int(seed)
    if not 0 <= seed < 1 << 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    out = np.empty(n)
    for c, start in enumerate(range(0, n, chunk_size)):
        out[start:start + chunk_size] = uniform_chunk(seed, c, min(chunk_size, n - start))
    return out


def uniform_chunk(seed: int, chunk: int, size: int) -> np.ndarray:
    bitgen = np.random.Philox(key=int(seed), counter=[0, 0, int(chunk), 0])
    return np.random.Generator(bitgen).random(size)


@dataclass(frozen=True)
class SampleBatch:
    """Simulated consumers; ``delta`` is each draw's distance from the top type."""

    seed: int
    n: int
    delta: np.ndarray
    x: np.ndarray
    y: np.ndarray
    q: np.ndarray
    p_paid: np.ndarray
    consumer_payoff: np.ndarray
    seller1_payoff: np.ndarray
    seller2_payoff: np.ndarray
    welfare: np.ndarray
    ic_violations: int = 0
    max_ic_gain: float = 0.0

    def table(self) -> dict:
        return {"index": np.arange(self.n), "x": self.x, "y": self.y, "p_paid": self.p_paid,
                "q_paid": self.q, "consumer_payoff": self.consumer_payoff}


def _menu(solution):
    """Menu items (y, q) on the solution grid, sorted by first-period consumption."""
    order = np.argsort(solution.x, kind="stable")
    return (np.asarray(solution.x)[order], np.asarray(solution.y_hat)[order],
            np.asarray(solution.q)[order])


def _play(primitives: MarketPrimitives, solution: EquilibriumSolution, x, price_tol):
    """Second-period choices for consumers with first-period consumption ``x``.

    The designated item is compared with nearby grid items, a coarse sweep
    of the menu, the null item and, if offered, the best marginal-cost
    extension item. Ties within ``price_tol`` go to the designated item.
    Returns ``(y, q, violations, max_gain)``.
    """
    util, k = primitives.utility, primitives.k
    y = np.asarray(solution.curve.exact(x), dtype=float)
    q = util.u(x, y) - k * x - solution.sigma
    own = util.u(x, y) - q
    gx, gy, gq = _menu(solution)
    pos = np.searchsorted(gx, x)
    cols = [np.clip(pos[:, None] + np.arange(-WINDOW, WINDOW + 1)[None, :], 0, gx.size - 1),
            np.broadcast_to(np.round(np.linspace(0, gx.size - 1, SWEEP)).astype(int),
                            (x.size, SWEEP))]
    idx = np.concatenate(cols, axis=1)
    alt = util.u(x[:, None], gy[idx]) - gq[idx]
    best = np.max(alt, axis=1)
    best = np.maximum(best, util.u(x, 0.0 * x))
    if solution.extension_y is not None:
        y_top = solution.first_best.y_star
        q_top = float(solution.menu_price(solution.support.x_top))
        ye = np.clip(conditional_optimal_y(primitives, x), y_top, solution.extension_y)
        best = np.maximum(best, util.u(x, ye) - q_top - k * (ye - y_top))
    gain = best - own
    bad = gain > price_tol
    return y, q, int(np.count_nonzero(bad)), float(np.max(gain)) if x.size else 0.0


def _outcomes(primitives, solution, x, price_tol):
    util, k = primitives.utility, primitives.k
    y, q, bad, gain = _play(primitives, solution, x, price_tol)
    A = solution.entry_fee
    p_paid = A + k * x
    consumer = util.u(x, y) - p_paid - q
    seller1 = p_paid - k * x
    seller2 = q - k * y
    welfare = util.u(x, y) - k * x - k * y
    return y, q, p_paid, consumer, seller1, seller2, welfare, bad, gain


def sample(solution: EquilibriumSolution, n: int, seed: int, chunk_size: int = CHUNK) -> SampleBatch:
    """Draw ``n`` consumers from the equilibrium distribution and play out both periods."""
    if n < 0:
        raise ValueError("n must be non-negative")
    u = uniforms(seed, n, chunk_size)
    delta = np.asarray(solution.cdf.quantile_delta(u), dtype=float) if n else np.empty(0)
    x = solution.support.x_of(delta)
    y, q, p, c, s1, s2, w, bad, gain = _outcomes(solution.primitives, solution, x,
                                                 solution.price_tol)
    return SampleBatch(int(seed), int(n), delta, x, y, q, p, c, s1, s2, w, bad, gain)


@dataclass(frozen=True)
class EmpiricalReport:
    n: int
    defined: bool
    V_hat: float
    pi1_hat: float
    pi2_hat: float
    W_hat: float
    se: dict = field(default_factory=dict)
    ic_violations: int = 0
    max_ic_gain: float = 0.0
    accounting_residual: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _mean_se(v):
    if v.size < 2:
        return float(np.mean(v)), float("nan")
    return float(np.mean(v)), float(np.std(v, ddof=1) / np.sqrt(v.size))


def replay(primitives: MarketPrimitives, solution: EquilibriumSolution, batch: SampleBatch,
           raise_on_violation=True) -> EmpiricalReport:
    """Replay the batch's consumers through the menus and aggregate payoffs."""
    nan = float("nan")
    if batch.n == 0:
        return EmpiricalReport(0, False, nan, nan, nan, nan,
                               {"V": nan, "pi1": nan, "pi2": nan, "W": nan})
    y, q, p, c, s1, s2, w, bad, gain = _outcomes(primitives, solution, batch.x,
                                                 solution.price_tol)
    if bad and raise_on_violation:
        raise EmpiricalICViolation(
            f"{bad} of {batch.n} consumers prefer another item (largest gain {gain:.3e})")
    stats = {name: _mean_se(v) for name, v in (("V", c), ("pi1", s1), ("pi2", s2), ("W", w))}
    residual = float(np.max(np.abs(c + s1 + s2 - w)))
    return EmpiricalReport(
        n=batch.n, defined=True,
        V_hat=stats["V"][0], pi1_hat=stats["pi1"][0], pi2_hat=stats["pi2"][0],
        W_hat=stats["W"][0], se={key: val[1] for key, val in stats.items()},
        ic_violations=bad, max_ic_gain=gain, accounting_residual=residual,
    )
