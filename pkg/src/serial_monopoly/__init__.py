"""Two-period serial monopoly pricing when first-period consumption is private."""

from .benchmark import (
    FirstBestAllocation,
    ObservableOutcome,
    conditional_optimal_y,
    solve_first_best,
    solve_observable,
)
from .equilibrium import EquilibriumSolution, extend_menu, solve_equilibrium
from .model import CustomUtility, MarketPrimitives, QuadraticUtility, evaluate, validate
from .sim import replay, sample
from .verify import verify_solution
from .welfare import outside_option_value, payoff_report

__version__ = "0.1.0"
