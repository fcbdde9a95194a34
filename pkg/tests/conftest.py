import numpy as np
import pytest

from serial_monopoly.equilibrium import solve_equilibrium
from serial_monopoly.model import CustomUtility, MarketPrimitives, QuadraticUtility

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def example(a, k=1.0):
    return MarketPrimitives(QuadraticUtility.example(a), k)


def log_utility(c=-0.2):
    """4 ln(1+x) + 4 ln(1+y) + c x y on [0, 3.4]^2."""
    return MarketPrimitives(CustomUtility(
        u=lambda x, y: 4 * np.log1p(x) + 4 * np.log1p(y) + c * x * y,
        u1=lambda x, y: 4 / (1 + x) + c * y,
        u2=lambda x, y: 4 / (1 + y) + c * x,
        u11=lambda x, y: -4 / (1 + x) ** 2 + 0 * y,
        u12=lambda x, y: c + 0 * x * y,
        u22=lambda x, y: -4 / (1 + y) ** 2 + 0 * x,
        name="log",
    ), 1.0, 3.4, 3.4)


_CACHE = {}


def solved(a):
    if a not in _CACHE:
        _CACHE[a] = solve_equilibrium(example(a))
    return _CACHE[a]


@pytest.fixture(scope="session")
def sol_sub():
    return solved(-1.0)


@pytest.fixture(scope="session")
def sol_strong():
    return solved(-3.0)


@pytest.fixture(scope="session")
def sol_super():
    return solved(1.0)


@pytest.fixture(scope="session", params=[-1.0, -3.0, 1.0], ids=["a=-1", "a=-3", "a=+1"])
def sol_any(request):
    return solved(request.param)


def _rollup(lines):
    """One PASS/FAIL line per criterion from the detailed lines."""
    groups = {}
    for line in lines:
        status, rest = line.split(None, 1)
        tag = rest[1:rest.index("]")]
        groups.setdefault(tag, []).append(status == "PASS")
    out = []
    for tag, results in groups.items():
        name = "extended menu" if tag == "ext" else f"criterion {tag}"
        status = "PASS" if all(results) else "FAIL"
        out.append(f"{status}  {name} ({sum(results)}/{len(results)} checks)")
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _rollup(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
        terminalreporter.write_line("")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
