import functools

import numpy as np
import pytest

from nonloc1d.kernels import make_fractional_kernel, make_mixture_kernel
from nonloc1d.operator import Grid1D
from nonloc1d.solvers import make_nonlinearity, solve_ground_state, solve_layer


@functools.lru_cache(maxsize=None)
def half_laplacian():
    return make_fractional_kernel(0.5, normalized=True)


@functools.lru_cache(maxsize=None)
def layer_solution(s=0.5, X=40.0, h=0.01, f="sin", normalized=True):
    k = make_fractional_kernel(s, normalized=normalized)
    return solve_layer(k, make_nonlinearity(f), Grid1D(X, h))


@functools.lru_cache(maxsize=None)
def ground_solution(X=40.0, h=0.01):
    return solve_ground_state(half_laplacian(), make_nonlinearity("bo"), Grid1D(X, h))


@functools.lru_cache(maxsize=None)
def mixture_kernel():
    return make_mixture_kernel([(0.5, 0.5), (0.75, 0.5)])


@functools.lru_cache(maxsize=None)
def mixture_layer(X=40.0, h=0.02):
    return solve_layer(mixture_kernel(), make_nonlinearity("allen-cahn"), Grid1D(X, h))


@pytest.fixture
def rng():
    return np.random.default_rng(20241015)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion (printed in the terminal summary)."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number: int, ok: bool, detail: str):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {number:2d}: {status}  {detail}"
        lines[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
