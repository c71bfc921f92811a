import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reltraj.cli import RunConfig, coverage_run, fixed_time_run
from reltraj.model import GridSpec, PhysicalParams, build_grid

REF = PhysicalParams(a=0.5, hbar=1.0, m=1.0, c=1.5)
REF_SPEC = GridSpec("tanh", 53, 5.0, 5.0, 0.19)
STATIONARY_SLICES = [float(k) for k in range(16)]
FIVE_SLICES = [0.0, 2.0, 5.0, 10.0, 15.0]
BETAS = (0.2, 0.4, 0.8)
INTEGER_TIMES = [float(k) for k in range(11)]


@pytest.fixture(scope="session")
def ref_params():
    return REF


@pytest.fixture(scope="session")
def ref_grid():
    return build_grid(REF_SPEC, REF.a)


@pytest.fixture(scope="session")
def ref_record():
    """Reference run covering t in 0..15 and t' in 0..15 for every boost."""
    frames = [(b * REF.c, STATIONARY_SLICES) for b in BETAS]
    return coverage_run(RunConfig(), REF, REF_SPEC, STATIONARY_SLICES, frames)


@pytest.fixture(scope="session")
def ref_fixed():
    """Reference run with integer ensemble times 0..10 as stored steps."""
    return fixed_time_run(RunConfig(), REF, REF_SPEC, INTEGER_TIMES)


@pytest.fixture(scope="session")
def run_cache():
    cache = {}

    def get(n_points=53, c=1.5, a=0.5, hbar=1.0, times=tuple(INTEGER_TIMES), kind="tanh"):
        key = (n_points, c, a, hbar, tuple(times), kind)
        if key not in cache:
            params = PhysicalParams(a=a, hbar=hbar, m=1.0, c=c)
            spec = GridSpec(kind, n_points, 5.0, 5.0, 0.19)
            cache[key] = fixed_time_run(RunConfig(), params, spec, list(times))
        return cache[key]

    return get


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_log(request):
    """Record one verdict line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
