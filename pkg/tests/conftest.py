"""Shared fixtures and the per-criterion acceptance summary."""

import re
from collections import defaultdict

import numpy as np
import pytest

from jumpctl.model import ControlPolicy, ModelParams

CRITERIA = {
    1: "conservation suite",
    2: "uncontrolled oracle triangle",
    3: "identity-control equivalence",
    4: "Monte Carlo consistency",
    5: "susceptibility curve shapes",
    6: "activity / fluctuation ordering over delta_t",
    7: "Poissonization under repeated reset",
    8: "hybrid-controller convergence",
    9: "Legendre duality and histogram",
    10: "determinism of stochastic commands",
}
_outcomes = defaultdict(list)
_CRIT = re.compile(r"test_criterion_(\d+)")


@pytest.fixture
def params():
    return ModelParams(1.0, 0.1, 4.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def policies(delta_t=3.0):
    """One policy of each kind at the given delta_t."""
    return {
        "none": ControlPolicy.none(),
        "rotate_away": ControlPolicy.rotate_away(delta_t),
        "pi_half": ControlPolicy.pi_half(delta_t),
        "repeat_reset": ControlPolicy.repeat_reset(delta_t),
    }


def pytest_runtest_logreport(report):
    m = _CRIT.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        details = [v for k, v in report.user_properties if k == "detail"]
        _outcomes[int(m.group(1))].append((report.nodeid.split("::")[-1], report.outcome, details))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_outcomes):
        runs = _outcomes[n]
        ok = all(outcome == "passed" for _, outcome, _ in runs)
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {CRITERIA.get(n, '')}")
        for name, outcome, details in runs:
            for d in details:
                tr.write_line(f"    [{outcome}] {name}: {d}")
