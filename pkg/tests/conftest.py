import hypothesis
import numpy as np
import pytest

from hpalign.hawkes import EventSequence, HawkesParams

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        if report.when == "call" or name not in _acceptance:
            _acceptance[name] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        outcome, duration = _acceptance[name]
        tag = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{tag:5s} {name}  ({duration:.1f}s)")


def random_params(rng, C, mu_scale=1.0, a_scale=None, beta=1.0):
    a_scale = 0.5 / C if a_scale is None else a_scale
    return HawkesParams(rng.uniform(0.1, 1.0, C) * mu_scale, rng.uniform(0, a_scale, (C, C)), beta)


def random_sequence(rng, C, horizon=10.0, n=15):
    times = np.sort(rng.uniform(0, horizon, n))
    return EventSequence(times, rng.integers(0, C, n), horizon, C)


def random_plan(rng, Cs, Ct):
    from hpalign.transport import sinkhorn

    u_s = rng.dirichlet(np.ones(Cs)) * 0.9 + 0.1 / Cs
    u_t = rng.dirichlet(np.ones(Ct)) * 0.9 + 0.1 / Ct
    cost = rng.uniform(0, 1, (Cs, Ct))
    return sinkhorn(cost, u_s, u_t, 0.3), u_s, u_t


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
