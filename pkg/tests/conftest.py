import numpy as np
import pytest

from mpmpg.mdp import CartPole, rollout_batch
from mpmpg.policy import LinearGaussianPolicy


def random_window(seed, omega=3, n=5, horizon=15, spread=0.3, sigma2=0.3, sizes=None):
    """Policies and batches of a short Cart Pole window, oldest first."""
    rng = np.random.default_rng(seed)
    env = CartPole(horizon)
    base = rng.normal(0, 0.5, size=4)
    policies, batches = [], []
    for i in range(omega):
        pol = LinearGaussianPolicy(base + spread * rng.normal(size=4), sigma2, 4, 1)
        m = n if sizes is None else sizes[i]
        policies.append(pol)
        batches.append(rollout_batch(env, pol, m, rng, behavior_id=i + 1))
    return policies, batches


@pytest.fixture
def window():
    return random_window(0)


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE.append((name, "PASS" if report.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{verdict}  {name}  {detail}".rstrip())
