import numpy as np
import pytest
from scipy.special import betaincinv

from banditnet.core import Policy
from banditnet.data import simulate_prices


class ForcedBeta:
    """Stand-in generator: every ``beta`` call in step t returns the quantile u_t of Beta(a, b).

    ``calls_per_step`` lets two samplers that make a different number of
    ``beta`` calls per round share the same uniform per round.
    """

    def __init__(self, uniforms: np.ndarray, calls_per_step: int = 1):
        self.uniforms = np.asarray(uniforms, dtype=float)
        self.calls_per_step = calls_per_step
        self.calls = 0

    def beta(self, a, b):
        u = self.uniforms[self.calls // self.calls_per_step]
        self.calls += 1
        return betaincinv(np.asarray(a, dtype=float), np.asarray(b, dtype=float), u)


class PinnedBeta:
    """Generator whose draws single out one arm: 1 at ``arm``, 0 elsewhere."""

    def __init__(self, arm: int = 0):
        self.arm = arm

    def beta(self, a, b):
        out = np.zeros(np.shape(a))
        out[self.arm] = 1.0
        return out


class FixedScores(Policy):
    """Policy with scripted scores; records its updates."""

    def __init__(self, scores):
        super().__init__(len(scores))
        self._scores = np.asarray(scores, dtype=float)
        self.updates = []

    def scores(self):
        return self._scores.copy()

    def _update(self, arm, x):
        self.updates.append((arm, x))


@pytest.fixture
def toy_panel():
    return simulate_prices(6, 160, seed=3)


@pytest.fixture
def toy_csv(tmp_path, toy_panel):
    from banditnet.data import write_panel
    path = tmp_path / "prices.csv"
    write_panel(toy_panel, path)
    return path


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config._acceptance_lines

    def record(number, ok, detail: str):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        lines.append(f"{status}  criterion {number}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
