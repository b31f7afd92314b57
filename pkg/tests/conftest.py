import numpy as np
import pytest

from vinselect.scenario import straight_line_instance
from vinselect.vision_model import FeatureDelta


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    G = rng.standard_normal((n, rank))
    return G @ G.T


def random_pd(rng, n, floor=0.1):
    return random_psd(rng, n) + floor * np.eye(n)


def as_deltas(mats, probs=None):
    probs = [1.0] * len(mats) if probs is None else probs
    return [FeatureDelta(delta=0.5 * (m + m.T), landmark_id=i, track_prob=p, n_frames=2) for i, (m, p) in enumerate(zip(mats, probs))]


@pytest.fixture(scope="session")
def straight8():
    return straight_line_instance(8, seed=0)


@pytest.fixture(scope="session")
def straight12():
    return straight_line_instance(12, seed=3)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
