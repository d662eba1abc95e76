import os
import sys
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import settings

from censored_erm.data import CensoredDataset

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

THREE_POINT = CensoredDataset(np.array([[0.1], [0.5], [0.9]]), [1.0, 2.0, 3.0], [1, 0, 1])


@pytest.fixture
def three_point():
    return THREE_POINT


def random_dataset(rng, n, d=1, tie_prob=0.3, cens_prob=0.4, int_times=True):
    """Small dataset with deliberate time ties and mixed censoring."""
    if int_times:
        time = rng.integers(1, max(2, int(n * (1 - tie_prob)) + 1), size=n).astype(float)
    else:
        time = rng.exponential(size=n)
    event = rng.random(n) >= cens_prob
    X = rng.random((n, d))
    return CensoredDataset(X, time, event)


def brute_force_km(time, event, weights=None):
    """Product-limit estimate of the censoring survival in exact rational arithmetic.

    Returns a function ``S(t, left=False)``.  Follows the textbook
    definition directly: at each distinct censored time s multiply by
    ``1 - (censored weight at s) / (weight with time >= s)``.
    """
    time = [Fraction(float(t)) for t in time]
    event = [bool(e) for e in event]
    w = [Fraction(1)] * len(time) if weights is None else [Fraction(float(v)) for v in weights]
    factors = []
    for s in sorted(set(t for t, e in zip(time, event) if not e)):
        d = sum(wi for t, e, wi in zip(time, event, w) if t == s and not e)
        r = sum(wi for t, wi in zip(time, w) if t >= s)
        if d > 0 and r > 0:
            factors.append((s, 1 - d / r))

    def S(t, left=False):
        t = Fraction(float(t))
        out = Fraction(1)
        for s, f in factors:
            if s < t or (s == t and not left):
                out *= f
        return out

    return S


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
