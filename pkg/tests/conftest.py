from fractions import Fraction

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from moyalks.geometry import Observable, PhaseSpace

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

MONOMIALS = [(i, j) for i in range(4) for j in range(4) if i + j <= 3]


@st.composite
def cubic_polys(draw, max_terms=4):
    """Random polynomials of total degree <= 3 with small rational coefficients."""
    keys = draw(st.lists(st.sampled_from(MONOMIALS), min_size=1, max_size=max_terms, unique=True))
    coef = st.fractions(min_value=-3, max_value=3, max_denominator=4)
    return Observable.poly({k: draw(coef) for k in keys})


@pytest.fixture
def torus64():
    return PhaseSpace.torus(N=64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
