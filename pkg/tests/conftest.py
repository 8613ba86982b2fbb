from __future__ import annotations

import numpy as np
import pytest

from seqquery.models import MarkovSequenceModel, random_markov_matrix
from seqquery.rng import substream


def random_chain(V: int, seed: int, concentration: float = 1.0, self_bias: float = 0.0) -> MarkovSequenceModel:
    P = random_markov_matrix(V, substream(seed, 0), concentration, self_bias)
    return MarkovSequenceModel(P, order=1)


@pytest.fixture
def chain3():
    return random_chain(3, seed=101)


@pytest.fixture
def chain4():
    return random_chain(4, seed=202)


@pytest.fixture
def acceptance_report(request):
    """One pass/fail line per acceptance criterion, echoed in the terminal
    summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(name: str, ok: bool, detail: str = "") -> None:
        line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'}: {name}"
        if detail:
            line += f" ({detail})"
        lines.append(line)
        print(line, flush=True)
        assert ok, line

    return report


ACCEPTANCE_KEY = pytest.StashKey()


def pytest_terminal_summary(terminalreporter):
    lines = terminalreporter.config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
