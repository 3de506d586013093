import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sobodec.corpus import CorpusSpec, generate
from sobodec.decompose import decompose
from sobodec.presets import preset

settings.register_profile("default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


TIMINGS: dict[str, float] = {}


@pytest.fixture(scope="session")
def composite():
    """The composite preset: its sequence, config and decomposition."""
    t0 = time.perf_counter()
    cfg = preset("composite")
    seq = generate(CorpusSpec.from_dict(cfg["corpus"]))
    dec = decompose(seq, cfg["decompose"])
    TIMINGS["composite"] = time.perf_counter() - t0
    return cfg, seq, dec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
