import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from turnstile_sr.circuit_model import CircuitParams, derive_params, thresholds

settings.register_profile(
    "turnstile", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("turnstile")


@pytest.fixture(scope="session")
def paper_circuit():
    return CircuitParams(C=1.0e-18, Cg=0.5e-18, Rt=100e3, T=30e-3)


@pytest.fixture(scope="session")
def paper_thresholds(paper_circuit):
    return thresholds(derive_params(paper_circuit), 50e-3, paper_circuit)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> list of (ok, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        ok = all(p[0] for p in parts)
        detail = "; ".join(p[1] for p in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
