import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from scfcran.maxmin_power import LinkContext
from scfcran.scenario import SystemConfig, draw_scenario
from scfcran.scf import build_filter_bank

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


DESK = SystemConfig(num_rrh=2, antennas_per_rrh=4, num_users=3, fronthaul_bps=0.2e9)


@pytest.fixture
def desk_config():
    return DESK


def random_instance(rng: np.random.Generator, *, max_rrh=2, max_ant=4, max_users=3,
                    num_users=None, kind=None, max_bits=4, quantized=True):
    """Small random scenario with a filter bank and a random integer bit plan."""
    N = int(rng.integers(1, max_rrh + 1))
    M = int(rng.integers(1, max_ant + 1))
    K = int(num_users or rng.integers(1, max_users + 1))
    if kind is None:
        kind = str(rng.choice(["evd", "matched", "identity"]))
    cfg = SystemConfig(num_rrh=N, antennas_per_rrh=M, num_users=K)
    scenario = draw_scenario(cfg, int(rng.integers(0, 2**31)))
    bank = build_filter_bank(scenario, kind)
    if quantized:
        bits = rng.integers(0, max_bits + 1, bank.total_dims).astype(float)
        if not np.any(bits):
            bits[0] = 1.0
    else:
        bits = None
    ctx = LinkContext.from_bank(bank, scenario.noise_power_w, bits)
    return scenario, bank, bits, ctx
