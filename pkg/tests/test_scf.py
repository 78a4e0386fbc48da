import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scfcran.numerics import ContractViolation, NumericalFailure
from scfcran.scenario import SystemConfig, draw_scenario
from scfcran.scf import (QuantizationPlan, _gaussian_uniform_mse, build_filter_bank,
                         design_filter, fronthaul_rate, optimal_loading, quant_noise,
                         sample_covariance, uniform_quantize_iq)


def rand_channel(rng, M, K):
    return (rng.standard_normal((M, K)) + 1j * rng.standard_normal((M, K))) / np.sqrt(2)


def test_sample_covariance_formula():
    rng = np.random.default_rng(0)
    H = rand_channel(rng, 4, 2)
    S = sample_covariance(H, 0.5, 0.1)
    np.testing.assert_allclose(S, 0.5 * H @ H.conj().T + 0.1 * np.eye(4))
    assert np.all(np.linalg.eigvalsh(S) > 0)
    with pytest.raises(ContractViolation):
        sample_covariance(H, 0.0, 0.1)


def test_evd_filter_keeps_channel_subspace():
    rng = np.random.default_rng(1)
    H = rand_channel(rng, 6, 3)
    V, L = design_filter(H, sample_covariance(H, 1.0, 0.01), "evd")
    assert L == 3 and V.shape == (3, 6)
    np.testing.assert_allclose(V @ V.conj().T, np.eye(3), atol=1e-12)
    # the top-K eigenvectors span the column space of H, so no channel energy is lost
    assert np.linalg.norm(V @ H) == pytest.approx(np.linalg.norm(H), rel=1e-10)


def test_evd_filter_with_more_users_than_antennas():
    rng = np.random.default_rng(2)
    H = rand_channel(rng, 2, 5)
    V, L = design_filter(H, sample_covariance(H, 1.0, 0.01), "evd")
    assert L == 2
    np.testing.assert_allclose(np.abs(np.linalg.det(V)), 1.0, atol=1e-12)


def test_benchmark_filters():
    rng = np.random.default_rng(3)
    H = rand_channel(rng, 5, 3)
    V, L = design_filter(H, None, "matched")
    assert L == 3
    np.testing.assert_array_equal(V, H.conj().T)
    V, L = design_filter(H, None, "zero_forcing")
    np.testing.assert_allclose(V @ H, np.eye(3), atol=1e-12)
    V, L = design_filter(H, None, "identity")
    assert L == 5
    np.testing.assert_array_equal(V, np.eye(5))


def test_filter_errors():
    rng = np.random.default_rng(4)
    with pytest.raises(NumericalFailure):
        design_filter(rand_channel(rng, 2, 3), None, "zero_forcing")
    with pytest.raises(ContractViolation):
        design_filter(rand_channel(rng, 2, 3), None, "evd")
    with pytest.raises(ValueError):
        design_filter(rand_channel(rng, 2, 3), None, "svd")


def test_filter_bank_layout():
    cfg = SystemConfig(num_rrh=2, antennas_per_rrh=(2, 5), num_users=3)
    sc = draw_scenario(cfg, 0)
    bank = build_filter_bank(sc, "evd")
    assert bank.output_dims == (2, 3)
    assert bank.stacked_channels().shape == (5, 3)
    G = bank.noise_gram()
    np.testing.assert_allclose(G[:2, 2:], 0.0)
    np.testing.assert_allclose(np.diag(G).real, bank.row_norms2())
    np.testing.assert_array_equal(bank.rrh_of_dim(), [0, 0, 1, 1, 1])
    assert [len(x) for x in bank.split(np.arange(5))] == [2, 3]


def test_equal_plan_floor():
    # T = 0.5 Gbps, B = 10 MHz -> 25 bits over L = 8 dims -> 3 each
    plan = QuantizationPlan.equal((8, 8), np.array([0.5e9, 0.5e9]) / (2 * 10e6))
    np.testing.assert_array_equal(plan.flat(), 3.0)
    assert plan.is_feasible([25.0, 25.0])
    assert not plan.is_feasible([23.0, 25.0])
    assert plan.quantized_dims() == [8, 8]


def test_plan_validation():
    with pytest.raises(ContractViolation):
        QuantizationPlan([np.array([1.0, -1.0])])
    with pytest.raises(ContractViolation):
        QuantizationPlan([np.array([1.5])])
    QuantizationPlan([np.array([1.5])], mode="relaxed")


def test_quant_noise_hand_computed():
    V = np.array([[1.0, 0.0], [0.0, 2.0]])
    H = np.array([[1.0], [1.0]])
    # dim 0: 3 (2*1 + 1*1) / 4 ; dim 1: filter norm 4, gain 4 -> 3 (2*4 + 1*4) * 4**-2
    q = quant_noise([2.0], V, H, 1.0, [1, 2])
    np.testing.assert_allclose(q, [2.25, 36.0 / 16.0])
    q0 = quant_noise([2.0], V, H, 1.0, [0, 2], mode="exact")
    assert np.isinf(q0[0])
    qc = quant_noise([2.0], V, H, 1.0, [0, 2], mode="continuous")
    assert qc[0] == pytest.approx(9.0)


def test_fronthaul_rate():
    assert fronthaul_rate([3, 3, 2], 10e6) == pytest.approx(160e6)


def test_gaussian_mse_against_monte_carlo():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(1_000_000)
    for bits, c in [(1, 1.0), (2, 3.0), (3, 2.0)]:
        n = 2 ** bits
        step = 2 * c / n
        idx = np.clip(np.floor((x + c) / step), 0, n - 1)
        mse = np.mean((-c + (idx + 0.5) * step - x) ** 2)
        assert _gaussian_uniform_mse(c, bits) == pytest.approx(mse, rel=0.01)


def test_optimal_loading_grows_with_bits():
    loads = [optimal_loading(b) for b in range(1, 9)]
    assert np.all(np.diff(loads) > 0)
    assert loads[0] == pytest.approx(1.596, abs=0.01)  # 1-bit Lloyd-Max point of N(0,1)


def test_quantizer_midpoints_and_clipping():
    # 2 bits, loading 2, power 2 -> branch std 1, cells of width 1 on [-2, 2]
    x = np.array([0.5 + 1.5j, -0.5 - 1.5j, 10.0 - 10.0j])
    xq, _ = uniform_quantize_iq(x, 2, 2.0, loading=2.0)
    np.testing.assert_allclose(xq, [0.5 + 1.5j, -0.5 - 1.5j, 1.5 - 1.5j])
    with pytest.raises(ContractViolation):
        uniform_quantize_iq(x, 0, 1.0)


@given(st.integers(2, 6), st.floats(0.01, 100.0))
def test_quantizer_mse_scales_with_power(bits, power):
    rng = np.random.default_rng(bits)
    z = (rng.standard_normal(20_000) + 1j * rng.standard_normal(20_000)) / np.sqrt(2)
    _, mse1 = uniform_quantize_iq(z, bits, 1.0)
    _, mse = uniform_quantize_iq(np.sqrt(power) * z, bits, power)
    assert mse == pytest.approx(power * mse1, rel=1e-9)
