"""Spatial-compression-and-forward processing at the radio heads.

Each RRH applies a linear spatial filter ``V_n`` to its antenna outputs and
quantizes every filter output dimension with a uniform I/Q scalar quantizer.
This module builds the filters, models the resulting quantization noise and
fronthaul rate, and provides an empirical quantizer to check the noise model.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from .numerics import ContractViolation, NumericalFailure, hermitian_evd
from .scenario import Scenario

FILTER_KINDS = ("evd", "matched", "zero_forcing", "identity")


@dataclass
class FilterBank:
    kind: str
    filters: list[np.ndarray]  # V_n, (L_n, M_n)
    effective_channels: list[np.ndarray]  # V_n H_n, (L_n, K)

    @property
    def output_dims(self) -> tuple[int, ...]:
        return tuple(V.shape[0] for V in self.filters)

    @property
    def total_dims(self) -> int:
        return sum(self.output_dims)

    @property
    def num_users(self) -> int:
        return self.effective_channels[0].shape[1]

    def stacked_channels(self) -> np.ndarray:
        return np.vstack(self.effective_channels)

    def row_norms2(self) -> np.ndarray:
        return np.concatenate([np.sum(np.abs(V) ** 2, axis=1) for V in self.filters])

    def noise_gram(self) -> np.ndarray:
        """Block-diagonal ``V V^H``; filtered receiver noise is ``sigma^2 V V^H``."""
        return scipy.linalg.block_diag(*[V @ V.conj().T for V in self.filters])

    def rrh_of_dim(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.filters)), self.output_dims)

    def split(self, flat) -> list[np.ndarray]:
        flat = np.asarray(flat)
        return np.split(flat, np.cumsum(self.output_dims)[:-1])


@dataclass
class QuantizationPlan:
    """Bits per I (or Q) branch for every filter output dimension."""

    bits: list[np.ndarray]
    mode: str = "integer"  # or "relaxed"

    def __post_init__(self):
        self.bits = [np.asarray(b, dtype=float) for b in self.bits]
        if any(np.any(b < 0) for b in self.bits):
            raise ContractViolation("bit counts must be nonnegative")
        if self.mode == "integer" and any(np.any(b != np.round(b)) for b in self.bits):
            raise ContractViolation("integer plan has fractional entries")

    def flat(self) -> np.ndarray:
        return np.concatenate(self.bits)

    def bits_per_rrh(self) -> np.ndarray:
        return np.array([b.sum() for b in self.bits])

    def quantized_dims(self) -> list[int]:
        return [int(np.count_nonzero(b > 0)) for b in self.bits]

    def is_feasible(self, bit_budgets, slack: float = 1e-9) -> bool:
        return bool(np.all(self.bits_per_rrh() <= np.asarray(bit_budgets) + slack))

    @classmethod
    def equal(cls, output_dims, bit_budgets) -> "QuantizationPlan":
        """``floor(T_n / (2 B L_n))`` bits on every dimension of RRH ``n``."""
        return cls([np.full(L, np.floor(b / L + 1e-9)) for L, b in zip(output_dims, bit_budgets)])


def sample_covariance(H: np.ndarray, pilot_power: float, sigma2: float) -> np.ndarray:
    if pilot_power <= 0 or sigma2 <= 0:
        raise ContractViolation("pilot power and noise power must be positive")
    H = np.asarray(H, dtype=complex)
    S = pilot_power * (H @ H.conj().T) + sigma2 * np.eye(H.shape[0])
    return 0.5 * (S + S.conj().T)


def design_filter(H: np.ndarray, S: np.ndarray | None, kind: str) -> tuple[np.ndarray, int]:
    """Spatial filter ``V`` (rows are the per-dimension filters) and its output size."""
    H = np.asarray(H, dtype=complex)
    M, K = H.shape
    if kind == "evd":
        if S is None:
            raise ContractViolation("evd filter needs the received covariance")
        L = min(M, K)
        U = hermitian_evd(S).eigenvectors[:, :L]
        return U.conj().T, L
    if kind == "matched":
        return H.conj().T, K
    if kind == "zero_forcing":
        gram = H.conj().T @ H
        if np.linalg.matrix_rank(gram) < K:
            raise NumericalFailure("zero-forcing filter needs a full column rank channel")
        return np.linalg.solve(gram, H.conj().T), K
    if kind == "identity":
        return np.eye(M, dtype=complex), M
    raise ValueError(f"unknown filter kind {kind!r}; expected one of {FILTER_KINDS}")


def build_filter_bank(scenario: Scenario, kind: str, pilot_power: float | None = None) -> FilterBank:
    """Design every RRH's filter from its local covariance only."""
    if pilot_power is None:
        pilot_power = float(scenario.config.power_caps_w().min())
    filters, eff = [], []
    for H in scenario.channels:
        S = sample_covariance(H, pilot_power, scenario.noise_power_w) if kind == "evd" else None
        V, _ = design_filter(H, S, kind)
        filters.append(V)
        eff.append(V @ H)
    return FilterBank(kind=kind, filters=filters, effective_channels=eff)


def dimension_power(p, Ht, row_norms2, sigma2) -> np.ndarray:
    """Received signal-plus-noise power on each filter output dimension."""
    return np.abs(Ht) ** 2 @ np.asarray(p, dtype=float) + sigma2 * row_norms2


def quant_noise(p, V, H, sigma2, D, mode: str = "exact") -> np.ndarray:
    """Quantization noise variance on each output dimension of one RRH.

    ``mode="exact"`` returns ``inf`` where ``D == 0`` (dimension not forwarded);
    ``mode="continuous"`` evaluates the same expression at ``D = 0``.
    """
    V = np.asarray(V)
    D = np.asarray(D, dtype=float)
    power = dimension_power(p, V @ H, np.sum(np.abs(V) ** 2, axis=1), sigma2)
    q = 3.0 * power * 4.0 ** (-D)
    if mode == "exact":
        q = np.where(D > 0, q, np.inf)
    elif mode != "continuous":
        raise ValueError(f"unknown mode {mode!r}")
    return q


def fronthaul_rate(D, bandwidth_hz: float) -> float:
    return 2.0 * bandwidth_hz * float(np.sum(D))


def _gaussian_uniform_mse(loading: float, bits: int) -> float:
    """Per-branch MSE of a ``2**bits``-level midrise quantizer on N(0, 1)."""
    n = 2 ** bits
    step = 2.0 * loading / n
    edges = -loading + step * np.arange(n + 1)
    recon = -loading + step * (np.arange(n) + 0.5)
    a, b = edges[:-1], edges[1:]
    cdf = norm.cdf(edges)
    cdf[0], cdf[-1] = 0.0, 1.0
    pdf = norm.pdf(edges)
    pdf[0] = pdf[-1] = 0.0
    xpdf = edges * pdf
    mass = cdf[1:] - cdf[:-1]
    total = (1 + recon ** 2) * mass - 2 * recon * (pdf[:-1] - pdf[1:]) - (xpdf[1:] - xpdf[:-1])
    return float(total.sum())


@functools.lru_cache(maxsize=None)
def optimal_loading(bits: int) -> float:
    """Clipping level (in branch standard deviations) minimizing Gaussian MSE."""
    res = minimize_scalar(_gaussian_uniform_mse, bounds=(0.5, 8.0), args=(bits,),
                          method="bounded", options={"xatol": 1e-6})
    return float(res.x)


def uniform_quantize_iq(samples, bits: int, signal_power: float,
                        loading: float | None = None) -> tuple[np.ndarray, float]:
    """Quantize I and Q separately with ``2**bits`` uniform cells each.

    Cells span ``[-c s, c s]`` with ``s = sqrt(signal_power / 2)``; values
    outside are clipped to the outermost cell and every sample is rebuilt at
    its cell midpoint. ``c`` defaults to the Gaussian MSE-optimal loading for
    the given bit depth.

    Returns
    -------
    quantized : ndarray of complex
    mse : float
        Mean of ``|quantized - samples|**2``.
    """
    if bits < 1:
        raise ContractViolation("need at least one bit per branch")
    if signal_power <= 0:
        raise ContractViolation("signal power must be positive")
    c = optimal_loading(int(bits)) if loading is None else float(loading)
    x = np.asarray(samples, dtype=complex)
    half = c * np.sqrt(signal_power / 2.0)
    n = 2 ** int(bits)
    step = 2.0 * half / n

    def branch(v):
        idx = np.clip(np.floor((v + half) / step), 0, n - 1)
        return -half + (idx + 0.5) * step

    xq = branch(x.real) + 1j * branch(x.imag)
    return xq, float(np.mean(np.abs(xq - x) ** 2))
