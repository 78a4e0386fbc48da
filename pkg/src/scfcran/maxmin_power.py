"""Max-min SINR power control and MMSE receive beamforming for fixed bits.

With the quantization bits fixed, the BBU sees the stacked filter outputs of
all RRHs.  Dimensions that receive no bits are not forwarded; they are removed
from the problem instead of carrying an infinite noise variance.  The
remaining quantization noise depends on the users' powers, so it is
re-evaluated inside every interference-function call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import NumericalFailure
from .scf import FilterBank


@dataclass
class LinkContext:
    """Everything the power subproblem needs about the retained dimensions.

    ``quant_gain[d]`` is ``3 * 4**(-D_d)`` (zero for an unquantized link), so
    the quantization noise on dimension ``d`` is
    ``quant_gain[d] * (sum_k p_k |H[d, k]|**2 + dim_noise[d])``.
    """

    channels: np.ndarray  # (d, K)
    noise_cov: np.ndarray  # (d, d), sigma^2 V V^H on retained dims
    dim_noise: np.ndarray  # (d,), sigma^2 ||v_d||^2
    quant_gain: np.ndarray  # (d,)
    keep: np.ndarray  # bool mask over all stacked dims
    _outer: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        H = self.channels
        # (K, d, d) rank-one terms h_k h_k^H
        self._outer = np.einsum("ak,bk->kab", H, H.conj())

    @property
    def dims(self) -> int:
        return self.channels.shape[0]

    @property
    def num_users(self) -> int:
        return self.channels.shape[1]

    @classmethod
    def from_bank(cls, bank: FilterBank, sigma2: float, bits=None,
                  mode: str = "exact") -> "LinkContext":
        """Build the context for a bit plan.

        ``bits=None`` means unlimited fronthaul (no quantization noise).  In
        ``"exact"`` mode dimensions with zero bits are dropped; in
        ``"continuous"`` mode they stay with gain 3.
        """
        Ht = bank.stacked_channels()
        dim_noise = sigma2 * bank.row_norms2()
        noise_cov = sigma2 * bank.noise_gram()
        total = Ht.shape[0]
        if bits is None:
            gain = np.zeros(total)
            keep = np.ones(total, dtype=bool)
        else:
            D = np.asarray(bits, dtype=float)
            if D.shape != (total,):
                raise ValueError(f"expected {total} bit entries, got {D.shape}")
            gain = 3.0 * 4.0 ** (-D)
            keep = D > 0 if mode == "exact" else np.ones(total, dtype=bool)
        return cls(channels=Ht[keep], noise_cov=noise_cov[np.ix_(keep, keep)],
                   dim_noise=dim_noise[keep], quant_gain=gain[keep], keep=keep)

    @classmethod
    def simple(cls, channels, sigma2: float = 1.0, quant_gain=None) -> "LinkContext":
        """Context with white noise ``sigma2 I`` and unit-norm filter rows."""
        H = np.asarray(channels, dtype=complex)
        d = H.shape[0]
        gain = np.zeros(d) if quant_gain is None else np.asarray(quant_gain, dtype=float)
        return cls(channels=H, noise_cov=sigma2 * np.eye(d), dim_noise=np.full(d, sigma2),
                   quant_gain=gain, keep=np.ones(d, dtype=bool))

    def quant_noise(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return self.quant_gain * (np.abs(self.channels) ** 2 @ p + self.dim_noise)

    def covariance(self, p) -> np.ndarray:
        """``sum_j p_j h_j h_j^H + N + Q(p)``."""
        p = np.asarray(p, dtype=float)
        A = np.tensordot(p, self._outer, axes=1) + self.noise_cov
        A[np.diag_indices_from(A)] += self.quant_noise(p)
        return A

    def expand(self, W: np.ndarray) -> np.ndarray:
        """Scatter retained-dimension beamformers back to the full layout."""
        full = np.zeros((self.keep.size, W.shape[1]), dtype=complex)
        full[self.keep] = W
        return full


def _per_user_solves(p, ctx: LinkContext):
    """``x_k = B_k^{-1} h_k`` with ``B_k`` the covariance excluding user ``k``."""
    p = np.asarray(p, dtype=float)
    K, d = ctx.num_users, ctx.dims
    base = ctx.noise_cov.astype(complex)
    base[np.diag_indices(d)] += ctx.quant_noise(p)
    others = p[None, :] * (1.0 - np.eye(K))
    B = base[None] + np.einsum("kj,jab->kab", others, ctx._outer)
    rhs = ctx.channels.T[:, :, None]
    x = np.linalg.solve(B, rhs)[:, :, 0]
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("interference-plus-noise covariance is singular")
    a = np.real(np.einsum("kd,kd->k", ctx.channels.T.conj(), x))
    return x.T, a


def mmse_beamformers(p, ctx: LinkContext) -> np.ndarray:
    """Columns ``w_k = (sum_{j!=k} p_j h_j h_j^H + N + Q(p))^{-1} h_k``."""
    if ctx.dims == 0:
        return np.zeros((0, ctx.num_users), dtype=complex)
    X, _ = _per_user_solves(p, ctx)
    return X


def sinr(p, W, ctx: LinkContext) -> np.ndarray:
    """Per-user SINR for arbitrary receive beamformers (columns of ``W``)."""
    p = np.asarray(p, dtype=float)
    K = ctx.num_users
    if ctx.dims == 0:
        return np.zeros(K)
    G = np.abs(W.conj().T @ ctx.channels) ** 2  # G[k, j] = |w_k^H h_j|^2
    signal = p * np.diag(G)
    interference = G @ p - signal
    noise = np.real(np.einsum("dk,de,ek->k", W.conj(), ctx.noise_cov, W))
    quant = np.abs(W) ** 2
    quant = ctx.quant_noise(p) @ quant
    den = interference + noise + quant
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, signal / den, 0.0)
    return np.where(signal > 0, out, 0.0)


def sinr_mmse(p, ctx: LinkContext) -> np.ndarray:
    """Closed-form SINR under MMSE receivers: ``p_k h_k^H B_k^{-1} h_k``."""
    if ctx.dims == 0:
        return np.zeros(ctx.num_users)
    _, a = _per_user_solves(p, ctx)
    return np.asarray(p, dtype=float) * a


def interference_map(p, gamma_bar: float, ctx: LinkContext) -> np.ndarray:
    """Minimal power each user needs to reach ``gamma_bar`` given the others' powers."""
    if ctx.dims == 0:
        return np.full(ctx.num_users, np.inf)
    _, a = _per_user_solves(p, ctx)
    with np.errstate(divide="ignore"):
        return np.where(a > 0, gamma_bar / a, np.inf)


@dataclass
class FixedPointResult:
    status: str  # converged | unbounded | iteration_cap | exceeds_cap
    p: np.ndarray
    iterations: int
    trace: list[float]  # max power after each iteration
    history: list[np.ndarray] | None = None


def fixed_point_solve(gamma_bar: float, ctx: LinkContext, p0=None, *, tol: float = 1e-9,
                      max_iter: int = 10_000, divergence_cap: float = 1e6,
                      stop_above=None, record_history: bool = False) -> FixedPointResult:
    """Iterate ``p <- I(p)`` until it settles, diverges or hits the cap.

    ``stop_above`` (per-user power caps) enables an early exit once an iterate
    exceeds a cap.  It is only a valid infeasibility certificate when the
    start point satisfies ``p0 <= I(p0)``, which makes the iterates
    nondecreasing (true for ``p0 = 0``).
    """
    K = ctx.num_users
    p = np.zeros(K) if p0 is None else np.asarray(p0, dtype=float).copy()
    trace: list[float] = []
    history = [p.copy()] if record_history else None
    caps = None if stop_above is None else np.asarray(stop_above, dtype=float)
    for it in range(1, max_iter + 1):
        p_new = interference_map(p, gamma_bar, ctx)
        if not np.all(np.isfinite(p_new)) or p_new.max() > divergence_cap:
            return FixedPointResult("unbounded", p_new, it, trace, history)
        trace.append(float(p_new.max()))
        if record_history:
            history.append(p_new.copy())
        if caps is not None and np.any(p_new > caps):
            return FixedPointResult("exceeds_cap", p_new, it, trace, history)
        if np.max(np.abs(p_new - p)) <= tol * np.max(p_new):
            return FixedPointResult("converged", p_new, it, trace, history)
        p = p_new
    return FixedPointResult("iteration_cap", p, max_iter, trace, history)


@dataclass
class FeasibilityResult:
    feasible: bool | None  # None: iteration cap hit, verdict unknown
    p: np.ndarray | None
    fixed_point: FixedPointResult


def feasibility_check(gamma_bar: float, caps, ctx: LinkContext, *, p_start=None,
                      tol: float = 1e-9, max_iter: int = 10_000,
                      divergence_factor: float = 1e6) -> FeasibilityResult:
    """Can every user reach ``gamma_bar`` within its power cap?

    The fixed point from below is the componentwise-minimal power vector, so
    exceeding any cap (or diverging) rules the target out.  ``p_start`` may be
    the minimal powers of a lower target, which keeps the iterates monotone.
    """
    caps = np.asarray(caps, dtype=float)
    res = fixed_point_solve(gamma_bar, ctx, p_start, tol=tol, max_iter=max_iter,
                            divergence_cap=divergence_factor * caps.max(), stop_above=caps)
    if res.status == "converged":
        return FeasibilityResult(True, res.p, res)
    if res.status == "iteration_cap":
        return FeasibilityResult(None, None, res)
    return FeasibilityResult(False, None, res)


def single_user_bound(caps, ctx: LinkContext) -> float:
    """Upper bound on the max-min SINR: the weakest user's SINR alone at full power.

    A user's SINR only drops when others transmit (their power adds both
    interference and quantization noise), so no allocation can give user ``k``
    more than it gets alone at its cap.
    """
    caps = np.asarray(caps, dtype=float)
    if ctx.dims == 0:
        return 0.0
    best = np.inf
    for k in range(ctx.num_users):
        p = np.zeros(ctx.num_users)
        p[k] = caps[k]
        best = min(best, float(sinr_mmse(p, ctx)[k]))
    return best


@dataclass
class MaxMinResult:
    gamma: float  # largest target certified feasible
    p: np.ndarray
    W: np.ndarray  # MMSE beamformers on retained dims
    gamma_max: float
    probes: int
    indeterminate: int
    achieved: float  # min SINR at (p, W)


def maxmin_solve(ctx: LinkContext, caps, *, eps: float = 1e-3, tol: float = 1e-9,
                 max_iter: int = 10_000, divergence_factor: float = 1e6) -> MaxMinResult:
    """Bisection on the common SINR target with fixed-point feasibility checks.

    Stops once the bracket is narrower than ``eps`` times its upper end.  Probes that
    hit the iteration cap are treated as infeasible and counted.
    """
    caps = np.asarray(caps, dtype=float)
    K = ctx.num_users
    gamma_max = single_user_bound(caps, ctx)
    lo, hi = 0.0, gamma_max
    p_lo = np.zeros(K)
    probes = indeterminate = 0
    while hi - lo > eps * hi:
        mid = 0.5 * (lo + hi)
        res = feasibility_check(mid, caps, ctx, p_start=p_lo, tol=tol, max_iter=max_iter,
                                divergence_factor=divergence_factor)
        probes += 1
        if res.feasible:
            lo, p_lo = mid, res.p
        else:
            indeterminate += res.feasible is None
            hi = mid
    W = mmse_beamformers(p_lo, ctx)
    achieved = float(np.min(sinr(p_lo, W, ctx))) if ctx.dims else 0.0
    return MaxMinResult(gamma=lo, p=p_lo, W=W, gamma_max=gamma_max, probes=probes,
                        indeterminate=indeterminate, achieved=achieved)
