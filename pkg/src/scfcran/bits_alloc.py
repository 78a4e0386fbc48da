"""Fronthaul bit allocation for fixed powers and receive beamformers.

Quantization noise enters user ``k``'s SINR as ``sum_d theta[d, k] 4**(-D_d)``,
which is convex in the bit counts.  The relaxed (real-valued) problem is
solved by bisection on the common SINR target over a convex feasibility
problem; the relaxed bits are then rounded per RRH with a threshold found by
bisection so that every fronthaul budget still holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .numerics import ContractViolation
from .scf import FilterBank, QuantizationPlan, dimension_power

LN4 = math.log(4.0)
UNLIMITED_BITS_PER_DIM = 60.0


@dataclass
class ThetaTensor:
    """Effective quantization-noise weights plus the bit-independent SINR terms.

    ``theta[d, k]`` is the noise power user ``k``'s receiver collects from
    stacked dimension ``d`` when that dimension carries zero bits.
    """

    theta: np.ndarray  # (d, K)
    signal: np.ndarray  # (K,) p_k |w_k^H h_k|^2
    interference: np.ndarray  # (K,) other users plus filtered receiver noise
    rrh_of_dim: np.ndarray  # (d,)

    @property
    def num_users(self) -> int:
        return self.theta.shape[1]

    def rhs(self, gamma_bar: float) -> np.ndarray:
        return self.signal / gamma_bar - self.interference

    def quant_term(self, D) -> np.ndarray:
        return 4.0 ** (-np.asarray(D, dtype=float)) @ self.theta

    def sinr(self, D) -> np.ndarray:
        """SINR under the continuous noise model (finite noise at ``D = 0``)."""
        den = self.interference + self.quant_term(D)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.signal > 0, self.signal / den, 0.0)

    def no_quantization_bound(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(self.interference > 0, self.signal / self.interference, np.inf)
        return float(ratio.min())


def effective_theta(W, p, bank: FilterBank, sigma2: float) -> ThetaTensor:
    """Weights for beamformers ``W`` given on the full stacked layout (d_total, K)."""
    W = np.asarray(W, dtype=complex)
    p = np.asarray(p, dtype=float)
    Ht = bank.stacked_channels()
    if W.shape != Ht.shape:
        raise ContractViolation(f"beamformers must have shape {Ht.shape}, got {W.shape}")
    power = dimension_power(p, Ht, bank.row_norms2(), sigma2)
    theta = 3.0 * np.abs(W) ** 2 * power[:, None]
    G = np.abs(W.conj().T @ Ht) ** 2
    signal = p * np.diag(G)
    noise = sigma2 * np.real(np.einsum("dk,de,ek->k", W.conj(), bank.noise_gram(), W))
    interference = G @ p - signal + noise
    return ThetaTensor(theta=theta, signal=signal, interference=interference,
                       rrh_of_dim=bank.rrh_of_dim())


def _bit_budgets(budgets_bps, bandwidth_hz: float, rrh_of_dim: np.ndarray) -> np.ndarray:
    bits = np.asarray(budgets_bps, dtype=float) / (2.0 * bandwidth_hz)
    dims = np.bincount(rrh_of_dim, minlength=bits.size)
    return np.where(np.isfinite(bits), bits, UNLIMITED_BITS_PER_DIM * dims)


def project_budget(D, rrh_of_dim, bit_budgets) -> np.ndarray:
    """Euclidean projection onto ``{D >= 0, sum of D over RRH n <= b_n}``."""
    D = np.maximum(np.asarray(D, dtype=float), 0.0)
    rrh_of_dim = np.asarray(rrh_of_dim)
    out = D.copy()
    for n, b in enumerate(bit_budgets):
        idx = np.flatnonzero(rrh_of_dim == n)
        v = D[idx]
        if v.sum() <= b:
            continue
        u = np.sort(v)[::-1]
        css = np.cumsum(u)
        rho = np.nonzero(u * np.arange(1, u.size + 1) >= css - b)[0][-1]
        shift = (css[rho] - b) / (rho + 1.0)
        out[idx] = np.maximum(v - shift, 0.0)
    return out


@dataclass
class FeasibilityOutcome:
    feasible: bool | None  # None: solver gave no reliable verdict
    D: np.ndarray | None
    violation: float  # max_k quant_term_k / rhs_k - 1 at the best point found
    method: str


class _LogViolation:
    """``v_k(D) = log(sum_d a[d,k] 4**(-D_d))`` for the users with nonzero weights."""

    def __init__(self, a: np.ndarray):
        self.a = a

    def value_grad(self, D):
        e = 4.0 ** (-D)
        terms = self.a * e[:, None]  # (d, K)
        g = terms.sum(axis=0)
        v = np.log(g)
        grad = -LN4 * terms / g[None, :]  # (d, K)
        return v, grad


def _solve_slsqp(f: _LogViolation, D0, rrh_of_dim, bit_budgets, max_iter, target=None):
    d = D0.size
    N = bit_budgets.size
    sel = np.zeros((N, d))
    sel[rrh_of_dim, np.arange(d)] = 1.0
    v0, _ = f.value_grad(D0)
    x0 = np.append(D0, v0.max())

    def cons_users(x):
        v, _ = f.value_grad(x[:d])
        return x[d] - v

    def jac_users(x):
        _, grad = f.value_grad(x[:d])
        return np.hstack([-grad.T, np.ones((grad.shape[1], 1))])

    constraints = [
        {"type": "ineq", "fun": cons_users, "jac": jac_users},
        {"type": "ineq", "fun": lambda x: bit_budgets - sel @ x[:d],
         "jac": lambda x: np.hstack([-sel, np.zeros((N, 1))])},
    ]
    bounds = [(0.0, float(bit_budgets[n])) for n in rrh_of_dim] + [(None, None)]
    res = minimize(lambda x: x[d], x0, jac=lambda x: np.eye(d + 1)[d], method="SLSQP",
                   bounds=bounds, constraints=constraints,
                   options={"maxiter": min(max_iter, 500), "ftol": 1e-12})
    return res.x[:d], bool(res.success)


def _solve_pgd(f: _LogViolation, D0, rrh_of_dim, bit_budgets, max_iter, target=None):
    """Projected gradient on a log-sum-exp smoothed max with annealed temperature.

    Returns early once the true max drops to ``target``.
    """
    D = project_budget(D0, rrh_of_dim, bit_budgets)
    temperatures = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    per_stage = max(max_iter // len(temperatures), 1)
    converged = False
    for tau in temperatures:
        def smooth(x):
            v, grad = f.value_grad(x)
            m = v.max()
            w = np.exp((v - m) / tau)
            s = w.sum()
            return m + tau * np.log(s), grad @ (w / s), m

        val, grad, vmax = smooth(D)
        step = 1.0
        converged = False
        for _ in range(per_stage):
            while True:
                cand = project_budget(D - step * grad, rrh_of_dim, bit_budgets)
                cval, cgrad, cmax = smooth(cand)
                if cval <= val - 1e-4 * np.dot(grad, D - cand) or step < 1e-14:
                    break
                step *= 0.5
            moved = np.max(np.abs(cand - D))
            gain = val - cval
            D, val, grad, vmax = cand, cval, cgrad, cmax
            if target is not None and vmax <= target:
                return D, True
            step = min(step * 2.0, 1e3)
            if moved < 1e-10 or gain < 1e-13 * max(1.0, abs(val)):
                converged = True
                break
    return D, converged


def relaxed_feasible(gamma_bar: float, theta: ThetaTensor, budgets_bps, bandwidth_hz: float,
                     *, tol: float = 1e-7, max_iter: int = 50_000, method: str = "slsqp",
                     D0=None) -> FeasibilityOutcome:
    """Is there a real-valued bit plan meeting ``gamma_bar`` for every user?

    Minimizes the largest normalized violation ``quant_term_k / rhs_k`` over
    the budget polytope; the target is reachable iff that minimum is at most
    ``1 + tol``.  ``method`` picks SLSQP (falling back to projected gradient
    when it reports failure) or projected gradient alone (``"pgd"``).
    """
    if gamma_bar <= 0:
        raise ContractViolation("target SINR must be positive")
    rrh = theta.rrh_of_dim
    bits = _bit_budgets(budgets_bps, bandwidth_hz, rrh)
    rhs = theta.rhs(gamma_bar)
    if np.any(rhs <= 0):
        return FeasibilityOutcome(False, None, np.inf, "sign")

    active = theta.theta.sum(axis=0) > 0
    if D0 is None:
        dims = np.bincount(rrh, minlength=bits.size)
        D0 = (bits / np.maximum(dims, 1))[rrh]
    D0 = project_budget(D0, rrh, bits)
    if not np.any(active):
        return FeasibilityOutcome(True, D0, -1.0, "trivial")

    f = _LogViolation(theta.theta[:, active] / rhs[active])

    def violation(D):
        return float(np.max(theta.quant_term(D)[active] / rhs[active]) - 1.0)

    methods = {"slsqp": [_solve_slsqp, _solve_pgd], "pgd": [_solve_pgd]}[method]
    best_D, best_v, converged = D0, violation(D0), False
    for solver in methods:
        D, ok = solver(f, best_D, rrh, bits, max_iter, target=math.log1p(tol))
        D = project_budget(D, rrh, bits)
        v = violation(D)
        if v < best_v:
            best_D, best_v = D, v
        converged = ok
        if best_v <= tol or ok:
            break
    name = solver.__name__.removeprefix("_solve_")
    if best_v <= tol:
        return FeasibilityOutcome(True, best_D, best_v, name)
    return FeasibilityOutcome(False if converged else None, None, best_v, name)


@dataclass
class RelaxedAllocation:
    D: np.ndarray  # flat, stacked layout
    achieved_gamma: float  # min SINR at D under the continuous model
    solver_residual: float
    probes: int
    indeterminate: int


def relaxed_maxmin(theta: ThetaTensor, budgets_bps, bandwidth_hz: float,
                   gamma_max: float | None = None, *, eps: float = 1e-3,
                   tol: float = 1e-7, max_iter: int = 50_000,
                   method: str = "slsqp") -> RelaxedAllocation:
    """Bisection on the common target over :func:`relaxed_feasible`.

    The bracket starts at ``gamma_max`` (default: the SINR bound with no
    quantization noise) and stops once narrower than ``eps`` times its upper
    end.  After each feasible probe the lower end jumps to the SINR the
    returned plan actually reaches, which is still certified.
    """
    rrh = theta.rrh_of_dim
    bits = _bit_budgets(budgets_bps, bandwidth_hz, rrh)
    dims = np.bincount(rrh, minlength=bits.size)
    D_lo = (bits / np.maximum(dims, 1))[rrh]
    lo = float(theta.sinr(D_lo).min())
    ub = theta.no_quantization_bound()
    hi = ub if gamma_max is None else min(float(gamma_max), ub)
    if not np.isfinite(hi):
        hi = float(gamma_max) if gamma_max is not None else 1e12
    probes = indeterminate = 0
    residual = 0.0
    while hi - lo > eps * hi:
        mid = 0.5 * (lo + hi)
        res = relaxed_feasible(mid, theta, budgets_bps, bandwidth_hz, tol=tol,
                               max_iter=max_iter, method=method, D0=D_lo)
        probes += 1
        if res.feasible:
            D_lo, residual = res.D, res.violation
            lo = max(mid, float(theta.sinr(D_lo).min()))
        else:
            indeterminate += res.feasible is None
            hi = mid
    return RelaxedAllocation(D=D_lo, achieved_gamma=float(theta.sinr(D_lo).min()),
                             solver_residual=residual, probes=probes,
                             indeterminate=indeterminate)


def round_bits(D_real, output_dims, budgets_bps, bandwidth_hz: float, *,
               eps: float = 1e-6) -> QuantizationPlan:
    """Round relaxed bits per RRH with the smallest budget-feasible threshold.

    A fractional part at or below the threshold ``alpha_n`` rounds down, above
    it rounds up.  ``alpha_n = 1`` (all floors) is always feasible when the
    relaxed plan is, so bisection over ``[0, 1]`` always ends feasible.
    """
    D_real = np.asarray(D_real, dtype=float)
    parts = np.split(D_real, np.cumsum(output_dims)[:-1])
    budgets = np.asarray(budgets_bps, dtype=float)
    out = []
    for D, T in zip(parts, budgets):
        nearest = np.round(D)
        D = np.where(np.abs(D - nearest) < 1e-9, nearest, D)
        floor, ceil = np.floor(D), np.ceil(D)
        frac = D - floor

        def rounded(alpha):
            return np.where(frac <= alpha, floor, ceil)

        def fits(x):
            return 2.0 * bandwidth_hz * x.sum() <= T * (1 + 1e-12)

        if not fits(floor):
            raise ContractViolation("relaxed bits exceed the fronthaul budget")
        a_lo, a_hi = 0.0, 1.0
        while a_hi - a_lo >= eps:
            alpha = 0.5 * (a_lo + a_hi)
            if fits(rounded(alpha)):
                a_hi = alpha
            else:
                a_lo = alpha
        out.append(rounded(a_hi))
    return QuantizationPlan(out, mode="integer")
