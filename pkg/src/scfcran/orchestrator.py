"""Top-level resource allocation: alternating optimization, benchmarks, sweeps."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .bits_alloc import effective_theta, relaxed_maxmin, round_bits
from .numerics import NumericalFailure
from .maxmin_power import LinkContext, maxmin_solve, mmse_beamformers, sinr
from .scenario import Scenario, SystemConfig, draw_scenario, split_antennas
from .scf import FilterBank, QuantizationPlan, build_filter_bank

log = logging.getLogger(__name__)

SCHEMES = ("alternating", "scheme1", "scheme2", "scheme3")


@dataclass
class SolveOutcome:
    gamma: float  # achieved min SINR (linear)
    p: np.ndarray
    W: np.ndarray  # beamformers on the full stacked layout, zero on dropped dims
    plan: QuantizationPlan | None  # None: unlimited fronthaul
    iteration_trace: list[float] = field(default_factory=list)
    termination: str = "converged"  # converged | decreased | cap
    indeterminate: int = 0

    @property
    def gamma_db(self) -> float:
        return 10.0 * np.log10(self.gamma) if self.gamma > 0 else -np.inf


class _Problem:
    """Fixed data of one optimization run: filters, caps, budgets, tolerances."""

    def __init__(self, scenario: Scenario, bank: FilterBank):
        cfg = scenario.config
        self.cfg = cfg
        self.bank = bank
        self.sigma2 = scenario.noise_power_w
        self.caps = cfg.power_caps_w()
        self.budgets = cfg.fronthaul_budgets()
        self.bandwidth = cfg.bandwidth_hz
        self.unlimited = bool(np.all(np.isinf(self.budgets)))

    def context(self, plan: QuantizationPlan | None, mode: str = "exact") -> LinkContext:
        bits = None if plan is None else plan.flat()
        return LinkContext.from_bank(self.bank, self.sigma2, bits, mode)

    def power_step(self, plan):
        ctx = self.context(plan)
        cfg = self.cfg
        res = maxmin_solve(ctx, self.caps, eps=cfg.bisection_eps, tol=cfg.fixed_point_tol,
                           max_iter=cfg.fixed_point_max_iter,
                           divergence_factor=cfg.divergence_factor)
        return SolveOutcome(res.achieved, res.p, ctx.expand(res.W), plan,
                            indeterminate=res.indeterminate)

    def evaluate(self, p, plan) -> SolveOutcome:
        """MMSE receivers for fixed powers and bits, SINR with dropped dims removed."""
        ctx = self.context(plan)
        W = mmse_beamformers(p, ctx)
        gamma = float(np.min(sinr(p, W, ctx))) if ctx.dims else 0.0
        return SolveOutcome(gamma, np.asarray(p, dtype=float), ctx.expand(W), plan)

    def bits_step(self, p, plan) -> tuple[QuantizationPlan, np.ndarray, int]:
        """Relaxed allocation plus rounding for fixed powers.

        The receivers handed to the allocation are MMSE under the continuous
        noise model, so dimensions that currently carry no bits still get a
        nonzero weight and can win bits back.  All-zero powers (a power step
        that certified nothing) are replaced by the caps; the powers actually
        used are returned with the plan.
        """
        if not np.any(p > 0):
            p = self.caps
        cfg = self.cfg
        W = mmse_beamformers(p, self.context(plan, mode="continuous"))
        theta = effective_theta(W, p, self.bank, self.sigma2)
        rel = relaxed_maxmin(theta, self.budgets, self.bandwidth, eps=cfg.bisection_eps,
                             tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
        new = round_bits(rel.D, self.bank.output_dims, self.budgets, self.bandwidth,
                         eps=cfg.rounding_eps)
        return new, p, rel.indeterminate

    def equal_plan(self) -> QuantizationPlan:
        return QuantizationPlan.equal(self.bank.output_dims,
                                      self.budgets / (2.0 * self.bandwidth))


def _alternate(prob: _Problem, first_step: Callable) -> SolveOutcome:
    """Shared loop for the proposed algorithm and benchmark scheme 1.

    Each iteration produces two candidates (after the power/receiver update and
    after the bit update); the iteration's value is the better of the two.
    Stops when the value improves by at most ``eps`` (relative) or drops, and
    returns the best candidate seen.
    """
    cfg = prob.cfg
    plan = prob.equal_plan()
    best: SolveOutcome | None = None
    trace: list[float] = []
    indeterminate = 0
    prev = 0.0
    termination = "cap"
    for _ in range(cfg.max_outer_iterations):
        a = first_step(plan)
        new_plan, p_used, flagged = prob.bits_step(a.p, plan)
        b = prob.evaluate(p_used, new_plan)
        indeterminate += a.indeterminate + flagged
        cand = a if a.gamma >= b.gamma else b
        trace.append(cand.gamma)
        if best is None or cand.gamma > best.gamma:
            best = cand
        delta = cand.gamma - prev
        if delta < 0:
            termination = "decreased"
            break
        if delta <= cfg.bisection_eps * max(cand.gamma, np.finfo(float).tiny):
            termination = "converged"
            break
        prev = cand.gamma
        plan = new_plan
    return SolveOutcome(best.gamma, best.p, best.W, best.plan, trace, termination,
                        indeterminate)


def alternating_optimize(scenario: Scenario, filter_kind: str = "evd",
                         bank: FilterBank | None = None) -> SolveOutcome:
    """Joint power, receive beamforming and fronthaul bit allocation."""
    bank = build_filter_bank(scenario, filter_kind) if bank is None else bank
    prob = _Problem(scenario, bank)
    if prob.unlimited:
        out = prob.power_step(None)
        out.iteration_trace, out.termination = [out.gamma], "converged"
        return out
    return _alternate(prob, prob.power_step)


def run_benchmark(scheme: int | str, scenario: Scenario, filter_kind: str = "evd",
                  bank: FilterBank | None = None) -> SolveOutcome:
    """Benchmark schemes 1-3.

    1. full power, MMSE receivers and bit allocation updated in turn;
    2. power control and MMSE receivers with equal bits;
    3. full power, equal bits, MMSE receivers.
    """
    scheme = int(str(scheme).removeprefix("scheme"))
    bank = build_filter_bank(scenario, filter_kind) if bank is None else bank
    prob = _Problem(scenario, bank)
    plan = None if prob.unlimited else prob.equal_plan()
    if scheme == 1:
        if prob.unlimited:
            out = prob.evaluate(prob.caps, None)
            out.iteration_trace, out.termination = [out.gamma], "converged"
            return out
        return _alternate(prob, lambda plan: prob.evaluate(prob.caps, plan))
    if scheme == 2:
        out = prob.power_step(plan)
    elif scheme == 3:
        out = prob.evaluate(prob.caps, plan)
    else:
        raise ValueError(f"unknown benchmark scheme {scheme!r}")
    out.iteration_trace, out.termination = [out.gamma], "converged"
    return out


def massive_mimo_config(config: SystemConfig, total_antennas: int) -> SystemConfig:
    return config.with_(num_rrh=1, antennas_per_rrh=total_antennas, bs_at_center=True,
                        fronthaul_bps=float("inf"))


def massive_mimo_solve(scenario: Scenario) -> SolveOutcome:
    """All antennas at one BS decoding locally: no filter, no quantization."""
    if scenario.num_rrh != 1:
        raise ValueError("massive MIMO baseline expects a single co-located array")
    bank = build_filter_bank(scenario, "identity")
    prob = _Problem(scenario, bank)
    out = prob.power_step(None)
    out.iteration_trace, out.termination = [out.gamma], "converged"
    return out


def solve(scheme: str, scenario: Scenario, filter_kind: str = "evd") -> SolveOutcome:
    if scheme == "alternating":
        return alternating_optimize(scenario, filter_kind)
    if scheme == "massive_mimo":
        return massive_mimo_solve(scenario)
    return run_benchmark(scheme, scenario, filter_kind)


@dataclass
class SweepRow:
    num_rrh: int
    antennas: tuple[int, ...]
    fronthaul_bps: float  # per RRH
    scheme: str
    filter_kind: str
    gammas: list[float]
    seed: int
    indeterminate: int = 0
    quantized_dims: list[int] | None = None  # first trial's plan
    runtime_s: float = 0.0  # total solve time over all trials
    failures: int = 0  # trials where the solver raised NumericalFailure

    @property
    def trials(self) -> int:
        return len(self.gammas) + self.failures

    @property
    def gamma_mean(self) -> float:
        return float(np.mean(self.gammas)) if self.gammas else float("nan")

    @property
    def gamma_p10(self) -> float:
        return float(np.percentile(self.gammas, 10)) if self.gammas else float("nan")


def run_point(config: SystemConfig, solvers: Sequence[tuple[str, str]], trials: int,
              seed: int) -> list[SweepRow]:
    """Run every (scheme, filter) pair on the same ``trials`` scenarios.

    Trial ``t`` uses scenario seed ``seed + t`` for every solver, so results
    are paired across schemes and filters.  A trial whose solver raises
    :class:`NumericalFailure` (e.g. zero-forcing on a rank-deficient channel)
    is counted in ``failures`` and left out of the statistics.
    """
    rows = [SweepRow(config.num_rrh, config.antenna_counts(), float(config.fronthaul_budgets()[0]),
                     scheme, kind, [], seed) for scheme, kind in solvers]
    for t in range(trials):
        scenario = draw_scenario(config, seed + t)
        for row in rows:
            start = time.perf_counter()
            try:
                out = solve(row.scheme, scenario, row.filter_kind)
            except NumericalFailure as exc:
                log.warning("%s/%s trial %d failed: %s", row.scheme, row.filter_kind, t, exc)
                row.failures += 1
                continue
            finally:
                row.runtime_s += time.perf_counter() - start
            row.gammas.append(out.gamma)
            row.indeterminate += out.indeterminate
            if t == 0 and out.plan is not None:
                row.quantized_dims = out.plan.quantized_dims()
    return rows


def deployment_configs(base: SystemConfig, total_antennas: int, rrh_counts: Iterable[int],
                       total_fronthaul: Iterable[float]) -> list[SystemConfig]:
    """C-RAN configurations for every (total fronthaul, RRH count) pair.

    ``total_antennas`` is split over ``N`` RRHs (larger sites first) and every
    RRH gets ``T / N`` of the total fronthaul ``T``.
    """
    rrh_counts = list(rrh_counts)
    for n in rrh_counts:
        if n > total_antennas:
            raise ValueError(f"cannot place {total_antennas} antennas on {n} RRHs")
    return [base.with_(num_rrh=n, antennas_per_rrh=split_antennas(total_antennas, n),
                       fronthaul_bps=T / n, bs_at_center=False)
            for T in total_fronthaul for n in rrh_counts]


def deployment_sweep(base: SystemConfig, total_antennas: int, rrh_counts: Iterable[int],
                     total_fronthaul: Iterable[float], trials: int, seed: int,
                     schemes: Sequence[str] = ("alternating",), filter_kind: str = "evd",
                     include_massive: bool = True) -> list[SweepRow]:
    """Compare antenna deployments with a fixed total antenna count and fronthaul.

    Users are identical across points of the same trial; the massive MIMO
    baseline (all antennas at the centre, no fronthaul limit) is appended
    last.
    """
    rows: list[SweepRow] = []
    for cfg in deployment_configs(base, total_antennas, rrh_counts, total_fronthaul):
        rows += run_point(cfg, [(s, filter_kind) for s in schemes], trials, seed)
    if include_massive:
        cfg = massive_mimo_config(base, total_antennas)
        rows += run_point(cfg, [("massive_mimo", "identity")], trials, seed)
    return rows
