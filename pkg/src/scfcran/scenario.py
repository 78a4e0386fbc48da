"""System parameters, random deployments and channel draws.

Everything inside the package works in linear units (W, amplitude gains);
dB and dBm appear only on the configuration side of this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

MIN_DISTANCE_M = 1.0

SYSTEM_KEYS = (
    "bandwidth_hz", "num_rrh", "antennas_per_rrh", "num_users", "user_power_dbm",
    "noise_psd_dbm_hz", "noise_figure_db", "fronthaul_bps", "area_radius_m",
    "rng_seed", "bs_at_center", "path_loss_override_db",
)
ALGO_KEYS = (
    "bisection_eps", "fixed_point_tol", "fixed_point_max_iter", "divergence_factor",
    "rounding_eps", "solver_tol", "solver_max_iter", "max_outer_iterations",
)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Physical and algorithmic parameters of one C-RAN setup.

    ``antennas_per_rrh``, ``user_power_dbm`` and ``fronthaul_bps`` accept either
    a scalar (shared by every RRH/user) or one value per RRH/user.
    ``fronthaul_bps = inf`` means unconstrained (no quantization).
    """

    bandwidth_hz: float = 10e6
    num_rrh: int = 4
    antennas_per_rrh: int | tuple[int, ...] = 10
    num_users: int = 8
    user_power_dbm: float | tuple[float, ...] = 23.0
    noise_psd_dbm_hz: float = -169.0
    noise_figure_db: float = 7.0
    fronthaul_bps: float | tuple[float, ...] = 0.5e9
    area_radius_m: float = 500.0
    rng_seed: int = 0
    bs_at_center: bool = False
    path_loss_override_db: float | None = None

    bisection_eps: float = 1e-3
    fixed_point_tol: float = 1e-9
    fixed_point_max_iter: int = 10_000
    divergence_factor: float = 1e6
    rounding_eps: float = 1e-6
    solver_tol: float = 1e-7
    solver_max_iter: int = 50_000
    max_outer_iterations: int = 20

    def __post_init__(self):
        for name in ("antennas_per_rrh", "user_power_dbm", "fronthaul_bps"):
            value = getattr(self, name)
            if isinstance(value, (list, np.ndarray)):
                object.__setattr__(self, name, tuple(value))
        self.validate()

    def validate(self):
        def need(cond, key, msg):
            if not cond:
                raise ValueError(f"{key}: {msg}")

        for key in ("num_rrh", "num_users", "fixed_point_max_iter", "solver_max_iter",
                    "max_outer_iterations"):
            value = getattr(self, key)
            need(isinstance(value, (int, np.integer)) and value >= 1, key,
                 f"must be an integer >= 1, got {value!r}")
        need(self.bandwidth_hz > 0, "bandwidth_hz", f"must be > 0, got {self.bandwidth_hz!r}")
        need(self.area_radius_m > 0, "area_radius_m", f"must be > 0, got {self.area_radius_m!r}")
        for key in ("bisection_eps", "fixed_point_tol", "rounding_eps", "solver_tol"):
            value = getattr(self, key)
            need(value > 0, key, f"must be > 0, got {value!r}")
        need(self.divergence_factor > 1, "divergence_factor", "must be > 1")

        ants = self.antenna_counts()
        need(all(int(m) == m and m >= 1 for m in ants), "antennas_per_rrh",
             "every RRH needs an integer number of antennas >= 1")
        front = self.fronthaul_budgets()
        need(np.all(front > 0), "fronthaul_bps", "must be > 0")
        caps = self.power_caps_w()
        need(np.all(np.isfinite(caps)), "user_power_dbm", "must be finite")

    def antenna_counts(self) -> tuple[int, ...]:
        if isinstance(self.antennas_per_rrh, tuple):
            if len(self.antennas_per_rrh) != self.num_rrh:
                raise ValueError("antennas_per_rrh: length must equal num_rrh")
            return tuple(int(m) for m in self.antennas_per_rrh)
        return (int(self.antennas_per_rrh),) * self.num_rrh

    def power_caps_w(self) -> np.ndarray:
        dbm = self.user_power_dbm
        if isinstance(dbm, tuple):
            if len(dbm) != self.num_users:
                raise ValueError("user_power_dbm: length must equal num_users")
            return dbm_to_watts(np.array(dbm, dtype=float))
        return np.full(self.num_users, float(dbm_to_watts(dbm)))

    def fronthaul_budgets(self) -> np.ndarray:
        """Per-RRH fronthaul capacity in bps."""
        t = self.fronthaul_bps
        if isinstance(t, tuple):
            if len(t) != self.num_rrh:
                raise ValueError("fronthaul_bps: length must equal num_rrh")
            return np.array(t, dtype=float)
        return np.full(self.num_rrh, float(t))

    def bit_budgets(self) -> np.ndarray:
        """Per-RRH bits per I/Q sample pair, i.e. T_n / (2B)."""
        return self.fronthaul_budgets() / (2.0 * self.bandwidth_hz)

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class Scenario:
    rrh_positions: np.ndarray  # (N, 2) metres
    user_positions: np.ndarray  # (K, 2) metres
    channels: list[np.ndarray]  # H_n, each (M_n, K)
    noise_power_w: float
    config: SystemConfig = field(repr=False)

    @property
    def num_rrh(self) -> int:
        return len(self.channels)

    @property
    def num_users(self) -> int:
        return self.channels[0].shape[1]


def path_loss_db(d):
    """Distance-dependent path loss ``30.6 + 36.7 log10(d)`` in dB.

    Distances under one metre are clamped to one metre.
    """
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("distance must be > 0")
    return 30.6 + 36.7 * np.log10(np.maximum(d, MIN_DISTANCE_M))


def noise_power_w(config: SystemConfig) -> float:
    total_dbm = (config.noise_psd_dbm_hz + 10.0 * math.log10(config.bandwidth_hz)
                 + config.noise_figure_db)
    return float(dbm_to_watts(total_dbm))


def uniform_in_disk(rng: np.random.Generator, count: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(count))
    phi = 2.0 * np.pi * rng.random(count)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def draw_scenario(config: SystemConfig, seed: int | None = None) -> Scenario:
    """Draw positions and Rayleigh-faded channels for one trial.

    Users, RRH sites and fading use independent child streams of ``seed`` so
    that two configurations differing only in the RRH layout see the same
    users.
    """
    seed = config.rng_seed if seed is None else seed
    user_ss, rrh_ss, fade_ss = np.random.SeedSequence(seed).spawn(3)
    K, N = config.num_users, config.num_rrh

    users = uniform_in_disk(np.random.default_rng(user_ss), K, config.area_radius_m)
    if config.bs_at_center:
        rrhs = np.zeros((N, 2))
    else:
        rrhs = uniform_in_disk(np.random.default_rng(rrh_ss), N, config.area_radius_m)

    dist = np.linalg.norm(rrhs[:, None, :] - users[None, :, :], axis=-1)
    dist = np.maximum(dist, MIN_DISTANCE_M)
    if config.path_loss_override_db is not None:
        loss_db = np.full_like(dist, float(config.path_loss_override_db))
    else:
        loss_db = path_loss_db(dist)
    amp = np.sqrt(db_to_linear(-loss_db))

    fade_rng = np.random.default_rng(fade_ss)
    channels = []
    for n, M in enumerate(config.antenna_counts()):
        g = (fade_rng.standard_normal((M, K)) + 1j * fade_rng.standard_normal((M, K))) / np.sqrt(2)
        channels.append(g * amp[n][None, :])
    return Scenario(rrh_positions=rrhs, user_positions=users, channels=channels,
                    noise_power_w=noise_power_w(config), config=config)


def split_antennas(total: int, num_rrh: int) -> tuple[int, ...]:
    """Spread ``total`` antennas over ``num_rrh`` sites, ceil-sized sites first."""
    if num_rrh < 1 or total < num_rrh:
        raise ValueError(f"cannot split {total} antennas over {num_rrh} RRHs")
    base, extra = divmod(total, num_rrh)
    return tuple([base + 1] * extra + [base] * (num_rrh - extra))
