"""Command-line experiments: config files, presets, CSV output.

Config files are flat ``key = value`` documents with dotted sections::

    # comments start with '#'
    system.num_users = 8
    system.fronthaul_bps = 0.5e9          # scalar or comma list (one per RRH)
    algo.bisection_eps = 1e-3
    experiment.preset = fig4
    experiment.trials = 20

Only the keys that appear in the file override the preset's defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .orchestrator import SweepRow, deployment_configs, massive_mimo_config, run_point
from .scenario import ALGO_KEYS, SYSTEM_KEYS, SystemConfig
from .scf import FILTER_KINDS

log = logging.getLogger(__name__)

PRESETS = ("fig4", "fig5", "fig6", "fig7", "fig9", "table5", "custom")
CSV_COLUMNS = ("preset", "seed", "trials", "N", "M", "K", "T_bps", "scheme", "filter",
               "gamma_mean", "gamma_db_mean", "gamma_p10", "runtime_s", "status",
               "quantized_dims")
SCHEME_LABELS = ("alternating", "scheme1", "scheme2", "scheme3")


class ConfigError(ValueError):
    """Malformed or out-of-range configuration entry."""


@dataclass
class ExperimentSpec:
    preset: str = "custom"
    trials: int = 10
    seed: int = 0
    out: str = "results.csv"
    desk_scale: bool = False
    timing: bool = True
    figure: bool = True
    workers: int = 1
    # Optional overrides of the preset's sweep; empty means preset default.
    sweep: tuple[float, ...] = ()
    schemes: tuple[str, ...] = ()
    filters: tuple[str, ...] = ()
    total_antennas: int = 0
    rrh_counts: tuple[int, ...] = ()
    overrides: dict = field(default_factory=dict)  # explicit system.*/algo.* keys

    def validate(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"experiment.preset: unknown preset {self.preset!r}; "
                              f"expected one of {', '.join(PRESETS)}")
        if self.trials < 1:
            raise ConfigError(f"experiment.trials: must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise ConfigError(f"experiment.workers: must be >= 1, got {self.workers}")
        for s in self.schemes:
            if s not in SCHEME_LABELS:
                raise ConfigError(f"experiment.schemes: unknown scheme {s!r}")
        for k in self.filters:
            if k not in FILTER_KINDS:
                raise ConfigError(f"experiment.filters: unknown filter {k!r}")


# --- value parsing ----------------------------------------------------------

def _float(text: str) -> float:
    return float(text)  # accepts inf, 1e9, ...


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _list(conv):
    def parse(text: str):
        return tuple(conv(t.strip()) for t in text.split(",") if t.strip())
    return parse


def _scalar_or_list(conv):
    def parse(text: str):
        items = _list(conv)(text)
        return items[0] if len(items) == 1 and "," not in text else items
    return parse


def _optional_float(text: str):
    return None if text.lower() == "none" else float(text)


_INT_KEYS = {"num_rrh", "num_users", "rng_seed", "fixed_point_max_iter", "solver_max_iter",
             "max_outer_iterations"}
_PARSERS = {f"system.{k}": _float for k in SYSTEM_KEYS}
_PARSERS.update({f"algo.{k}": _float for k in ALGO_KEYS})
for _k in _INT_KEYS:
    _PARSERS[f"system.{_k}" if _k in SYSTEM_KEYS else f"algo.{_k}"] = _int
_PARSERS.update({
    "system.antennas_per_rrh": _scalar_or_list(_int),
    "system.user_power_dbm": _scalar_or_list(_float),
    "system.fronthaul_bps": _scalar_or_list(_float),
    "system.bs_at_center": _bool,
    "system.path_loss_override_db": _optional_float,
    "experiment.preset": str,
    "experiment.trials": _int,
    "experiment.seed": _int,
    "experiment.out": str,
    "experiment.desk_scale": _bool,
    "experiment.timing": _bool,
    "experiment.figure": _bool,
    "experiment.workers": _int,
    "experiment.sweep": _list(_float),
    "experiment.schemes": _list(str),
    "experiment.filters": _list(str),
    "experiment.total_antennas": _int,
    "experiment.rrh_counts": _list(_int),
})


def parse_config(data: bytes | str) -> tuple[SystemConfig, ExperimentSpec]:
    """Parse a config document into the effective system config and experiment.

    Raises
    ------
    ConfigError
        With the offending line number and key for syntax errors, unknown
        keys, duplicate keys, bad values or range violations.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    spec_values: dict = {}
    overrides: dict = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            parsed = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: key {key!r}: {exc}") from None
        section, name = key.split(".", 1)
        if section == "experiment":
            spec_values[name] = parsed
        else:
            overrides[name] = parsed
    spec = ExperimentSpec(**spec_values, overrides=overrides)
    spec.validate()
    return resolve_config(spec), spec


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, tuple):
        text = ", ".join(_format(v) for v in value)
        return text + "," if len(value) == 1 else text
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(spec: ExperimentSpec) -> str:
    """Inverse of :func:`parse_config` (explicit overrides plus experiment keys)."""
    lines = []
    for name, value in spec.overrides.items():
        section = "system" if name in SYSTEM_KEYS else "algo"
        lines.append(f"{section}.{name} = {_format(value)}")
    for f in fields(ExperimentSpec):
        if f.name == "overrides":
            continue
        lines.append(f"experiment.{f.name} = {_format(getattr(spec, f.name))}")
    return "\n".join(lines) + "\n"


# --- presets ----------------------------------------------------------------

GBPS = 1e9


@dataclass
class Preset:
    base: dict  # SystemConfig changes
    sweep_key: str  # fronthaul_bps | antennas_per_rrh | deployment
    sweep: tuple
    schemes: tuple[str, ...]
    filters: tuple[str, ...]
    total_antennas: int = 0
    rrh_counts: tuple[int, ...] = ()


_FRONTHAUL = tuple(x * GBPS for x in (0.1, 0.25, 0.5, 0.75, 1.0, 1.5))
_DESK_FRONTHAUL = tuple(x * GBPS for x in (0.1, 0.2, 0.5, 1.0, 1.5))
_PAPER = dict(num_rrh=4, antennas_per_rrh=10, num_users=8)
_DESK = dict(num_rrh=2, antennas_per_rrh=4, num_users=3)

PRESET_TABLE = {
    "fig4": (Preset(_PAPER, "fronthaul_bps", _FRONTHAUL, ("alternating",), FILTER_KINDS),
             Preset(_DESK, "fronthaul_bps", _DESK_FRONTHAUL, ("alternating",), FILTER_KINDS)),
    "fig5": (Preset(_PAPER, "fronthaul_bps", _FRONTHAUL, SCHEME_LABELS, ("evd",)),
             Preset(_DESK, "fronthaul_bps", _DESK_FRONTHAUL, SCHEME_LABELS, ("evd",))),
    "fig6": (Preset(dict(_PAPER, num_users=20), "fronthaul_bps", _FRONTHAUL, SCHEME_LABELS,
                    ("evd",)),
             Preset(dict(_DESK, num_users=6), "fronthaul_bps", _DESK_FRONTHAUL, SCHEME_LABELS,
                    ("evd",))),
    "fig7": (Preset(dict(num_users=20, area_radius_m=700.0), "deployment",
                    (1 * GBPS, 3 * GBPS, 5 * GBPS), ("alternating",), ("evd",),
                    total_antennas=50, rrh_counts=(2, 5, 10, 25, 50)),
             Preset(dict(num_users=4, area_radius_m=700.0), "deployment",
                    (0.05 * GBPS, 0.4 * GBPS), ("alternating",), ("evd",),
                    total_antennas=8, rrh_counts=(2, 4, 8))),
    "fig9": (Preset(dict(_PAPER, fronthaul_bps=0.5 * GBPS), "antennas_per_rrh",
                    (8, 10, 12, 16, 20), ("alternating",), FILTER_KINDS),
             Preset(dict(_DESK, fronthaul_bps=0.2 * GBPS), "antennas_per_rrh",
                    (3, 4, 6, 8, 10), ("alternating",), FILTER_KINDS)),
    "table5": (Preset(_PAPER, "fronthaul_bps", (0.1 * GBPS, 0.5 * GBPS, 1.0 * GBPS),
                      ("alternating",), ("evd",)),
               Preset(_DESK, "fronthaul_bps", (0.04 * GBPS, 0.1 * GBPS, 0.5 * GBPS),
                      ("alternating",), ("evd",))),
    "custom": (Preset({}, "fronthaul_bps", (), ("alternating",), ("evd",)),
               Preset(_DESK, "fronthaul_bps", (), ("alternating",), ("evd",))),
}


def resolve_preset(spec: ExperimentSpec) -> Preset:
    preset = PRESET_TABLE[spec.preset][1 if spec.desk_scale else 0]
    changes = {}
    if spec.sweep:
        changes["sweep"] = tuple(spec.sweep)
    if spec.schemes:
        changes["schemes"] = tuple(spec.schemes)
    if spec.filters:
        changes["filters"] = tuple(spec.filters)
    if spec.total_antennas:
        changes["total_antennas"] = spec.total_antennas
    if spec.rrh_counts:
        changes["rrh_counts"] = tuple(spec.rrh_counts)
    return replace(preset, **changes)


def resolve_config(spec: ExperimentSpec) -> SystemConfig:
    """Preset base parameters with the explicit system and algo overrides on top."""
    base = dict(resolve_preset(spec).base)
    base.update(spec.overrides)
    try:
        return SystemConfig(**base)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def sweep_points(spec: ExperimentSpec) -> list[tuple[SystemConfig, list[tuple[str, str]]]]:
    """Every (config, solvers) pair the experiment runs, in output order."""
    preset = resolve_preset(spec)
    config = resolve_config(spec)
    solvers = [(s, k) for s in preset.schemes for k in preset.filters]
    if preset.sweep_key == "deployment":
        if preset.total_antennas < 1 or not preset.rrh_counts:
            raise ConfigError("deployment sweeps need experiment.total_antennas and rrh_counts")
        points = [(c, solvers) for c in deployment_configs(
            config, preset.total_antennas, preset.rrh_counts, preset.sweep)]
        points.append((massive_mimo_config(config, preset.total_antennas),
                       [("massive_mimo", "identity")]))
        return points
    values = preset.sweep or (getattr(config, preset.sweep_key),)
    key = preset.sweep_key
    if key == "antennas_per_rrh":
        values = tuple(int(v) for v in values)
    try:
        return [(config.with_(**{key: v}), solvers) for v in values]
    except ValueError as exc:
        raise ConfigError(f"experiment.sweep: {exc}") from None


# --- running ----------------------------------------------------------------

def _run(job) -> list[SweepRow]:
    config, solvers, trials, seed = job
    return run_point(config, solvers, trials, seed)


def _fmt_num(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return repr(float(x)) if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _status(row: SweepRow) -> str:
    flags = []
    if row.indeterminate:
        flags.append(f"indeterminate={row.indeterminate}")
    if row.failures:
        flags.append(f"failed={row.failures}")
    return ";".join(flags) or "ok"


def format_rows(spec: ExperimentSpec, points, results: list[list[SweepRow]]) -> list[dict]:
    rows = []
    for (config, _), point_rows in zip(points, results):
        ants = config.antenna_counts()
        M = str(ants[0]) if len(set(ants)) == 1 else ";".join(map(str, ants))
        for r in point_rows:
            g_mean = r.gamma_mean
            g_db = 10.0 * math.log10(g_mean) if g_mean > 0 else (
                -math.inf if g_mean == 0 else math.nan)
            rows.append({
                "preset": spec.preset,
                "seed": spec.seed,
                "trials": r.trials,
                "N": config.num_rrh,
                "M": M,
                "K": config.num_users,
                "T_bps": _fmt_num(r.fronthaul_bps),
                "scheme": r.scheme,
                "filter": r.filter_kind,
                "gamma_mean": _fmt_num(g_mean),
                "gamma_db_mean": _fmt_num(g_db),
                "gamma_p10": _fmt_num(r.gamma_p10),
                "runtime_s": f"{r.runtime_s / r.trials:.6f}" if spec.timing else "",
                "status": _status(r),
                "quantized_dims": "" if r.quantized_dims is None
                else ";".join(map(str, r.quantized_dims)),
            })
    return rows


def write_csv(rows: list[dict], path: Path):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Run the experiment, write the CSV (and figure), return the rows.

    Trial ``t`` of every sweep point uses scenario seed ``spec.seed + t``, so
    all points and solvers see the same user drops; rows come out in sweep
    order, then solver order, independent of ``spec.workers``.
    """
    spec.validate()
    out = Path(spec.out)
    if out.parent and not out.parent.exists():
        raise ConfigError(f"experiment.out: directory {str(out.parent)!r} does not exist")
    points = sweep_points(spec)
    jobs = [(cfg, solvers, spec.trials, spec.seed) for cfg, solvers in points]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run, jobs))
    else:
        results = []
        for i, job in enumerate(jobs, 1):
            log.info("point %d/%d", i, len(jobs))
            results.append(_run(job))
    rows = format_rows(spec, points, results)
    try:
        write_csv(rows, out)
    except OSError as exc:
        raise ConfigError(f"experiment.out: cannot write {str(out)!r}: {exc}") from None
    if spec.figure:
        from .plotting import render_figure
        render_figure(rows, spec.preset, out.with_suffix(".png"))
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scfcran",
        description="Max-min SINR experiments for multi-antenna C-RAN with "
                    "spatial compression and forwarding.")
    parser.add_argument("--config", type=Path, help="key = value config file")
    parser.add_argument("--experiment", choices=PRESETS, help="preset to run")
    parser.add_argument("--seed", type=int, help="base seed (trial t uses seed + t)")
    parser.add_argument("--trials", type=int, help="scenarios per sweep point")
    parser.add_argument("--out", type=Path, help="CSV output path")
    parser.add_argument("--desk-scale", action="store_true",
                        help="small networks (N=2, M=4, K=3) for quick runs")
    parser.add_argument("--no-timing", action="store_true",
                        help="leave runtime_s empty so reruns are byte-identical")
    parser.add_argument("--no-figure", action="store_true", help="skip the PNG figure")
    parser.add_argument("--workers", type=int, help="worker processes for sweep points")
    parser.add_argument("--print-config", action="store_true",
                        help="print the resolved config document and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is not None:
            _, spec = parse_config(args.config.read_bytes())
        else:
            spec = ExperimentSpec()
        cli = {"preset": args.experiment, "seed": args.seed, "trials": args.trials,
               "out": None if args.out is None else str(args.out), "workers": args.workers}
        spec = replace(spec, **{k: v for k, v in cli.items() if v is not None})
        if args.desk_scale:
            spec.desk_scale = True
        if args.no_timing:
            spec.timing = False
        if args.no_figure:
            spec.figure = False
        spec.validate()
        resolve_config(spec)
        if args.print_config:
            sys.stdout.write(serialize_config(spec))
            return 0
        rows = run_experiment(spec)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(rows)} rows to {spec.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
