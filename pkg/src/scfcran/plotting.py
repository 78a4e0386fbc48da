"""PNG figures for experiment CSV rows (rendered off-screen)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import FixedLocator, NullLocator, ScalarFormatter  # noqa: E402

_XLABELS = {
    "T": "per-RRH fronthaul capacity T (Gbps)",
    "M": "antennas per RRH M",
    "N": "number of RRHs N",
}


def _x_axis(preset: str) -> str:
    return {"fig7": "N", "fig9": "M"}.get(preset, "T")


def _x_value(row: dict, axis: str) -> float:
    if axis == "T":
        return float(row["T_bps"]) / 1e9
    if axis == "M":
        return float(str(row["M"]).split(";")[0])
    return float(row["N"])


def render_figure(rows: list[dict], preset: str, path: Path) -> Path:
    """Max-min SINR (dB) versus the preset's swept variable, one line per series.

    For ``table5`` a grouped bar chart of quantized dimensions per RRH is
    drawn instead.  For ``fig7`` each total-fronthaul level is a series and
    the massive MIMO baseline is a horizontal line.
    """
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if preset == "table5":
        _table5(ax, rows)
    else:
        axis = _x_axis(preset)
        series: dict[str, list[tuple[float, float]]] = {}
        for row in rows:
            if row["scheme"] == "massive_mimo":
                ax.axhline(float(row["gamma_db_mean"]), color="k", ls="--", lw=1,
                           label="massive MIMO")
                continue
            if preset == "fig7":
                total = float(row["T_bps"]) * int(row["N"]) / 1e9
                label = f"C-RAN, total T = {total:g} Gbps"
            else:
                label = f"{row['scheme']} / {row['filter']}"
            series.setdefault(label, []).append(
                (_x_value(row, axis), float(row["gamma_db_mean"])))
        xs = set()
        for label, pts in series.items():
            pts.sort()
            xs.update(p[0] for p in pts)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
        ax.set_xlabel(_XLABELS[axis])
        ax.set_ylabel("mean max-min SINR (dB)")
        if axis == "N":
            ax.set_xscale("log")
            ax.xaxis.set_major_locator(FixedLocator(sorted(xs)))
            ax.xaxis.set_major_formatter(ScalarFormatter())
            ax.xaxis.set_minor_locator(NullLocator())
        ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    ax.set_title(preset)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _table5(ax, rows):
    width = 0.8 / max(len(rows), 1)
    for i, row in enumerate(rows):
        counts = [int(c) for c in row["quantized_dims"].split(";")] if row["quantized_dims"] else []
        xs = [n + 1 + (i - (len(rows) - 1) / 2) * width for n in range(len(counts))]
        ax.bar(xs, counts, width=width,
               label=f"T = {float(row['T_bps']) / 1e9:g} Gbps")
    if rows and rows[0]["quantized_dims"]:
        ax.set_xticks(range(1, len(rows[0]["quantized_dims"].split(";")) + 1))
    ax.set_xlabel("RRH index")
    ax.set_ylabel("quantized dimensions")
    ax.legend(fontsize=8)
