"""Readers and renderers for the three figure kinds.

Input is the parity-lab CSV (header recipe,params_hash,seed,step,metric,value).
Aggregation is always across seeds at fixed (group, step): mean with a 95%
band of 1.96 times the standard error.  When a manifest.json sits next to the
CSV, its point labels replace raw parameter hashes in legends.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import STYLE_VERSION

CSV_HEADER = ("recipe", "params_hash", "seed", "step", "metric", "value")
FIGURE_KINDS = ("accuracy_curves", "gal_loglog", "width_table")


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class PlotSpec:
    input_csv: str
    figure: str
    output: str
    group_by: tuple[str, ...] = ("params_hash",)
    metric: str = ""  # default chosen per figure kind

    def __post_init__(self) -> None:
        if self.figure not in FIGURE_KINDS:
            raise RenderError(f"unknown figure kind {self.figure!r}")
        unknown = set(self.group_by) - set(CSV_HEADER)
        if unknown:
            raise RenderError(f"unknown columns in group_by: {sorted(unknown)}")


@dataclass
class Records:
    rows: list[dict] = field(default_factory=list)
    labels: dict[str, str] = field(default_factory=dict)


def load_records(csv_path: str | Path) -> Records:
    path = Path(csv_path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise RenderError(f"{path}: no records (empty file)")
        if tuple(header) != CSV_HEADER:
            raise RenderError(f"{path}: unknown columns {header!r}")
        rows = []
        for raw in reader:
            rows.append(
                {
                    "recipe": raw[0],
                    "params_hash": raw[1],
                    "seed": int(raw[2]),
                    "step": int(raw[3]),
                    "metric": raw[4],
                    "value": float(raw[5]),
                }
            )
    if not rows:
        raise RenderError(f"{path}: no records")
    labels = {}
    manifest = path.parent / "manifest.json"
    if manifest.exists():
        try:
            data = json.loads(manifest.read_text())
            labels = {pt["params_hash"]: pt["label"] for pt in data.get("points", [])}
        except (json.JSONDecodeError, KeyError, TypeError):
            labels = {}
    return Records(rows, labels)


def group_key(row: dict, group_by: tuple[str, ...]) -> tuple:
    return tuple(row[col] for col in group_by)


def aggregate_bands(
    records: Records, metric: str, group_by: tuple[str, ...]
) -> dict[tuple, dict[str, np.ndarray]]:
    """Per group: sorted steps with across-seed mean and 1.96-SE half-width."""
    by_group: dict[tuple, dict[int, list[float]]] = {}
    for row in records.rows:
        if row["metric"] != metric:
            continue
        steps = by_group.setdefault(group_key(row, group_by), {})
        steps.setdefault(row["step"], []).append(row["value"])
    out = {}
    for key, steps in by_group.items():
        xs = np.array(sorted(steps))
        means = np.array([np.mean(steps[x]) for x in xs])
        half = np.array(
            [
                1.96 * np.std(steps[x], ddof=1) / math.sqrt(len(steps[x]))
                if len(steps[x]) > 1
                else 0.0
                for x in xs
            ]
        )
        out[key] = {"step": xs, "mean": means, "ci95": half}
    if not out:
        raise RenderError(f"no rows carry metric {metric!r}")
    return out


def _label_for(records: Records, key: tuple, group_by: tuple[str, ...]) -> str:
    parts = []
    for col, val in zip(group_by, key):
        if col == "params_hash":
            parts.append(records.labels.get(val, val))
        else:
            parts.append(f"{col}={val}")
    return ", ".join(str(p) for p in parts)


def _save(fig, output: str) -> None:
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = None
    suffix = path.suffix.lower()
    if suffix == ".png":
        metadata = {"Software": f"parity-figs/{STYLE_VERSION}"}
    elif suffix == ".pdf":
        # a non-reproducible timestamp would break byte-identical output
        metadata = {"CreationDate": None, "Creator": f"parity-figs/{STYLE_VERSION}"}
    fig.savefig(path, metadata=metadata)
    plt.close(fig)


def render_accuracy_curves(spec: PlotSpec, records: Records) -> None:
    metric = spec.metric or "test_accuracy"
    bands = aggregate_bands(records, metric, spec.group_by)
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    for key in sorted(bands):
        band = bands[key]
        label = _label_for(records, key, spec.group_by)
        (line,) = ax.plot(band["step"], band["mean"], label=label)
        ax.fill_between(
            band["step"],
            band["mean"] - band["ci95"],
            band["mean"] + band["ci95"],
            alpha=0.25,
            color=line.get_color(),
            linewidth=0,
        )
    ax.set_xlabel("samples")
    ax.set_ylabel(metric)
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, spec.output)


def render_gal_loglog(spec: PlotSpec, records: Records) -> None:
    metric = spec.metric or "gal"
    bands = aggregate_bands(records, metric, spec.group_by)
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    for key in sorted(bands):
        band = bands[key]
        mask = band["mean"] > 0
        if not np.any(mask):
            continue
        label = _label_for(records, key, spec.group_by)
        (line,) = ax.plot(band["step"][mask], band["mean"][mask], marker="o", label=label)
        lower = np.maximum(band["mean"] - band["ci95"], 1e-300)[mask]
        upper = (band["mean"] + band["ci95"])[mask]
        ax.fill_between(
            band["step"][mask], lower, upper, alpha=0.25, color=line.get_color(), linewidth=0
        )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("input dimension")
    ax.set_ylabel(metric)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    _save(fig, spec.output)


def render_width_table(spec: PlotSpec, records: Records) -> None:
    metric = spec.metric or "final_accuracy"
    bands = aggregate_bands(records, metric, spec.group_by)
    rows = sorted(bands)
    widths = sorted({int(s) for band in bands.values() for s in band["step"]})
    table = np.full((len(rows), len(widths)), np.nan)
    for i, key in enumerate(rows):
        band = bands[key]
        for s, m in zip(band["step"], band["mean"]):
            table[i, widths.index(int(s))] = m
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(widths), 1.0 + 0.6 * len(rows)), dpi=120)
    im = ax.imshow(table, vmin=0.5, vmax=1.0, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(widths)), [str(w) for w in widths], fontsize=8)
    ax.set_yticks(
        range(len(rows)), [_label_for(records, key, spec.group_by) for key in rows], fontsize=8
    )
    for i in range(len(rows)):
        for j in range(len(widths)):
            if not np.isnan(table[i, j]):
                ax.text(
                    j, i, f"{table[i, j]:.2f}", ha="center", va="center", color="w", fontsize=7
                )
    ax.set_xlabel("hidden width")
    fig.colorbar(im, ax=ax, label=metric)
    fig.tight_layout()
    _save(fig, spec.output)


RENDERERS = {
    "accuracy_curves": render_accuracy_curves,
    "gal_loglog": render_gal_loglog,
    "width_table": render_width_table,
}


def render(spec: PlotSpec) -> None:
    records = load_records(spec.input_csv)
    RENDERERS[spec.figure](spec, records)
