"""Evaluation report rendering: JSON, delimited tables, markdown and figures."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricsReport

__all__ = [
    "render_markdown",
    "write_csv",
    "metrics_figure",
    "loss_curves_figure",
    "write_metrics_report",
]

_ROWS = (("SIFID", "sifid"), ("Diversity", "diversity"), ("GQI", "gqi"))


def _fmt(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isinf(value)):
        return "inf"
    return f"{value:.4f}"


def render_markdown(reports: list[MetricsReport]) -> str:
    """Metric-per-row table with one column per evaluation target."""
    targets = [r.target for r in reports]
    by_target = {r.target: r for r in reports}
    lines = ["| Metric | " + " | ".join(targets) + " |"]
    lines.append("|" + "---|" * (len(targets) + 1))
    for label, attr in _ROWS:
        cells = [_fmt(getattr(by_target[t], attr)) for t in targets]
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    counts = {r.sample_count for r in reports}
    lines.append("")
    lines.append(f"Samples per target: {', '.join(str(c) for c in sorted(counts))}")
    return "\n".join(lines) + "\n"


def write_csv(reports: list[MetricsReport], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "sifid", "diversity", "gqi", "sample_count"])
        for r in reports:
            gqi = "" if math.isinf(r.gqi) else f"{r.gqi:.6f}"
            writer.writerow(
                [r.target, f"{r.sifid:.6f}", f"{r.diversity:.6f}", gqi, r.sample_count]
            )
    return path


def metrics_figure(reports: list[MetricsReport], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    targets = [r.target for r in reports]
    for ax, (label, attr) in zip(axes, _ROWS):
        values = [getattr(r, attr) for r in reports]
        values = [0.0 if math.isinf(v) else v for v in values]
        ax.bar(range(len(targets)), values, color="#4878a8")
        ax.set_xticks(range(len(targets)))
        ax.set_xticklabels(targets, rotation=20, ha="right", fontsize=8)
        ax.set_title(label, fontsize=10)
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def loss_curves_figure(progress_path: str | Path, path: str | Path) -> Path | None:
    """Per-branch loss traces from a progress JSON-lines file."""
    progress_path = Path(progress_path)
    if not progress_path.exists():
        return None
    records: dict[str, list[dict]] = {}
    with progress_path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            records.setdefault(rec["branch"], []).append(rec)
    if not records:
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(
        len(records), 1, figsize=(8, 2.6 * len(records)), squeeze=False
    )
    for ax, (branch, recs) in zip(axes[:, 0], sorted(records.items())):
        xs = range(len(recs))
        for key, color in (("l2", "#c44e52"), ("l1", "#dd8452"), ("l0_d", "#4c72b0")):
            ax.plot(xs, [r[key] for r in recs], label=key, lw=0.8, color=color)
        # scale boundaries
        for i in range(1, len(recs)):
            if recs[i]["scale"] != recs[i - 1]["scale"]:
                ax.axvline(i, color="0.8", lw=0.6)
        ax.set_title(branch, fontsize=9)
        ax.legend(fontsize=7, ncol=3)
        ax.set_yscale("symlog", linthresh=1e-3)
    axes[-1, 0].set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_metrics_report(
    reports: list[MetricsReport],
    out_dir: str | Path,
    progress_path: str | Path | None = None,
) -> dict[str, Path]:
    """Write metrics.{json,csv,md} plus figures; returns the artifact paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    json_path = out_dir / "metrics.json"
    json_path.write_text(json.dumps([r.to_json() for r in reports], indent=2))
    paths["json"] = json_path
    paths["csv"] = write_csv(reports, out_dir / "metrics.csv")
    md_path = out_dir / "metrics.md"
    md_path.write_text(render_markdown(reports))
    paths["markdown"] = md_path
    paths["figure"] = metrics_figure(reports, out_dir / "metrics.png")
    if progress_path is not None:
        curves = loss_curves_figure(progress_path, out_dir / "loss_curves.png")
        if curves is not None:
            paths["loss_curves"] = curves
    return paths
