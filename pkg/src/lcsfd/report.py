"""Files written for a finished study: JSON, CSV tables and SVG figures."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import PreconditionError
from .harness import DESIGNS, StudyResult, design_model
from .plant import simulate_dataset
from .signals import SignalParams, multisine_periods
from .spacefill import build_anchor_grid

RMSE_SCALE = 1e5
COLORS = {"initial": "#7f7f7f", "classical": "#2ca02c", "least_costly": "#d62728"}


def table1_rows(result: StudyResult):
    med = result.rmse_medians()
    rows = []
    for t in result.config.test_names:
        rows.append([t] + [None if med[d][t] is None else med[d][t] * RMSE_SCALE for d in DESIGNS])
    return rows


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_table1(result, path):
    buf = io.StringIO()
    buf.write("# median test RMSE over successful realizations, in units of 1e-5 m\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["test"] + list(DESIGNS))
    for row in table1_rows(result):
        w.writerow([row[0]] + [_fmt(v) for v in row[1:]])
    Path(path).write_text(buf.getvalue())


def read_table1(path):
    """Parse ``table1.csv`` back into ``{design: {test: median RMSE in m}}``."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    out = {d: {} for d in DESIGNS}
    for row in reader:
        for d in DESIGNS:
            out[d][row["test"]] = float(row[d]) / RMSE_SCALE if row[d] else None
    return out


def write_designs(result, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["realization", "status", "design", "power", "v_cost", "covering_radius", "gamma"])
    for r in result.records:
        designs = r.get("designs") or {}
        for d in DESIGNS:
            if d not in designs:
                continue
            e = designs[d]
            w.writerow(
                [r["index"], r["status"], d, _fmt(e["power"]), _fmt(e["v_cost"]),
                 _fmt(e["covering_radius"]), _fmt(r.get("gamma"))]
            )
    Path(path).write_text(buf.getvalue())


# ------------------------------------------------------------------ figures


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "lcsfd"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def _example(result):
    ok = result.succeeded
    if not ok:
        return None, None
    rec = ok[0]
    thetas = {d: SignalParams.from_dict(rec["designs"][d]["theta"]) for d in DESIGNS}
    return rec, thetas


def plot_signals(result, path):
    plt = _pyplot()
    rec, thetas = _example(result)
    cfg = result.config
    fig, (ax_t, ax_f) = plt.subplots(2, 1, figsize=(7, 6))
    if rec is not None:
        t = np.arange(cfg.signal.n) / cfg.signal.fs
        for d in DESIGNS:
            u = multisine_periods(thetas[d], cfg.signal)
            ax_t.plot(t, u, color=COLORS[d], lw=0.8, label=d)
            ax_f.stem(
                cfg.signal.frequencies, thetas[d].amplitudes, linefmt=COLORS[d],
                markerfmt="o", basefmt=" ", label=d,
            )
        ax_t.legend(loc="upper right", fontsize=8)
        ax_t.set_title(f"realization {rec['index']}")
    ax_t.set_xlabel("time (s)")
    ax_t.set_ylabel("force (N)")
    ax_f.set_xlabel("frequency (Hz)")
    ax_f.set_ylabel("line amplitude (N)")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_features(result, path):
    plt = _pyplot()
    rec, thetas = _example(result)
    cfg = result.config
    fig, axes = plt.subplots(1, 3, figsize=(11, 4), sharex=True, sharey=True)
    region = cfg.region
    anchors = build_anchor_grid(region, cfg.anchor_counts).points
    model = None
    if rec is not None:
        model = design_model(cfg, rec.get("linearization_point", 0.0))
    for ax, d in zip(axes, DESIGNS):
        if model is not None:
            data = simulate_dataset(
                model, thetas[d], cfg.signal, (0.0, 0.0),
                cfg.design.warmup_periods, cfg.design.dy_scale,
            )
            ax.plot(data.features[:, 0], data.features[:, 1], ".", ms=2, color=COLORS[d])
        lo, hi = region.lower, region.upper
        ax.add_patch(
            plt.Rectangle(lo, hi[0] - lo[0], hi[1] - lo[1], fill=True, alpha=0.15, color="k", lw=0)
        )
        ax.plot(anchors[:, 0], anchors[:, 1], "k+", ms=6)
        ax.set_title(d)
        ax.set_xlabel("y(k-1) (m)")
    axes[0].set_ylabel("dy(k-1) feature")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_rmse(result, path):
    plt = _pyplot()
    cfg = result.config
    ok = result.succeeded
    names = cfg.test_names
    fig, axes = plt.subplots(1, len(names), figsize=(3 * len(names), 4), squeeze=False)
    for ax, t in zip(axes[0], names):
        data = [[r["rmse"][d][t] * RMSE_SCALE for r in ok] for d in DESIGNS]
        if ok:
            ax.boxplot(data)
            ax.set_yscale("log")
        ax.set_xticks(range(1, len(DESIGNS) + 1))
        ax.set_xticklabels(["Ini", "Cl", "LC"])
        ax.set_title(t, fontsize=9)
    axes[0][0].set_ylabel("RMSE (1e-5 m)")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def write_report(result: StudyResult, out_dir, plots=True):
    """Write ``study.json``, ``table1.csv``, ``designs.csv`` and the SVG figures.

    Returns the list of written paths.
    """
    if not result.records:
        raise PreconditionError("a study report needs at least one realization")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def target(name):
        p = out / name
        written.append(p)
        return p

    result.save(target("study.json"))
    write_table1(result, target("table1.csv"))
    write_designs(result, target("designs.csv"))
    if plots:
        plot_signals(result, target("signals.svg"))
        plot_features(result, target("features.svg"))
        plot_rmse(result, target("rmse_boxplot.svg"))
    return written

