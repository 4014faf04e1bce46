"""Figure-style outputs: columnar plot data plus rendered figures.

Every panel is emitted as a whitespace-separated text file with a
``# columns:`` header (the delimited output of record) and, unless
rendering is disabled, a PNG rendered from exactly that data next to it.
Normalizations follow the usual presentation of these runs: leader
fractions scale by s, follower fractions by s/(s-1), and the per-bin
error ratios are shown on a log scale.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .potentials import advantage_series
from .traceio import TrajectoryTrace, read_columns, write_columns

__all__ = ["emit_panels", "render_panel_png", "render_alpha_beta_overlay"]


def _panel_alpha_beta(trace: TrajectoryTrace):
    s = trace.s
    names = ["t", "alpha_times_s", "beta_times_s_over_s_minus_1"]
    cols = [
        trace.sample_times,
        trace.alpha * s,
        trace.beta_sum * s / (s - 1),
    ]
    return names, cols, {}


def _panel_delta(trace: TrajectoryTrace):
    return ["t", "delta_times_s"], [trace.sample_times, trace.delta * trace.s], {}


def _panel_gamma_bins(trace: TrajectoryTrace):
    names = ["t"] + [f"gamma_{j}" for j in range(1, trace.m + 1)]
    cols = [trace.sample_times] + [trace.gamma[:, j] for j in range(trace.m)]
    return names, cols, {}


def _panel_beta_bins(trace: TrajectoryTrace):
    names = ["t"] + [f"beta_{j}" for j in range(1, trace.m + 1)]
    cols = [trace.sample_times] + [trace.beta[:, j] for j in range(trace.m)]
    return names, cols, {}


def _panel_log_ratios(trace: TrajectoryTrace):
    """log(alpha/(1/s - delta)) and log(beta_j/gamma_j); rows with a
    nonpositive argument are omitted and counted in the header."""
    s = trace.s
    lead = trace.alpha / (1.0 / s - trace.delta)
    ratios = np.empty((len(trace), trace.m + 1))
    ratios[:, 0] = lead
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios[:, 1:] = trace.beta[:, : trace.m] / trace.gamma
    good = np.all(ratios > 0.0, axis=1) & np.all(np.isfinite(ratios), axis=1)
    names = ["t", "log_leader_error_ratio"] + [
        f"log_beta_gamma_{j}" for j in range(1, trace.m + 1)
    ]
    cols = [trace.sample_times[good]] + [
        np.log(ratios[good, j]) for j in range(trace.m + 1)
    ]
    return names, cols, {"omitted_rows": int((~good).sum())}


def _panel_advantages(trace: TrajectoryTrace):
    xi, eta = advantage_series(trace)
    names = ["t", "xi"] + [f"eta_{j}" for j in range(1, trace.m + 1)]
    cols = [trace.sample_times, xi] + [eta[:, j] for j in range(trace.m)]
    return names, cols, {}


_PANELS = {
    "alpha_beta": _panel_alpha_beta,
    "delta": _panel_delta,
    "gamma_bins": _panel_gamma_bins,
    "beta_bins": _panel_beta_bins,
    "log_ratios": _panel_log_ratios,
    "advantages": _panel_advantages,
}


def emit_panels(trace: TrajectoryTrace, outdir, tag: str, render: bool = True) -> list:
    """Write every panel for one trace; returns the files written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, builder in _PANELS.items():
        names, cols, meta = builder(trace)
        meta = {"system": trace.system_tag, "s": trace.s, "n": trace.n, **meta}
        path = outdir / f"panel_{name}_{tag}.txt"
        write_columns(path, names, cols, meta)
        written.append(path)
        if render:
            written.append(render_panel_png(path))
    return written


def render_panel_png(txt_path, png_path=None):
    """Render a columnar panel file to a PNG next to it."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    txt_path = Path(txt_path)
    png_path = Path(png_path) if png_path else txt_path.with_suffix(".png")
    names, data = read_columns(txt_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    t = data[:, 0] if len(data) else np.empty(0)
    many = len(names) > 8
    for i in range(1, len(names)):
        ax.plot(
            t,
            data[:, i] if len(data) else np.empty(0),
            lw=0.8 if many else 1.6,
            alpha=0.6 if many else 1.0,
            label=None if many else names[i],
        )
    ax.set_xlabel("t")
    ax.set_title(txt_path.stem.replace("panel_", "").replace("_", " "))
    if not many:
        ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(png_path, dpi=130)
    plt.close(fig)
    return png_path


def render_alpha_beta_overlay(random_trace, ode_traces, outdir, tag: str):
    """Random alpha*s with one or more mean-field segments overlaid.

    Emits both the columnar file (random series; the piecewise segments
    go to per-block files) and the rendered figure.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    s = random_trace.s
    names = ["t", "alpha_times_s", "beta_times_s_over_s_minus_1"]
    base = outdir / f"overlay_alpha_beta_{tag}.txt"
    write_columns(
        base,
        names,
        [
            random_trace.sample_times,
            random_trace.alpha * s,
            random_trace.beta_sum * s / (s - 1),
        ],
        {"system": "random", "n": random_trace.n, "s": s},
    )
    seg_files = []
    for i, seg in enumerate(ode_traces):
        p = outdir / f"overlay_alpha_beta_{tag}_seg{i:03d}.txt"
        write_columns(
            p,
            names,
            [seg.sample_times, seg.alpha * s, seg.beta_sum * s / (s - 1)],
            {"system": "meanfield", "segment": i, "s": s},
        )
        seg_files.append(p)

    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(random_trace.sample_times, random_trace.alpha * s, "r-", lw=0.9, label="alpha*s (random)")
    ax.plot(
        random_trace.sample_times,
        random_trace.beta_sum * s / (s - 1),
        "b-",
        lw=0.9,
        label="beta*s/(s-1) (random)",
    )
    for i, seg in enumerate(ode_traces):
        ax.plot(seg.sample_times, seg.alpha * s, "k--", lw=1.2,
                label="alpha*s (mean-field)" if i == 0 else None)
    ax.set_xlabel("t")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    png = base.with_suffix(".png")
    fig.savefig(png, dpi=130)
    plt.close(fig)
    return [base, *seg_files, png]


def render_sweep_fit(cells, outdir, tag: str = "sweep"):
    """Median consensus time against |log rho| per (n, s) group.

    `cells` are dicts with keys n, s, rho, median_time (None for failed
    cells). Emits the columnar file and the figure; returns the paths.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ok = [c for c in cells if c.get("median_time") is not None]
    path = outdir / f"{tag}_time_vs_logrho.txt"
    write_columns(
        path,
        ["abs_log_rho", "median_consensus_time", "n", "s"],
        [
            [abs(math.log(c["rho"])) for c in ok],
            [c["median_time"] for c in ok],
            [c["n"] for c in ok],
            [c["s"] for c in ok],
        ],
    )
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = sorted({(c["n"], c["s"]) for c in ok})
    for n, s in groups:
        pts = sorted(
            (abs(math.log(c["rho"])), c["median_time"])
            for c in ok
            if c["n"] == n and c["s"] == s
        )
        ax.plot(*zip(*pts), "o-", label=f"n={n}, s={s}")
    ax.set_xlabel("|log rho|")
    ax.set_ylabel("median consensus time")
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    png = path.with_suffix(".png")
    fig.savefig(png, dpi=130)
    plt.close(fig)
    return [path, png]
