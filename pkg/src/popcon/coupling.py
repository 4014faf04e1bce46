"""How closely the random system tracks its mean-field limit.

``compare`` measures per-variable sup deviations between a random trace
and a mean-field trace that share a sampling grid and initial
conditions. The proven deviation bound for a window of length
ln(n)/(240 s) is 3 n^{-1/8} in fraction form; it is recorded as the
reference in every report. The proven constants are far too loose to be
desk-scale assertions, so the harness treats measured deviations as
regression quantities: monotone improvement in n plus frozen baselines.

``reset_experiment`` runs one random trial and periodically restarts a
fresh mean-field trajectory from the random state, measuring how far the
random system drifts within each block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .meanfield import default_step, integrate, state_from_counts, state_from_trace
from .population import ProtocolParams, init_population
from .potentials import lambda2_series
from .simulator import run_trial
from .traceio import TrajectoryTrace, column_names

__all__ = [
    "DeviationReport",
    "BlockReport",
    "GridMismatchError",
    "compare",
    "reset_experiment",
    "coupling_trial",
]


class GridMismatchError(ValueError):
    pass


@dataclass
class DeviationReport:
    """Sup deviation per variable between two traces over a window."""

    per_variable_sup: dict
    window: tuple
    n: int
    bound_reference: float  # proven fraction-form bound 3 n^{-1/8}

    @property
    def max_over_variables(self) -> float:
        return max(self.per_variable_sup.values())


@dataclass
class BlockReport:
    """One block of the periodic-reset experiment."""

    block_index: int
    window: tuple
    deviation: DeviationReport
    lambda2_random_end: float
    lambda2_ode_end: float


def compare(
    random_trace: TrajectoryTrace,
    ode_trace: TrajectoryTrace,
    window: tuple,
    grid_tol: float = 1e-9,
) -> DeviationReport:
    """Per-variable sup |random - meanfield| over a shared sample window.

    The traces must hold snapshots at the same times on the window
    (within grid_tol); there is no interpolation by design.
    """
    if random_trace.s != ode_trace.s:
        raise GridMismatchError("traces have different s")
    lo, hi = window
    sel_r = random_trace.window(lo, hi, tol=grid_tol)
    sel_o = ode_trace.window(lo, hi, tol=grid_tol)
    tr = random_trace.sample_times[sel_r]
    to = ode_trace.sample_times[sel_o]
    if len(tr) != len(to) or len(tr) == 0:
        raise GridMismatchError(
            f"mismatched sampling grids: {len(tr)} vs {len(to)} snapshots on {window}"
        )
    if np.max(np.abs(tr - to)) > grid_tol:
        raise GridMismatchError("mismatched sampling grids: sample times differ")

    a = random_trace.samples[sel_r]
    b = ode_trace.samples[sel_o]
    names = column_names(random_trace.s)[1:]  # drop t
    sup = {}
    for i, name in enumerate(names):
        if name == "comms":
            continue
        sup[name] = float(np.max(np.abs(a[:, i] - b[:, i])))
    # aggregated informed-wrong and informed-total deviations
    m = random_trace.m
    sup["beta"] = float(
        np.max(np.abs(a[:, 2 : 2 + m].sum(axis=1) - b[:, 2 : 2 + m].sum(axis=1)))
    )
    sup["Gamma"] = float(
        np.max(
            np.abs(
                a[:, 3 + m : 3 + 2 * m].sum(axis=1) - b[:, 3 + m : 3 + 2 * m].sum(axis=1)
            )
        )
    )
    n = random_trace.n
    return DeviationReport(
        per_variable_sup=sup,
        window=(float(lo), float(hi)),
        n=n,
        bound_reference=3.0 * n ** (-0.125) if n > 0 else math.inf,
    )


def coupling_trial(
    params: ProtocolParams,
    window_end: Optional[float] = None,
) -> tuple:
    """One trial plus the matched-grid mean-field run from the same census.

    Samples both systems at every wake (grid i/n) up to `window_end`
    (defaults to the proven-window length ln(n)/(240 s)). Returns
    (random_trace, ode_trace, window).
    """
    n, s = params.n, params.s
    T = math.log(n) / (240.0 * s) if window_end is None else window_end
    p = replace(params, horizon_time=T)
    res = run_trial(p, sample_interval=1.0 / n, early_stop=False)
    st0 = state_from_counts(init_population(p))
    steps = len(res.trace) - 1
    if steps == 0:
        raise ValueError("window too short: no wake events")
    ode = integrate(st0, steps / n, step=1.0 / n, record_every=1)
    return res.trace, ode, (0.0, steps / n)


def reset_experiment(
    params: ProtocolParams,
    block_length: float,
    sample_interval: Optional[float] = None,
) -> tuple:
    """Periodically restart the mean-field system from the random state.

    Runs one random trial over the full horizon (or until consensus); at
    every multiple of `block_length` a fresh mean-field trajectory is
    integrated from the random snapshot and compared across the block.
    Returns (ode_traces, block_reports).
    """
    if block_length <= 0:
        raise ValueError("block_length must be > 0")
    n, s = params.n, params.s
    h = default_step(s)
    if sample_interval is None:
        # a grid that both engines can hit exactly: k wakes = r ODE steps
        k = max(1, round(h * n))
        sample_interval = k / n
    substeps = max(1, math.ceil(sample_interval / h - 1e-9))
    step = sample_interval / substeps

    result = run_trial(params, sample_interval=sample_interval, early_stop=True)
    # comparisons use the regular sampling grid only (the consensus
    # snapshot usually falls between grid points)
    rt = _grid_rows(result.trace, sample_interval)
    t_end = float(rt.sample_times[-1])
    lam2_rand = lambda2_series(rt)

    ode_traces = []
    reports = []
    block = 0
    while block * block_length < t_end - 1e-9:
        t_lo = block * block_length
        i_lo = rt.index_at(t_lo, tol=sample_interval / 2)
        t_lo = float(rt.sample_times[i_lo])
        t_hi = min((block + 1) * block_length, t_end)
        q = int(math.floor((t_hi - t_lo) / sample_interval + 1e-9))
        if q < 1:
            break
        t_hi = t_lo + q * sample_interval
        start = state_from_trace(rt, i_lo)
        ode = integrate(start, t_hi, step=step, record_every=substeps)
        dev = compare(rt, ode, (t_lo, t_hi), grid_tol=1e-7)
        i_hi = i_lo + q
        reports.append(
            BlockReport(
                block_index=block,
                window=(t_lo, float(rt.sample_times[i_hi])),
                deviation=dev,
                lambda2_random_end=float(lam2_rand[i_hi]),
                lambda2_ode_end=float(lambda2_series(ode)[-1]),
            )
        )
        ode_traces.append(ode)
        block += 1
    return ode_traces, reports


def _grid_rows(trace: TrajectoryTrace, sample_interval: float) -> TrajectoryTrace:
    """Rows of a random trace whose step index sits on the regular grid."""
    k = max(1, round(sample_interval * trace.n))
    steps = np.rint(trace.sample_times * trace.n).astype(np.int64)
    mask = steps % k == 0
    return TrajectoryTrace(
        system_tag=trace.system_tag,
        s=trace.s,
        n=trace.n,
        rho=trace.rho,
        seed=trace.seed,
        dt=trace.dt,
        sample_times=trace.sample_times[mask],
        samples=trace.samples[mask],
    )
