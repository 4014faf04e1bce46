"""Seeded trials of the wake kernel, trace recording, consensus detection.

Discrete steps are the primary clock (one uniform wake per step,
t = i/n); Poisson timestamps are an optional reporting layer for the
continuous-time reading of the same process. Trials are deterministic:
the same parameters and seed reproduce the trace bit for bit. Ensembles
derive per-trial seeds from the base seed with a SplitMix64 mix, so the
result of trial k does not depend on how many trials run or in which
order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ._jit import maybe_jit
from .population import ProtocolParams, init_population, _transition, _pick_cell
from .traceio import TrajectoryTrace

__all__ = [
    "TrialResult",
    "run_trial",
    "run_ensemble",
    "poisson_time_of",
    "poisson_clock",
    "three_state_baseline",
    "splitmix64",
    "windowed_comm_rates",
]

_MASK64 = (1 << 64) - 1


def splitmix64(base_seed: int, k: int) -> int:
    """Fixed seed-splitting rule: stream seed for trial k of an ensemble."""
    x = (base_seed + (k + 1) * 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass
class TrialResult:
    """One seeded run: consensus outcome, cost accounting, full trace."""

    reached_consensus: bool
    consensus_correct: Optional[bool]
    consensus_step: Optional[int]
    consensus_time: Optional[float]
    total_communications: int
    trace: TrajectoryTrace
    seed: int


@maybe_jit
def _trial_kernel(cells, s, n, rng, max_steps, k_record, early_stop, out_rows, out_steps):
    """Run up to max_steps wakes in place; record snapshots.

    Snapshot rows use the shared trace layout (fractions + cumulative
    comms). Records step 0, every k_record-th step, the consensus step
    and the last executed step. Returns
    (rows_written, comms, consensus_step, steps_done); consensus_step is
    -1 when consensus was not reached.
    """
    m = 8 * s
    fw0 = 3
    uw = 3 + 2 * m
    uc = 4 + 2 * m
    dim = 2 * m + 5

    bad = cells[1] + cells[2] + cells[uw]
    for j in range(m):
        bad += cells[fw0 + j]

    comms = 0
    row = 0
    consensus_step = -1

    # snapshot of step 0 (true divisions, matching AgentCounts.fractions)
    out_rows[row, 0] = cells[1] / n
    out_rows[row, 1] = cells[2] / n
    for j in range(m):
        out_rows[row, 2 + j] = cells[fw0 + j] / n
        out_rows[row, 3 + m + j] = (cells[fw0 + j] + cells[fw0 + m + j]) / n
    out_rows[row, 2 + m] = cells[uw] / n
    out_rows[row, dim - 2] = (cells[uw] + cells[uc]) / n
    out_rows[row, dim - 1] = 0.0
    out_steps[row] = 0
    row += 1

    if bad == 0:
        return row, 0, 0, 0

    steps_done = 0
    for i in range(1, max_steps + 1):
        waker = _pick_cell(cells, rng.integers(0, n), -1)
        partner = -1
        heads = False
        if waker <= 2 or waker >= uw:
            partner = _pick_cell(cells, rng.integers(0, n - 1), waker)
            if waker <= 1 and fw0 <= partner < uw:
                heads = rng.integers(0, 2) == 1
        communicated, relevant, bad_delta = _transition(cells, s, waker, partner, heads)
        if communicated:
            comms += 1
        bad += bad_delta
        steps_done = i

        hit_consensus = bad == 0 and consensus_step < 0
        if hit_consensus:
            consensus_step = i
        last = i == max_steps or (hit_consensus and early_stop)
        if i % k_record == 0 or last or hit_consensus:
            out_rows[row, 0] = cells[1] / n
            out_rows[row, 1] = cells[2] / n
            for j in range(m):
                out_rows[row, 2 + j] = cells[fw0 + j] / n
                out_rows[row, 3 + m + j] = (cells[fw0 + j] + cells[fw0 + m + j]) / n
            out_rows[row, 2 + m] = cells[uw] / n
            out_rows[row, dim - 2] = (cells[uw] + cells[uc]) / n
            out_rows[row, dim - 1] = comms
            out_steps[row] = i
            row += 1

        if hit_consensus and early_stop:
            break

    return row, comms, consensus_step, steps_done


def _make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def run_trial(
    params: ProtocolParams,
    sample_interval: float = 1.0,
    early_stop: bool = True,
) -> TrialResult:
    """One seeded run of n * horizon_time wake events (or until consensus)."""
    if sample_interval <= 0:
        raise ValueError("sample_interval must be > 0")
    n, s = params.n, params.s
    counts = init_population(params)
    cells = np.asarray(counts.to_cells(), dtype=np.int64)
    rng = _make_rng(params.seed)

    max_steps = int(round(n * params.horizon_time))
    k_record = max(1, int(round(sample_interval * n)))
    max_snaps = max_steps // k_record + 4
    out_rows = np.empty((max_snaps, 16 * s + 5))
    out_steps = np.empty(max_snaps, dtype=np.int64)

    rows, comms, cons_step, _ = _trial_kernel(
        cells, s, n, rng, max_steps, k_record, early_stop, out_rows, out_steps
    )

    # A consensus hit on a regular recording step would otherwise dedupe;
    # the kernel may emit the same step twice in a row; drop duplicates.
    steps = out_steps[:rows]
    keep = np.ones(rows, dtype=bool)
    keep[1:] = steps[1:] != steps[:-1]
    steps = steps[keep]
    samples = out_rows[:rows][keep]

    trace = TrajectoryTrace(
        system_tag="random",
        s=s,
        n=n,
        rho=params.rho,
        seed=params.seed,
        dt=sample_interval,
        sample_times=steps / n,
        samples=samples,
    )

    reached = cons_step >= 0
    correct = None
    if reached:
        final = samples[-1]
        # wrong and undecided mass is zero at consensus; correct iff the
        # majority bit survived (some agent holds it, hence all do).
        correct = bool(
            final[0] == 0.0 and final[1] == 0.0 and not np.any(final[2 : 3 + 8 * s] > 0)
        )
    return TrialResult(
        reached_consensus=reached,
        consensus_correct=correct,
        consensus_step=int(cons_step) if reached else None,
        consensus_time=cons_step / n if reached else None,
        total_communications=int(comms),
        trace=trace,
        seed=params.seed,
    )


def _run_trial_job(args):
    params, sample_interval, early_stop = args
    return run_trial(params, sample_interval, early_stop)


def run_ensemble(
    params: ProtocolParams,
    trials: int,
    sample_interval: float = 1.0,
    early_stop: bool = True,
    workers: int = 1,
) -> list:
    """Independent trials with per-trial seeds split off the base seed."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    jobs = [
        (replace(params, seed=splitmix64(params.seed, k)), sample_interval, early_stop)
        for k in range(trials)
    ]
    if workers <= 1:
        return [_run_trial_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial_job, jobs))


def poisson_time_of(step: int, n: int, rng: np.random.Generator) -> float:
    """Continuous timestamp of a step: sum of `step` Exp(rate n) gaps.

    Drawn as a single Gamma(step, 1/n) variate, which has the same law;
    use :func:`poisson_clock` when a whole monotone clock is needed.
    """
    if step < 0:
        raise ValueError("step must be >= 0")
    if step == 0:
        return 0.0
    return float(rng.gamma(shape=step, scale=1.0 / n))


def poisson_clock(steps: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Monotone timestamps for steps 1..steps (cumulative exponential gaps)."""
    return np.cumsum(rng.exponential(scale=1.0 / n, size=steps))


@maybe_jit
def _three_state_kernel(counts, n, rng, max_steps, k_record, out, out_steps):
    """counts = [correct, wrong, undecided]; every wake communicates."""
    correct, wrong, und = counts[0], counts[1], counts[2]
    row = 0
    out[row, 0] = wrong / n
    out[row, 1] = und / n
    out[row, 2] = 0.0
    out_steps[row] = 0
    row += 1
    if wrong == 0 and und == 0:
        return row, 0, 0, 0

    consensus_step = -1
    steps_done = 0
    for i in range(1, max_steps + 1):
        r = rng.integers(0, n)
        if r < correct:
            waker = 0
        elif r < correct + wrong:
            waker = 1
        else:
            waker = 2
        r2 = rng.integers(0, n - 1)
        c = correct - (1 if waker == 0 else 0)
        w = wrong - (1 if waker == 1 else 0)
        if r2 < c:
            partner = 0
        elif r2 < c + w:
            partner = 1
        else:
            partner = 2

        if waker == 0:
            if partner == 1:
                wrong -= 1
                und += 1
            elif partner == 2:
                und -= 1
                correct += 1
        elif waker == 1:
            if partner == 0:
                correct -= 1
                und += 1
            elif partner == 2:
                und -= 1
                wrong += 1
        steps_done = i

        hit = wrong == 0 and und == 0 and consensus_step < 0
        if hit:
            consensus_step = i
        if i % k_record == 0 or i == max_steps or hit:
            out[row, 0] = wrong / n
            out[row, 1] = und / n
            out[row, 2] = i
            out_steps[row] = i
            row += 1
        if hit:
            break

    return row, steps_done, consensus_step, correct


def three_state_baseline(
    n: int, rho: float, seed: int, horizon: float, sample_interval: float = 1.0
) -> TrialResult:
    """The classical 3-state protocol, as a communication-cost yardstick.

    Every wake opens a channel, so total communications equal the steps
    executed. The trace reuses the shared layout with s=2 and all
    follower columns zero: alpha carries the wrong fraction and delta the
    undecided fraction.
    """
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    wrong0 = max(0, math.ceil(n * (1.0 - rho) / 2.0 - 0.5))
    counts = np.array([n - wrong0, wrong0, 0], dtype=np.int64)
    rng = _make_rng(seed)
    max_steps = int(round(n * horizon))
    k_record = max(1, int(round(sample_interval * n)))
    max_snaps = max_steps // k_record + 4
    out = np.empty((max_snaps, 3))
    out_steps = np.empty(max_snaps, dtype=np.int64)
    rows, steps_done, cons_step, _ = _three_state_kernel(
        counts, n, rng, max_steps, k_record, out, out_steps
    )

    steps = out_steps[:rows]
    keep = np.ones(rows, dtype=bool)
    keep[1:] = steps[1:] != steps[:-1]
    steps = steps[keep]
    data = out[:rows][keep]

    s_layout = 2
    samples = np.zeros((len(steps), 16 * s_layout + 5))
    samples[:, 0] = data[:, 0]
    samples[:, 1] = data[:, 1]
    samples[:, -1] = data[:, 2]
    trace = TrajectoryTrace(
        system_tag="random",
        s=s_layout,
        n=n,
        rho=rho,
        seed=seed,
        dt=sample_interval,
        sample_times=steps / n,
        samples=samples,
    )
    reached = cons_step >= 0
    comms = int(steps_done)  # every executed wake communicates
    return TrialResult(
        reached_consensus=reached,
        consensus_correct=bool(data[-1, 0] == 0.0) if reached else None,
        consensus_step=int(cons_step) if reached else None,
        consensus_time=cons_step / n if reached else None,
        total_communications=comms,
        trace=trace,
        seed=seed,
    )


def windowed_comm_rates(trace: TrajectoryTrace, window_time: float):
    """Communication rate and max uninformed fraction per time window.

    Splits the trace into consecutive complete windows of at least
    `window_time` (snapshot-aligned; a shorter tail remnant is dropped,
    since rate concentration needs the full window length) and returns a
    list of (rate = communications/steps, max_u) tuples.
    """
    if trace.n <= 0:
        raise ValueError("communication rates need a finite-population trace")
    t = trace.sample_times
    comms = trace.comms
    u = trace.u
    out = []
    start = 0
    for k in range(1, len(t)):
        if t[k] - t[start] >= window_time - 1e-9:
            steps = int(round((t[k] - t[start]) * trace.n))
            if steps > 0:
                rate = (comms[k] - comms[start]) / steps
                out.append((float(rate), float(np.max(u[start : k + 1]))))
            start = k
    return out
