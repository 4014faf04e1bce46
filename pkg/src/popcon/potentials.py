"""Potential functions, phase boundaries, and inequality certification.

Four scalar functions control the trajectory analysis:

* ``phi``     -- the minimum relative advantage across the decisive
  leaders and every counter bin; weakly increasing along mean-field
  trajectories.
* ``psi``     -- phi with small additive offsets ``epsilon * v_j`` per
  bin, tuned so the minimum keeps a uniform positive drift until it
  clears the advantage target; certifies the phase-1 time bound.
* ``lambda2`` -- alpha + delta/16 + beta/4; decays at rate >= 1/(8s)
  once the advantage target is reached (phase 2).
* ``lambda3`` -- alpha + d*delta + sum a_j beta_j with geometrically
  decreasing a_j; decays at rate >= 1/2 - 2/s once the wrong informed
  mass is exponentially small (phase 3).

``check_bounds`` evaluates every tracked inequality at every snapshot of
a mean-field trace and reports the first violation, if any. Inequalities
proven only for s >= 32 are still evaluated at smaller s; asserting them
is the caller's choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .meanfield import MeanFieldState
from .traceio import TrajectoryTrace

__all__ = [
    "PotentialParams",
    "BoundReport",
    "PhaseNotReachedError",
    "phi",
    "psi",
    "lambda2",
    "lambda3",
    "detect_T1",
    "check_bounds",
    "fit_decay_rate",
    "phi_series",
    "psi_series",
    "lambda2_series",
    "lambda3_series",
    "advantage_series",
]


class PhaseNotReachedError(RuntimeError):
    pass


# Smallest normal float64. The integrator flushes state coordinates below
# this to zero; the lambda3 decay checks apply the same policy to the
# weighted sum, whose tiny coefficients can produce denormal products
# (denormal quantization stalls finite differences).
_TINY = 2.2250738585072014e-308


@dataclass(frozen=True)
class PotentialParams:
    """Coefficients of the potential functions for one (s, rho) run."""

    s: int
    rho: float
    lambda_target: float  # advantage level ending phase 1
    lambda1: float  # (1 + lambda_target) / 2, the psi stopping level
    epsilon: float  # psi offset scale, rho * (1 - lambda1^2) / 8
    v: np.ndarray  # psi offsets, v_j = 2(3+2j)/(3+16s), j = 1..8s
    zeta2: float  # phase-2 decay rate 1/(8s)
    zeta3: float  # phase-3 decay rate 1/2 - 2/s
    a2: np.ndarray  # phase-2 beta coefficients (1/4, ..., 1/4, 0)
    d2: float  # phase-2 delta coefficient 1/16
    a3: np.ndarray  # phase-3 beta coefficients 2^(1-j)/s, j = 1..8s+1
    d3: float  # phase-3 delta coefficient 2^(1-8s)/s
    eps_envelope: float  # slack in the gamma/u envelope bounds

    @classmethod
    def for_run(
        cls,
        s: int,
        rho: float,
        lambda_target: float = 31.0 / 32.0,
        eps_envelope: float = 1.0 / 50.0,
    ) -> "PotentialParams":
        if not (0.0 < lambda_target < 1.0):
            raise ValueError("lambda_target must lie in (0, 1)")
        m = 8 * s
        lambda1 = (1.0 + lambda_target) / 2.0
        j = np.arange(1, m + 1, dtype=float)
        a2 = np.full(m + 1, 0.25)
        a2[m] = 0.0
        a3 = np.ldexp(1.0, 1 - np.arange(1, m + 2)) / s
        return cls(
            s=s,
            rho=rho,
            lambda_target=lambda_target,
            lambda1=lambda1,
            epsilon=rho * (1.0 - lambda1**2) / 8.0,
            v=2.0 * (3.0 + 2.0 * j) / (3.0 + 16.0 * s),
            zeta2=1.0 / (8.0 * s),
            zeta3=0.5 - 2.0 / s,
            a2=a2,
            d2=1.0 / 16.0,
            a3=a3,
            d3=math.ldexp(1.0, 1 - m) / s,
            eps_envelope=eps_envelope,
        )


@dataclass
class BoundReport:
    """Pass/fail record for one inequality along a trajectory.

    ``worst_margin`` is the smallest slack seen (negative = violated);
    ``first_violation_time`` is None when the bound held everywhere.
    """

    bound_name: str
    holds: bool
    first_violation_time: Optional[float]
    worst_margin: float


def phi(view) -> float:
    """Minimum relative advantage: min(xi, eta_1, ..., eta_{8s})."""
    return float(min(view.xi, view.eta.min()))


def psi(view, pp: PotentialParams) -> float:
    """min(xi, eta_j + epsilon * v_j); equals rho at the initial state."""
    return float(min(view.xi, (view.eta + pp.epsilon * pp.v).min()))


def lambda2(state: MeanFieldState) -> float:
    return state.alpha + state.delta / 16.0 + state.beta_sum / 4.0


def lambda3(state: MeanFieldState, pp: PotentialParams) -> float:
    return state.alpha + pp.d3 * state.delta + float(np.dot(pp.a3, state.beta))


# --- vectorized series over a trace ---


def advantage_series(trace: TrajectoryTrace):
    """(xi[k], eta[k, j]) along a trace; empty bins give a vacuous +inf eta."""
    s = trace.s
    one_s = 1.0 / s
    denom = one_s - trace.delta
    xi = (denom - 2.0 * trace.alpha) / denom
    gamma = trace.gamma
    beta = trace.beta[:, : trace.m]
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(gamma > 0.0, (gamma - 2.0 * beta) / gamma, np.inf)
    return xi, eta


def phi_series(trace: TrajectoryTrace) -> np.ndarray:
    xi, eta = advantage_series(trace)
    return np.minimum(xi, eta.min(axis=1))


def psi_series(trace: TrajectoryTrace, pp: PotentialParams) -> np.ndarray:
    xi, eta = advantage_series(trace)
    return np.minimum(xi, (eta + pp.epsilon * pp.v).min(axis=1))


def lambda2_series(trace: TrajectoryTrace) -> np.ndarray:
    return trace.alpha + trace.delta / 16.0 + trace.beta_sum / 4.0


def lambda3_series(trace: TrajectoryTrace, pp: PotentialParams) -> np.ndarray:
    return trace.alpha + pp.d3 * trace.delta + trace.beta @ pp.a3


def detect_T1(trace: TrajectoryTrace, lambda_target: float) -> float:
    """First snapshot time with phi above the advantage target."""
    series = phi_series(trace)
    above = series > lambda_target
    if not above.any():
        raise PhaseNotReachedError(
            f"T1 not attained in horizon (max phi = {series.max():.6g}, "
            f"target {lambda_target})"
        )
    return float(trace.sample_times[int(np.argmax(above))])


def _mk_report(name, times, margins, strict: bool) -> BoundReport:
    """Build a report from per-point margins (positive = satisfied)."""
    margins = np.asarray(margins, dtype=float)
    if margins.size == 0:
        return BoundReport(name, True, None, math.inf)
    bad = margins <= 0.0 if strict else margins < 0.0
    worst = float(margins.min())
    if bad.any():
        return BoundReport(name, False, float(times[int(np.argmax(bad))]), worst)
    return BoundReport(name, True, None, worst)


def check_bounds(trace: TrajectoryTrace, pp: PotentialParams) -> list:
    """Evaluate every tracked inequality at every snapshot.

    Envelope bounds are anchored at the measured phase boundary T1 (and
    T2 = T1 + 64 s^2); if the trace never clears the advantage target,
    those reports hold vacuously and `phase1_T1_attained` records the
    failure instead. Violations are reported, never raised.
    """
    s = pp.s
    m = trace.m
    one_s = 1.0 / s
    t = trace.sample_times
    reports = []

    delta = trace.delta
    gamma = trace.gamma
    u = trace.u
    Gamma = trace.Gamma
    R = trace.R
    beta_sum = trace.beta_sum

    # pointwise state bounds
    reports.append(_mk_report("delta_upper", t, 0.2 / s - delta, strict=True))
    reports.append(_mk_report("R_lower", t, R - math.exp(1.0 / (4.0 * s)), strict=False))

    env = (1.0 - pp.eps_envelope) / s * np.exp(-np.arange(1, m + 1) / (4.0 * s))
    gmarg = (env[None, :] - gamma).min(axis=1)
    reports.append(_mk_report("gamma_envelope", t, gmarg, strict=True))

    u_cap = (1.0 - pp.eps_envelope) / (s * math.e**2) * (1.0 + 3.0 / s)
    reports.append(_mk_report("u_envelope", t, u_cap - u, strict=True))

    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = gamma[:, :-1] / gamma[:, 1:]
    reports.append(_mk_report("gamma_ratio", t, (ratios - 0.5).min(axis=1), strict=True))

    reports.append(_mk_report("Gamma_lower", t, Gamma - (1.0 - 2.0 / s), strict=True))
    # upper bound is attained exactly at t=0; 1e-12 absorbs summation roundoff
    reports.append(
        _mk_report("Gamma_upper", t, (1.0 - one_s) - Gamma + 1e-12, strict=False)
    )

    # phase-1 potentials
    phi_s = phi_series(trace)
    psi_s = psi_series(trace, pp)
    if len(t) > 1:
        dt = np.diff(t)
        reports.append(
            _mk_report(
                "phi_monotone", t[1:], np.diff(phi_s) + 1e-9, strict=False
            )
        )
        pre = psi_s[:-1] < pp.lambda1
        rate_target = pp.epsilon / (9.0 * s)
        rates = np.diff(psi_s) / dt
        reports.append(
            _mk_report(
                "psi_progress",
                t[1:][pre],
                (rates - rate_target)[pre] + 1e-9,
                strict=False,
            )
        )

    # phase boundaries from the measured advantage level
    try:
        t1 = detect_T1(trace, pp.lambda_target)
        attained = True
    except PhaseNotReachedError:
        t1 = None
        attained = False
    reports.append(
        BoundReport(
            "phase1_T1_attained",
            attained,
            None,
            float(phi_s.max() - pp.lambda_target),
        )
    )

    lam2 = lambda2_series(trace)
    lam3 = lambda3_series(trace, pp)
    lam3 = np.where(lam3 < _TINY, 0.0, lam3)  # flush denormal products
    if attained:
        t2 = t1 + 64.0 * s * s
        after1 = t >= t1 - 1e-12
        after2 = t >= t2 - 1e-12

        reports.append(
            _mk_report(
                "beta_after_T1",
                t[after1],
                (1.0 - pp.lambda_target) - 2.0 * beta_sum[after1],
                strict=True,
            )
        )

        i1 = int(np.argmax(after1))
        lam2_anchor = lam2[i1]
        phase2 = after1 & (t <= t2 + 1e-12)
        envelope2 = lam2_anchor * np.exp(-(t[phase2] - t1) * pp.zeta2) * (1.0 + 1e-6)
        reports.append(
            _mk_report("lambda2_envelope", t[phase2], envelope2 - lam2[phase2], strict=False)
        )

        beta_cap = 32.0 * s * math.exp(-8.0 * s) * (1.0 + 1e-6)
        reports.append(
            _mk_report("beta_endpoint", t[after2], beta_cap - beta_sum[after2], strict=False)
        )

        if len(t) > 1:
            pair_after2 = after2[:-1]
            fd = np.diff(lam3) / np.diff(t)
            target = -pp.zeta3 * lam3[:-1] * (1.0 - 1e-3)
            reports.append(
                _mk_report(
                    "lambda3_pointwise",
                    t[1:][pair_after2],
                    (target - fd)[pair_after2],
                    strict=False,
                )
            )

        reports.append(
            _constraint_report("phase2_constraints", trace, pp.zeta2, pp.a2, pp.d2, phase2)
        )
        reports.append(
            _constraint_report("phase3_constraints", trace, pp.zeta3, pp.a3, pp.d3, after2)
        )

    # same finite-difference decay check, started where the phase-3 premise
    # (wrong informed mass below 2^{2-8s}/s^2) first holds empirically
    premise = beta_sum <= math.ldexp(1.0, 2 - m) / (s * s)
    if premise.any() and len(t) > 1:
        i0 = int(np.argmax(premise))
        fd = np.diff(lam3) / np.diff(t)
        target = -pp.zeta3 * lam3[:-1] * (1.0 - 1e-3)
        sel = np.zeros(len(t) - 1, dtype=bool)
        sel[i0:] = True
        reports.append(
            _mk_report(
                "lambda3_pointwise_empirical", t[1:][sel], (target - fd)[sel], strict=False
            )
        )

    return reports


def _constraint_report(name, trace, zeta, a, d, mask) -> BoundReport:
    """Numeric slack of the linear-decay coefficient system on `mask`.

    For Lambda = alpha + d*delta + sum a_j beta_j to satisfy
    Lambda' <= -zeta * Lambda it suffices, pointwise:
      (a) a_{j+1} <= a_j (R - zeta) - d/(2s)   for j <= 8s
      (b) beta <= (1/2 - zeta) d
      (c) 2 zeta + beta + d + a_1 <= 1 - 2/s
      (d) Gamma >= zeta
    """
    s = trace.s
    t = trace.sample_times[mask]
    if t.size == 0:
        return BoundReport(name, True, None, math.inf)
    R = trace.R[mask]
    beta_sum = trace.beta_sum[mask]
    Gamma = trace.Gamma[mask]
    a = np.asarray(a, dtype=float)
    m_a = (a[:-1, None] * (R[None, :] - zeta) - d / (2.0 * s) - a[1:, None]).min(axis=0)
    m_b = (0.5 - zeta) * d - beta_sum
    m_c = (1.0 - 2.0 / s) - (2.0 * zeta + beta_sum + d + a[0])
    m_d = Gamma - zeta
    margins = np.minimum(np.minimum(m_a, m_b), np.minimum(m_c, m_d))
    return _mk_report(name, t, margins, strict=False)


def phase_schedule(
    t1: float, s: int, n: int, theta: float = 0.5
) -> dict:
    """Phase boundaries implied by a measured advantage time t1.

    T2 ends the rate-1/(8s) stretch; T3 adds the rate-(1/2 - 2/s)
    stretch sized for an n-population; T4 wraps T3 in the continuous
    clock's slack (both scale with theta).
    """
    if theta <= 0:
        raise ValueError("theta must be > 0")
    zeta3 = 0.5 - 2.0 / s
    t2 = t1 + 64.0 * s * s
    return {
        "T1": t1,
        "T2": t2,
        "T3": t2 + (1.0 + theta) / zeta3 * math.log(n),
        "T4": (1.0 + 4.0 * theta) / zeta3 * math.log(n),
    }


def fit_decay_rate(
    trace: TrajectoryTrace,
    quantity: str,
    window: tuple,
    pp: Optional[PotentialParams] = None,
) -> float:
    """Least-squares decay rate of log(quantity) over [t_a, t_b].

    Returns the positive rate r of the best-fit exp(-r t). The quantity
    must be strictly positive on the window.
    """
    series = {
        "alpha": lambda: trace.alpha,
        "beta": lambda: trace.beta_sum,
        "lambda2": lambda: lambda2_series(trace),
        "lambda3": lambda: lambda3_series(trace, pp) if pp is not None else None,
    }
    if quantity not in series:
        raise ValueError(f"unknown quantity {quantity!r}")
    values = series[quantity]()
    if values is None:
        raise ValueError("lambda3 fit needs PotentialParams")
    sel = trace.window(window[0], window[1])
    t = trace.sample_times[sel]
    v = values[sel]
    if t.size < 2:
        raise ValueError("window contains fewer than two snapshots")
    if np.any(v <= 0.0):
        raise ValueError(f"{quantity} is not strictly positive on the window")
    slope = np.polyfit(t, np.log(v), 1)[0]
    return float(-slope)
