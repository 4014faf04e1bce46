"""Deterministic limit of the protocol and its advantage variables.

With the population size taken to infinity at fixed ``s``, the census
fractions obey a closed system of ``16s+3`` coupled ODEs. Writing
``Gamma`` for the informed-follower fraction, ``u = 1 - 1/s - Gamma``
for the uninformed fraction and ``R = 1 + 1/(2s) - delta/2 - u`` for
the per-bin departure rate:

    alpha'      = -alpha/2 * (Gamma - beta) + delta * beta
    delta'      =  alpha/2 * (Gamma - beta)
                   + (1/s - alpha - delta)/2 * beta - delta * Gamma
    beta_1'     = -beta_1 * R + alpha/2 * Gamma
    beta_j'     =  beta_{j-1} - beta_j * R          (2 <= j <= 8s)
    beta_{8s+1}' = beta_{8s} - beta_{8s+1} * Gamma
    gamma_1'    = -gamma_1 * R + (1/(2s) - delta/2) * Gamma
    gamma_j'    =  gamma_{j-1} - gamma_j * R        (2 <= j <= 8s)

``u`` is derived, never integrated, so the mass identity
``sum(gamma) + u = 1 - 1/s`` holds exactly. The integrator is classical
fixed-step RK4; a state leaving the physical domain is an error (it
signals an integration bug, the true flow stays interior).

The advantage view re-parametrizes the state by the normalized majority
margins among decisive leaders (``xi``) and within each counter bin
(``eta_j``); the phase analysis in :mod:`popcon.potentials` is written
in these variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._jit import maybe_jit
from .population import AgentCounts
from .traceio import TrajectoryTrace

__all__ = [
    "MeanFieldState",
    "AdvantageView",
    "DomainError",
    "DomainExitError",
    "initial_state",
    "state_from_counts",
    "state_from_trace",
    "rhs",
    "integrate",
    "advantages",
    "default_step",
]


class DomainError(ValueError):
    """State outside the physical domain, names the violated inequality."""


class DomainExitError(RuntimeError):
    """Integration left the physical domain (carries the exit time)."""

    def __init__(self, t: float, reason: str):
        super().__init__(f"trajectory left the domain at t={t}: {reason}")
        self.t = t
        self.reason = reason


@dataclass
class MeanFieldState:
    """Fractions (alpha, delta, beta_1..8s+1, gamma_1..8s) at time t."""

    s: int
    t: float
    alpha: float
    delta: float
    beta: np.ndarray  # length 8s+1, index j-1
    gamma: np.ndarray  # length 8s, index j-1

    @property
    def m(self) -> int:
        return 8 * self.s

    @property
    def Gamma(self) -> float:
        return float(np.sum(self.gamma))

    @property
    def u(self) -> float:
        return 1.0 - 1.0 / self.s - self.Gamma

    @property
    def R(self) -> float:
        return 1.0 + 0.5 / self.s - 0.5 * self.delta - self.u

    @property
    def beta_sum(self) -> float:
        """Wrong-informed fraction (uninformed excluded)."""
        return float(np.sum(self.beta[: self.m]))

    @property
    def w(self) -> float:
        return 1.0 / self.s - self.delta - self.alpha

    @property
    def w_j(self) -> np.ndarray:
        return self.gamma - self.beta[: self.m]

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.alpha, self.delta], self.beta, self.gamma))

    @classmethod
    def from_vector(cls, y: np.ndarray, s: int, t: float) -> "MeanFieldState":
        m = 8 * s
        return cls(
            s=s,
            t=t,
            alpha=float(y[0]),
            delta=float(y[1]),
            beta=np.array(y[2 : 3 + m], dtype=float),
            gamma=np.array(y[3 + m : 3 + 2 * m], dtype=float),
        )

    def to_row(self, comms: float = 0.0) -> np.ndarray:
        """Snapshot in the shared trace column layout."""
        return np.concatenate(
            ([self.alpha, self.delta], self.beta, self.gamma, [self.u, comms])
        )


@dataclass(frozen=True)
class AdvantageView:
    """Normalized majority margins per group.

    ``eta_bar`` is the informed-follower margin; it equals the
    gamma-weighted mean of the per-bin margins.
    """

    xi: float
    eta: np.ndarray  # length 8s, index j-1
    eta_bar: float
    w: float
    w_j: np.ndarray


def initial_state(s: int, rho: float) -> MeanFieldState:
    """Mean-field start matching the simulator's census at n -> infinity."""
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    m = 8 * s
    gamma = np.full(m, (1.0 - 1.0 / s) / m)
    beta = np.empty(m + 1)
    beta[:m] = gamma * (1.0 - rho) / 2.0
    beta[m] = 0.0
    return MeanFieldState(
        s=s, t=0.0, alpha=(1.0 - rho) / (2.0 * s), delta=0.0, beta=beta, gamma=gamma
    )


def state_from_counts(counts: AgentCounts, t: float = 0.0) -> MeanFieldState:
    """Exact fractions of a finite census (used to couple the two systems)."""
    n = counts.n
    m = counts.num_bins
    beta = np.empty(m + 1)
    gamma = np.empty(m)
    for j in range(m):
        beta[j] = counts.followers_wrong[j] / n
        gamma[j] = (counts.followers_wrong[j] + counts.followers_correct[j]) / n
    beta[m] = counts.uninformed_wrong / n
    return MeanFieldState(
        s=counts.s,
        t=t,
        alpha=counts.leaders_wrong / n,
        delta=counts.leaders_undecided / n,
        beta=beta,
        gamma=gamma,
    )


def state_from_trace(trace: TrajectoryTrace, index: int) -> MeanFieldState:
    m = trace.m
    row = trace.samples[index]
    return MeanFieldState(
        s=trace.s,
        t=float(trace.sample_times[index]),
        alpha=float(row[0]),
        delta=float(row[1]),
        beta=row[2 : 3 + m].copy(),
        gamma=row[3 + m : 3 + 2 * m].copy(),
    )


# Domain violation codes returned by the jitted check.
_VIOLATIONS = {
    1: "alpha >= 0",
    2: "alpha <= 1/s",
    3: "delta >= -1/s",
    4: "delta <= 1/s",
    5: "beta_j >= 0",
    6: "beta_j <= gamma_j",
    7: "gamma_j >= 0",
    8: "u >= 0 (sum of gamma_j <= 1 - 1/s)",
}


@maybe_jit
def _domain_check(y, s, m):
    """Return (code, j) of the first violated inequality, (0, 0) if none.

    The domain is closed and padded by 1e-12: boundary states (zero
    wrong mass, zero uninformed mass) are valid up to float summation
    roundoff, while a genuine blow-up crosses the pad immediately.
    """
    tol = 1e-12
    one_s = 1.0 / s
    if y[0] < -tol:
        return 1, 0
    if y[0] > one_s + tol:
        return 2, 0
    if y[1] < -one_s - tol:
        return 3, 0
    if y[1] > one_s + tol:
        return 4, 0
    G = 0.0
    for j in range(m):
        g = y[3 + m + j]
        if g < -tol:
            return 7, j + 1
        G += g
    for j in range(m):
        b = y[2 + j]
        if b < -tol:
            return 5, j + 1
        if b > y[3 + m + j] + tol:
            return 6, j + 1
    if y[2 + m] < -tol:
        return 5, m + 1
    if G > 1.0 - one_s + tol:
        return 8, 0
    return 0, 0


@maybe_jit
def _rhs_into(y, dy, s, m):
    """Evaluate the vector field into dy. Layout: alpha, delta, beta, gamma."""
    one_s = 1.0 / s
    G = 0.0
    for j in range(m):
        G += y[3 + m + j]
    B = 0.0
    for j in range(m):
        B += y[2 + j]
    u = 1.0 - one_s - G
    R = 1.0 + 0.5 * one_s - 0.5 * y[1] - u
    a = y[0]
    d = y[1]
    dy[0] = -0.5 * a * (G - B) + d * B
    dy[1] = 0.5 * a * (G - B) + 0.5 * (one_s - a - d) * B - d * G
    dy[2] = -y[2] * R + 0.5 * a * G
    for j in range(1, m):
        dy[2 + j] = y[2 + j - 1] - y[2 + j] * R
    dy[2 + m] = y[2 + m - 1] - y[2 + m] * G
    g0 = 3 + m
    dy[g0] = -y[g0] * R + (0.5 * one_s - 0.5 * d) * G
    for j in range(1, m):
        dy[g0 + j] = y[g0 + j - 1] - y[g0 + j] * R


@maybe_jit
def _rk4_kernel(y, s, m, h, n_steps, rec_every, out):
    """Fixed-step RK4 over n_steps; records into out every rec_every steps.

    Coordinates are flushed to zero below the smallest normal double:
    once h*dy falls under the denormal quantum the update would round
    away and freeze the coordinate at a few quanta forever, which is a
    float artifact, not dynamics. Flushing keeps the decay monotone and
    absorbs exactly at 0.

    Returns (fail_step, code, j, rows_written); fail_step == 0 means the
    whole run stayed inside the domain.
    """
    dim = y.shape[0]
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    yt = np.empty(dim)
    one_s = 1.0 / s
    tiny = 2.2250738585072014e-308  # smallest normal float64

    row = 0
    for q in range(dim):
        out[row, q] = y[q]
    G = 0.0
    for j in range(m):
        G += y[3 + m + j]
    out[row, dim] = 1.0 - one_s - G
    out[row, dim + 1] = 0.0
    row += 1

    for i in range(1, n_steps + 1):
        _rhs_into(y, k1, s, m)
        for q in range(dim):
            yt[q] = y[q] + 0.5 * h * k1[q]
        _rhs_into(yt, k2, s, m)
        for q in range(dim):
            yt[q] = y[q] + 0.5 * h * k2[q]
        _rhs_into(yt, k3, s, m)
        for q in range(dim):
            yt[q] = y[q] + h * k3[q]
        _rhs_into(yt, k4, s, m)
        for q in range(dim):
            v = y[q] + (h / 6.0) * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q])
            y[q] = 0.0 if -tiny < v < tiny else v

        code, jbad = _domain_check(y, s, m)
        if code != 0:
            return i, code, jbad, row

        if i % rec_every == 0 or i == n_steps:
            for q in range(dim):
                out[row, q] = y[q]
            G = 0.0
            for j in range(m):
                G += y[3 + m + j]
            out[row, dim] = 1.0 - one_s - G
            out[row, dim + 1] = 0.0
            row += 1

    return 0, 0, 0, row


def _raise_domain(code: int, j: int, where: str) -> None:
    name = _VIOLATIONS[code]
    if j:
        name = name.replace("_j", f"_{j}")
    raise DomainError(f"{where}: violated {name}")


def rhs(state: MeanFieldState) -> np.ndarray:
    """Time derivative of the state vector (alpha, delta, beta, gamma)."""
    y = state.to_vector()
    m = state.m
    code, j = _domain_check(y, state.s, m)
    if code:
        _raise_domain(code, j, f"state at t={state.t}")
    dy = np.empty_like(y)
    _rhs_into(y, dy, state.s, m)
    return dy


def default_step(s: int) -> float:
    """Design step: rates are O(1), so this is far inside the stable region."""
    return min(0.01, 1.0 / (10.0 * s))


def integrate(
    initial: MeanFieldState,
    t_end: float,
    step: Optional[float] = None,
    record_every: int = 1,
) -> TrajectoryTrace:
    """RK4 trajectory from ``initial`` up to (at least) ``t_end``.

    Snapshots are recorded every ``record_every`` steps plus the final
    step. Raises :class:`DomainExitError` if the state leaves the
    physical domain.
    """
    s, m = initial.s, initial.m
    h = default_step(s) if step is None else float(step)
    if h <= 0:
        raise ValueError("step must be > 0")
    if t_end <= initial.t:
        raise ValueError(f"t_end={t_end} must exceed the initial time {initial.t}")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")

    y = initial.to_vector()
    code, j = _domain_check(y, s, m)
    if code:
        _raise_domain(code, j, f"initial state at t={initial.t}")

    # the 1e-9 slop keeps float noise in (t_end - t0)/h from adding a step
    n_steps = int(math.ceil((t_end - initial.t) / h - 1e-9))
    rec_steps = list(range(0, n_steps + 1, record_every))
    if rec_steps[-1] != n_steps:
        rec_steps.append(n_steps)
    out = np.empty((len(rec_steps), 16 * s + 5))

    fail_step, code, jbad, rows = _rk4_kernel(y, s, m, h, n_steps, record_every, out)
    if fail_step:
        t_exit = initial.t + fail_step * h
        name = _VIOLATIONS[code]
        if jbad:
            name = name.replace("_j", f"_{jbad}")
        raise DomainExitError(t_exit, name)

    times = initial.t + h * np.asarray(rec_steps, dtype=float)
    return TrajectoryTrace(
        system_tag="meanfield",
        s=s,
        n=0,
        rho=float("nan"),
        seed=None,
        dt=h,
        sample_times=times,
        samples=out[:rows],
    )


def advantages(state: MeanFieldState) -> AdvantageView:
    """Normalized majority margins (xi, eta_j) plus the linear margins."""
    one_s = 1.0 / state.s
    if state.delta >= one_s:
        raise DomainError("advantages: requires delta < 1/s")
    if np.any(state.gamma <= 0.0):
        j = int(np.argmax(state.gamma <= 0.0)) + 1
        raise DomainError(f"advantages: requires gamma_{j} > 0")
    denom = one_s - state.delta
    xi = (denom - 2.0 * state.alpha) / denom
    eta = (state.gamma - 2.0 * state.beta[: state.m]) / state.gamma
    Gamma = state.Gamma
    eta_bar = (Gamma - 2.0 * state.beta_sum) / Gamma
    return AdvantageView(
        xi=float(xi),
        eta=eta,
        eta_bar=float(eta_bar),
        w=state.w,
        w_j=state.w_j,
    )


def xi_rate(state: MeanFieldState) -> float:
    """Closed-form time derivative of xi (used to cross-check advantages)."""
    view = advantages(state)
    one_s = 1.0 / state.s
    Gamma = state.Gamma
    return float(
        state.delta * Gamma / (one_s - state.delta) * (view.eta_bar - view.xi)
        + 0.25 * Gamma * (1.0 - view.xi**2) * view.eta_bar
    )


def eta_rates(state: MeanFieldState) -> np.ndarray:
    """Closed-form time derivatives of eta_1..eta_{8s}."""
    view = advantages(state)
    m = state.m
    out = np.empty(m)
    one_s = 1.0 / state.s
    out[0] = (
        state.Gamma / (2.0 * state.gamma[0]) * (one_s - state.delta) * (view.xi - view.eta[0])
    )
    for j in range(1, m):
        out[j] = state.gamma[j - 1] / state.gamma[j] * (view.eta[j - 1] - view.eta[j])
    return out
