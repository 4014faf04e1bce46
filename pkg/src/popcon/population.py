"""State space and single-wake transition kernel of the protocol.

The population has ``n`` agents: ``n/s`` leaders and ``n - n/s`` followers.
Each follower carries a counter in ``1..8s+1``; counters ``1..8s`` mark
*informed* followers (they hold a belief bit), counter ``8s+1`` marks
*uninformed* ones (their bit is stale). Leaders hold a bit or are
undecided. One of the two bits is the initial majority ("correct"), the
other the minority ("wrong").

In each discrete step one agent wakes uniformly at random:

* informed follower, counter ``j < 8s``  -- silently bumps its counter;
* informed follower, counter ``8s``      -- silently becomes uninformed;
* uninformed follower -- opens a channel to a uniform partner; if the
  partner is an informed follower it copies the partner's bit *and*
  counter, otherwise nothing changes;
* decisive leader -- opens a channel; if the partner is an informed
  follower it flips a fair coin: heads *pushes* its own bit onto the
  partner and resets the partner's counter to 1, tails *pulls* the
  partner's bit and goes undecided on a mismatch;
* undecided leader -- opens a channel; adopts the partner's bit if the
  partner is an informed follower.

The dynamics depend only on the census, so the state is a vector of
counts per (role, belief, counter bin) and one step is O(1) updates.
Every opened channel counts as one communication, whether or not any
information flows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ._jit import maybe_jit

__all__ = [
    "ProtocolParams",
    "AgentCounts",
    "StepOutcome",
    "WakeClass",
    "init_population",
    "apply_wake",
    "consensus_reached",
    "transition",
]


# Flat cell layout used by the kernel: leaders (correct, wrong, undecided),
# wrong follower bins 1..8s, correct follower bins 1..8s, uninformed
# (wrong, correct). Length 16s+5.
LC, LW, LU = 0, 1, 2


def _fw0(s: int) -> int:
    return 3


def _fc0(s: int) -> int:
    return 3 + 8 * s


def _uw(s: int) -> int:
    return 3 + 16 * s


def _uc(s: int) -> int:
    return 4 + 16 * s


def n_cells(s: int) -> int:
    return 16 * s + 5


class WakeClass(Enum):
    LEADER_DECISIVE = "leader_decisive"
    LEADER_UNDECIDED = "leader_undecided"
    FOLLOWER_INFORMED = "follower_informed"
    UNINFORMED = "uninformed"


@dataclass(frozen=True)
class ProtocolParams:
    """Run parameters: population size, memory parameter, initial advantage.

    ``rho`` is the initial relative advantage of the majority bit inside
    every class: each class starts with a wrong:correct split of
    (1-rho):(1+rho). ``horizon_time`` is continuous time; the simulator
    executes ``n * horizon_time`` wake events.
    """

    n: int
    s: int
    rho: float
    seed: int = 0
    horizon_time: float = 50.0

    def __post_init__(self):
        if self.s < 2:
            raise ValueError(f"s must be >= 2, got {self.s}")
        if self.n < 2 * self.s:
            raise ValueError(f"n must be >= 2s, got n={self.n}, s={self.s}")
        if self.n % self.s != 0:
            raise ValueError(f"s must divide n, got n={self.n}, s={self.s}")
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if not self.horizon_time > 0:
            raise ValueError(f"horizon_time must be > 0, got {self.horizon_time}")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def num_leaders(self) -> int:
        return self.n // self.s

    @property
    def num_bins(self) -> int:
        return 8 * self.s


@dataclass
class AgentCounts:
    """Integer census of the population by (role, belief, counter bin)."""

    leaders_correct: int
    leaders_wrong: int
    leaders_undecided: int
    followers_wrong: list  # bins 1..8s, index j-1
    followers_correct: list  # bins 1..8s, index j-1
    uninformed_wrong: int
    uninformed_correct: int

    @property
    def s(self) -> int:
        return len(self.followers_wrong) // 8

    @property
    def num_bins(self) -> int:
        return len(self.followers_wrong)

    @property
    def leader_total(self) -> int:
        return self.leaders_correct + self.leaders_wrong + self.leaders_undecided

    @property
    def n(self) -> int:
        return (
            self.leader_total
            + sum(self.followers_wrong)
            + sum(self.followers_correct)
            + self.uninformed_wrong
            + self.uninformed_correct
        )

    @property
    def informed_total(self) -> int:
        """Count of informed followers (Gamma, unnormalized)."""
        return sum(self.followers_wrong) + sum(self.followers_correct)

    @property
    def uninformed_total(self) -> int:
        return self.uninformed_wrong + self.uninformed_correct

    @property
    def wrong_informed_total(self) -> int:
        return sum(self.followers_wrong)

    def gamma_count(self, j: int) -> int:
        """Followers with counter value j (1-based), either belief."""
        return self.followers_wrong[j - 1] + self.followers_correct[j - 1]

    def validate(self) -> None:
        cells = self.to_cells()
        if any(c < 0 for c in cells):
            raise ValueError("negative count in AgentCounts")
        if self.num_bins % 8 != 0 or self.num_bins == 0:
            raise ValueError("follower bins must number 8s for integer s")
        if len(self.followers_correct) != self.num_bins:
            raise ValueError("followers_wrong/followers_correct length mismatch")
        if self.n % self.s != 0 or self.leader_total != self.n // self.s:
            raise ValueError(
                f"leader count {self.leader_total} is not n/s for n={self.n}, s={self.s}"
            )

    def to_cells(self) -> list:
        return (
            [self.leaders_correct, self.leaders_wrong, self.leaders_undecided]
            + list(self.followers_wrong)
            + list(self.followers_correct)
            + [self.uninformed_wrong, self.uninformed_correct]
        )

    @classmethod
    def from_cells(cls, cells: Sequence[int], s: int) -> "AgentCounts":
        m = 8 * s
        return cls(
            leaders_correct=int(cells[LC]),
            leaders_wrong=int(cells[LW]),
            leaders_undecided=int(cells[LU]),
            followers_wrong=[int(c) for c in cells[_fw0(s) : _fw0(s) + m]],
            followers_correct=[int(c) for c in cells[_fc0(s) : _fc0(s) + m]],
            uninformed_wrong=int(cells[_uw(s)]),
            uninformed_correct=int(cells[_uc(s)]),
        )

    def copy(self) -> "AgentCounts":
        return AgentCounts.from_cells(self.to_cells(), self.s)

    def fractions(self) -> np.ndarray:
        """State as fractions in trace column order (alpha .. gamma, u)."""
        n = self.n
        m = self.num_bins
        out = np.empty(2 + (m + 1) + m + 1)
        out[0] = self.leaders_wrong / n
        out[1] = self.leaders_undecided / n
        for j in range(m):
            out[2 + j] = self.followers_wrong[j] / n
        out[2 + m] = self.uninformed_wrong / n
        for j in range(m):
            out[3 + m + j] = (self.followers_wrong[j] + self.followers_correct[j]) / n
        out[3 + 2 * m] = self.uninformed_total / n
        return out


@dataclass(frozen=True)
class StepOutcome:
    """Bookkeeping for one wake event."""

    communicated: bool
    consensus_relevant_change: bool
    wake_class: WakeClass


def _minority_count(group: int, rho: float) -> int:
    """Wrong-side count for a class of `group` agents at advantage rho.

    Nearest integer to group*(1-rho)/2; ties and the rounding deficit go
    to the correct side, so the realized advantage never drops below rho
    by more than one agent's worth.
    """
    return max(0, math.ceil(group * (1.0 - rho) / 2.0 - 0.5))


def init_population(params: ProtocolParams) -> AgentCounts:
    """Deterministic initial census for the given parameters.

    Leaders are all decisive, no follower is uninformed, followers spread
    over bins 1..8s as evenly as possible (earlier bins take the
    remainder), and every class splits wrong:correct = (1-rho):(1+rho)
    with the stated rounding rule.
    """
    leaders = params.num_leaders
    followers = params.n - leaders
    m = params.num_bins

    lw = _minority_count(leaders, params.rho)
    fw, fc = [], []
    prev = 0
    for j in range(1, m + 1):
        edge = (followers * j) // m
        size = edge - prev
        prev = edge
        wrong = _minority_count(size, params.rho)
        fw.append(wrong)
        fc.append(size - wrong)

    counts = AgentCounts(
        leaders_correct=leaders - lw,
        leaders_wrong=lw,
        leaders_undecided=0,
        followers_wrong=fw,
        followers_correct=fc,
        uninformed_wrong=0,
        uninformed_correct=0,
    )
    counts.validate()
    return counts


@maybe_jit
def _pick_cell(cells, target, skip):
    """Index of the cell containing `target` when cells are laid end to end.

    `skip` (or -1) marks a cell whose effective count is reduced by one:
    the waking agent is excluded when drawing its partner.
    """
    acc = 0
    for i in range(cells.shape[0]):
        c = cells[i]
        if i == skip:
            c -= 1
        acc += c
        if target < acc:
            return i
    return cells.shape[0] - 1  # unreachable for valid targets


@maybe_jit
def _transition(cells, s, waker, partner, heads):
    """Apply one wake deterministically. Mutates `cells`.

    `partner` is -1 for silent wakes; `heads` is only read for decisive
    leader wakes. Returns (communicated, consensus_relevant, bad_delta)
    where bad_delta is the change in wrong+undecided mass.
    """
    m = 8 * s
    fw0 = 3
    fc0 = 3 + m
    uw = 3 + 2 * m
    uc = 4 + 2 * m

    if fw0 <= waker < fc0:  # informed follower, wrong bit
        j = waker - fw0  # 0-based bin
        cells[waker] -= 1
        if j == m - 1:
            cells[uw] += 1
        else:
            cells[waker + 1] += 1
        return False, True, 0

    if fc0 <= waker < uw:  # informed follower, correct bit
        j = waker - fc0
        cells[waker] -= 1
        if j == m - 1:
            cells[uc] += 1
        else:
            cells[waker + 1] += 1
        return False, False, 0

    if waker == uw or waker == uc:  # uninformed: copy bit+counter from informed
        if fw0 <= partner < fc0:
            cells[waker] -= 1
            cells[fw0 + (partner - fw0)] += 1
            if waker == uc:
                return True, True, 1
            return True, True, 0
        if fc0 <= partner < uw:
            cells[waker] -= 1
            cells[fc0 + (partner - fc0)] += 1
            if waker == uw:
                return True, True, -1
            return True, False, 0
        return True, False, 0

    if waker == LC or waker == LW:  # decisive leader
        informed_wrong = fw0 <= partner < fc0
        informed_correct = fc0 <= partner < uw
        if not (informed_wrong or informed_correct):
            return True, False, 0
        if heads:  # push own bit, reset partner's counter to bin 1
            if waker == LC:
                cells[partner] -= 1
                cells[fc0] += 1
                if informed_wrong:
                    return True, True, -1
                return True, False, 0
            cells[partner] -= 1
            cells[fw0] += 1
            if informed_correct:
                return True, True, 1
            # wrong bit onto already-wrong follower: only the bin moved
            return True, partner != fw0, 0
        # pull: go undecided on mismatch
        if waker == LC and informed_wrong:
            cells[LC] -= 1
            cells[LU] += 1
            return True, True, 1
        if waker == LW and informed_correct:
            cells[LW] -= 1
            cells[LU] += 1
            return True, True, 0
        return True, False, 0

    # undecided leader: adopt the partner's bit if informed
    if fw0 <= partner < fc0:
        cells[LU] -= 1
        cells[LW] += 1
        return True, True, 0
    if fc0 <= partner < uw:
        cells[LU] -= 1
        cells[LC] += 1
        return True, True, -1
    return True, False, 0


def _wake_class_of(idx: int, s: int) -> WakeClass:
    if idx in (LC, LW):
        return WakeClass.LEADER_DECISIVE
    if idx == LU:
        return WakeClass.LEADER_UNDECIDED
    if idx in (_uw(s), _uc(s)):
        return WakeClass.UNINFORMED
    return WakeClass.FOLLOWER_INFORMED


def _communicates(idx: int, s: int) -> bool:
    return idx <= LU or idx >= _uw(s)


def transition(
    state: AgentCounts,
    waker: int,
    partner: Optional[int] = None,
    coin_heads: Optional[bool] = None,
) -> tuple[AgentCounts, StepOutcome]:
    """Deterministic one-step transition for given (waker, partner, coin).

    `waker` and `partner` are flat cell indices (see module layout); this
    is the enumeration entry point used to compute exact one-step
    expectations.
    """
    cells = np.asarray(state.to_cells(), dtype=np.int64).copy()
    s = state.s
    p = -1 if partner is None else partner
    heads = bool(coin_heads) if coin_heads is not None else False
    communicated, relevant, _ = _transition(cells, s, waker, p, heads)
    out = StepOutcome(
        communicated=bool(communicated),
        consensus_relevant_change=bool(relevant),
        wake_class=_wake_class_of(waker, s),
    )
    return AgentCounts.from_cells(cells, s), out


def apply_wake(state: AgentCounts, rng: np.random.Generator) -> tuple[AgentCounts, StepOutcome]:
    """Sample one wake event and apply it.

    Draw order (fixed for reproducibility): waking agent uniform over n,
    then, only if the waker communicates, a partner uniform over the
    remaining n-1, then, only for a decisive leader meeting an informed
    follower, a fair coin (heads = push).
    """
    s = state.s
    cells = np.asarray(state.to_cells(), dtype=np.int64)
    n = int(cells.sum())
    waker = int(_pick_cell(cells, int(rng.integers(0, n)), -1))

    partner = -1
    heads = False
    if _communicates(waker, s):
        partner = int(_pick_cell(cells, int(rng.integers(0, n - 1)), waker))
        if waker in (LC, LW) and _fw0(s) <= partner < _uw(s):
            heads = bool(rng.integers(0, 2))

    new_cells = cells.copy()
    communicated, relevant, _ = _transition(new_cells, s, waker, partner, heads)
    outcome = StepOutcome(
        communicated=bool(communicated),
        consensus_relevant_change=bool(relevant),
        wake_class=_wake_class_of(waker, s),
    )
    return AgentCounts.from_cells(new_cells, s), outcome


def consensus_reached(state: AgentCounts) -> bool:
    """True iff no agent holds the wrong bit and no leader is undecided."""
    return (
        state.leaders_wrong == 0
        and state.leaders_undecided == 0
        and state.uninformed_wrong == 0
        and not any(state.followers_wrong)
    )
