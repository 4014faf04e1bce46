import numpy as np
import pytest

from popcon.population import (
    LC,
    LW,
    LU,
    AgentCounts,
    ProtocolParams,
    WakeClass,
    _fc0,
    _fw0,
    _uc,
    apply_wake,
    consensus_reached,
    init_population,
    transition,
)


class FakeRng:
    """Scripted integer draws, for steering apply_wake deterministically."""

    def __init__(self, values):
        self.values = list(values)

    def integers(self, lo, hi):
        v = self.values.pop(0)
        assert lo <= v < hi, f"scripted draw {v} outside [{lo}, {hi})"
        return v


def small_state():
    # n=8, s=2: leaders (2 correct, 1 wrong, 1 undecided), one wrong and one
    # correct follower in bin 1, one uninformed of each belief
    fw = [0] * 16
    fc = [0] * 16
    fw[0] = 1
    fc[0] = 1
    c = AgentCounts(2, 1, 1, fw, fc, 1, 1)
    c.validate()
    return c


def test_params_validation():
    with pytest.raises(ValueError):
        ProtocolParams(n=10, s=1, rho=0.5)
    with pytest.raises(ValueError):
        ProtocolParams(n=3, s=2, rho=0.5)
    with pytest.raises(ValueError):
        ProtocolParams(n=10, s=3, rho=0.5)  # s does not divide n
    with pytest.raises(ValueError):
        ProtocolParams(n=10, s=2, rho=0.0)
    with pytest.raises(ValueError):
        ProtocolParams(n=10, s=2, rho=1.5)
    p = ProtocolParams(n=3000, s=5, rho=0.1)
    assert p.num_leaders == 600 and p.num_bins == 40


def test_init_standard_case():
    c = init_population(ProtocolParams(n=3000, s=5, rho=0.1))
    assert c.leader_total == 600
    assert (c.leaders_wrong, c.leaders_correct, c.leaders_undecided) == (270, 330, 0)
    assert c.uninformed_wrong == c.uninformed_correct == 0
    assert all(w == 27 and r == 33 for w, r in zip(c.followers_wrong, c.followers_correct))
    assert c.n == 3000


def test_init_unanimous():
    c = init_population(ProtocolParams(n=16, s=2, rho=1.0))
    assert c.leaders_correct == 8 and c.leaders_wrong == 0
    assert sum(c.followers_correct) == 8 and sum(c.followers_wrong) == 0
    assert consensus_reached(c)


def test_init_rounding_deficit_to_correct():
    # 60 per bin at rho=0.02: 29.4 rounds down to 29 wrong, 31 correct
    c = init_population(ProtocolParams(n=3000, s=5, rho=0.02))
    assert c.leaders_wrong == 294
    assert all(w == 29 and r == 31 for w, r in zip(c.followers_wrong, c.followers_correct))


def test_init_uneven_bins_split_deterministically():
    # 10 followers over 16 bins: sizes in {0, 1}, total preserved
    c = init_population(ProtocolParams(n=20, s=2, rho=0.5))
    sizes = [w + r for w, r in zip(c.followers_wrong, c.followers_correct)]
    assert sum(sizes) == 10 and set(sizes) <= {0, 1}
    c2 = init_population(ProtocolParams(n=20, s=2, rho=0.5))
    assert c2.to_cells() == c.to_cells()


def test_wrong_leader_pull_mismatch_goes_undecided():
    c = small_state()
    s = c.s
    new, out = transition(c, LW, _fc0(s), coin_heads=False)
    assert new.leaders_wrong == c.leaders_wrong - 1
    assert new.leaders_undecided == c.leaders_undecided + 1
    assert out.communicated and out.consensus_relevant_change
    assert out.wake_class is WakeClass.LEADER_DECISIVE


def test_push_resets_counter_and_flips_bit():
    c = small_state()
    s = c.s
    # correct leader pushes onto the wrong bin-1 follower
    new, out = transition(c, LC, _fw0(s), coin_heads=True)
    assert new.followers_wrong[0] == 0
    assert new.followers_correct[0] == 2
    assert out.communicated and out.consensus_relevant_change
    # wrong leader push onto a wrong bin-1 follower changes nothing visible
    new2, out2 = transition(c, LW, _fw0(s), coin_heads=True)
    assert new2.to_cells() == c.to_cells()
    assert out2.communicated and not out2.consensus_relevant_change


def test_follower_counter_walk_and_expiry():
    c = small_state()
    s = c.s
    new, out = transition(c, _fw0(s))
    assert new.followers_wrong[0] == 0 and new.followers_wrong[1] == 1
    assert not out.communicated
    assert out.wake_class is WakeClass.FOLLOWER_INFORMED
    # a follower in the last bin becomes uninformed, belief retained
    fw = [0] * 16
    fw[15] = 1
    c2 = AgentCounts(2, 1, 1, fw, [0] * 16, 1, 2)
    new2, _ = transition(c2, _fw0(2) + 15)
    assert new2.followers_wrong[15] == 0 and new2.uninformed_wrong == 2


def test_uninformed_adopts_bit_and_counter():
    c = small_state()
    s = c.s
    new, out = transition(c, _uc(s), _fw0(s))
    assert new.uninformed_correct == 0 and new.followers_wrong[0] == 2
    assert out.communicated and out.consensus_relevant_change
    # meeting a leader changes nothing but still costs a communication
    new2, out2 = transition(c, _uc(s), LC)
    assert new2.to_cells() == c.to_cells()
    assert out2.communicated and not out2.consensus_relevant_change


def test_undecided_leader_adopts():
    c = small_state()
    s = c.s
    new, _ = transition(c, LU, _fc0(s))
    assert new.leaders_undecided == 0 and new.leaders_correct == 3
    new2, _ = transition(c, LU, _fw0(s))
    assert new2.leaders_undecided == 0 and new2.leaders_wrong == 2


def test_apply_wake_scripted_draws():
    c = small_state()
    # waker draw 2 lands on the wrong leader (after 2 correct leaders);
    # partner draw 4 lands on the correct bin-1 follower once the waker is
    # excluded; coin draw 0 is tails (pull)
    new, out = apply_wake(c, FakeRng([2, 4, 0]))
    assert new.leaders_wrong == 0 and new.leaders_undecided == 2
    assert out.communicated and out.wake_class is WakeClass.LEADER_DECISIVE

    # waker draw 4 is the wrong bin-1 follower: silent counter bump
    new2, out2 = apply_wake(c, FakeRng([4]))
    assert new2.followers_wrong[1] == 1
    assert not out2.communicated
    assert out2.wake_class is WakeClass.FOLLOWER_INFORMED


def test_conservation_and_nonnegativity_random_walks():
    rng = np.random.default_rng(7)
    c = init_population(ProtocolParams(n=24, s=2, rho=0.5))
    n, leaders = c.n, c.leader_total
    for _ in range(3000):
        c, out = apply_wake(c, rng)
        assert out.communicated == (
            out.wake_class is not WakeClass.FOLLOWER_INFORMED
        )
        cells = c.to_cells()
        assert min(cells) >= 0
        assert sum(cells) == n
        assert c.leader_total == leaders


def test_consensus_absorbing():
    rng = np.random.default_rng(11)
    c = init_population(ProtocolParams(n=16, s=2, rho=1.0))
    for _ in range(500):
        c, _ = apply_wake(c, rng)
        assert consensus_reached(c)


def test_consensus_detection_cases():
    c = init_population(ProtocolParams(n=16, s=2, rho=1.0))
    assert consensus_reached(c)
    c2 = c.copy()
    c2.followers_correct[0] -= 1
    c2.uninformed_wrong += 1
    assert not consensus_reached(c2)
    c3 = c.copy()
    c3.leaders_correct -= 1
    c3.leaders_undecided += 1
    assert not consensus_reached(c3)


def test_fractions_layout():
    c = small_state()
    row = c.fractions()
    m = c.num_bins
    assert len(row) == 2 * m + 4
    assert row[0] == c.leaders_wrong / c.n
    assert row[2 + m] == c.uninformed_wrong / c.n
    assert row[3 + 2 * m] == c.uninformed_total / c.n
    np.testing.assert_allclose(
        1 / c.s + row[3 + m : 3 + 2 * m].sum() + row[3 + 2 * m], 1.0, atol=1e-12
    )
