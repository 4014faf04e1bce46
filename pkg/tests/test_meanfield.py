import numpy as np
import pytest

from popcon import meanfield as mf
from popcon.population import ProtocolParams, init_population
from popcon.verify import euler_trace


def symmetric_state():
    # s=5, alpha=0.1, delta=0, gamma_j=0.02, beta_j=0.01: Gamma=0.8, R=1.1
    m = 40
    return mf.MeanFieldState(
        s=5,
        t=0.0,
        alpha=0.1,
        delta=0.0,
        beta=np.array([0.01] * m + [0.0]),
        gamma=np.full(m, 0.02),
    )


def test_rhs_hand_values():
    dy = mf.rhs(symmetric_state())
    assert dy[0] == pytest.approx(-0.02, abs=1e-15)  # alpha'
    assert dy[2] == pytest.approx(0.029, abs=1e-15)  # beta_1'
    assert dy[1] == pytest.approx(0.04, abs=1e-15)  # delta'


def test_rhs_unanimous_fixed_point():
    st = mf.initial_state(5, 1.0)
    dy = mf.rhs(st)
    m = st.m
    assert dy[0] == 0.0 and dy[1] == 0.0
    assert np.all(dy[2 : 3 + m] == 0.0)


def test_leader_mass_conserved():
    # the correct-leader rate, written from the interaction rules directly
    st = symmetric_state()
    dy = mf.rhs(st)
    c = 1.0 / st.s - st.alpha - st.delta
    c_dot = -0.5 * c * st.beta_sum + st.delta * (st.Gamma - st.beta_sum)
    assert dy[0] + dy[1] + c_dot == pytest.approx(0.0, abs=1e-15)


def test_rhs_domain_errors_name_the_inequality():
    st = symmetric_state()
    st.alpha = -0.01
    with pytest.raises(mf.DomainError, match="alpha >= 0"):
        mf.rhs(st)
    st2 = symmetric_state()
    st2.beta[2] = 0.05  # above gamma_3 = 0.02
    with pytest.raises(mf.DomainError, match="beta_3 <= gamma_3"):
        mf.rhs(st2)


def test_initial_state_matches_census_fractions():
    p = ProtocolParams(n=3000, s=5, rho=0.1)
    from_counts = mf.state_from_counts(init_population(p))
    ideal = mf.initial_state(5, 0.1)
    assert from_counts.alpha == pytest.approx(ideal.alpha, abs=1e-12)
    np.testing.assert_allclose(from_counts.gamma, ideal.gamma, atol=1e-12)
    np.testing.assert_allclose(from_counts.beta, ideal.beta, atol=1e-12)


def test_advantages_initial_and_extremes():
    v = mf.advantages(mf.initial_state(5, 0.1))
    assert v.xi == pytest.approx(0.1, abs=1e-14)
    np.testing.assert_allclose(v.eta, 0.1, atol=1e-14)
    st = mf.initial_state(5, 1.0)  # no wrong mass anywhere
    v1 = mf.advantages(st)
    assert v1.xi == 1.0 and np.all(v1.eta == 1.0)


def test_eta_bar_is_gamma_weighted_mean():
    tr = mf.integrate(mf.initial_state(5, 0.1), 30.0, record_every=50)
    for i in range(0, len(tr), 7):
        st = mf.state_from_trace(tr, i)
        v = mf.advantages(st)
        mixed = float(np.dot(st.gamma, v.eta) / st.Gamma)
        assert v.eta_bar == pytest.approx(mixed, abs=1e-12)


def test_advantage_rates_match_finite_differences():
    tr = mf.integrate(mf.initial_state(5, 0.1), 20.0, step=0.01, record_every=100)
    h = 1e-5
    for i in range(0, len(tr), 2):
        s0 = mf.state_from_trace(tr, i)
        tiny = mf.integrate(s0, s0.t + h, step=h)
        assert len(tiny) == 2
        s1 = mf.state_from_trace(tiny, 1)
        dt = s1.t - s0.t
        v0, v1 = mf.advantages(s0), mf.advantages(s1)
        assert (v1.xi - v0.xi) / dt == pytest.approx(mf.xi_rate(s0), abs=50 * h)
        np.testing.assert_allclose(
            (v1.eta - v0.eta) / dt, mf.eta_rates(s0), atol=50 * h
        )


def test_integrate_mass_identity_and_validation():
    tr = mf.integrate(mf.initial_state(7, 0.3), 25.0, record_every=10)
    tr.validate()
    mass = 1.0 / 7 + tr.Gamma + tr.u
    assert np.max(np.abs(mass - 1.0)) <= 1e-12


def test_integrate_fourth_order_convergence():
    def final(h):
        t = mf.integrate(mf.initial_state(5, 0.1), 10.0, step=h, record_every=10**9)
        return t.samples[-1, :83]

    d1 = np.abs(final(0.2) - final(0.1)).max()
    d2 = np.abs(final(0.1) - final(0.05)).max()
    assert 8.0 <= d1 / d2 <= 32.0  # halving the step cuts the error ~16x


def test_integrate_matches_fine_euler_oracle():
    st = mf.initial_state(5, 0.1)
    tr = mf.integrate(st, 50.0, step=0.005, record_every=2)
    times, states = euler_trace(st, 50.0, 0.005 / 100.0, 200)
    k = min(len(tr), len(states))
    np.testing.assert_allclose(tr.sample_times[:k], times[:k], atol=1e-9)
    assert np.max(np.abs(tr.samples[:k, :83] - states[:k])) <= 1e-6


def test_integrate_domain_exit_reports_time():
    # a grossly unstable step blows the state out of the domain immediately
    with pytest.raises(mf.DomainExitError) as exc:
        mf.integrate(mf.initial_state(2, 0.5), 100.0, step=10.0)
    assert exc.value.t > 0.0


def test_integrate_record_every_keeps_last_step():
    tr = mf.integrate(mf.initial_state(3, 0.5), 1.0, step=0.01, record_every=7)
    assert tr.sample_times[0] == 0.0
    assert tr.sample_times[-1] == pytest.approx(1.0, abs=1e-9)
    steps = np.rint(np.diff(tr.sample_times) / 0.01).astype(int)
    assert set(steps[:-1]) == {7}


def test_default_step():
    assert mf.default_step(5) == 0.01
    assert mf.default_step(32) == pytest.approx(1 / 320)
