import numpy as np
import pytest

from voictrl import DelayModel, SystemModel, solve_riccati
from voictrl.oracle import (
    OracleSizeError,
    oracle_path,
    oracle_restricted,
)


def tiny_path_model(N):
    return SystemModel(A=1.1, B=1.0, W=1.0, Q=1.0, R=0.1, m0=0.0, M0=0.0,
                       N=N, theta=2.0, delay=DelayModel.none(), noise="two-point")


def tiny_restricted_model(N, delay):
    return SystemModel(A=1.1, B=1.0, W=1.0, Q=1.0, R=0.1, m0=0.0, M0=1.0,
                       N=N, theta=2.0, delay=delay)


class TestPathOracle:
    @pytest.mark.parametrize("N", [0, 1, 2, 3])
    def test_enumeration_matches_exact_recursion(self, N):
        m = tiny_path_model(N)
        rep = oracle_path(m, solve_riccati(m))
        assert rep.rel_diff < 1e-9

    def test_horizon_guard(self):
        m = tiny_path_model(3)
        object.__setattr__(m, "N", 6)
        with pytest.raises(OracleSizeError, match="N <= 3"):
            oracle_path(m, solve_riccati(tiny_path_model(3)))

    def test_gaussian_noise_rejected(self):
        m = SystemModel(A=1.1, B=1.0, W=1.0, Q=1.0, R=0.1, m0=0.0, M0=0.0,
                        N=2, theta=2.0, delay=DelayModel.none())
        with pytest.raises(OracleSizeError, match="two-point"):
            oracle_path(m, solve_riccati(m))

    def test_random_initial_state_rejected(self):
        m = SystemModel(A=1.1, B=1.0, W=1.0, Q=1.0, R=0.1, m0=0.0, M0=1.0,
                        N=2, theta=2.0, delay=DelayModel.none(), noise="two-point")
        with pytest.raises(OracleSizeError, match="M0"):
            oracle_path(m, solve_riccati(m))

    def test_transmissions_do_occur_at_low_price(self):
        """The enumerated optimum beats never-transmitting when theta is low,
        so the comparison is not vacuous."""
        m = SystemModel(A=1.1, B=1.0, W=1.0, Q=1.0, R=0.1, m0=0.0, M0=0.0,
                        N=3, theta=0.2, delay=DelayModel.none(), noise="two-point")
        sched = solve_riccati(m)
        rep = oracle_path(m, sched)
        never = float(sum(sched.Gamma[k, 0, 0] * _never_second_moment(m, k)
                          for k in range(m.N + 1)))
        assert rep.enum_value < never - 1e-6
        assert rep.rel_diff < 1e-9


def _never_second_moment(model, k):
    """E e[k]^2 under the never-transmit policy (open-loop estimate)."""
    a, w = float(model.A[0, 0]), float(model.W[0, 0])
    return float(model.M0[0, 0]) * a ** (2 * k) + sum(
        a ** (2 * t) * w for t in range(k))


class TestRestrictedOracle:
    def test_bernoulli_three_steps(self):
        m = tiny_restricted_model(3, DelayModel.bernoulli_fixed(1, 0.5))
        rep = oracle_restricted(m, solve_riccati(m))
        assert rep.rel_diff < 1e-9
        assert rep.n_nodes == 19

    def test_no_delay_five_steps(self):
        m = tiny_restricted_model(5, DelayModel.none())
        rep = oracle_restricted(m, solve_riccati(m))
        assert rep.rel_diff < 1e-9
        assert rep.n_nodes == 21

    def test_general_pmf_two_steps(self):
        m = tiny_restricted_model(2, DelayModel.general([0.6, 0.3, 0.1]))
        rep = oracle_restricted(m, solve_riccati(m))
        assert rep.rel_diff < 1e-9

    def test_horizon_guard(self):
        m = tiny_restricted_model(5, DelayModel.none())
        object.__setattr__(m, "N", 6)
        with pytest.raises(OracleSizeError, match="N <= 5"):
            oracle_restricted(m, solve_riccati(tiny_restricted_model(5, DelayModel.none())))

    def test_policy_bit_budget_guard(self):
        # N = 5 with a two-point delay has 41 reachable (k, zeta, eta) states:
        # map enumeration is out of budget and must be refused, not attempted.
        m = tiny_restricted_model(5, DelayModel.bernoulli_fixed(1, 0.5))
        with pytest.raises(OracleSizeError, match="bits"):
            oracle_restricted(m, solve_riccati(m))

    def test_optimum_beats_baselines(self):
        """The enumerated optimum is at least as good as every simple map."""
        m = tiny_restricted_model(3, DelayModel.bernoulli_fixed(1, 0.5))
        sched = solve_riccati(m)
        rep = oracle_restricted(m, sched)
        never = sum(float(sched.Gamma[k, 0, 0]) * _never_second_moment(m, k)
                    for k in range(m.N + 1))
        assert rep.enum_value <= never + 1e-12
