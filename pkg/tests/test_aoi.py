import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voictrl import (
    INFINITE_AGE,
    AoiState,
    update_eta,
    update_zeta,
    zeta_transition_probs,
)
from voictrl.aoi import zeta_transition_matrix


class TestUpdateZeta:
    def test_fresh_arrival(self):
        assert update_zeta(3, 2) == (2, True)

    def test_obsolete_arrival(self):
        assert update_zeta(3, 7) == (4, False)

    def test_current_state(self):
        assert update_zeta(0, 0) == (0, True)

    def test_boundary_is_obsolete(self):
        # tau exactly zeta + 1 is not strictly fresher
        assert update_zeta(2, 3) == (3, False)


class TestUpdateEta:
    def test_transmission_resets(self):
        assert update_eta(5, 2, 1) == 3

    def test_no_transmission_ages(self):
        assert update_eta(5, 2, 0) == 6

    def test_infinity_propagates(self):
        assert update_eta(INFINITE_AGE, 4, 0) == INFINITE_AGE

    def test_infinity_ends_on_transmission(self):
        assert update_eta(INFINITE_AGE, 4, 1) == 5


class TestAoiState:
    def test_initial(self):
        st0 = AoiState.initial()
        assert st0.zeta == 0 and math.isinf(st0.eta)

    def test_order_violation_rejected(self):
        with pytest.raises(ValueError):
            AoiState(zeta=3, eta=2)


@settings(max_examples=200, deadline=None)
@given(
    taus=st.lists(st.integers(min_value=0, max_value=6), min_size=1, max_size=60),
    deltas=st.lists(st.booleans(), min_size=60, max_size=60),
)
def test_joint_recursion_invariants(taus, deltas):
    """zeta <= eta, both grow by at most one, and eta stays finite after the
    first transmission."""
    zeta, eta = 0, INFINITE_AGE
    transmitted = False
    for k, tau in enumerate(taus):
        new_eta = update_eta(eta, zeta, int(deltas[k]))
        new_zeta, informative = update_zeta(zeta, tau)
        assert informative == (tau < zeta + 1)
        assert new_zeta <= zeta + 1
        assert new_eta <= eta + 1
        assert new_zeta <= new_eta
        if deltas[k]:
            transmitted = True
            assert new_eta == zeta + 1
        if transmitted:
            assert not math.isinf(new_eta)
        zeta, eta = new_zeta, new_eta


def test_zeta_bounded_by_delay_support():
    rng = np.random.default_rng(0)
    d = 5
    zeta = 0
    for _ in range(10**4):
        tau = 0 if rng.random() < 0.2 else d
        zeta, _ = update_zeta(zeta, tau)
        assert 0 <= zeta <= d


class TestZetaTransition:
    def test_probs_sum_to_one(self):
        pmf = np.array([0.2, 0.0, 0.0, 0.8])
        for z in range(6):
            probs = zeta_transition_probs(pmf, z)
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_informative_mass_splits(self):
        pmf = np.array([0.2, 0.3, 0.5])
        probs = zeta_transition_probs(pmf, 1)
        assert probs[0] == 0.2 and probs[1] == 0.3
        assert probs[2] == pytest.approx(0.5)

    def test_matrix_rows_stochastic(self):
        pmf = np.array([0.2, 0.0, 0.8])
        P = zeta_transition_matrix(pmf, 2)
        assert np.allclose(P.sum(axis=1), 1.0)
        # at zeta = zmax no obsolete mass can escape: tau >= zmax + 1 never occurs
        assert P[2, 2] == pytest.approx(0.8)

    def test_matrix_rejects_escaping_support(self):
        with pytest.raises(ValueError):
            zeta_transition_matrix(np.array([0.5, 0.5]), 0)

    def test_empirical_transition_frequencies(self):
        pmf = np.array([0.3, 0.0, 0.7])
        P = zeta_transition_matrix(pmf, 2)
        rng = np.random.default_rng(9)
        counts = np.zeros((3, 3))
        zeta = 0
        for _ in range(10**5):
            tau = rng.choice(3, p=pmf)
            new, _ = update_zeta(zeta, tau)
            counts[zeta, new] += 1
            zeta = new
        for z in range(3):
            tot = counts[z].sum()
            if tot == 0:
                continue
            for z2 in range(3):
                p = P[z, z2]
                se = np.sqrt(max(p * (1 - p), 1e-12) / tot)
                assert abs(counts[z, z2] / tot - p) < 4 * se
