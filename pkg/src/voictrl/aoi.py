"""Age-of-information recursions at the event trigger and at the controller.

zeta[k] is the age of the freshest observation held by the event trigger,
eta[k] the age of the freshest observation held by the controller.
eta starts at infinity (nothing received yet) and stays finite forever after
the first transmission. Infinity is the genuine float sentinel ``math.inf``,
never a saturated integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "INFINITE_AGE",
    "AoiState",
    "update_zeta",
    "update_eta",
    "zeta_transition_probs",
    "zeta_transition_matrix",
]

INFINITE_AGE = math.inf


@dataclass(frozen=True)
class AoiState:
    """Age pair (zeta, eta); eta may be ``math.inf``."""

    zeta: int
    eta: float

    def __post_init__(self):
        if self.zeta < 0:
            raise ValueError("zeta must be nonnegative")
        if self.eta < self.zeta:
            raise ValueError("eta must satisfy zeta <= eta")

    @staticmethod
    def initial() -> "AoiState":
        return AoiState(zeta=0, eta=INFINITE_AGE)


def update_zeta(zeta_prev: int, tau_k: int) -> tuple[int, bool]:
    """Advance the trigger age; returns (zeta_k, informative).

    The new observation is informative iff tau_k < zeta_prev + 1; then the
    age resets to tau_k, otherwise the held observation ages by one.
    """
    informative = tau_k < zeta_prev + 1
    return (int(tau_k) if informative else int(zeta_prev) + 1, informative)


def update_eta(eta_prev: float, zeta_prev: int, delta_prev: int) -> float:
    """Advance the controller age: zeta_prev + 1 on a transmission, else +1."""
    if delta_prev:
        return float(zeta_prev) + 1.0
    return eta_prev + 1.0  # inf + 1 = inf


def zeta_transition_probs(pmf: np.ndarray, zeta: int) -> np.ndarray:
    """Distribution of zeta' given zeta, driven by an independent tau ~ pmf.

    Entry j <= zeta carries pmf[j] (informative arrival of age j); the mass
    of all obsolete arrivals lands on zeta + 1.
    """
    pmf = np.asarray(pmf, dtype=float)
    out = np.zeros(zeta + 2)
    upto = min(zeta, pmf.size - 1)
    out[: upto + 1] = pmf[: upto + 1]
    out[zeta + 1] = pmf[zeta + 1:].sum()  # exact zero when the support fits
    return out


def zeta_transition_matrix(pmf: np.ndarray, zmax: int) -> np.ndarray:
    """Row-stochastic matrix P[z, z'] over z, z' in 0..zmax.

    Requires the pmf support to fit in 0..zmax so the obsolete-arrival mass
    at z + 1 never escapes the grid (it is zero at z = zmax).
    """
    pmf = np.asarray(pmf, dtype=float)
    if pmf.size - 1 > zmax:
        raise ValueError("pmf support exceeds the age grid")
    P = np.zeros((zmax + 1, zmax + 1))
    for z in range(zmax + 1):
        probs = zeta_transition_probs(pmf, z)
        if z + 1 <= zmax:
            P[z, : z + 2] = probs
        else:
            P[z, : zmax + 1] = probs[: zmax + 1]
            if probs[z + 1] > 0.0:
                raise ValueError("obsolete-arrival mass escapes the age grid")
    return P
