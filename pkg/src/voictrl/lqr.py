"""Backward Riccati recursion, LQR gain schedule, and loss weighting matrices.

The backward sweep produces, for k = 0..N,

    S[k]     = Q + A^T S[k+1] A - A^T S[k+1] B (B^T S[k+1] B + R)^{-1} B^T S[k+1] A
    L[k]     = (B^T S[k+1] B + R)^{-1} B^T S[k+1] A
    Gamma[k] = A^T S[k+1] B (B^T S[k+1] B + R)^{-1} B^T S[k+1] A

with S[N+1] = Q and Gamma[N+1] = 0. Gamma weights the estimation error in
the communication-equivalent loss sum_k theta delta[k] + ||e[k]||^2_Gamma[k].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import SystemModel

__all__ = ["LqrSchedule", "solve_riccati", "control_input"]


@dataclass(frozen=True, eq=False)
class LqrSchedule:
    """Riccati matrices S[0..N+1], gains L[0..N], weights Gamma[0..N+1]."""

    S: np.ndarray      # (N+2, n, n)
    L: np.ndarray      # (N+1, m, n)
    Gamma: np.ndarray  # (N+2, n, n), Gamma[N+1] = 0

    @property
    def horizon(self) -> int:
        return self.S.shape[0] - 2


def solve_riccati(model: SystemModel) -> LqrSchedule:
    """Full backward sweep; linear solves via Cholesky, S symmetrized each step."""
    A, B, Q, R = model.A, model.B, model.Q, model.R
    N, n, m = model.N, model.n, model.m
    S = np.empty((N + 2, n, n))
    L = np.empty((N + 1, m, n))
    Gamma = np.zeros((N + 2, n, n))
    S[N + 1] = Q
    for k in range(N, -1, -1):
        Sn = S[k + 1]
        BtS = B.T @ Sn
        G = cho_factor(BtS @ B + R, lower=True)
        L[k] = cho_solve(G, BtS @ A)
        Gamma[k] = (A.T @ Sn @ B) @ L[k]
        Gamma[k] = 0.5 * (Gamma[k] + Gamma[k].T)
        Sk = Q + A.T @ Sn @ A - Gamma[k]
        asym = np.abs(Sk - Sk.T).max()
        if asym > 1e-8 * (1.0 + np.abs(Sk).max()):
            warnings.warn(f"Riccati iterate at k={k} asymmetric by {asym:.2e}")
        S[k] = 0.5 * (Sk + Sk.T)
    return LqrSchedule(S=S, L=L, Gamma=Gamma)


def control_input(schedule: LqrSchedule, x_hat, k: int) -> np.ndarray:
    """Certainty-equivalent input u[k] = -L[k] x_hat[k]."""
    if not 0 <= k <= schedule.horizon:
        raise ValueError(f"k={k} outside the schedule horizon {schedule.horizon}")
    return -(schedule.L[k] @ np.asarray(x_hat, dtype=float).reshape(-1))
