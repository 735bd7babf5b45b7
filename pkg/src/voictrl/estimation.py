"""Minimum mean-square-error estimators and the error/mismatch recursions.

The event trigger's estimate x_check and the controller's estimate x_hat are
exact conditional means under the delayed-output model. Two derived signals
drive everything downstream:

    e[k]  = x[k] - x_hat[k]          (estimation error at the controller)
    et[k] = x_check[k] - x_hat[k]    (estimation mismatch)

Both satisfy linear recursions in the process noise; the covariances of the
accumulated noise sums are what the dynamic programs consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelError, SystemModel

__all__ = [
    "ModelPowers",
    "NoiseSumCov",
    "trigger_mmse",
    "controller_update",
    "error_recursion",
    "noise_sum_cov",
    "mismatch_closed_form",
]


class ModelPowers:
    """Caches A^t, A^t B, and cumulative noise covariances up to a horizon.

    ``sigma(j)`` is sum_{t=0..j} A^t W (A^t)^T with sigma(-1) = 0. Powers are
    built incrementally (no eigendecomposition), so non-diagonalizable A is
    handled exactly.
    """

    def __init__(self, model: SystemModel, kmax: int):
        n, m = model.n, model.m
        kmax = max(int(kmax), 1)
        self.kmax = kmax
        self.apow = np.empty((kmax + 1, n, n))
        self.apow[0] = np.eye(n)
        for t in range(1, kmax + 1):
            self.apow[t] = model.A @ self.apow[t - 1]
        self.abpow = self.apow @ model.B  # A^t B, shape (kmax+1, n, m)
        terms = np.einsum("tij,jk,tlk->til", self.apow, model.W, self.apow)
        self._cum = np.zeros((kmax + 2, n, n))
        np.cumsum(terms, axis=0, out=self._cum[1:])
        self._m0 = model.M0

    def sigma(self, j: int) -> np.ndarray:
        """sum_{t=0..j} A^t W (A^t)^T; j = -1 gives the zero matrix."""
        if j < -1 or j > self.kmax:
            raise ModelError(f"sigma index {j} outside cached range [-1, {self.kmax}]")
        return self._cum[j + 1]

    def gap(self, zeta: int, eta: int) -> np.ndarray:
        """sum_{t=zeta+1..eta} A^t W (A^t)^T for finite eta >= zeta."""
        if eta < zeta:
            raise ModelError(f"gap requires zeta <= eta, got ({zeta}, {eta})")
        return self.sigma(eta) - self.sigma(zeta)

    def gap_unreceived(self, zeta: int, k: int) -> np.ndarray:
        """Gap against an infinite controller age at time k.

        Before the first reception the controller runs open loop from m0, so
        the covariance surplus is the noise accumulated since the trigger's
        observation plus the propagated initial covariance:
        sum_{t=zeta+1..k} A^t W (A^t)^T + A^{k+1} M0 (A^{k+1})^T.
        """
        ak = self.apow[k + 1]
        return self.sigma(k) - self.sigma(zeta) + ak @ self._m0 @ ak.T


@dataclass(frozen=True)
class NoiseSumCov:
    """Covariances of the noise sums between the two information sets."""

    sigma: np.ndarray  # sum_{t=0..zeta} A^t W (A^t)^T
    gap: np.ndarray    # sum_{t=zeta+1..eta} A^t W (A^t)^T (M0 term when eta = inf)


def noise_sum_cov(model: SystemModel, zeta: int, eta, k: int | None = None) -> NoiseSumCov:
    """Sigma(zeta) and Gap(zeta, eta); eta = inf needs the time index k."""
    if not math.isinf(eta) and eta < zeta:
        raise ModelError(f"noise_sum_cov requires zeta <= eta, got ({zeta}, {eta})")
    if math.isinf(eta):
        if k is None:
            raise ModelError("eta = inf requires the time index k")
        pw = ModelPowers(model, max(zeta, k) + 1)
        return NoiseSumCov(sigma=pw.sigma(zeta), gap=pw.gap_unreceived(zeta, k))
    pw = ModelPowers(model, max(zeta, int(eta)) + 1)
    return NoiseSumCov(sigma=pw.sigma(zeta), gap=pw.gap(zeta, int(eta)))


def trigger_mmse(model: SystemModel, freshest_obs, zeta: int, inputs) -> np.ndarray:
    """Trigger-side estimate A^zeta x[k-zeta] + sum_{t=1..zeta} A^{t-1} B u[k-t].

    ``inputs`` holds u[k-zeta], ..., u[k-1] oldest first (zeta rows).
    """
    x = np.asarray(freshest_obs, dtype=float).reshape(model.n)
    u = np.asarray(inputs, dtype=float).reshape(-1, model.m)
    if u.shape[0] != zeta:
        raise ModelError(f"need the {zeta} most recent inputs, got {u.shape[0]}")
    pw = ModelPowers(model, max(zeta, 1))
    out = pw.apow[zeta] @ x
    for t in range(1, zeta + 1):
        out += pw.abpow[t - 1] @ u[zeta - t]
    return out


def controller_update(model: SystemModel, x_hat, u_k, received=None, inputs=None) -> np.ndarray:
    """Controller estimate at k+1 from the estimate at k.

    With no reception: A x_hat + B u_k (signaling residual forced to zero).
    When the observation sent at time k arrives, ``received`` is the pair
    (x[k-zeta], zeta) and ``inputs`` holds u[k-zeta], ..., u[k-1] oldest
    first; the update is then A^{zeta+1} x[k-zeta] + sum_{t=0..zeta} A^t B u[k-t].
    """
    x_hat = np.asarray(x_hat, dtype=float).reshape(model.n)
    u_k = np.asarray(u_k, dtype=float).reshape(model.m)
    if received is None:
        return model.A @ x_hat + model.B @ u_k
    obs, zeta = received
    obs = np.asarray(obs, dtype=float).reshape(model.n)
    u = np.zeros((0, model.m)) if inputs is None else np.asarray(inputs, dtype=float).reshape(-1, model.m)
    if u.shape[0] != zeta:
        raise ModelError(f"need the {zeta} inputs preceding u_k, got {u.shape[0]}")
    pw = ModelPowers(model, zeta + 1)
    out = pw.apow[zeta + 1] @ obs + pw.abpow[0] @ u_k
    for t in range(1, zeta + 1):
        out += pw.abpow[t] @ u[zeta - t]
    return out


def error_recursion(model: SystemModel, e_k, e_tilde_k, delta_k: int,
                    zeta_k: int, zeta_next: int, noises) -> tuple[np.ndarray, np.ndarray]:
    """One step of the error and mismatch recursions.

    ``noises[j]`` = w[k-j] for j = 0..zeta_k (newest first). Returns
    (e[k+1], et[k+1]) where

        e[k+1]  = (1-delta) (A e + w[k]) + delta sum_{t=0..zeta_k} A^t w[k-t]
        et[k+1] = (1-delta) A et + sum_{t=zeta_next..zeta_k} A^t w[k-t]
    """
    e_k = np.asarray(e_k, dtype=float).reshape(model.n)
    et_k = np.asarray(e_tilde_k, dtype=float).reshape(model.n)
    w = np.asarray(noises, dtype=float).reshape(-1, model.n)
    if w.shape[0] < zeta_k + 1:
        raise ModelError(f"need noises w[k-j] for j = 0..{zeta_k}, got {w.shape[0]}")
    pw = ModelPowers(model, max(zeta_k, 1))
    if delta_k:
        e_next = sum(pw.apow[t] @ w[t] for t in range(zeta_k + 1))
    else:
        e_next = model.A @ e_k + w[0]
    et_next = (0.0 if delta_k else 1.0) * (model.A @ et_k)
    for t in range(zeta_next, zeta_k + 1):
        et_next = et_next + pw.apow[t] @ w[t]
    return np.asarray(e_next, dtype=float), np.asarray(et_next, dtype=float)


def mismatch_closed_form(model: SystemModel, noises, zeta: int, eta,
                         k: int | None = None, x0_dev=None) -> np.ndarray:
    """Closed-form mismatch sum_{t=zeta+1..eta} A^{t-1} w[k-t].

    ``noises[j]`` = w[k-j] (newest first, at least eta entries for finite
    eta). For eta = inf (nothing received yet) the sum runs to t = k and the
    term A^k (x0 - m0) is added, with ``x0_dev`` = x0 - m0.
    """
    w = np.asarray(noises, dtype=float).reshape(-1, model.n)
    hi = int(k) if math.isinf(eta) else int(eta)
    pw = ModelPowers(model, max(hi, 1))
    out = np.zeros(model.n)
    for t in range(zeta + 1, hi + 1):
        out += pw.apow[t - 1] @ w[t]
    if math.isinf(eta):
        out += pw.apow[hi] @ np.asarray(x0_dev, dtype=float).reshape(model.n)
    return out
