"""Triggering policies: the two solved voi policies and simple baselines.

A policy maps its declared information snapshot (k, zeta, eta, e_tilde) to a
transmit bit. Batch methods operate on per-run arrays so the simulator can
evaluate many trajectories at once; ``decide`` is the scalar entry point.
"""

from __future__ import annotations

import math

import numpy as np

from .solver import PathValueTable, RestrictedValueTable

__all__ = [
    "TriggerPolicy",
    "AlwaysOn",
    "Never",
    "Periodic",
    "AoiThreshold",
    "OneSidedMismatch",
    "RestrictedVoiPolicy",
    "PathVoiPolicy",
    "decide",
]


class TriggerPolicy:
    """Base policy; voi-based policies transmit iff voi >= 0 (ties transmit)."""

    name = "base"

    def voi_batch(self, k, zeta, eta, e_tilde):
        """Per-run voi values, or None for policies without a voi."""
        return None

    def decide_batch(self, k, zeta, eta, e_tilde) -> np.ndarray:
        voi = self.voi_batch(k, zeta, eta, e_tilde)
        if voi is None:
            raise NotImplementedError
        return voi >= 0.0


class AlwaysOn(TriggerPolicy):
    name = "always"

    def decide_batch(self, k, zeta, eta, e_tilde):
        return np.ones(np.shape(zeta), dtype=bool)


class Never(TriggerPolicy):
    name = "never"

    def decide_batch(self, k, zeta, eta, e_tilde):
        return np.zeros(np.shape(zeta), dtype=bool)


class Periodic(TriggerPolicy):
    """Transmit at k = 0, period, 2*period, ..."""

    def __init__(self, period: int):
        if period < 1:
            raise ValueError("period must be a positive integer")
        self.period = int(period)
        self.name = f"periodic:{self.period}"

    def decide_batch(self, k, zeta, eta, e_tilde):
        return np.full(np.shape(zeta), k % self.period == 0, dtype=bool)


class AoiThreshold(TriggerPolicy):
    """Transmit when the controller age exceeds the threshold (inf counts)."""

    def __init__(self, threshold: float):
        self.threshold = float(threshold)
        self.name = f"aoi-threshold:{self.threshold:g}"

    def decide_batch(self, k, zeta, eta, e_tilde):
        return np.asarray(eta) > self.threshold


class OneSidedMismatch(TriggerPolicy):
    """Transmit iff the (scalar) mismatch exceeds c; deliberately asymmetric.

    Diagnostic negative control: it violates the symmetry that makes the
    zero-signaling-residual estimate exact.
    """

    def __init__(self, c: float):
        self.c = float(c)
        self.name = f"one-sided:{self.c:g}"

    def decide_batch(self, k, zeta, eta, e_tilde):
        return np.asarray(e_tilde)[..., 0] > self.c


class RestrictedVoiPolicy(TriggerPolicy):
    """Table lookup over the age pair (zeta, eta)."""

    name = "restricted-voi"

    def __init__(self, table: RestrictedValueTable):
        self.table = table

    def voi_batch(self, k, zeta, eta, e_tilde):
        t = self.table
        eta = np.asarray(eta, dtype=float)
        idx = np.where(np.isinf(eta), t.eta_inf_col,
                       np.minimum(eta, t.N + 1)).astype(int)
        return t.voi[k, np.asarray(zeta, dtype=int), idx]


class PathVoiPolicy(TriggerPolicy):
    """Interpolated voi lookup over (zeta, mismatch); clamps out-of-grid queries."""

    name = "path-voi"

    def __init__(self, table: PathValueTable):
        self.table = table

    @property
    def n_clamped(self) -> int:
        return self.table.n_clamped

    def voi_batch(self, k, zeta, eta, e_tilde):
        t = self.table
        zeta = np.atleast_1d(np.asarray(zeta, dtype=int))
        e = np.atleast_1d(np.asarray(e_tilde, dtype=float))[..., 0]
        out = np.empty(zeta.shape)
        for z in np.unique(zeta):
            sel = zeta == z
            out[sel] = t.voi_at(k, int(z), e[sel])
        return out


def decide(policy: TriggerPolicy, k: int, zeta: int, eta=math.inf, e_tilde=None) -> int:
    """Scalar decision from an information snapshot."""
    e = np.zeros((1, 1)) if e_tilde is None else np.asarray(e_tilde, dtype=float).reshape(1, -1)
    bit = policy.decide_batch(int(k), np.array([int(zeta)]), np.array([float(eta)]), e)
    return int(np.asarray(bit).reshape(-1)[0])
