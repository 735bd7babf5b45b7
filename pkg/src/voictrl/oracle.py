"""Brute-force oracles for tiny instances.

Two independent checks of the dynamic programs:

* path variant -- scalar process, two-point noise (test mode), no delay,
  deterministic initial state. The optimal loss from an exact backward
  recursion over the reachable mismatch tree is compared against exhaustive
  enumeration of every deterministic decision tree, each evaluated by
  simulating the closed loop definitionally over all noise paths.

* restricted variant -- every map from reachable (k, zeta, eta) states to a
  transmit bit is enumerated, and each map's expected loss is computed in
  closed form over the finite tree of delay realizations (the error
  covariance given the age path is exact, no sampling involved). The minimum
  is compared against the production age-restricted solver.

Both comparisons are deterministic, so agreement is to floating-point
accumulation error, far below 1e-9 relative.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .estimation import ModelPowers
from .lqr import LqrSchedule
from .model import SystemModel
from .solver import solve_restricted_dp

__all__ = ["OracleSizeError", "OracleReport", "oracle_path", "oracle_restricted"]

MAX_PATH_HORIZON = 3
MAX_RESTRICTED_HORIZON = 5
MAX_POLICY_BITS = 22  # 2^22 candidate policies is the enumeration budget


class OracleSizeError(ValueError):
    """Instance too large for exhaustive enumeration."""


@dataclass
class OracleReport:
    variant: str
    dp_value: float
    enum_value: float
    n_policies: int
    n_nodes: int
    n_paths: int

    @property
    def abs_diff(self) -> float:
        return abs(self.dp_value - self.enum_value)

    @property
    def rel_diff(self) -> float:
        scale = max(abs(self.dp_value), abs(self.enum_value), 1e-300)
        return self.abs_diff / scale


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise OracleSizeError(msg)


def oracle_path(model: SystemModel, schedule: LqrSchedule) -> OracleReport:
    """Exact mismatch-tree recursion vs enumeration of all decision trees."""
    _require(model.N <= MAX_PATH_HORIZON,
             f"path oracle requires N <= {MAX_PATH_HORIZON}, got N={model.N}")
    if model.n != 1 or model.noise != "two-point" or model.delay.kind != "none":
        raise OracleSizeError(
            "path oracle needs a scalar model with two-point noise and no delay"
        )
    if float(model.M0[0, 0]) != 0.0:
        raise OracleSizeError("path oracle needs a deterministic initial state (M0 = 0)")
    N = model.N
    n_bits = 2 ** (N + 1) - 1  # one decision per noise-history node
    _require(n_bits <= MAX_POLICY_BITS,
             f"decision-tree enumeration needs {n_bits} bits > {MAX_POLICY_BITS}")

    a = float(model.A[0, 0])
    b = float(model.B[0, 0])
    w_var = float(model.W[0, 0])
    s = math.sqrt(w_var)
    theta = model.theta
    gam = schedule.Gamma[:, 0, 0]  # (N+2,)

    # Exact Bellman recursion on the reachable mismatch values (zeta = 0,
    # so the transition noise is exactly one two-point draw of variance W).
    @lru_cache(maxsize=None)
    def value(k: int, et: float) -> float:
        if k == N + 1:
            return 0.0
        g = gam[k + 1]
        base = g * w_var  # tr(Gamma[k+1] Sigma(0))
        best = math.inf
        for delta in (0, 1):
            mean = 0.0 if delta else a * et
            cont = 0.5 * (value(k + 1, mean + s) + value(k + 1, mean - s))
            cost = theta * delta + (0.0 if delta else g * a * a * et * et) + base + cont
            best = min(best, cost)
        return best

    dp_value = value(0, 0.0)  # psi: the e[0] term vanishes because M0 = 0

    # Enumerate every decision tree; evaluate each by closed-loop simulation
    # over all noise sign paths (bit j of a path is the sign of w[j]).
    n_pol = 1 << n_bits
    n_paths = 1 << N if N > 0 else 1
    pols = np.arange(n_pol, dtype=np.uint64)[:, None]
    paths = np.arange(n_paths, dtype=np.uint64)[None, :]
    w_signs = [np.where((paths >> np.uint64(j)) & np.uint64(1) == 1, s, -s)
               for j in range(max(N, 1))]
    m0 = float(model.m0[0])
    x = np.full((n_pol, n_paths), m0)
    xhat = np.full((n_pol, n_paths), m0)
    psi = np.zeros((n_pol, n_paths))
    L = schedule.L[:, 0, 0]
    for k in range(N + 1):
        prefix = paths & np.uint64((1 << k) - 1)
        cols = np.uint64(2**k - 1) + prefix
        delta = ((pols >> cols) & np.uint64(1)).astype(float)
        e = x - xhat
        psi += theta * delta + gam[k] * e * e
        if k < N:
            u = -L[k] * xhat
            pred = a * x + b * u
            x = pred + w_signs[k]
            xhat = delta * pred + (1.0 - delta) * (a * xhat + b * u)
    enum_value = float(psi.mean(axis=1).min())
    return OracleReport(variant="path", dp_value=float(dp_value),
                        enum_value=enum_value, n_policies=n_pol,
                        n_nodes=n_bits, n_paths=n_paths)


def _reachable_age_nodes(model: SystemModel):
    """Reachable (k, zeta, eta) states; eta is an int with inf = N + 2."""
    N = model.N
    inf_code = N + 2
    nodes: dict[tuple[int, int, int], int] = {}
    frontier = {(0, inf_code)}
    for k in range(N + 1):
        for zeta, eta in sorted(frontier):
            nodes[(k, zeta, eta)] = len(nodes)
        if k == N:
            break
        nxt = set()
        support = np.flatnonzero(model.delay.pmf_at(k + 1) > 0.0)
        for zeta, eta in frontier:
            for tau in support:
                z2 = int(tau) if tau < zeta + 1 else zeta + 1
                nxt.add((z2, zeta + 1))                          # delta = 1
                nxt.add((z2, eta + 1 if eta != inf_code else inf_code))  # delta = 0
        frontier = nxt
    return nodes, inf_code


def oracle_restricted(model: SystemModel, schedule: LqrSchedule) -> OracleReport:
    """Enumeration of all (k, zeta, eta) -> bit maps vs the restricted solver."""
    _require(model.N <= MAX_RESTRICTED_HORIZON,
             f"restricted oracle requires N <= {MAX_RESTRICTED_HORIZON}, got N={model.N}")
    N = model.N
    nodes, inf_code = _reachable_age_nodes(model)
    n_bits = len(nodes)
    _require(n_bits <= MAX_POLICY_BITS,
             f"map enumeration needs {n_bits} bits > {MAX_POLICY_BITS} "
             f"(reachable (k, zeta, eta) states)")

    zmax = model.delay.d_max
    pw = ModelPowers(model, N + 1)
    theta = model.theta
    # stage[k][eta_code] = tr(Gamma[k] Cov(e[k] | ages)); the error covariance
    # given a controller age eta is Sigma(eta - 1), and before any reception
    # it is Sigma(k - 1) + A^k M0 (A^k)^T.
    stage = np.zeros((N + 1, N + 3))
    for k in range(N + 1):
        G = schedule.Gamma[k]
        for eta in range(N + 2):
            stage[k, eta] = float(np.sum(G * pw.sigma(eta - 1)))
        ak = pw.apow[k]
        stage[k, inf_code] = float(np.sum(G * (pw.sigma(k - 1) + ak @ model.M0 @ ak.T)))

    node_col = np.full((N + 1, zmax + 2, N + 3), -1, dtype=np.int64)
    for (k, z, e), col in nodes.items():
        node_col[k, z, e] = col

    supports = [np.flatnonzero(model.delay.pmf_at(k) > 0.0) for k in range(N + 1)]
    pmfs = [model.delay.pmf_at(k) for k in range(N + 1)]
    tau_paths = list(itertools.product(*[supports[k] for k in range(1, N + 1)])) or [()]
    n_pol = 1 << n_bits
    pols = np.arange(n_pol, dtype=np.uint64)
    total = np.zeros(n_pol)
    for taus in tau_paths:
        prob = 1.0
        zetas = [0]
        for k in range(1, N + 1):
            tau = int(taus[k - 1])
            prob *= float(pmfs[k][tau])
            zetas.append(tau if tau < zetas[-1] + 1 else zetas[-1] + 1)
        if prob == 0.0:
            continue
        eta = np.full(n_pol, inf_code, dtype=np.int64)
        psi = np.zeros(n_pol)
        for k in range(N + 1):
            cols = node_col[k, zetas[k], eta]
            delta = ((pols >> cols.astype(np.uint64)) & np.uint64(1)).astype(np.int64)
            psi += theta * delta + stage[k, eta]
            eta = np.where(delta == 1, zetas[k] + 1,
                           np.where(eta == inf_code, inf_code, eta + 1))
        total += prob * psi
    enum_value = float(total.min())

    table = solve_restricted_dp(model, schedule)
    dp_value = table.value_at(0, 0, math.inf) + float(np.sum(schedule.Gamma[0] * model.M0))
    return OracleReport(variant="restricted", dp_value=dp_value,
                        enum_value=enum_value, n_policies=n_pol,
                        n_nodes=n_bits, n_paths=len(tau_paths))
