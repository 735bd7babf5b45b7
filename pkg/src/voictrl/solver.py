"""Triggering-policy synthesis: the two backward dynamic programs.

Both programs minimize the communication-equivalent loss
sum_k theta delta[k] + ||e[k+1]||^2_Gamma[k+1] and record, per state, the
value table V, the continuation-value difference rho, and the transmission
value

    voi = (cost with delta = 0) - (cost with delta = 1),

so the optimal decision is transmit iff voi >= 0 (ties transmit).

Path-dependent program (scalar state only): sufficient statistic is the
mismatch et together with the trigger age zeta. Transitions follow
et' = (1 - delta) A et + n with n zero-mean Gaussian whose variance depends
on (zeta, zeta'); the expectation over n is evaluated with Gauss-Hermite
quadrature against a symmetric grid with linear interpolation and boundary
clamping. V is symmetric in et by construction: only the nonnegative half is
computed and mirrored.

Age-restricted program: state is the age pair (zeta, eta) with eta possibly
infinite (nothing received yet); all expectations are finite sums over the
delay pmf, so the sweep is exact up to floating point.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .aoi import zeta_transition_matrix
from .estimation import ModelPowers
from .lqr import LqrSchedule
from .model import ModelError, SystemModel

__all__ = [
    "RestrictedValueTable",
    "PathValueTable",
    "solve_restricted_dp",
    "solve_path_dp",
    "threshold_extract",
    "threshold_crossings",
    "default_grid_halfwidth",
    "save_table",
    "load_table",
]


@dataclass(eq=False)
class RestrictedValueTable:
    """Value/voi/policy tables over (k, zeta, eta).

    The eta axis holds 0..N+1 followed by one column for eta = inf. Cells
    with eta < zeta are not meaningful states and are NaN-masked in V and
    voi. rho[k] is the continuation-value difference between not
    transmitting and transmitting.
    """

    V: np.ndarray        # (N+2, Z, H)
    voi: np.ndarray      # (N+1, Z, H)
    rho: np.ndarray      # (N+1, Z, H)
    policy: np.ndarray   # (N+1, Z, H) bool
    theta: float
    N: int
    zmax: int

    @property
    def eta_inf_col(self) -> int:
        return self.V.shape[2] - 1

    def eta_index(self, eta) -> int:
        if math.isinf(eta):
            return self.eta_inf_col
        return min(int(eta), self.N + 1)

    def voi_at(self, k: int, zeta: int, eta) -> float:
        return float(self.voi[k, zeta, self.eta_index(eta)])

    def value_at(self, k: int, zeta: int, eta) -> float:
        return float(self.V[k, zeta, self.eta_index(eta)])

    def decide(self, k: int, zeta: int, eta) -> int:
        return int(self.voi_at(k, zeta, eta) >= 0.0)


@dataclass(eq=False)
class PathValueTable:
    """Value/voi/policy tables over (k, zeta, mismatch grid); scalar state.

    The grid is symmetric about zero and V[k, z, :] is exactly mirror
    symmetric. Lookups linearly interpolate and clamp at the boundary;
    clamped queries are counted in ``n_clamped``.
    """

    grid: np.ndarray     # (G,), symmetric, ascending
    V: np.ndarray        # (N+2, Z, G)
    voi: np.ndarray      # (N+1, Z, G)
    rho: np.ndarray      # (N+1, Z, G)
    policy: np.ndarray   # (N+1, Z, G) bool
    theta: float
    N: int
    zmax: int
    e_max: float
    gh_order: int
    boundary_flags: list = field(default_factory=list)
    n_clamped: int = 0

    def voi_at(self, k: int, zeta: int, e_tilde) -> np.ndarray | float:
        e = np.asarray(e_tilde, dtype=float)
        clamped = np.abs(e) > self.e_max
        if clamped.any():
            self.n_clamped += int(clamped.sum())
        q = np.clip(e, -self.e_max, self.e_max)
        out = np.interp(q, self.grid, self.voi[k, zeta])
        return float(out) if np.ndim(e_tilde) == 0 else out

    def decide(self, k: int, zeta: int, e_tilde: float) -> int:
        return int(self.voi_at(k, zeta, float(e_tilde)) >= 0.0)


def _delay_pmf(model: SystemModel, k: int) -> np.ndarray:
    return model.delay.pmf_at(k)


def _restricted_step(theta, trans, V_next, trace_fin, trace_inf, N):
    """One backward step of the age-restricted program.

    ``trace_fin[j]`` = tr(Gamma[k+1] Sigma(j)) for j = 0..N+1; ``trace_inf``
    the same against the never-received covariance at this time. Shared with
    the internal-consistency test so the recomputation is bit-identical.
    NaN cells of V_next (masked eta < zeta states) carry no transition mass
    into valid states, so they are zeroed before the mixing product.
    """
    Z, H = V_next.shape
    V_next = np.nan_to_num(V_next, nan=0.0)
    cont = trans @ V_next  # cont[z, j] = E_{z'} V_next[z', j]
    shift = np.minimum(np.arange(1, N + 3), N + 1)  # j -> min(j+1, N+1)
    cont0 = np.empty_like(V_next)
    cont0[:, : N + 2] = cont[:, shift]
    cont0[:, H - 1] = cont[:, H - 1]  # inf stays inf without a transmission
    zcols = np.minimum(np.arange(Z) + 1, N + 1)
    cont1 = cont[np.arange(Z), zcols]  # (Z,)
    c1 = theta + trace_fin[:Z, None] + cont1[:, None]
    c0 = np.empty_like(V_next)
    c0[:, : N + 2] = trace_fin[None, :] + cont0[:, : N + 2]
    c0[:, H - 1] = trace_inf + cont0[:, H - 1]
    V_k = np.minimum(c0, c1)
    voi_k = c0 - c1
    rho_k = cont0 - cont1[:, None]
    return V_k, voi_k, rho_k


def solve_restricted_dp(model: SystemModel, schedule: LqrSchedule) -> RestrictedValueTable:
    """Backward sweep over (zeta, eta) with exact expectations over the delay pmf."""
    N = model.N
    zmax = model.delay.d_max
    if zmax > N:
        raise ModelError(f"delay support d_max={zmax} exceeds the horizon N={N}")
    Z, H = zmax + 1, (N + 2) + 1  # eta = 0..N+1 plus the inf column
    pw = ModelPowers(model, N + 1)
    sig = np.stack([pw.sigma(j) for j in range(N + 2)])        # (N+2, n, n)
    prop_m0 = np.einsum("tij,jk,tlk->til", pw.apow, model.M0, pw.apow)

    V = np.zeros((N + 2, Z, H))
    voi = np.empty((N + 1, Z, H))
    rho = np.empty((N + 1, Z, H))
    for k in range(N, -1, -1):
        G = schedule.Gamma[k + 1]
        trace_fin = np.einsum("ij,hij->h", G, sig)             # j = 0..N+1
        trace_inf = float(np.sum(G * (sig[k] + prop_m0[k + 1])))
        trans = zeta_transition_matrix(_delay_pmf(model, k + 1), zmax)
        V[k], voi[k], rho[k] = _restricted_step(
            model.theta, trans, V[k + 1], trace_fin, trace_inf, N
        )
    policy = voi >= 0.0

    # eta < zeta is not a state; mask it in the public arrays.
    zz = np.arange(Z)[:, None]
    ee = np.arange(N + 2)[None, :]
    invalid = ee < zz  # (Z, N+2), inf column always valid
    V[:, :, : N + 2][:, invalid] = np.nan
    voi[:, :, : N + 2][:, invalid] = np.nan
    return RestrictedValueTable(V=V, voi=voi, rho=rho, policy=policy,
                                theta=model.theta, N=N, zmax=zmax)


def default_grid_halfwidth(model: SystemModel, schedule: LqrSchedule) -> float:
    """Mismatch-grid half-width that keeps every transmit threshold interior.

    Beyond the threshold the value function is flat (the transmit branch does
    not depend on the mismatch), so boundary clamping is exact as long as the
    grid covers the largest zero crossing. That crossing is bounded by
    sqrt(theta / lambda_min(A^T Gamma[k+1] A)) because the continuation
    difference is nonnegative; a 3x margin plus a noise-scale floor covers
    instances where that bound is loose.
    """
    A = model.A
    thr = 0.0
    for k in range(model.N):
        M = A.T @ schedule.Gamma[k + 1] @ A
        lam_min = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())
        if lam_min > 1e-14:
            thr = max(thr, math.sqrt(model.theta / lam_min))
    floor = math.sqrt(max(np.trace(model.W) + np.trace(model.M0), 1e-8))
    return max(3.0 * thr, floor)


def _gh_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    return nodes, weights / math.sqrt(math.pi)


def solve_path_dp(model: SystemModel, schedule: LqrSchedule, *,
                  e_max: float | None = None, grid_steps: int = 400,
                  gh_order: int = 21) -> PathValueTable:
    """Backward sweep over (mismatch, zeta) for a scalar state.

    ``grid_steps`` counts cells from 0 to e_max, so the full symmetric grid
    has 2 * grid_steps + 1 points. States whose transmit region is not
    resolved inside the grid are flagged and a larger e_max is suggested.
    """
    if model.n != 1:
        raise ModelError("the path-dependent program supports scalar states only")
    if model.noise != "gaussian":
        raise ModelError("the path-dependent program assumes Gaussian noise")
    N = model.N
    zmax = model.delay.d_max
    if zmax > N:
        raise ModelError(f"delay support d_max={zmax} exceeds the horizon N={N}")
    Z = zmax + 1
    a = float(model.A[0, 0])
    w_var = float(model.W[0, 0])

    if e_max is None:
        e_max = default_grid_halfwidth(model, schedule)
    half = np.linspace(0.0, e_max, grid_steps + 1)
    grid = np.concatenate([-half[::-1][:-1], half])
    G = grid.size

    # cum_w[j] = sum_{t=0..j-1} a^{2t} W; innovation variance from zeta to
    # zeta' is sum_{t=zeta'..zeta} a^{2t} W = cum_w[zeta+1] - cum_w[zeta'].
    cum_w = np.concatenate([[0.0], np.cumsum(a ** (2 * np.arange(zmax + 1)) * w_var)])
    nodes, weights = _gh_nodes(gh_order)

    V = np.zeros((N + 2, Z, G))
    voi = np.empty((N + 1, Z, G))
    rho = np.empty((N + 1, Z, G))
    means = a * half  # delta = 0 next-mismatch mean on the nonnegative half

    def mirror(row_half: np.ndarray) -> np.ndarray:
        return np.concatenate([row_half[::-1][:-1], row_half])

    for k in range(N, -1, -1):
        gam = float(schedule.Gamma[k + 1][0, 0])
        quad_half = (a * a * gam) * half**2
        trans = zeta_transition_matrix(_delay_pmf(model, k + 1), zmax)
        V_next = V[k + 1]
        for z in range(Z):
            acc = np.zeros(half.size)
            for z2 in range(Z):
                p = trans[z, z2]
                if p == 0.0:
                    continue
                var = cum_w[z + 1] - cum_w[z2] if z2 <= z else 0.0
                if var > 0.0:
                    q = means[:, None] + math.sqrt(2.0 * var) * nodes[None, :]
                    np.clip(q, -e_max, e_max, out=q)
                    vals = np.interp(q.ravel(), grid, V_next[z2]).reshape(q.shape)
                    acc += p * (vals @ weights)
                else:
                    acc += p * np.interp(np.clip(means, -e_max, e_max), grid, V_next[z2])
            base = gam * cum_w[z + 1]  # tr(Gamma[k+1] Sigma(zeta))
            c1 = model.theta + base + acc[0]  # transmit: next mean is zero
            c0 = quad_half + base + acc
            V[k, z] = mirror(np.minimum(c0, c1))
            voi[k, z] = mirror(c0 - c1)
            rho[k, z] = mirror(acc - acc[0])
    policy = voi >= 0.0

    flags = []
    for k in range(N):
        if float(np.abs(schedule.Gamma[k + 1]).max()) <= 1e-14:
            continue
        for z in range(Z):
            if not policy[k, z, -1]:
                flags.append((k, z))
    if flags:
        warnings.warn(
            f"path DP transmit region not resolved inside the grid at "
            f"{len(flags)} states (first {flags[0]}); retry with "
            f"e_max >= {2.0 * e_max:.3g}"
        )
    return PathValueTable(grid=grid, V=V, voi=voi, rho=rho, policy=policy,
                          theta=model.theta, N=N, zmax=zmax, e_max=float(e_max),
                          gh_order=gh_order, boundary_flags=flags)


def threshold_crossings(table: PathValueTable, k: int, zeta: int) -> list[float]:
    """All nonnegative mismatch values where voi crosses from < 0 to >= 0."""
    c = (table.grid.size - 1) // 2
    g = table.grid[c:]
    v = table.voi[k, zeta, c:]
    out = []
    if v[0] >= 0.0:
        out.append(0.0)
    for i in range(v.size - 1):
        if v[i] < 0.0 <= v[i + 1]:
            out.append(float(g[i] + (0.0 - v[i]) * (g[i + 1] - g[i]) / (v[i + 1] - v[i])))
    return out


def threshold_extract(table: PathValueTable, k: int, zeta: int) -> float | None:
    """Smallest mismatch magnitude with voi >= 0, or None if none exists.

    Multiple sign changes are reported via a warning; the smallest crossing
    is returned.
    """
    crossings = threshold_crossings(table, k, zeta)
    if not crossings:
        return None
    if len(crossings) > 1:
        warnings.warn(
            f"non-monotone voi sign pattern at (k={k}, zeta={zeta}): "
            f"crossings {crossings}"
        )
    return crossings[0]


def save_table(table, path) -> None:
    """Serialize a value table to a .npz cache."""
    if isinstance(table, RestrictedValueTable):
        np.savez_compressed(
            path, kind="restricted", V=table.V, voi=table.voi, rho=table.rho,
            policy=table.policy,
            meta=json.dumps({"theta": table.theta, "N": table.N, "zmax": table.zmax}),
        )
    elif isinstance(table, PathValueTable):
        np.savez_compressed(
            path, kind="path", grid=table.grid, V=table.V, voi=table.voi,
            rho=table.rho, policy=table.policy,
            meta=json.dumps({
                "theta": table.theta, "N": table.N, "zmax": table.zmax,
                "e_max": table.e_max, "gh_order": table.gh_order,
            }),
        )
    else:
        raise TypeError(f"not a value table: {type(table)!r}")


def load_table(path):
    """Load a table written by save_table."""
    with np.load(path, allow_pickle=False) as data:
        kind = str(data["kind"])
        meta = json.loads(str(data["meta"]))
        if kind == "restricted":
            return RestrictedValueTable(
                V=data["V"], voi=data["voi"], rho=data["rho"],
                policy=data["policy"], theta=meta["theta"], N=meta["N"],
                zmax=meta["zmax"],
            )
        if kind == "path":
            return PathValueTable(
                grid=data["grid"], V=data["V"], voi=data["voi"],
                rho=data["rho"], policy=data["policy"], theta=meta["theta"],
                N=meta["N"], zmax=meta["zmax"], e_max=meta["e_max"],
                gh_order=meta["gh_order"],
            )
    raise ValueError(f"unknown table kind {kind!r}")
