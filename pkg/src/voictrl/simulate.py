"""Closed-loop simulation and Monte Carlo evaluation of triggering policies.

Per-step timing contract (one time step k):
  1. the delay tau[k] realizes and the trigger age zeta[k] updates, marking
     the new observation informative or obsolete;
  2. the controller age eta[k] and estimate x_hat[k] update using whatever
     was transmitted at k-1 (one-step channel delay);
  3. the trigger forms x_check[k] and the mismatch; the policy decides
     delta[k] from its information set -- delta[k] reaches the controller
     only at k+1;
  4. u[k] = -L[k] x_hat[k] is applied and the process steps.

All trajectories in a batch advance in lockstep over run-indexed arrays, so
Monte Carlo evaluation is vectorized. Primitive randomness (x0, noise,
delays) is drawn before any policy logic runs, which gives common random
numbers across policies evaluated with the same seed.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .estimation import ModelPowers
from .lqr import LqrSchedule
from .model import SystemModel, as_generator, psd_factor
from .policies import AoiThreshold, Periodic, RestrictedVoiPolicy, TriggerPolicy

__all__ = [
    "BatchRun",
    "TrajectoryRecord",
    "LossReport",
    "SignalingReport",
    "draw_primitives",
    "run_batch",
    "run_trajectory",
    "loss_samples",
    "evaluate",
    "signaling_residual_check",
    "sweep",
    "audit_batch",
]

CHUNK_RUNS = 4096  # fixed so common random numbers survive chunking
Z95 = 1.959963984540054


def draw_primitives(model: SystemModel, rng, n_runs: int):
    """Draw (x0, w, tau) for a batch; policy-independent by construction."""
    rng = as_generator(rng)
    n, N = model.n, model.N
    z0 = rng.standard_normal((n_runs, n))
    zw = rng.standard_normal((N + 1, n_runs, n))
    uu = rng.random((N + 1, n_runs))
    x0 = model.m0 + z0 @ psd_factor(model.M0).T
    if model.noise == "two-point":
        w = np.where(zw >= 0.0, 1.0, -1.0) * math.sqrt(model.W[0, 0])
    else:
        w = zw @ psd_factor(model.W).T
    tau = np.zeros((N + 1, n_runs), dtype=np.int64)
    if model.delay.kind != "none":
        for k in range(1, N + 1):
            cdf = np.cumsum(model.delay.pmf_at(k))
            tau[k] = np.searchsorted(cdf, uu[k], side="right").clip(0, cdf.size - 1)
    return x0, w, tau


@dataclass(eq=False)
class BatchRun:
    """Raw per-step arrays for a batch of trajectories plus per-run losses."""

    X: np.ndarray        # (N+2, R, n)
    U: np.ndarray        # (N+1, R, m)
    W: np.ndarray        # (N+1, R, n)
    TAU: np.ndarray      # (N+1, R)
    ZETA: np.ndarray     # (N+1, R)
    ETA: np.ndarray      # (N+1, R), inf before the first reception
    DELTA: np.ndarray    # (N+1, R)
    XHAT: np.ndarray     # (N+1, R, n)
    XCHECK: np.ndarray   # (N+1, R, n)
    E_REC: np.ndarray    # (N+1, R, n) recursion-propagated error
    ETLD_REC: np.ndarray # (N+1, R, n) recursion-propagated mismatch
    VOI: np.ndarray      # (N+1, R), NaN for policies without a voi
    psi: np.ndarray      # (R,)
    phi: np.ndarray | None
    rate: np.ndarray     # (R,)
    regulation: np.ndarray  # (R,)

    @property
    def n_runs(self) -> int:
        return self.X.shape[1]

    @property
    def E(self) -> np.ndarray:
        """Definitional error x - x_hat, shape (N+1, R, n)."""
        return self.X[:-1] - self.XHAT

    @property
    def ETLD(self) -> np.ndarray:
        """Definitional mismatch x_check - x_hat, shape (N+1, R, n)."""
        return self.XCHECK - self.XHAT


def run_batch(model: SystemModel, schedule: LqrSchedule, policy: TriggerPolicy,
              n_runs: int, rng) -> BatchRun:
    """Simulate ``n_runs`` trajectories in lockstep."""
    N, n, m = model.N, model.n, model.m
    A, B = model.A, model.B
    zmax = model.delay.d_max
    pw = ModelPowers(model, zmax + 1)
    x0, w, tau = draw_primitives(model, rng, n_runs)
    R = n_runs
    runs = np.arange(R)

    X = np.empty((N + 2, R, n)); X[0] = x0
    U = np.empty((N + 1, R, m))
    ZETA = np.zeros((N + 1, R), dtype=np.int64)
    ETA = np.full((N + 1, R), np.inf)
    DELTA = np.zeros((N + 1, R), dtype=np.int8)
    XHAT = np.empty((N + 1, R, n))
    XCHECK = np.empty((N + 1, R, n))
    E_REC = np.empty((N + 1, R, n))
    ETLD_REC = np.empty((N + 1, R, n))
    VOI = np.full((N + 1, R), np.nan)

    held = x0.copy()  # trigger's freshest observation x[k - zeta[k]]
    E_REC[0] = x0 - model.m0
    ETLD_REC[0] = x0 - model.m0

    for k in range(N + 1):
        if k == 0:
            zeta_k = np.zeros(R, dtype=np.int64)
            eta_k = np.full(R, np.inf)
            xhat_k = np.tile(model.m0, (R, 1))
        else:
            prev_held = held.copy()
            zp = ZETA[k - 1]
            informative = tau[k] < zp + 1
            zeta_k = np.where(informative, tau[k], zp + 1)
            if informative.any():
                src = np.maximum(k - tau[k], 0)  # delays past time 0 clamp to x0
                sel = informative
                held[sel] = X[src[sel], runs[sel]]
            dp = DELTA[k - 1].astype(bool)
            eta_k = np.where(dp, zp + 1.0, ETA[k - 1] + 1.0)

            xhat_k = XHAT[k - 1] @ A.T + U[k - 1] @ B.T
            if dp.any():
                rec = np.einsum("rij,rj->ri", pw.apow[zp + 1], prev_held)
                for t in range(zmax + 1):
                    if k - 1 - t < 0:
                        break
                    mk = zp >= t
                    if mk.any():
                        rec[mk] += U[k - 1 - t][mk] @ pw.abpow[t].T
                xhat_k = np.where(dp[:, None], rec, xhat_k)

            # recursion-propagated error and mismatch (cross-check signals)
            dpf = dp[:, None].astype(float)
            sum_e = np.zeros((R, n))
            sum_et = np.zeros((R, n))
            for t in range(zmax + 1):
                if k - 1 - t < 0:
                    break
                in_e = zp >= t
                if in_e.any():
                    term = w[k - 1 - t][in_e] @ pw.apow[t].T
                    sum_e[in_e] += term
                in_et = in_e & (zeta_k <= t)
                if in_et.any():
                    sum_et[in_et] += w[k - 1 - t][in_et] @ pw.apow[t].T
            E_REC[k] = np.where(dp[:, None], sum_e, E_REC[k - 1] @ A.T + w[k - 1])
            ETLD_REC[k] = (1.0 - dpf) * (ETLD_REC[k - 1] @ A.T) + sum_et

        xcheck_k = np.einsum("rij,rj->ri", pw.apow[zeta_k], held)
        for t in range(1, zmax + 1):
            if k - t < 0:
                break
            mk = zeta_k >= t
            if mk.any():
                xcheck_k[mk] += U[k - t][mk] @ pw.abpow[t - 1].T
        etld_k = xcheck_k - xhat_k

        voi_k = policy.voi_batch(k, zeta_k, eta_k, etld_k)
        if voi_k is not None:
            VOI[k] = voi_k
            delta_k = voi_k >= 0.0
        else:
            delta_k = policy.decide_batch(k, zeta_k, eta_k, etld_k)

        u_k = -(xhat_k @ schedule.L[k].T)
        X[k + 1] = X[k] @ A.T + u_k @ B.T + w[k]

        ZETA[k] = zeta_k
        ETA[k] = eta_k
        DELTA[k] = np.asarray(delta_k, dtype=bool)
        XHAT[k] = xhat_k
        XCHECK[k] = xcheck_k
        U[k] = u_k

    e_def = X[:-1] - XHAT
    psi = model.theta * DELTA.sum(axis=0) + np.einsum(
        "krn,knm,krm->r", e_def, schedule.Gamma[: N + 1], e_def
    )
    reg_sum = (
        np.einsum("krn,nm,krm->r", X[1:], model.Q, X[1:])
        + np.einsum("krn,nm,krm->r", U, model.R, U)
    )
    rate = DELTA.mean(axis=0)
    regulation = reg_sum / (N + 1)
    phi = None
    if model.has_rate_weights:
        phi = ((1.0 - model.lam) * model.ell * DELTA.sum(axis=0)
               + model.lam * reg_sum) / (N + 1)
    return BatchRun(X=X, U=U, W=w, TAU=tau, ZETA=ZETA, ETA=ETA, DELTA=DELTA,
                    XHAT=XHAT, XCHECK=XCHECK, E_REC=E_REC, ETLD_REC=ETLD_REC,
                    VOI=VOI, psi=psi, phi=phi, rate=rate, regulation=regulation)


@dataclass(eq=False)
class TrajectoryRecord:
    """Per-step log of one closed-loop run."""

    k: np.ndarray
    x: np.ndarray        # (N+1, n)
    u: np.ndarray        # (N+1, m)
    w: np.ndarray        # (N+1, n)
    tau: np.ndarray
    zeta: np.ndarray
    eta: np.ndarray      # inf before the first reception
    delta: np.ndarray
    x_check: np.ndarray
    x_hat: np.ndarray
    e_norm: np.ndarray
    e_tilde_norm: np.ndarray
    trigger_error_norm: np.ndarray  # ||x - x_check||
    voi: np.ndarray
    cost_comm: np.ndarray  # theta * delta
    cost_reg: np.ndarray   # ||x[k+1]||^2_Q + ||u[k]||^2_R
    psi: float
    phi: float | None
    policy: str

    @staticmethod
    def from_batch(model: SystemModel, batch: BatchRun, run: int,
                   policy_name: str) -> "TrajectoryRecord":
        N = batch.X.shape[0] - 2
        e = batch.E[:, run]
        et = batch.ETLD[:, run]
        xe = batch.X[:-1, run] - batch.XCHECK[:, run]
        x_next = batch.X[1:, run]
        u = batch.U[:, run]
        cost_reg = (np.einsum("kn,nm,km->k", x_next, model.Q, x_next)
                    + np.einsum("kn,nm,km->k", u, model.R, u))
        return TrajectoryRecord(
            k=np.arange(N + 1),
            x=batch.X[:-1, run], u=u, w=batch.W[:, run],
            tau=batch.TAU[:, run], zeta=batch.ZETA[:, run],
            eta=batch.ETA[:, run], delta=batch.DELTA[:, run],
            x_check=batch.XCHECK[:, run], x_hat=batch.XHAT[:, run],
            e_norm=np.linalg.norm(e, axis=1),
            e_tilde_norm=np.linalg.norm(et, axis=1),
            trigger_error_norm=np.linalg.norm(xe, axis=1),
            voi=batch.VOI[:, run],
            cost_comm=model.theta * batch.DELTA[:, run].astype(float),
            cost_reg=cost_reg,
            psi=float(batch.psi[run]),
            phi=None if batch.phi is None else float(batch.phi[run]),
            policy=policy_name,
        )

    def to_csv(self, path, header_comment: str | None = None) -> None:
        """Write one row per step; eta = inf is serialized as -1."""
        cols: list[tuple[str, np.ndarray]] = [("k", self.k)]
        for name in ("x", "u", "w", "x_check", "x_hat"):
            arr = np.atleast_2d(getattr(self, name))
            for i in range(arr.shape[1]):
                suffix = f"_{i}" if arr.shape[1] > 1 else ""
                cols.append((f"{name}{suffix}", arr[:, i]))
        eta_out = np.where(np.isinf(self.eta), -1.0, self.eta)
        cols += [
            ("tau", self.tau), ("zeta", self.zeta), ("eta", eta_out),
            ("delta", self.delta.astype(int)),
            ("e_norm", self.e_norm), ("e_tilde_norm", self.e_tilde_norm),
            ("trigger_error_norm", self.trigger_error_norm),
            ("voi", self.voi), ("cost_comm", self.cost_comm),
            ("cost_reg", self.cost_reg),
        ]
        with open(path, "w") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write(",".join(name for name, _ in cols) + "\n")
            for i in range(self.k.size):
                fh.write(",".join(repr(float(arr[i])) if np.issubdtype(arr.dtype, np.floating)
                                  else str(int(arr[i])) for _, arr in cols) + "\n")


def run_trajectory(model: SystemModel, schedule: LqrSchedule,
                   policy: TriggerPolicy, rng) -> TrajectoryRecord:
    """Single seeded closed-loop run."""
    batch = run_batch(model, schedule, policy, 1, rng)
    return TrajectoryRecord.from_batch(model, batch, 0, policy.name)


@dataclass
class LossReport:
    """Monte Carlo loss summary; every mean is paired with a 95% half-width."""

    policy: str
    n_runs: int
    seed: int
    psi: float
    psi_ci95: float
    rate: float
    rate_ci95: float
    regulation: float
    regulation_ci95: float
    phi: float | None = None
    phi_ci95: float | None = None
    theta: float | None = None
    lam: float | None = None
    ell: float | None = None
    notes: list = field(default_factory=list)

    def to_json(self, **extra) -> str:
        payload = dataclasses.asdict(self)
        payload.update(extra)
        return json.dumps(payload, indent=2, sort_keys=True)


def _mean_ci(samples: np.ndarray) -> tuple[float, float]:
    mean = float(samples.mean())
    if samples.size < 2:
        return mean, float("nan")
    half = Z95 * float(samples.std(ddof=1)) / math.sqrt(samples.size)
    return mean, half


def loss_samples(model: SystemModel, schedule: LqrSchedule, policy: TriggerPolicy,
                 n_runs: int, seed: int) -> dict:
    """Per-run loss arrays, chunked deterministically (common random numbers)."""
    rng = np.random.default_rng(seed)
    psi, phi, rate, reg = [], [], [], []
    remaining = n_runs
    while remaining > 0:
        batch = run_batch(model, schedule, policy, min(CHUNK_RUNS, remaining), rng)
        psi.append(batch.psi)
        rate.append(batch.rate)
        reg.append(batch.regulation)
        if batch.phi is not None:
            phi.append(batch.phi)
        remaining -= batch.n_runs
    out = {
        "psi": np.concatenate(psi),
        "rate": np.concatenate(rate),
        "regulation": np.concatenate(reg),
    }
    if phi:
        out["phi"] = np.concatenate(phi)
    return out


def evaluate(model: SystemModel, schedule: LqrSchedule, policy: TriggerPolicy,
             n_runs: int, seed: int) -> LossReport:
    """Monte Carlo estimate of the losses under one policy."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    samples = loss_samples(model, schedule, policy, n_runs, seed)
    psi, psi_ci = _mean_ci(samples["psi"])
    rate, rate_ci = _mean_ci(samples["rate"])
    reg, reg_ci = _mean_ci(samples["regulation"])
    report = LossReport(
        policy=policy.name, n_runs=n_runs, seed=seed,
        psi=psi, psi_ci95=psi_ci, rate=rate, rate_ci95=rate_ci,
        regulation=reg, regulation_ci95=reg_ci,
        theta=model.theta, lam=model.lam, ell=model.ell,
    )
    if "phi" in samples:
        report.phi, report.phi_ci95 = _mean_ci(samples["phi"])
    else:
        report.notes.append(
            "trade-off loss omitted: only theta given, losses are in "
            "communication-equivalent units"
        )
    return report


@dataclass
class SignalingReport:
    """Per-step test that the mismatch has zero mean given no transmission."""

    policy: str
    n_runs: int
    seed: int
    min_bucket: int
    ks: np.ndarray
    counts: np.ndarray
    max_abs_z: np.ndarray     # per bucket, worst component
    skipped: np.ndarray       # buckets with too few no-transmission samples
    passed: bool

    @property
    def worst_z(self) -> float:
        live = ~self.skipped
        return float(self.max_abs_z[live].max()) if live.any() else float("nan")


def signaling_residual_check(model: SystemModel, schedule: LqrSchedule,
                             policy: TriggerPolicy, n_runs: int, seed: int,
                             min_bucket: int = 20) -> SignalingReport:
    """Check E[mismatch | no transmission] = 0, bucketed by time step.

    For each k the runs with delta[k] = 0 are pooled; the bucket passes when
    every component mean lies within 3 standard errors of zero. Buckets with
    fewer than ``min_bucket`` samples are skipped and flagged.
    """
    N, n = model.N, model.n
    rng = np.random.default_rng(seed)
    counts = np.zeros(N + 1, dtype=np.int64)
    sums = np.zeros((N + 1, n))
    sumsq = np.zeros((N + 1, n))
    remaining = n_runs
    while remaining > 0:
        batch = run_batch(model, schedule, policy, min(CHUNK_RUNS, remaining), rng)
        off = batch.DELTA == 0  # (N+1, R)
        et = batch.ETLD
        counts += off.sum(axis=1)
        sums += np.einsum("krn,kr->kn", et, off.astype(float))
        sumsq += np.einsum("krn,kr->kn", et**2, off.astype(float))
        remaining -= batch.n_runs
    skipped = counts < min_bucket
    max_abs_z = np.zeros(N + 1)
    for k in range(N + 1):
        if skipped[k]:
            continue
        c = counts[k]
        mean = sums[k] / c
        var = np.maximum(sumsq[k] / c - mean**2, 0.0) * c / (c - 1)
        se = np.sqrt(var / c)
        z = np.abs(mean) / np.where(se > 0.0, se, np.inf)
        max_abs_z[k] = z.max()
    passed = bool((max_abs_z[~skipped] <= 3.0).all()) if (~skipped).any() else False
    return SignalingReport(policy=policy.name, n_runs=n_runs, seed=seed,
                           min_bucket=min_bucket, ks=np.arange(N + 1),
                           counts=counts, max_abs_z=max_abs_z,
                           skipped=skipped, passed=passed)


def sweep(model: SystemModel, schedule: LqrSchedule, family: str, values,
          n_runs: int, seed: int) -> list[dict]:
    """Rate-regulation trade-off curve for a policy family, common seeds."""
    from .solver import solve_restricted_dp  # local import: avoids cycle at import time

    rows = []
    for value in values:
        if family == "aoi-threshold":
            policy, mdl = AoiThreshold(float(value)), model
        elif family == "periodic":
            policy, mdl = Periodic(int(value)), model
        elif family == "theta":
            mdl = replace(model, theta=float(value), lam=None, ell=None)
            policy = RestrictedVoiPolicy(solve_restricted_dp(mdl, schedule))
        else:
            raise ValueError(f"unknown sweep family {family!r}")
        report = evaluate(mdl, schedule, policy, n_runs, seed)
        rows.append({
            "family": family, "value": float(value), "policy": policy.name,
            "rate": report.rate, "rate_ci95": report.rate_ci95,
            "regulation": report.regulation,
            "regulation_ci95": report.regulation_ci95,
            "psi": report.psi, "psi_ci95": report.psi_ci95,
        })
    return rows


def audit_batch(model: SystemModel, schedule: LqrSchedule, batch: BatchRun) -> dict:
    """Replay the timing contract on a finished batch; returns max deviations.

    Checks that the recursion-propagated error/mismatch match their
    definitions, that the age recursions match the logs, that u[k] uses only
    the estimate available at k, and that the process step is exact.
    """
    N = batch.X.shape[0] - 2
    scale_e = 1.0 + np.abs(batch.E).max()
    scale_et = 1.0 + np.abs(batch.ETLD).max()
    dev = {
        "error_recursion": float(np.abs(batch.E - batch.E_REC).max() / scale_e),
        "mismatch_recursion": float(np.abs(batch.ETLD - batch.ETLD_REC).max() / scale_et),
    }
    eta_dev = 0.0
    zeta_dev = 0
    for k in range(1, N + 1):
        zp = batch.ZETA[k - 1]
        informative = batch.TAU[k] < zp + 1
        zeta_ref = np.where(informative, batch.TAU[k], zp + 1)
        zeta_dev = max(zeta_dev, int(np.abs(zeta_ref - batch.ZETA[k]).max()))
        eta_ref = np.where(batch.DELTA[k - 1] == 1, zp + 1.0, batch.ETA[k - 1] + 1.0)
        with np.errstate(invalid="ignore"):
            diff = np.where(np.isinf(eta_ref) & np.isinf(batch.ETA[k]),
                            0.0, np.abs(eta_ref - batch.ETA[k]))
        eta_dev = max(eta_dev, float(diff.max()))
    dev["zeta_recursion"] = zeta_dev
    dev["eta_recursion"] = eta_dev
    u_ref = -np.einsum("kmn,krn->krm", schedule.L[: N + 1], batch.XHAT)
    dev["control_law"] = float(np.abs(u_ref - batch.U).max())
    x_ref = (np.einsum("ij,krj->kri", model.A, batch.X[:-1])
             + np.einsum("ij,krj->kri", model.B, batch.U) + batch.W)
    dev["process_step"] = float(np.abs(x_ref - batch.X[1:]).max())
    return dev
