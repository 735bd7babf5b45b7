"""Primitive problem data: linear process, delayed output, and random sampling.

The controlled process is

    x[k+1] = A x[k] + B u[k] + w[k],        k = 0, ..., N
    y[k]   = x[k - tau[k]]

with Gaussian white noise w ~ N(0, W), Gaussian initial state
x[0] ~ N(m0, M0), and a random processing delay tau[k] drawn from a
configured distribution (tau[0] = 0 always).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ModelError",
    "DelayModel",
    "SystemModel",
    "step_dynamics",
    "sample_noise",
    "sample_delay",
    "sample_output",
    "load_model",
    "model_from_config",
    "as_generator",
    "psd_factor",
]

PSD_TOL = 1e-10


class ModelError(ValueError):
    """Invalid model data: bad shapes, indefinite weights, malformed config."""


def as_generator(rng) -> np.random.Generator:
    """Accept a seed or a Generator and return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _matrix(value, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise ModelError(f"{name} must be a matrix, got ndim={arr.ndim}")
    return arr


def _vector(value, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise ModelError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def _check_symmetric(mat: np.ndarray, name: str) -> None:
    scale = 1.0 + np.abs(mat).max(initial=0.0)
    if np.abs(mat - mat.T).max(initial=0.0) > 1e-8 * scale:
        raise ModelError(f"{name} must be symmetric")


def _check_psd(mat: np.ndarray, name: str, tol: float = PSD_TOL) -> None:
    _check_symmetric(mat, name)
    eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    if eigs.min(initial=0.0) < -tol * (1.0 + abs(eigs.max(initial=0.0))):
        raise ModelError(f"{name} must be positive semidefinite")


def _check_pd(mat: np.ndarray, name: str) -> None:
    _check_symmetric(mat, name)
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"{name} must be positive definite") from exc


def psd_factor(mat: np.ndarray) -> np.ndarray:
    """Factor L with L Lᵀ = mat for a PSD matrix.

    Uses Cholesky when the matrix is positive definite, otherwise an
    eigendecomposition with negative eigenvalues clipped to zero (needed for
    degenerate covariances such as W = 0 in test mode).
    """
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


@dataclass(frozen=True, eq=False)
class DelayModel:
    """Distribution of the output processing delay tau.

    Kinds:
      * ``none``            -- tau = 0 at every step.
      * ``bernoulli-fixed`` -- tau = 0 with probability p[k], tau = d otherwise.
      * ``general``         -- arbitrary pmf over delays 0..d_max.
    """

    kind: str
    d: int = 0
    p: object = None  # scalar probability or per-step sequence
    pmf: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "none":
            object.__setattr__(self, "pmf", np.array([1.0]))
        elif self.kind == "bernoulli-fixed":
            if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
                raise ModelError("bernoulli-fixed delay needs an integer d >= 1")
            p = np.asarray(self.p, dtype=float)
            if np.any(p < 0.0) or np.any(p > 1.0):
                raise ModelError("delay probability p must lie in [0, 1]")
            object.__setattr__(self, "p", p)
        elif self.kind == "general":
            pmf = np.asarray(self.pmf, dtype=float)
            if pmf.ndim != 1 or pmf.size == 0:
                raise ModelError("general delay pmf must be a nonempty vector")
            if np.any(pmf < 0.0) or abs(pmf.sum() - 1.0) > 1e-12:
                raise ModelError("delay pmf masses must be >= 0 and sum to 1")
            object.__setattr__(self, "pmf", pmf)
        else:
            raise ModelError(f"unknown delay kind {self.kind!r}")

    @staticmethod
    def none() -> "DelayModel":
        return DelayModel(kind="none")

    @staticmethod
    def bernoulli_fixed(d: int, p) -> "DelayModel":
        return DelayModel(kind="bernoulli-fixed", d=d, p=p)

    @staticmethod
    def general(pmf) -> "DelayModel":
        return DelayModel(kind="general", pmf=np.asarray(pmf, dtype=float))

    @property
    def d_max(self) -> int:
        if self.kind == "bernoulli-fixed":
            return int(self.d)
        return int(self.pmf.size - 1)

    def _p_at(self, k: int) -> float:
        p = self.p
        if np.ndim(p) == 0:
            return float(p)
        if k >= len(p):
            raise ModelError(f"per-step delay probabilities cover only k < {len(p)}")
        return float(p[k])

    def pmf_at(self, k: int) -> np.ndarray:
        """Pmf of tau[k] over support 0..d_max (before the tau[0] = 0 rule)."""
        if self.kind == "bernoulli-fixed":
            pk = self._p_at(k)
            out = np.zeros(self.d + 1)
            out[0] = pk
            out[self.d] = 1.0 - pk
            return out
        return self.pmf


@dataclass(frozen=True, eq=False)
class SystemModel:
    """All primitive data of one problem instance.

    The communication weight may be given directly as ``theta`` or derived
    from the rate-regulation pair ``(lam, ell)`` via theta = ell (1-lam)/lam.
    When only theta is known, the averaged trade-off loss cannot be reported
    (its scale needs lam) and the evaluator flags that.
    """

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    m0: np.ndarray
    M0: np.ndarray
    N: int
    delay: DelayModel = field(default_factory=DelayModel.none)
    theta: float | None = None
    lam: float | None = None
    ell: float | None = None
    noise: str = "gaussian"  # "gaussian" | "two-point" (test mode)
    allow_degenerate_noise: bool = False

    def __post_init__(self):
        for name in ("A", "B", "W", "Q", "R", "M0"):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))
        object.__setattr__(self, "m0", _vector(self.m0, "m0"))
        n, m = self.A.shape[0], self.B.shape[1]
        checks = {
            "A": (n, n), "B": (n, m), "W": (n, n), "Q": (n, n),
            "R": (m, m), "M0": (n, n),
        }
        for name, shape in checks.items():
            if getattr(self, name).shape != shape:
                raise ModelError(f"{name} must have shape {shape}, got {getattr(self, name).shape}")
        if self.m0.shape != (n,):
            raise ModelError(f"m0 must have shape ({n},), got {self.m0.shape}")
        if self.allow_degenerate_noise:
            _check_psd(self.W, "W")
        else:
            _check_pd(self.W, "W")
        _check_pd(self.R, "R")
        _check_psd(self.Q, "Q")
        _check_psd(self.M0, "M0")
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 0):
            raise ModelError("horizon N must be a nonnegative integer")
        object.__setattr__(self, "N", int(self.N))
        self._resolve_theta()
        if self.noise not in ("gaussian", "two-point"):
            raise ModelError(f"unknown noise kind {self.noise!r}")
        if self.noise == "two-point" and n != 1:
            raise ModelError("two-point noise test mode is scalar-only")
        if self.delay.kind == "bernoulli-fixed" and np.ndim(self.delay.p) == 1:
            if len(self.delay.p) < self.N + 1:
                raise ModelError("per-step delay probabilities must cover k = 0..N")

    def _resolve_theta(self):
        if self.lam is not None or self.ell is not None:
            if self.lam is None or self.ell is None:
                raise ModelError("lam and ell must be given together")
            if not (0.0 < self.lam < 1.0):
                raise ModelError("lam must lie in (0, 1)")
            if self.ell <= 0.0:
                raise ModelError("ell must be positive")
            derived = self.ell * (1.0 - self.lam) / self.lam
            if self.theta is not None and self.theta != derived:
                raise ModelError(
                    f"theta={self.theta} inconsistent with ell(1-lam)/lam={derived}"
                )
            object.__setattr__(self, "theta", derived)
        elif self.theta is None:
            raise ModelError("either theta or the pair (lam, ell) is required")
        if not self.theta > 0.0:
            raise ModelError("theta must be positive")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def has_rate_weights(self) -> bool:
        return self.lam is not None


def step_dynamics(model: SystemModel, x, u, w) -> np.ndarray:
    """One step of the process: A x + B u + w."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if x.shape != (model.n,) or u.shape != (model.m,) or w.shape != (model.n,):
        raise ModelError(
            f"dimension mismatch: x{x.shape}, u{u.shape}, w{w.shape} "
            f"for n={model.n}, m={model.m}"
        )
    return model.A @ x + model.B @ u + w


def sample_noise(model: SystemModel, rng, size: int | None = None) -> np.ndarray:
    """Draw process noise; shape (n,) or (size, n).

    Gaussian noise is L z with L the (Cholesky) factor of W. In two-point
    test mode the scalar noise is +/- sqrt(W) with equal probability.
    """
    rng = as_generator(rng)
    shape = (model.n,) if size is None else (size, model.n)
    z = rng.standard_normal(shape)
    if model.noise == "two-point":
        return np.where(z >= 0.0, 1.0, -1.0) * math.sqrt(model.W[0, 0])
    return z @ psd_factor(model.W).T


def sample_delay(model: SystemModel, k: int, rng) -> int:
    """Draw tau[k]. tau[0] = 0 regardless of the configured distribution."""
    if k < 0:
        raise ModelError("time index k must be nonnegative")
    if k == 0 or model.delay.kind == "none":
        return 0
    pmf = model.delay.pmf_at(k)
    rng = as_generator(rng)
    u = rng.random()
    return int(np.searchsorted(np.cumsum(pmf), u, side="right").clip(0, pmf.size - 1))


def sample_output(model: SystemModel, history, tau_k: int) -> np.ndarray:
    """Delayed output y[k] = x[k - tau[k]] given the trajectory x[0..k].

    Delays reaching before time 0 clamp to x[0].
    """
    hist = np.atleast_2d(np.asarray(history, dtype=float))
    if hist.size == 0:
        raise ModelError("state history is empty")
    idx = max(hist.shape[0] - 1 - int(tau_k), 0)
    return hist[idx]


_MODEL_KEYS = {
    "A", "B", "W", "Q", "R", "m0", "M0", "N", "theta", "lam", "ell",
    "delay", "noise", "allow_degenerate_noise",
}
_DELAY_KEYS = {
    "none": {"kind"},
    "bernoulli-fixed": {"kind", "d", "p"},
    "general": {"kind", "pmf"},
}


def _delay_from_config(cfg) -> DelayModel:
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ModelError("delay must be an object with a 'kind' key")
    kind = cfg["kind"]
    allowed = _DELAY_KEYS.get(kind)
    if allowed is None:
        raise ModelError(f"unknown delay kind {kind!r}")
    unknown = set(cfg) - allowed
    if unknown:
        raise ModelError(f"unknown delay keys: {sorted(unknown)}")
    if kind == "none":
        return DelayModel.none()
    if kind == "bernoulli-fixed":
        return DelayModel.bernoulli_fixed(cfg["d"], cfg["p"])
    return DelayModel.general(cfg["pmf"])


def model_from_config(cfg: dict) -> SystemModel:
    """Build a SystemModel from a parsed config dict; unknown keys rejected."""
    if not isinstance(cfg, dict):
        raise ModelError("model config must be a JSON object")
    unknown = set(cfg) - _MODEL_KEYS
    if unknown:
        raise ModelError(f"unknown model keys: {sorted(unknown)}")
    missing = {"A", "B", "W", "Q", "R", "m0", "M0", "N"} - set(cfg)
    if missing:
        raise ModelError(f"missing model keys: {sorted(missing)}")
    delay = _delay_from_config(cfg["delay"]) if "delay" in cfg else DelayModel.none()
    return SystemModel(
        A=cfg["A"], B=cfg["B"], W=cfg["W"], Q=cfg["Q"], R=cfg["R"],
        m0=cfg["m0"], M0=cfg["M0"], N=cfg["N"],
        delay=delay,
        theta=cfg.get("theta"), lam=cfg.get("lam"), ell=cfg.get("ell"),
        noise=cfg.get("noise", "gaussian"),
        allow_degenerate_noise=bool(cfg.get("allow_degenerate_noise", False)),
    )


def load_model(path) -> SystemModel:
    """Read a model from a JSON config file (schema documented in README)."""
    path = Path(path)
    if not path.exists():
        raise ModelError(f"model file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON in {path}: {exc}") from exc
    return model_from_config(cfg)
