"""Discrete-time Markov jump linear systems.

Model:  x(k+1) = A_i x(k) + B_i u(k) + E_i w(k)
        z(k)   = Cz_i x(k) + Dz_i u(k) + Ez_i w(k)          i = theta(k)

with theta a Markov chain on {0, ..., sigma-1}.  Docs follow the usual
1-based convention when naming modes (mode 1 = packet delivered, mode 2 =
packet dropped); arrays are 0-based, mode index 0 is always the delivered
mode.

State feedback u(k) = K x(k) closes the loop; mean-square stability of a
closed loop is decided by the spectral radius of the second-moment map
Lambda = (Gamma' (x) I) blkdiag_i(A_i (x) A_i), acting on the stacked
mode-conditioned second moments Q_i(k) = E[x x' 1{theta=i}].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import make_rng

__all__ = [
    "MjlsModel",
    "TransitionMatrix",
    "TransitionPolytope",
    "BernoulliRow",
    "ControllerGain",
    "Trajectory",
    "dropout_chain",
    "close_loop",
    "mss_spectral_radius",
    "sample_chain",
    "simulate",
]

_ROW_SUM_TOL = 1e-12


def _mode_stack(mats, what: str, rows: int | None, cols: int | None) -> tuple[np.ndarray, ...]:
    out = []
    for i, m in enumerate(mats):
        a = np.asarray(m, dtype=float)
        if a.ndim != 2:
            raise ValueError(f"{what}[{i}] must be a matrix, got ndim {a.ndim}")
        if not np.all(np.isfinite(a)):
            raise ValueError(f"{what}[{i}] has non-finite entries")
        if rows is not None and a.shape[0] != rows:
            raise ValueError(f"{what}[{i}] has {a.shape[0]} rows, expected {rows}")
        if cols is not None and a.shape[1] != cols:
            raise ValueError(f"{what}[{i}] has {a.shape[1]} columns, expected {cols}")
        a = a.copy()
        a.flags.writeable = False
        out.append(a)
    return tuple(out)


@dataclass(frozen=True)
class MjlsModel:
    """Mode-indexed system matrices; one entry per mode in every field."""

    a: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]
    e: tuple[np.ndarray, ...]
    cz: tuple[np.ndarray, ...]
    dz: tuple[np.ndarray, ...]
    ez: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.a) == 0:
            raise ValueError("model needs at least one mode")
        nx = np.asarray(self.a[0]).shape[0]
        a = _mode_stack(self.a, "a", nx, nx)
        sigma = len(a)
        for name in ("b", "e", "cz", "dz", "ez"):
            if len(getattr(self, name)) != sigma:
                raise ValueError(f"{name} has {len(getattr(self, name))} modes, expected {sigma}")
        b = _mode_stack(self.b, "b", nx, None)
        e = _mode_stack(self.e, "e", nx, None)
        nu, nw = b[0].shape[1], e[0].shape[1]
        b = _mode_stack(b, "b", nx, nu)
        e = _mode_stack(e, "e", nx, nw)
        cz = _mode_stack(self.cz, "cz", None, nx)
        nz = cz[0].shape[0]
        cz = _mode_stack(cz, "cz", nz, nx)
        dz = _mode_stack(self.dz, "dz", nz, nu)
        ez = _mode_stack(self.ez, "ez", nz, nw)
        for name, val in zip(("a", "b", "e", "cz", "dz", "ez"), (a, b, e, cz, dz, ez)):
            object.__setattr__(self, name, val)

    @property
    def sigma(self) -> int:
        return len(self.a)

    @property
    def nx(self) -> int:
        return self.a[0].shape[0]

    @property
    def nu(self) -> int:
        return self.b[0].shape[1]

    @property
    def nw(self) -> int:
        return self.e[0].shape[1]

    @property
    def nz(self) -> int:
        return self.cz[0].shape[0]


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic mode transition matrix; rows sum to 1 within 1e-12."""

    p: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError(f"transition matrix must be square, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("transition matrix has non-finite entries")
        if np.any(p < 0.0):
            raise ValueError("transition probabilities must be non-negative")
        rows = p.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > _ROW_SUM_TOL):
            raise ValueError(f"rows must sum to 1 within {_ROW_SUM_TOL}, got {rows}")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "p", p)

    @property
    def order(self) -> int:
        return self.p.shape[0]


@dataclass(frozen=True)
class TransitionPolytope:
    """Convex hull of finitely many transition matrices of one order."""

    vertices: tuple[TransitionMatrix, ...]

    def __post_init__(self) -> None:
        verts = tuple(self.vertices)
        if not verts:
            raise ValueError("polytope needs at least one vertex")
        order = verts[0].order
        for i, v in enumerate(verts):
            if not isinstance(v, TransitionMatrix):
                raise ValueError(f"vertex {i} is not a TransitionMatrix")
            if v.order != order:
                raise ValueError(f"vertex {i} has order {v.order}, expected {order}")
        object.__setattr__(self, "vertices", verts)

    @property
    def order(self) -> int:
        return self.vertices[0].order

    def combine(self, weights) -> TransitionMatrix:
        """Convex combination of the vertices (weights >= 0 summing to 1)."""
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(self.vertices),):
            raise ValueError("one weight per vertex required")
        if np.any(w < 0.0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be a convex combination")
        p = sum(wi * v.p for wi, v in zip(w, self.vertices))
        # renormalize roundoff so the result passes the row-sum invariant
        return TransitionMatrix(p / p.sum(axis=1, keepdims=True))


@dataclass(frozen=True)
class BernoulliRow:
    """Mode distribution shared by every row (i.i.d. mode sequence)."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.probs, dtype=float)
        if q.ndim != 1 or q.size < 1:
            raise ValueError("probs must be a non-empty vector")
        if np.any(q < 0.0) or abs(q.sum() - 1.0) > _ROW_SUM_TOL:
            raise ValueError("probs must be a probability vector")
        q = q.copy()
        q.flags.writeable = False
        object.__setattr__(self, "probs", q)

    def to_matrix(self) -> TransitionMatrix:
        n = self.probs.size
        return TransitionMatrix(np.tile(self.probs, (n, 1)))


def dropout_chain(q: float) -> TransitionMatrix:
    """Two-mode Bernoulli chain: delivery probability q, loss 1 - q."""
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"delivery probability must lie in [0, 1], got {q}")
    return BernoulliRow(np.array([q, 1.0 - q])).to_matrix()


@dataclass(frozen=True)
class ControllerGain:
    """State-feedback gain u = K x with design provenance metadata."""

    k: np.ndarray
    method: str = ""
    cost: float = float("nan")

    def __post_init__(self) -> None:
        k = np.asarray(self.k, dtype=float)
        if k.ndim != 2:
            raise ValueError("gain must be a matrix")
        if not np.all(np.isfinite(k)):
            raise ValueError("gain has non-finite entries")
        k = k.copy()
        k.flags.writeable = False
        object.__setattr__(self, "k", k)


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray    # (T+1, nx)
    outputs: np.ndarray   # (T, nz)
    modes: np.ndarray     # (T,)
    input_energy: float
    output_energy: float

    def __post_init__(self) -> None:
        t = self.modes.shape[0]
        if self.states.shape[0] != t + 1 or self.outputs.shape[0] != t:
            raise ValueError("trajectory arrays have inconsistent lengths")


def close_loop(model: MjlsModel, gain: ControllerGain | np.ndarray) -> MjlsModel:
    """Substitute u = K x: A_i + B_i K, Cz_i + Dz_i K; input channel removed
    (closed-loop b is zero with zero columns, dz likewise).  Accepts either
    a ControllerGain or a bare (nu, nx) array."""
    k = gain.k if isinstance(gain, ControllerGain) else np.asarray(gain, dtype=float)
    if k.shape != (model.nu, model.nx):
        raise ValueError(
            f"gain shape {k.shape} does not match model ({model.nu}, {model.nx})"
        )
    return MjlsModel(
        a=tuple(ai + bi @ k for ai, bi in zip(model.a, model.b)),
        b=tuple(np.zeros((model.nx, 0)) for _ in range(model.sigma)),
        e=model.e,
        cz=tuple(ci + di @ k for ci, di in zip(model.cz, model.dz)),
        dz=tuple(np.zeros((model.nz, 0)) for _ in range(model.sigma)),
        ez=model.ez,
    )


def mss_spectral_radius(model: MjlsModel, gamma: TransitionMatrix) -> float:
    """Spectral radius of the second-moment propagation map.

    The loop is mean-square stable iff the returned value is < 1.  The map
    follows from Q_j(k+1) = sum_i p_ij A_i Q_i(k) A_i'.
    """
    if gamma.order != model.sigma:
        raise ValueError(
            f"transition matrix order {gamma.order} does not match {model.sigma} modes"
        )
    n2 = model.nx * model.nx
    blocks = [np.kron(ai, ai) for ai in model.a]
    lam = np.kron(gamma.p.T, np.eye(n2)) @ _blockdiag(blocks)
    return float(np.max(np.abs(np.linalg.eigvals(lam))))


def _blockdiag(blocks) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    at = 0
    for b in blocks:
        out[at:at + b.shape[0], at:at + b.shape[1]] = b
        at += b.shape[0]
    return out


def sample_chain(
    gamma: TransitionMatrix,
    theta0: int,
    length: int,
    seed: int | np.random.Generator,
) -> np.ndarray:
    """Mode sequence theta(0..length-1) with theta(0) = theta0."""
    if not (0 <= theta0 < gamma.order):
        raise ValueError(f"theta0 must be a mode index in [0, {gamma.order})")
    if length < 1:
        raise ValueError("length must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    cum = np.cumsum(gamma.p, axis=1)
    draws = rng.random(length - 1)
    modes = np.empty(length, dtype=np.int64)
    modes[0] = theta0
    for k in range(length - 1):
        modes[k + 1] = np.searchsorted(cum[modes[k]], draws[k], side="right")
    # guard against cumulative roundoff pushing past the last column
    np.clip(modes, 0, gamma.order - 1, out=modes)
    return modes


def simulate(
    model: MjlsModel,
    gamma: TransitionMatrix,
    w: np.ndarray,
    x0: np.ndarray,
    theta0: int,
    seed: int | np.random.Generator,
) -> Trajectory:
    """Exact recursion under a sampled mode path; control input is zero, so
    pass a closed-loop model (see close_loop)."""
    if gamma.order != model.sigma:
        raise ValueError("transition matrix order does not match model modes")
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        if model.nw != 1:
            raise ValueError(f"disturbance must have {model.nw} columns")
        w = w[:, None]
    if w.ndim != 2 or w.shape[1] != model.nw:
        raise ValueError(f"disturbance must be (T, {model.nw})")
    if not np.all(np.isfinite(w)):
        raise ValueError("disturbance has non-finite entries")
    x = np.asarray(x0, dtype=float).reshape(model.nx)
    horizon = w.shape[0]
    modes = sample_chain(gamma, theta0, horizon, seed)
    states = np.empty((horizon + 1, model.nx))
    outputs = np.empty((horizon, model.nz))
    states[0] = x
    for k in range(horizon):
        i = modes[k]
        outputs[k] = model.cz[i] @ states[k] + model.ez[i] @ w[k]
        states[k + 1] = model.a[i] @ states[k] + model.e[i] @ w[k]
    return Trajectory(
        states=states,
        outputs=outputs,
        modes=modes,
        input_energy=float(np.sum(w * w)),
        output_energy=float(np.sum(outputs * outputs)),
    )
