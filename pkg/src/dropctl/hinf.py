"""H-infinity analysis and state-feedback synthesis for jump linear systems.

The disturbance attenuation level of a mean-square stable closed loop is

    gamma = sup { ||z|| / ||w|| : 0 < ||w|| < inf }          (l2 norms,
                                                              zero initial
                                                              state)

worst-cased over the mode chain statistics.  A certified upper bound comes
from the jump-system bounded-real condition: gamma^2 <= mu whenever there
are P_i > 0 with, for every mode i (Pb_i = sum_j p_ij P_j),

    [ P_i - A_i' Pb_i A_i - C_i' C_i     -(A_i' Pb_i E_i + C_i' Ez_i) ]
    [            sym.                 mu I - E_i' Pb_i E_i - Ez_i' Ez_i ]  >= 0.

The condition is affine in the transition probabilities for fixed P_j, so
imposing it at every vertex of a transition-matrix polytope certifies the
whole polytope with a single P family.  Minimizing mu subject to the vertex
conditions is the analysis SDP; its optimum is the certified gamma.

Synthesis is two-stage: a common-Lyapunov LMI (variables X = P^-1 common to
all modes, Y = K X) produces a stabilizing gain in one shot, and a
coordinate-descent refinement alternates (a) the analysis SDP at fixed gain
with (b) a gain update at fixed P family, each step a single SDP.  Step (b)
is affine in K because the bounded-real condition is rewritten with the
Schur complement against blkdiag(Pb_i^-1, I).  Certificates always come
from step (a); the synthesis LMIs never serve as the reported bound.

The Monte Carlo lower bound is an independent falsifier: it power-iterates
w -> G* G w on sampled finite-horizon mode sequences, whose Rayleigh
quotient under-approximates gamma^2 for any horizon and sample size.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lmi import (
    AffineMatrixExpr,
    SdpProblem,
    SolveStatus,
    SolverTolerances,
    solve_sdp,
)
from .mjls import (
    ControllerGain,
    MjlsModel,
    TransitionMatrix,
    TransitionPolytope,
    close_loop,
    dropout_chain,
    mss_spectral_radius,
)
from .rng import make_rng

__all__ = [
    "BrlCertificate",
    "SynthesisResult",
    "CertificationInfeasible",
    "NotStabilizable",
    "SolverFailure",
    "UnstableLoop",
    "brl_analysis",
    "certificate_residual",
    "mc_lower_bound",
    "synth_common_x",
    "synth_refine",
    "optimal_design",
    "robust_design",
    "lyapunov_mss_feasible",
]

METHOD_COMMON_X = "common_x"
METHOD_REFINED = "refined"


class CertificationInfeasible(RuntimeError):
    """No finite disturbance-attenuation certificate over the given polytope."""


class NotStabilizable(RuntimeError):
    """Synthesis LMI infeasible at the requested delivery probability."""

    def __init__(self, q: float, message: str | None = None):
        self.q = q
        super().__init__(message or f"synthesis infeasible at delivery probability q={q}")


class SolverFailure(RuntimeError):
    """The SDP solver gave up (iteration cap or numerical breakdown)."""


class UnstableLoop(ValueError):
    """Operation requires a mean-square stable closed loop."""


@dataclass(frozen=True)
class BrlCertificate:
    """Feasible bounded-real family: one P per mode, valid at every vertex."""

    p: tuple[np.ndarray, ...]
    gamma: float
    polytope: TransitionPolytope


@dataclass(frozen=True)
class SynthesisResult:
    gain: ControllerGain
    certificate: BrlCertificate
    iterations: int
    method: str
    gamma_history: tuple[float, ...]


# ---------------------------------------------------------------------------
# symmetric-variable bookkeeping
# ---------------------------------------------------------------------------


def _sym_pairs(n: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(n) for b in range(a, n)]


def _sym_basis(n: int) -> list[np.ndarray]:
    mats = []
    for a, b in _sym_pairs(n):
        e = np.zeros((n, n))
        e[a, b] = 1.0
        e[b, a] = 1.0
        mats.append(e)
    return mats


def _unpack_sym(x: np.ndarray, n: int) -> np.ndarray:
    m = np.zeros((n, n))
    for v, (a, b) in zip(x, _sym_pairs(n)):
        m[a, b] = v
        m[b, a] = v
    return m


def _data_scale(model: MjlsModel) -> float:
    return max(
        float(np.linalg.norm(m))
        for group in (model.a, model.e, model.cz, model.ez)
        for m in group
    )


def _require_polytope(polytope: TransitionPolytope | TransitionMatrix) -> TransitionPolytope:
    if isinstance(polytope, TransitionMatrix):
        return TransitionPolytope(vertices=(polytope,))
    return polytope


# ---------------------------------------------------------------------------
# analysis
# ---------------------------------------------------------------------------


def _brl_constraints(
    model: MjlsModel, polytope: TransitionPolytope, eps: float
) -> tuple[list[AffineMatrixExpr], int, int]:
    """Vertex bounded-real blocks plus P_j >= eps I blocks.

    Variable layout: sym entries of P_0..P_{sigma-1} (upper triangle,
    row-major), then mu = gamma^2 last.
    """
    sigma, nx, nw = model.sigma, model.nx, model.nw
    basis = _sym_basis(nx)
    per = len(basis)
    nvars = sigma * per + 1
    mu_at = nvars - 1
    order = nx + nw
    eye_nw = np.eye(nw)

    cons: list[AffineMatrixExpr] = []
    for vert in polytope.vertices:
        p = vert.p
        for i in range(sigma):
            ai, ei = model.a[i], model.e[i]
            ci, fzi = model.cz[i], model.ez[i]
            const = np.zeros((order, order))
            const[:nx, :nx] = -(ci.T @ ci)
            const[:nx, nx:] = -(ci.T @ fzi)
            const[nx:, :nx] = const[:nx, nx:].T
            const[nx:, nx:] = -(fzi.T @ fzi)
            const -= eps * np.eye(order)
            coeffs = np.zeros((nvars, order, order))
            for j in range(sigma):
                pij = p[i, j]
                for t, eab in enumerate(basis):
                    blk = coeffs[j * per + t]
                    if j == i:
                        blk[:nx, :nx] += eab
                    if pij != 0.0:
                        blk[:nx, :nx] -= pij * (ai.T @ eab @ ai)
                        cross = pij * (ai.T @ eab @ ei)
                        blk[:nx, nx:] -= cross
                        blk[nx:, :nx] -= cross.T
                        blk[nx:, nx:] -= pij * (ei.T @ eab @ ei)
            coeffs[mu_at, nx:, nx:] = eye_nw
            cons.append(AffineMatrixExpr(const, coeffs))

    for j in range(sigma):
        coeffs = np.zeros((nvars, nx, nx))
        for t, eab in enumerate(basis):
            coeffs[j * per + t] = eab
        cons.append(AffineMatrixExpr(-eps * np.eye(nx), coeffs))
    return cons, nvars, mu_at


def brl_analysis(
    model: MjlsModel,
    polytope: TransitionPolytope | TransitionMatrix,
    tol: SolverTolerances | None = None,
) -> BrlCertificate:
    """Least certified gamma over the transition polytope for a closed loop.

    The model must already be closed (no live control input); a model with
    nu > 0 is analyzed as-is with u = 0.  Raises CertificationInfeasible
    when no finite certificate exists and SolverFailure when the solver
    cannot decide.
    """
    polytope = _require_polytope(polytope)
    if polytope.order != model.sigma:
        raise ValueError("polytope order does not match the number of modes")
    tol = tol or SolverTolerances()
    eps = 1e-8 * (1.0 + _data_scale(model))
    cons, nvars, mu_at = _brl_constraints(model, polytope, eps)
    objective = np.zeros(nvars)
    objective[mu_at] = 1.0
    sol = solve_sdp(SdpProblem(objective, tuple(cons)), tol)
    if sol.status is SolveStatus.INFEASIBLE:
        raise CertificationInfeasible(
            "bounded-real condition infeasible over the polytope "
            "(loop not certifiably mean-square stable with finite gamma)"
        )
    if sol.status is not SolveStatus.OPTIMAL:
        raise SolverFailure(f"analysis SDP ended with status {sol.status.value}")
    per = model.nx * (model.nx + 1) // 2
    p = tuple(
        _unpack_sym(sol.x[j * per:(j + 1) * per], model.nx)
        for j in range(model.sigma)
    )
    gamma = float(np.sqrt(max(sol.x[mu_at], 0.0)))
    return BrlCertificate(p=p, gamma=gamma, polytope=polytope)


def certificate_residual(model: MjlsModel, cert: BrlCertificate) -> float:
    """Smallest eigenvalue over all vertex bounded-real blocks at the
    certificate's P family and gamma (>= 0 up to the construction margin
    when the certificate is genuine).  Used by artifact re-verification."""
    cons, nvars, mu_at = _brl_constraints(model, cert.polytope, eps=0.0)
    per = model.nx * (model.nx + 1) // 2
    x = np.empty(nvars)
    for j, pj in enumerate(cert.p):
        x[j * per:(j + 1) * per] = [pj[a, b] for a, b in _sym_pairs(model.nx)]
    x[mu_at] = cert.gamma ** 2
    return min(float(np.linalg.eigvalsh(c(x))[0]) for c in cons)


# ---------------------------------------------------------------------------
# Monte Carlo lower bound
# ---------------------------------------------------------------------------


def _sample_mode_matrix(
    gamma: TransitionMatrix, theta0: int, trials: int, horizon: int, rng
) -> np.ndarray:
    """(trials, horizon) mode indices, every row starting at theta0."""
    cum = np.cumsum(gamma.p, axis=1)
    modes = np.empty((trials, horizon), dtype=np.int64)
    modes[:, 0] = theta0
    draws = rng.random((trials, horizon - 1)) if horizon > 1 else None
    for k in range(horizon - 1):
        cur = modes[:, k]
        nxt = np.empty(trials, dtype=np.int64)
        for i in range(gamma.order):
            mask = cur == i
            if np.any(mask):
                nxt[mask] = np.searchsorted(cum[i], draws[mask, k], side="right")
        modes[:, k + 1] = np.clip(nxt, 0, gamma.order - 1)
    return modes


def mc_lower_bound(
    model: MjlsModel,
    gamma_matrix: TransitionMatrix,
    seed: int | np.random.Generator,
    trials: int = 200,
    horizon: int = 400,
    power_iters: int = 10,
    restarts: int = 5,
) -> float:
    """Statistical lower bound on the closed-loop attenuation level.

    Runs power iteration on the sampled-average operator H = E[G* G] built
    from `trials` frozen mode sequences per initial mode: forward simulate
    each trial, back-propagate the adjoint along the same sequence, average.
    Every Rayleigh quotient encountered under-approximates gamma^2 (finite
    horizon and finite sampling both bias downward only in expectation, so
    the bound is statistical, not certified).  Requires a mean-square
    stable loop.
    """
    if gamma_matrix.order != model.sigma:
        raise ValueError("transition matrix order does not match model modes")
    if trials < 1 or horizon < 2 or power_iters < 1 or restarts < 1:
        raise ValueError("trials, horizon, power_iters, restarts must be positive")
    if mss_spectral_radius(model, gamma_matrix) >= 1.0:
        raise UnstableLoop(
            "closed loop is not mean-square stable; the attenuation level is infinite"
        )
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    nx, nw, nz = model.nx, model.nw, model.nz
    best = 0.0
    for theta0 in range(model.sigma):
        modes = _sample_mode_matrix(gamma_matrix, theta0, trials, horizon, rng)
        # per-step trial groups, reused by every forward/adjoint pass
        groups = [
            [np.nonzero(modes[:, k] == i)[0] for i in range(model.sigma)]
            for k in range(horizon)
        ]
        w = rng.normal(size=(restarts, horizon, nw))
        w /= np.linalg.norm(w, axis=(1, 2), keepdims=True)
        for _ in range(power_iters):
            # forward: z(k) = C x(k) + Ez w(k); x(k+1) = A x(k) + E w(k)
            x = np.zeros((trials, restarts, nx))
            z = np.empty((trials, restarts, horizon, nz))
            for k in range(horizon):
                wk = w[:, k, :]                      # (restarts, nw)
                for i in range(model.sigma):
                    idx = groups[k][i]
                    if idx.size == 0:
                        continue
                    z[idx, :, k, :] = x[idx] @ model.cz[i].T + wk @ model.ez[i].T
                    x[idx] = x[idx] @ model.a[i].T + wk @ model.e[i].T
            ray = np.mean(np.sum(z * z, axis=(2, 3)), axis=0)  # per restart
            best = max(best, float(np.max(ray)))
            # adjoint: lam(k) = A' lam(k+1) + C' z(k); g(k) = E' lam(k+1) + Ez' z(k)
            lam = np.zeros((trials, restarts, nx))
            g = np.empty((trials, restarts, horizon, nw))
            for k in range(horizon - 1, -1, -1):
                for i in range(model.sigma):
                    idx = groups[k][i]
                    if idx.size == 0:
                        continue
                    zk = z[idx, :, k, :]
                    g[idx, :, k, :] = lam[idx] @ model.e[i] + zk @ model.ez[i]
                    lam[idx] = lam[idx] @ model.a[i] + zk @ model.cz[i]
            v = np.mean(g, axis=0)                   # (restarts, horizon, nw)
            norms = np.linalg.norm(v, axis=(1, 2), keepdims=True)
            if np.any(norms < 1e-300):
                break  # output identically zero along these sequences
            w = v / norms
    return float(np.sqrt(best))


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------


def synth_common_x(
    model: MjlsModel,
    gamma_matrix: TransitionMatrix,
    tol: SolverTolerances | None = None,
) -> ControllerGain:
    """One-shot gain via a mode-independent Lyapunov variable.

    Solves, with X symmetric PD, Y, mu and R_i' = [sqrt(p_i1) I ...
    sqrt(p_isigma) I]:

        [ X                *              *            *  ]
        [ 0                mu I           *            *  ]
        [ R_i(A_i X+B_i Y) R_i E_i        I_sigma (x) X *  ]   >= 0,  all i
        [ Cz_i X+Dz_i Y    Ez_i           0            I  ]

    then K = Y X^-1.  Conservative (one X for every mode) but jointly
    convex; the certificate it implies has P_i = X^-1 for all modes and is
    therefore valid for every transition matrix at once.  Raises
    NotStabilizable when the LMI is infeasible.
    """
    if gamma_matrix.order != model.sigma:
        raise ValueError("transition matrix order does not match model modes")
    tol = tol or SolverTolerances()
    sigma, nx, nu, nw, nz = model.sigma, model.nx, model.nu, model.nw, model.nz
    if nu == 0:
        raise ValueError("model has no control input to design for")
    scale = max(_data_scale(model), max(float(np.linalg.norm(b)) for b in model.b))
    eps = 1e-8 * (1.0 + scale)

    basis = _sym_basis(nx)
    per = len(basis)
    nvars = per + nu * nx + 1
    mu_at = nvars - 1
    o1, o2, o3 = nx, nx + nw, nx + nw + sigma * nx
    order = o3 + nz

    sqrt_p = np.sqrt(gamma_matrix.p)
    cons: list[AffineMatrixExpr] = []
    for i in range(sigma):
        ai, bi, ei = model.a[i], model.b[i], model.e[i]
        ci, di, fzi = model.cz[i], model.dz[i], model.ez[i]
        ri = np.vstack([sqrt_p[i, j] * np.eye(nx) for j in range(sigma)])
        const = np.zeros((order, order))
        const[o2:o3, o1:o2] = ri @ ei
        const[o1:o2, o2:o3] = (ri @ ei).T
        const[o3:, o1:o2] = fzi
        const[o1:o2, o3:] = fzi.T
        const[o3:, o3:] = np.eye(nz)
        const -= eps * np.eye(order)
        coeffs = np.zeros((nvars, order, order))
        for t, eab in enumerate(basis):
            blk = coeffs[t]
            blk[:o1, :o1] += eab
            low = ri @ (ai @ eab)
            blk[o2:o3, :o1] += low
            blk[:o1, o2:o3] += low.T
            zlow = ci @ eab
            blk[o3:, :o1] += zlow
            blk[:o1, o3:] += zlow.T
            blk[o2:o3, o2:o3] += np.kron(np.eye(sigma), eab)
        for u in range(nu):
            for xcol in range(nx):
                yb = np.zeros((nu, nx))
                yb[u, xcol] = 1.0
                blk = coeffs[per + u * nx + xcol]
                low = ri @ (bi @ yb)
                blk[o2:o3, :o1] += low
                blk[:o1, o2:o3] += low.T
                zlow = di @ yb
                blk[o3:, :o1] += zlow
                blk[:o1, o3:] += zlow.T
        coeffs[mu_at, o1:o2, o1:o2] = np.eye(nw)
        cons.append(AffineMatrixExpr(const, coeffs))

    # X alone must clear a PD margin (K = Y X^-1 needs a well-posed inverse)
    coeffs = np.zeros((nvars, nx, nx))
    for t, eab in enumerate(basis):
        coeffs[t] = eab
    cons.append(AffineMatrixExpr(-eps * np.eye(nx), coeffs))

    objective = np.zeros(nvars)
    objective[mu_at] = 1.0
    sol = solve_sdp(SdpProblem(objective, tuple(cons)), tol)
    if sol.status is SolveStatus.INFEASIBLE:
        q = float(gamma_matrix.p[0, 0])
        raise NotStabilizable(q)
    if sol.status is not SolveStatus.OPTIMAL:
        raise SolverFailure(f"synthesis SDP ended with status {sol.status.value}")
    x_mat = _unpack_sym(sol.x[:per], nx)
    if float(np.linalg.eigvalsh(x_mat)[0]) < 1e-10:
        raise SolverFailure("synthesis returned a numerically singular Lyapunov variable")
    y_mat = sol.x[per:per + nu * nx].reshape(nu, nx)
    k = np.linalg.solve(x_mat.T, y_mat.T).T
    mu = max(float(sol.x[mu_at]), 0.0)
    return ControllerGain(k=k, method=METHOD_COMMON_X, cost=float(np.sqrt(mu)))


def _gain_step(
    model: MjlsModel,
    polytope: TransitionPolytope,
    cert: BrlCertificate,
    tol: SolverTolerances,
    eps: float,
) -> tuple[ControllerGain, float] | None:
    """Refinement step (b): best gain for the frozen P family.

    Bounded-real condition Schur-complemented against blkdiag(Pb_i^-1, I)
    so it is affine in K; one block per (vertex, mode).  Returns None when
    the solver cannot improve on this family (caller keeps the incumbent).
    """
    sigma, nx, nu, nw, nz = model.sigma, model.nx, model.nu, model.nw, model.nz
    nvars = nu * nx + 1
    mu_at = nvars - 1
    o1, o2, o3 = nx, nx + nw, nx + nw + nx
    order = o3 + nz

    cons: list[AffineMatrixExpr] = []
    for vert in polytope.vertices:
        for i in range(sigma):
            pbar = sum(vert.p[i, j] * cert.p[j] for j in range(sigma))
            try:
                pbar_inv = np.linalg.inv(pbar)
            except np.linalg.LinAlgError:
                return None
            ai, bi, ei = model.a[i], model.b[i], model.e[i]
            ci, di, fzi = model.cz[i], model.dz[i], model.ez[i]
            const = np.zeros((order, order))
            const[:o1, :o1] = cert.p[i]
            const[o2:o3, :o1] = ai
            const[:o1, o2:o3] = ai.T
            const[o2:o3, o1:o2] = ei
            const[o1:o2, o2:o3] = ei.T
            const[o3:, :o1] = ci
            const[:o1, o3:] = ci.T
            const[o3:, o1:o2] = fzi
            const[o1:o2, o3:] = fzi.T
            const[o2:o3, o2:o3] = 0.5 * (pbar_inv + pbar_inv.T)
            const[o3:, o3:] = np.eye(nz)
            const -= eps * np.eye(order)
            coeffs = np.zeros((nvars, order, order))
            for u in range(nu):
                for xcol in range(nx):
                    kb = np.zeros((nu, nx))
                    kb[u, xcol] = 1.0
                    blk = coeffs[u * nx + xcol]
                    low = bi @ kb
                    blk[o2:o3, :o1] += low
                    blk[:o1, o2:o3] += low.T
                    zlow = di @ kb
                    blk[o3:, :o1] += zlow
                    blk[:o1, o3:] += zlow.T
            coeffs[mu_at, o1:o2, o1:o2] = np.eye(nw)
            cons.append(AffineMatrixExpr(const, coeffs))

    objective = np.zeros(nvars)
    objective[mu_at] = 1.0
    sol = solve_sdp(SdpProblem(objective, tuple(cons)), tol)
    if sol.status is not SolveStatus.OPTIMAL:
        return None
    k = sol.x[:nu * nx].reshape(nu, nx)
    return ControllerGain(k=k, method=METHOD_REFINED), float(sol.x[mu_at])


def synth_refine(
    model: MjlsModel,
    polytope: TransitionPolytope | TransitionMatrix,
    gain0: ControllerGain,
    max_iters: int = 10,
    improve_tol: float = 1e-4,
    tol: SolverTolerances | None = None,
) -> SynthesisResult:
    """Alternate analysis and gain steps from a certifiable starting gain.

    Each sweep re-certifies the incumbent loop (analysis SDP) and then
    re-optimizes the gain against the frozen P family; the certified gamma
    sequence is nonincreasing by construction (the incumbent pair stays
    feasible for both steps).  Stops when the relative improvement drops
    below improve_tol or after max_iters sweeps; the reported certificate
    is always a fresh analysis of the returned gain, never a synthesis
    by-product.
    """
    polytope = _require_polytope(polytope)
    tol = tol or SolverTolerances()
    eps_gain = 1e-9 * (1.0 + _data_scale(model))
    cert = brl_analysis(close_loop(model, gain0), polytope, tol)
    best_gain, best_cert = gain0, cert
    history = [cert.gamma]
    sweeps = 0
    for _ in range(max_iters):
        step = _gain_step(model, polytope, best_cert, tol, eps_gain)
        if step is None:
            break
        cand_gain, _ = step
        try:
            cand_cert = brl_analysis(close_loop(model, cand_gain), polytope, tol)
        except (CertificationInfeasible, SolverFailure):
            break
        sweeps += 1
        history.append(cand_cert.gamma)
        improved = best_cert.gamma - cand_cert.gamma
        if cand_cert.gamma <= best_cert.gamma:
            best_gain, best_cert = cand_gain, cand_cert
        if improved < improve_tol * max(best_cert.gamma, 1e-12):
            break
    final_gain = ControllerGain(
        k=best_gain.k, method=METHOD_REFINED, cost=best_cert.gamma
    )
    return SynthesisResult(
        gain=final_gain,
        certificate=best_cert,
        iterations=sweeps,
        method=METHOD_REFINED,
        gamma_history=tuple(history),
    )


def optimal_design(
    model: MjlsModel,
    q: float,
    tol: SolverTolerances | None = None,
    max_iters: int = 10,
    improve_tol: float = 1e-4,
) -> SynthesisResult:
    """Best gain for one known delivery probability q (two-mode dropout)."""
    if model.sigma != 2:
        raise ValueError("optimal_design expects the two-mode dropout model")
    chain = dropout_chain(q)
    try:
        gain0 = synth_common_x(model, chain, tol)
    except NotStabilizable:
        raise NotStabilizable(q)
    return synth_refine(
        model, chain, gain0, max_iters=max_iters, improve_tol=improve_tol, tol=tol
    )


def robust_design(
    model: MjlsModel,
    q_lo: float,
    q_hi: float,
    tol: SolverTolerances | None = None,
    max_iters: int = 10,
    improve_tol: float = 1e-4,
) -> SynthesisResult:
    """One gain certified for every delivery probability in [q_lo, q_hi].

    The interval maps to the polytope spanned by its endpoint chains; the
    common-X stage runs at the harder endpoint q_lo (its certificate is
    transition-independent, so it covers the polytope), refinement then
    works the full vertex set.
    """
    if model.sigma != 2:
        raise ValueError("robust_design expects the two-mode dropout model")
    if not (0.0 <= q_lo <= q_hi <= 1.0):
        raise ValueError(f"need 0 <= q_lo <= q_hi <= 1, got [{q_lo}, {q_hi}]")
    polytope = TransitionPolytope(
        vertices=(dropout_chain(q_lo), dropout_chain(q_hi))
    )
    try:
        gain0 = synth_common_x(model, dropout_chain(q_lo), tol)
    except NotStabilizable:
        raise NotStabilizable(q_lo, f"robust synthesis infeasible at interval floor q={q_lo}")
    return synth_refine(
        model, polytope, gain0, max_iters=max_iters, improve_tol=improve_tol, tol=tol
    )


# ---------------------------------------------------------------------------
# Lyapunov feasibility cross-check
# ---------------------------------------------------------------------------


def lyapunov_mss_feasible(
    model: MjlsModel,
    gamma_matrix: TransitionMatrix,
    tol: SolverTolerances | None = None,
) -> bool:
    """Mean-square stability decided by SDP feasibility, not eigenvalues.

    Tests existence of P_i with P_i >= I and P_i - A_i'(sum_j p_ij P_j)A_i
    >= eps0 I (normalization P_i >= I removes the homogeneous degeneracy).
    Serves as the dual route to mss_spectral_radius; marginal loops (second
    moment radius within ~1e-3 of 1) may be decided either way.
    """
    if gamma_matrix.order != model.sigma:
        raise ValueError("transition matrix order does not match model modes")
    tol = tol or SolverTolerances()
    sigma, nx = model.sigma, model.nx
    basis = _sym_basis(nx)
    per = len(basis)
    nvars = sigma * per
    scale = max(float(np.linalg.norm(a)) for a in model.a)
    eps0 = 1e-6 * (1.0 + scale * scale)

    cons: list[AffineMatrixExpr] = []
    for i in range(sigma):
        ai = model.a[i]
        coeffs = np.zeros((nvars, nx, nx))
        for j in range(sigma):
            pij = gamma_matrix.p[i, j]
            for t, eab in enumerate(basis):
                blk = coeffs[j * per + t]
                if j == i:
                    blk += eab
                if pij != 0.0:
                    blk -= pij * (ai.T @ eab @ ai)
        cons.append(AffineMatrixExpr(-eps0 * np.eye(nx), coeffs))
    for j in range(sigma):
        coeffs = np.zeros((nvars, nx, nx))
        for t, eab in enumerate(basis):
            coeffs[j * per + t] = eab
        cons.append(AffineMatrixExpr(-np.eye(nx), coeffs))

    sol = solve_sdp(SdpProblem(np.zeros(nvars), tuple(cons)), tol)
    if sol.status is SolveStatus.OPTIMAL:
        return True
    if sol.status is SolveStatus.INFEASIBLE:
        return False
    raise SolverFailure(f"feasibility SDP ended with status {sol.status.value}")
