"""Affine LMI modeling and a dense primal-dual SDP solver.

Problems are posed in linear-matrix-inequality form

    minimize    c' x
    subject to  F_b(x) = F0_b + sum_k x_k Fk_b  >=  0   (PSD), b = 1..nblocks

with a handful of scalar decision variables and dense symmetric blocks of
modest order.  That is exactly the shape of the bounded-real and synthesis
conditions assembled elsewhere in this package, so the solver is tuned for
"desk scale" problems (tens of variables, blocks of order below ~100) and
favors predictable, deterministic behavior over large-scale performance.

The solver is a Mehrotra-style predictor-corrector interior-point method
using the HKM direction.  Feasibility is always decided first by a phase-I
embedding (minimize t subject to F_b(x) + t I >= 0 and t + 1 >= 0, so the
objective is bounded); the original objective is only minimized once a
strictly feasible region is certified.  Both phases run the same core
iteration.

No external SDP solver is used anywhere in the package; numpy/scipy provide
dense linear algebra kernels only.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

__all__ = [
    "SymMatrix",
    "AffineMatrixExpr",
    "SdpProblem",
    "SolverTolerances",
    "SolveStatus",
    "SdpSolution",
    "solve_sdp",
    "check_feasible",
    "min_eigenvalue",
]


def _validated_square(a: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{what} has non-finite entries")
    return m


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class SymMatrix:
    """Dense real symmetric matrix; input is symmetrized on construction."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        m = _sym(_validated_square(self.entries, "SymMatrix"))
        m.flags.writeable = False
        object.__setattr__(self, "entries", m)

    @property
    def order(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class AffineMatrixExpr:
    """Symmetric-matrix-valued affine map x -> constant + sum_k x_k coeffs[k].

    `coeffs` holds one symmetric matrix per scalar decision variable (a zero
    matrix if the variable does not enter this block); stored stacked as an
    (nvars, order, order) array.
    """

    constant: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        const = _sym(_validated_square(self.constant, "constant term"))
        raw = self.coeffs
        if isinstance(raw, np.ndarray) and raw.ndim == 3:
            stack = np.asarray(raw, dtype=float)
        else:
            mats = [_validated_square(c, "coefficient") for c in raw]
            stack = (
                np.stack(mats)
                if mats
                else np.zeros((0, const.shape[0], const.shape[0]))
            )
        if not np.all(np.isfinite(stack)):
            raise ValueError("coefficient has non-finite entries")
        if stack.shape[1:] != const.shape:
            raise ValueError(
                f"coefficient order {stack.shape[1:]} does not match "
                f"constant order {const.shape}"
            )
        stack = 0.5 * (stack + np.transpose(stack, (0, 2, 1)))
        const.flags.writeable = False
        stack.flags.writeable = False
        object.__setattr__(self, "constant", const)
        object.__setattr__(self, "coeffs", stack)

    @property
    def order(self) -> int:
        return self.constant.shape[0]

    @property
    def nvars(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.nvars,):
            raise ValueError(
                f"expected {self.nvars} decision variables, got shape {x.shape}"
            )
        return self.constant + np.tensordot(x, self.coeffs, axes=1)


@dataclass(frozen=True)
class SdpProblem:
    """min objective . x  subject to every constraint being PSD at x."""

    objective: np.ndarray
    constraints: tuple[AffineMatrixExpr, ...]

    def __post_init__(self) -> None:
        c = np.asarray(self.objective, dtype=float)
        if c.ndim != 1:
            raise ValueError("objective must be a vector")
        if not np.all(np.isfinite(c)):
            raise ValueError("objective has non-finite entries")
        cons = tuple(self.constraints)
        if not cons:
            raise ValueError("problem has no constraints")
        for i, con in enumerate(cons):
            if not isinstance(con, AffineMatrixExpr):
                raise ValueError(f"constraint {i} is not an AffineMatrixExpr")
            if con.nvars != c.size:
                raise ValueError(
                    f"constraint {i} has {con.nvars} variables, "
                    f"objective has {c.size}"
                )
            if con.order < 1:
                raise ValueError(f"constraint {i} has order 0")
        c.flags.writeable = False
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "constraints", cons)

    @property
    def nvars(self) -> int:
        return self.objective.size


@dataclass(frozen=True)
class SolverTolerances:
    gap: float = 1e-7
    feas: float = 1e-8
    max_iters: int = 200

    def __post_init__(self) -> None:
        if not (self.gap > 0 and self.feas > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SdpSolution:
    """Solver outcome.

    `x` is the best iterate found (for INFEASIBLE it is the phase-I point of
    least worst-case violation, kept for diagnostics).  `worst_violation` is
    the most negative constraint eigenvalue at x, >= 0 when every block is
    PSD.  When status is OPTIMAL, worst_violation >= -tol.feas.
    """

    status: SolveStatus
    x: np.ndarray
    objective: float
    worst_violation: float
    iterations: int


def min_eigenvalue(m: SymMatrix | np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix (input symmetrized)."""
    a = m.entries if isinstance(m, SymMatrix) else _sym(_validated_square(m, "matrix"))
    return float(np.linalg.eigvalsh(a)[0])


def check_feasible(
    expr: AffineMatrixExpr, x: np.ndarray, tol: float = 0.0
) -> tuple[bool, float]:
    """Whether expr(x) >= -tol * I, together with its smallest eigenvalue."""
    lam = min_eigenvalue(expr(x))
    return lam >= -tol, lam


def _worst_violation(constraints, x: np.ndarray) -> float:
    return min(float(np.linalg.eigvalsh(c(x))[0]) for c in constraints)


# ---------------------------------------------------------------------------
# interior-point core
# ---------------------------------------------------------------------------

_STEP_DAMP = 0.98


@dataclass
class _Block:
    f0: np.ndarray      # (n, n), scaled
    fk: np.ndarray      # (m, n, n), scaled
    scale: float        # original = scale * scaled


@dataclass
class _IpmResult:
    status: SolveStatus
    x: np.ndarray
    objective: float
    iterations: int
    # Best certified lower bound on the optimum seen along the run: the dual
    # objective of an iterate whose dual residual was already negligible.  It
    # stays meaningful even when the iteration later fails, which is what lets
    # phase-I conclude infeasibility without a converged primal.
    dual_bound: float = float("-inf")


def _prepare(problem: SdpProblem) -> tuple[list[_Block], np.ndarray, float]:
    blocks = []
    for con in problem.constraints:
        scale = max(
            1e-10,
            float(np.linalg.norm(con.constant)),
            float(np.max(np.linalg.norm(con.coeffs, axis=(1, 2)), initial=0.0)),
        )
        blocks.append(_Block(con.constant / scale, con.coeffs / scale, scale))
    c = problem.objective
    obj_scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
    return blocks, c / obj_scale, obj_scale


def _max_step(s: np.ndarray, ds: np.ndarray) -> float:
    """Largest alpha with s + alpha * ds still PSD (s is PD)."""
    ell = np.linalg.cholesky(s)
    w = scipy.linalg.solve_triangular(ell, ds, lower=True)
    w = scipy.linalg.solve_triangular(ell, w.T, lower=True)
    lam = float(np.linalg.eigvalsh(_sym(w))[0])
    if lam >= -1e-14:
        return np.inf
    return -1.0 / lam


def _solve_spd(m: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    """Solve m y = rhs with m symmetric PD up to roundoff; None on failure."""
    base = float(np.max(np.abs(np.diag(m)), initial=1.0))
    for jitter in (0.0, 1e-14, 1e-11, 1e-8):
        try:
            factor = scipy.linalg.cho_factor(m + jitter * base * np.eye(m.shape[0]))
            return scipy.linalg.cho_solve(factor, rhs)
        except np.linalg.LinAlgError:
            continue
        except scipy.linalg.LinAlgError:  # pragma: no cover - alias on some versions
            continue
    return None


def _ipm(
    blocks: list[_Block],
    c: np.ndarray,
    tol: SolverTolerances,
    viol_check=None,
) -> _IpmResult:
    """Core predictor-corrector iteration on a scaled problem.

    Maintains x (decision vector), one PD slack S_b per block and one PD dual
    multiplier Z_b per block; KKT residuals are driven to zero jointly, so a
    cold infeasible start is fine.  When given, viol_check(x) must return the
    worst constraint violation of the *unscaled* problem; convergence is then
    only declared once it clears -tol.feas, which ties termination directly
    to the user-facing feasibility contract.
    """
    m = c.size
    x = np.zeros(m)
    slack = [10.0 * max(1.0, np.linalg.norm(b.f0)) * np.eye(b.f0.shape[0]) for b in blocks]
    dual = [10.0 * max(1.0, float(np.max(np.abs(c), initial=0.0))) * np.eye(b.f0.shape[0]) for b in blocks]
    total_order = sum(b.f0.shape[0] for b in blocks)

    best_x = x.copy()
    best_bound = float("-inf")
    for it in range(1, tol.max_iters + 1):
        fvals = [b.f0 + np.tensordot(x, b.fk, axes=1) for b in blocks]
        rp = [f - s for f, s in zip(fvals, slack)]
        rd = c - sum(
            np.einsum("kab,ab->k", b.fk, z, optimize=True)
            for b, z in zip(blocks, dual)
        )
        gap = sum(float(np.tensordot(z, s)) for z, s in zip(dual, slack))
        mu = gap / total_order

        pobj = float(c @ x)
        dobj = -sum(float(np.tensordot(z, b.f0)) for z, b in zip(dual, blocks))
        rel_gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = max(
            np.linalg.norm(r) / (1.0 + np.linalg.norm(b.f0))
            for r, b in zip(rp, blocks)
        )
        dinf = float(np.max(np.abs(rd), initial=0.0)) / (
            1.0 + float(np.max(np.abs(c), initial=0.0))
        )
        if np.isfinite(dobj) and dinf <= max(1e-9, 10.0 * tol.gap):
            best_bound = max(best_bound, dobj)
        if (
            rel_gap <= tol.gap
            and mu / (1.0 + abs(pobj)) <= tol.gap
            and pinf <= max(1e-12, 0.1 * tol.feas)
            and dinf <= max(1e-9, 10.0 * tol.gap)
            and (viol_check is None or viol_check(x) >= -tol.feas)
        ):
            return _IpmResult(SolveStatus.OPTIMAL, x, pobj, it - 1, best_bound)
        if not np.isfinite(pobj) or np.linalg.norm(x) > 1e14 or abs(pobj) > 1e15:
            return _IpmResult(SolveStatus.NUMERICAL_FAILURE, best_x, pobj, it - 1, best_bound)

        try:
            sinv = []
            for s in slack:
                factor = scipy.linalg.cho_factor(s)
                sinv.append(scipy.linalg.cho_solve(factor, np.eye(s.shape[0])))
        except (np.linalg.LinAlgError, ValueError):
            return _IpmResult(SolveStatus.NUMERICAL_FAILURE, best_x, pobj, it - 1, best_bound)

        # Schur complement M_jk = sum_b tr(Fj Z Fk S^-1); symmetric PD.
        schur = np.zeros((m, m))
        for b, z, si in zip(blocks, dual, sinv):
            t = np.einsum("ab,kbc,cd->kad", z, b.fk, si, optimize=True)
            schur += np.einsum("jab,kba->jk", b.fk, t, optimize=True)
        schur = _sym(schur)

        def direction(rc: list[np.ndarray]) -> tuple | None:
            g = np.zeros(m)
            for b, z, si, r, rcb in zip(blocks, dual, sinv, rp, rc):
                u = (rcb - z @ r) @ si
                g += np.einsum("jab,ba->j", b.fk, u, optimize=True)
            dx = _solve_spd(schur, g - rd)
            if dx is None or not np.all(np.isfinite(dx)):
                return None
            d_s = [np.tensordot(dx, b.fk, axes=1) + r for b, r in zip(blocks, rp)]
            d_z = [
                _sym((rcb - z @ ds) @ si)
                for rcb, z, ds, si in zip(rc, dual, d_s, sinv)
            ]
            return dx, d_s, d_z

        pred = direction([-z @ s for z, s in zip(dual, slack)])
        if pred is None:
            return _IpmResult(SolveStatus.NUMERICAL_FAILURE, best_x, pobj, it - 1, best_bound)
        dxa, dsa, dza = pred
        try:
            ap = min(1.0, min(_max_step(s, ds) for s, ds in zip(slack, dsa)))
            ad = min(1.0, min(_max_step(z, dz) for z, dz in zip(dual, dza)))
        except np.linalg.LinAlgError:
            return _IpmResult(SolveStatus.NUMERICAL_FAILURE, best_x, pobj, it - 1, best_bound)
        mu_aff = sum(
            float(np.tensordot(z + ad * dz, s + ap * ds))
            for z, dz, s, ds in zip(dual, dza, slack, dsa)
        ) / total_order
        sigma = float(np.clip((max(mu_aff, 0.0) / mu) ** 3, 1e-8, 1.0))

        corr = direction(
            [
                sigma * mu * np.eye(s.shape[0]) - z @ s - dz @ ds
                for z, s, dz, ds in zip(dual, slack, dza, dsa)
            ]
        )
        if corr is None:
            return _IpmResult(SolveStatus.NUMERICAL_FAILURE, best_x, pobj, it - 1, best_bound)
        dx, d_s, d_z = corr
        try:
            ap = min(1.0, _STEP_DAMP * min(_max_step(s, ds) for s, ds in zip(slack, d_s)))
            ad = min(1.0, _STEP_DAMP * min(_max_step(z, dz) for z, dz in zip(dual, d_z)))
        except np.linalg.LinAlgError:
            return _IpmResult(SolveStatus.NUMERICAL_FAILURE, best_x, pobj, it - 1, best_bound)

        x = x + ap * dx
        slack = [_sym(s + ap * ds) for s, ds in zip(slack, d_s)]
        dual = [_sym(z + ad * dz) for z, dz in zip(dual, d_z)]
        best_x = x.copy()

    return _IpmResult(
        SolveStatus.MAX_ITERATIONS, best_x, float(c @ best_x), tol.max_iters, best_bound
    )


def _phase1(problem: SdpProblem) -> SdpProblem:
    """Embedding: minimize t s.t. F_b(x) + t I >= 0 and t + 1 >= 0.

    The extra 1x1 block caps t from below at -1 so the phase-I objective is
    bounded; the original problem is strictly feasible iff the optimum t* is
    negative (within tolerance, t* <= feas tol decides plain feasibility).
    """
    m = problem.nvars
    cons = []
    for con in problem.constraints:
        eye = np.eye(con.order)[None, :, :]
        cons.append(AffineMatrixExpr(con.constant, np.concatenate([con.coeffs, eye])))
    cap = np.zeros((m + 1, 1, 1))
    cap[-1, 0, 0] = 1.0
    cons.append(AffineMatrixExpr(np.ones((1, 1)), cap))
    obj = np.zeros(m + 1)
    obj[-1] = 1.0
    return SdpProblem(obj, tuple(cons))


def solve_sdp(problem: SdpProblem, tol: SolverTolerances | None = None) -> SdpSolution:
    """Solve the LMI problem; feasibility is always certified first.

    Returns OPTIMAL with worst_violation >= -tol.feas, INFEASIBLE when the
    phase-I slack cannot be pushed below tol.feas, MAX_ITERATIONS /
    NUMERICAL_FAILURE when neither could be certified.  Fully deterministic:
    identical problems give identical solutions bit for bit.
    """
    tol = tol or SolverTolerances()
    m = problem.nvars
    if m == 0:
        worst = _worst_violation(problem.constraints, np.zeros(0))
        status = SolveStatus.OPTIMAL if worst >= -tol.feas else SolveStatus.INFEASIBLE
        return SdpSolution(status, np.zeros(0), 0.0, worst, 0)

    ph1 = _phase1(problem)
    blocks1, c1, _ = _prepare(ph1)
    res1 = _ipm(blocks1, c1, tol)
    # Per-block scaling divides the whole inequality F_b(x) + t I >= 0, which
    # leaves its feasible set unchanged, so t is the physical slack directly.
    if res1.status is not SolveStatus.OPTIMAL:
        x = res1.x[:-1]
        worst = _worst_violation(problem.constraints, x)
        if worst < -tol.feas:
            # Infeasible problems whose minimal-slack face is unbounded can
            # stall the iteration before t converges; a dual bound that pins
            # the slack above tol.feas still settles the question.
            status = res1.status
            if res1.dual_bound > tol.feas + 1e-6 * (1.0 + abs(res1.dual_bound)):
                status = SolveStatus.INFEASIBLE
            return SdpSolution(status, x, float("nan"), worst, res1.iterations)
        # The stalled iterate is itself a feasibility witness; keep going.
    elif res1.x[-1] > tol.feas:
        x = res1.x[:-1]
        return SdpSolution(
            SolveStatus.INFEASIBLE, x, float("nan"),
            _worst_violation(problem.constraints, x), res1.iterations,
        )

    if not np.any(problem.objective):
        x = res1.x[:-1]
        worst = _worst_violation(problem.constraints, x)
        if worst < -tol.feas:
            # Converged phase-I point found feasible by t*, but the point
            # itself sits marginally outside; re-polish with tighter gap.
            res1b = _ipm(blocks1, c1, SolverTolerances(tol.gap * 1e-2, tol.feas, tol.max_iters))
            if res1b.status is SolveStatus.OPTIMAL:
                xb = res1b.x[:-1]
                wb = _worst_violation(problem.constraints, xb)
                if wb > worst:
                    x, worst = xb, wb
        status = SolveStatus.OPTIMAL if worst >= -tol.feas else SolveStatus.MAX_ITERATIONS
        return SdpSolution(status, x, 0.0, worst, res1.iterations)

    blocks2, c2, obj_scale = _prepare(problem)
    res2 = _ipm(
        blocks2, c2, tol,
        viol_check=lambda x: _worst_violation(problem.constraints, x),
    )
    worst = _worst_violation(problem.constraints, res2.x)
    status = res2.status
    if status is SolveStatus.OPTIMAL and worst < -tol.feas:
        status = SolveStatus.MAX_ITERATIONS
    return SdpSolution(
        status, res2.x, res2.objective * obj_scale, worst,
        res1.iterations + res2.iterations,
    )
