"""Log-barrier interior-point solver for the inner concave programs.

Works on the real parameter vector theta = [hvec(F_id); hvec(F_eh)] where
hvec(F) = [diag(F); Re F_ij (i<j); Im F_ij], and minimises

    phi_mu(theta) = -objective(theta)
                    + mu * (-sum_j log s_j - log det F_id - log det F_eh)

over strictly feasible theta, following the central path mu -> 0.  Newton
systems have the form  H = sum_t w_t m_t m_t^T + mu * blkdiag(Hld_1, Hld_2)
with Hld the -log det Hessian; that block has the closed-form inverse
u -> hvec(F U F), so the solve uses the Woodbury identity against the small
set of rank-one terms (log terms + trace constraints).  A dense-factorisation
mode assembles H explicitly (numba-assisted) and exists as a cross-check and
for benchmarking; both modes compute the same Newton step.

Everything is deterministic: no randomness, fixed sweep orders.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from . import kernels
from .metrics import LiftedPair
from .subproblem import SubproblemData

_LN2 = float(np.log(2.0))


# --------------------------------------------------------------------------
# Hermitian <-> real parameter maps.


def mat_to_param(f: np.ndarray) -> np.ndarray:
    """hvec: [diag; Re upper; Im upper] (upper triangle row-major)."""
    d = f.shape[0]
    rows, cols = kernels.triu_index_arrays(d)
    off = f[rows, cols]
    return np.concatenate([np.diag(f).real, off.real, off.imag])


def param_to_mat(theta: np.ndarray, d: int) -> np.ndarray:
    """Inverse of mat_to_param."""
    rows, cols = kernels.triu_index_arrays(d)
    m = rows.shape[0]
    out = np.zeros((d, d), dtype=complex)
    out[np.arange(d), np.arange(d)] = theta[:d]
    off = theta[d : d + m] + 1j * theta[d + m :]
    out[rows, cols] = off
    out[cols, rows] = off.conj()
    return out


def func_to_vec(mat: np.ndarray) -> np.ndarray:
    """Vector v with Tr(mat @ F(theta)) = v . theta for Hermitian mat."""
    d = mat.shape[0]
    rows, cols = kernels.triu_index_arrays(d)
    off = mat[rows, cols]
    return np.concatenate([np.diag(mat).real, 2.0 * off.real, 2.0 * off.imag])


def vec_to_func(vec: np.ndarray, d: int) -> np.ndarray:
    """Inverse of func_to_vec."""
    rows, cols = kernels.triu_index_arrays(d)
    m = rows.shape[0]
    out = np.zeros((d, d), dtype=complex)
    out[np.arange(d), np.arange(d)] = vec[:d]
    off = (vec[d : d + m] + 1j * vec[d + m :]) / 2.0
    out[rows, cols] = off
    out[cols, rows] = off.conj()
    return out


# --------------------------------------------------------------------------
# Settings / report types.


@dataclass(frozen=True)
class SolverSettings:
    barrier_init: float = 1.0
    barrier_decay: float = 0.2
    barrier_target: float = 1e-8  # stop once weight * n_constraints drops below
    grad_tol_rel: float = 1e-8  # stage gradient tolerance, scaled by 1 + ||L||
    max_newton_per_stage: int = 100
    max_total_newton: int = 6000
    fraction_to_boundary: float = 0.98
    armijo_c1: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 60
    newton_mode: str = "auto"  # auto | structured | dense
    dense_dim_max: int = 300  # auto mode solves this many parameters densely

    def __post_init__(self) -> None:
        if self.newton_mode not in ("auto", "structured", "dense"):
            raise ValueError("newton_mode must be auto, structured or dense")
        if not 0.0 < self.barrier_decay < 1.0:
            raise ValueError("barrier_decay must lie in (0, 1)")


@dataclass(frozen=True)
class TraceRecord:
    """One Newton iteration, emitted through the trace hook."""

    stage: int
    barrier_weight: float
    newton_iter: int
    phi: float
    grad_norm: float
    step_size: float


@dataclass(frozen=True)
class SolveReport:
    status: str  # optimal | max-iters | infeasible | numerical-failure
    objective: float
    solution: LiftedPair | None
    stages: int
    iterations: int
    kkt_residual: float
    max_constraint_violation: float
    diagnostics: str = ""


@dataclass(frozen=True)
class Phase1Result:
    status: str  # interior | boundary | infeasible
    lift: LiftedPair | None
    method: str  # identity | harvest-blend
    max_ge_value: float | None = None


class _Infeasible(Exception):
    pass


# --------------------------------------------------------------------------
# Vectorised problem view.


class _VecProblem:
    def __init__(self, sub: SubproblemData):
        self.sub = sub
        self.d1 = sub.dim_id
        self.d2 = sub.dim_eh
        self.p1 = self.d1 * self.d1
        self.p2 = self.d2 * self.d2
        self.p = self.p1 + self.p2

        def stack(mat_id, mat_eh):
            return np.concatenate([func_to_vec(mat_id), func_to_vec(mat_eh)])

        self.log_vecs = np.array(
            [stack(t.mat_id, t.mat_eh) for t in sub.log_terms]
        ).reshape(len(sub.log_terms), self.p)
        self.log_consts = np.array([t.constant for t in sub.log_terms])
        self.lin_vec = stack(sub.linear_id, sub.linear_eh)
        self.con_vecs = np.array(
            [stack(c.mat_id, c.mat_eh) for c in sub.constraints]
        ).reshape(len(sub.constraints), self.p)
        self.bounds = np.array([c.bound for c in sub.constraints])
        self.signs = np.array(
            [1.0 if c.sense == "le" else -1.0 for c in sub.constraints]
        )
        self.n_con = len(sub.constraints)
        # Barrier parameter: one per scalar inequality plus the PSD block dims.
        self.nu = self.n_con + self.d1 + self.d2

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return theta[: self.p1], theta[self.p1 :]

    def matrices(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t1, t2 = self.split(theta)
        return param_to_mat(t1, self.d1), param_to_mat(t2, self.d2)

    def theta_of(self, lift_pair: LiftedPair) -> np.ndarray:
        return np.concatenate(
            [mat_to_param(lift_pair.f_lift_id), mat_to_param(lift_pair.f_lift_eh)]
        )

    def lift_of(self, theta: np.ndarray) -> LiftedPair:
        f1, f2 = self.matrices(theta)
        return LiftedPair(f_lift_id=f1, f_lift_eh=f2)

    def slacks(self, theta: np.ndarray) -> np.ndarray:
        vals = self.con_vecs @ theta if self.n_con else np.zeros(0)
        return self.signs * (self.bounds - vals)

    def log_args(self, theta: np.ndarray) -> np.ndarray:
        if len(self.log_consts) == 0:
            return np.zeros(0)
        return self.log_consts + self.log_vecs @ theta

    def objective(self, theta: np.ndarray) -> float:
        """Assembled objective in bits, including the constant offset."""
        val = self.sub.constant_offset - float(self.lin_vec @ theta)
        args = self.log_args(theta)
        if np.any(args <= 0.0):
            return -np.inf
        return val + float(np.log2(args).sum())


class _Point:
    """Cached evaluation of one strictly feasible iterate."""

    __slots__ = ("theta", "f1", "f2", "chol1", "chol2", "slack", "args", "logdets")

    def __init__(self, prob: _VecProblem, theta: np.ndarray):
        self.theta = theta
        self.f1, self.f2 = prob.matrices(theta)
        self.chol1 = np.linalg.cholesky(self.f1)  # raises LinAlgError off-cone
        self.chol2 = np.linalg.cholesky(self.f2)
        self.slack = prob.slacks(theta)
        self.args = prob.log_args(theta)
        if np.any(self.slack <= 0.0) or np.any(self.args <= 0.0):
            raise _DomainError
        self.logdets = (
            2.0 * float(np.log(np.diag(self.chol1).real).sum()),
            2.0 * float(np.log(np.diag(self.chol2).real).sum()),
        )


class _DomainError(Exception):
    pass


def _try_point(prob: _VecProblem, theta: np.ndarray) -> _Point | None:
    if not np.all(np.isfinite(theta)):
        return None
    try:
        return _Point(prob, theta)
    except (np.linalg.LinAlgError, _DomainError):
        return None


def _phi(prob: _VecProblem, pt: _Point, mu: float) -> float:
    obj = prob.sub.constant_offset - float(prob.lin_vec @ pt.theta)
    obj += float(np.log2(pt.args).sum()) if len(pt.args) else 0.0
    barrier = -float(np.log(pt.slack).sum()) if len(pt.slack) else 0.0
    barrier -= pt.logdets[0] + pt.logdets[1]
    return -obj + mu * barrier


def _inverses(pt: _Point) -> tuple[np.ndarray, np.ndarray]:
    d1 = pt.f1.shape[0]
    d2 = pt.f2.shape[0]
    w1 = scipy.linalg.cho_solve((pt.chol1, True), np.eye(d1, dtype=complex))
    w2 = scipy.linalg.cho_solve((pt.chol2, True), np.eye(d2, dtype=complex))
    return (w1 + w1.conj().T) / 2.0, (w2 + w2.conj().T) / 2.0


def _gradient(prob: _VecProblem, pt: _Point, mu: float, w1, w2) -> np.ndarray:
    g = prob.lin_vec.copy()
    if len(pt.args):
        g -= (prob.log_vecs / (pt.args[:, None] * _LN2)).sum(axis=0)
    if prob.n_con:
        g += mu * ((prob.signs / pt.slack)[:, None] * prob.con_vecs).sum(axis=0)
    g -= mu * np.concatenate([func_to_vec(w1), func_to_vec(w2)])
    return g


def _rank_one_data(prob: _VecProblem, pt: _Point, mu: float):
    """Stacked rank-one Hessian vectors and their positive weights."""
    parts = []
    weights = []
    if len(pt.args):
        parts.append(prob.log_vecs)
        weights.append(1.0 / (_LN2 * pt.args**2))
    if prob.n_con:
        parts.append(prob.con_vecs)
        weights.append(mu / pt.slack**2)
    if not parts:
        return np.zeros((0, prob.p)), np.zeros(0)
    return np.vstack(parts), np.concatenate(weights)


def _dinv_apply(prob: _VecProblem, pt: _Point, mu: float, u: np.ndarray) -> np.ndarray:
    """Apply inv(mu * blkdiag(Hld1, Hld2)) to u: per block F U F / mu."""
    u1, u2 = prob.split(u)
    x1 = pt.f1 @ vec_to_func(u1, prob.d1) @ pt.f1
    x2 = pt.f2 @ vec_to_func(u2, prob.d2) @ pt.f2
    return np.concatenate([mat_to_param(x1), mat_to_param(x2)]) / mu


def _newton_step_structured(
    prob: _VecProblem, pt: _Point, mu: float, grad: np.ndarray
) -> np.ndarray:
    v, w = _rank_one_data(prob, pt, mu)
    rhs = -grad
    y0 = _dinv_apply(prob, pt, mu, rhs)
    if v.shape[0] == 0:
        return y0
    dv = np.empty_like(v)
    for r in range(v.shape[0]):
        dv[r] = _dinv_apply(prob, pt, mu, v[r])
    s = np.diag(1.0 / w) + v @ dv.T
    s = (s + s.T) / 2.0
    # The small system can be badly conditioned near the boundary; the caller
    # vets the resulting step against the exact Hessian, so silence scipy's
    # rcond warning rather than spam the log.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        coef = scipy.linalg.solve(s, v @ y0, assume_a="pos")
    return y0 - dv.T @ coef


def _hess_apply(
    prob: _VecProblem, pt: _Point, mu: float, w1, w2, delta: np.ndarray
) -> np.ndarray:
    """Exact Hessian-vector product, used to vet the structured solve."""
    out = np.zeros(prob.p)
    v, w = _rank_one_data(prob, pt, mu)
    if v.shape[0]:
        out += (w * (v @ delta)) @ v
    d1, d2 = prob.split(delta)
    x1 = w1 @ param_to_mat(d1, prob.d1) @ w1
    x2 = w2 @ param_to_mat(d2, prob.d2) @ w2
    out += mu * np.concatenate([func_to_vec(x1), func_to_vec(x2)])
    return out


def _newton_step_dense(
    prob: _VecProblem, pt: _Point, mu: float, grad: np.ndarray, w1, w2
) -> np.ndarray:
    v, w = _rank_one_data(prob, pt, mu)
    h = np.zeros((prob.p, prob.p))
    if v.shape[0]:
        h += (v.T * w) @ v
    h[: prob.p1, : prob.p1] += mu * kernels.logdet_hessian_params(w1)
    h[prob.p1 :, prob.p1 :] += mu * kernels.logdet_hessian_params(w2)
    ridge = 0.0
    for _ in range(6):
        try:
            cho = scipy.linalg.cho_factor(
                h + ridge * np.eye(prob.p), check_finite=False
            )
            return scipy.linalg.cho_solve(cho, -grad)
        except np.linalg.LinAlgError:
            ridge = max(ridge * 10.0, 1e-12 * (1.0 + float(np.trace(h)) / prob.p))
    raise np.linalg.LinAlgError("dense Newton system not positive definite")


def _max_step(prob: _VecProblem, pt: _Point, delta: np.ndarray) -> float:
    """Largest alpha keeping all slacks and both PSD blocks feasible."""
    alpha = np.inf
    if prob.n_con:
        dslack = -prob.signs * (prob.con_vecs @ delta)
        shrink = dslack < 0.0
        if shrink.any():
            alpha = min(alpha, float((pt.slack[shrink] / -dslack[shrink]).min()))
    if len(pt.args):
        dargs = prob.log_vecs @ delta
        shrink = dargs < 0.0
        if shrink.any():
            alpha = min(alpha, float((pt.args[shrink] / -dargs[shrink]).min()))
    d1, d2 = prob.split(delta)
    for dmat, f in ((param_to_mat(d1, prob.d1), pt.f1), (param_to_mat(d2, prob.d2), pt.f2)):
        if not dmat.any():
            continue
        vals = scipy.linalg.eigh(dmat, f, eigvals_only=True, check_finite=False)
        lo = float(vals.min())
        if lo < 0.0:
            alpha = min(alpha, -1.0 / lo)
    return alpha


def _stage(
    prob: _VecProblem,
    theta: np.ndarray,
    mu: float,
    settings: SolverSettings,
    stage_idx: int,
    budget: list[int],
    trace_hook: Callable[[TraceRecord], None] | None,
    grad_tol: float,
) -> tuple[np.ndarray, float, str]:
    """Newton-minimise phi_mu from theta; returns (theta, grad_norm, note).

    Every stage runs to the tight gradient tolerance: finishing a stage on
    the central path keeps the next stage inside Newton's fast region, and
    the extra iterations this costs are quadratic-regime ones, so cheap.
    """
    pt = _try_point(prob, theta)
    if pt is None:
        return theta, np.inf, "stage started outside the feasible domain"
    if settings.newton_mode == "dense":
        dense = True
    elif settings.newton_mode == "structured":
        dense = False
    else:
        dense = prob.p <= settings.dense_dim_max
    # Once phi improvements shrink below float resolution the Armijo test is
    # meaningless; switch to plain damped Newton steps and track the gradient
    # norm instead, which keeps contracting well past that point.
    endgame = False
    polish_left = 15
    for it in range(settings.max_newton_per_stage):
        if budget[0] <= 0:
            return pt.theta, np.inf, "newton budget exhausted"
        budget[0] -= 1
        w1, w2 = _inverses(pt)
        grad = _gradient(prob, pt, mu, w1, w2)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= grad_tol:
            return pt.theta, gnorm, ""
        try:
            if dense:
                delta = _newton_step_dense(prob, pt, mu, grad, w1, w2)
            else:
                delta = _newton_step_structured(prob, pt, mu, grad)
                resid = _hess_apply(prob, pt, mu, w1, w2, delta) + grad
                if np.linalg.norm(resid) > 1e-2 * gnorm:
                    delta = _newton_step_dense(prob, pt, mu, grad, w1, w2)
        except (np.linalg.LinAlgError, ValueError):
            return pt.theta, gnorm, "newton system factorisation failed"
        descent = float(grad @ delta)
        if not np.isfinite(descent) or descent >= 0.0:
            if not dense:
                try:
                    delta = _newton_step_dense(prob, pt, mu, grad, w1, w2)
                    descent = float(grad @ delta)
                except (np.linalg.LinAlgError, ValueError):
                    descent = np.nan
            if not np.isfinite(descent) or descent >= 0.0:
                return pt.theta, gnorm, "newton step lost descent"
        lam2 = -descent
        phi0 = _phi(prob, pt, mu)
        if 0.5 * lam2 <= 1e-16 * max(1.0, abs(phi0)):
            endgame = True
        if not endgame:
            alpha = min(
                1.0, settings.fraction_to_boundary * _max_step(prob, pt, delta)
            )
            accepted = None
            for _ in range(settings.max_backtracks):
                cand = _try_point(prob, pt.theta + alpha * delta)
                if cand is not None:
                    phi1 = _phi(prob, cand, mu)
                    if phi1 <= phi0 + settings.armijo_c1 * alpha * descent:
                        accepted = cand
                        break
                alpha *= settings.backtrack_factor
            if accepted is None:
                if 0.5 * lam2 > 1e-8 * max(1.0, abs(phi0)):
                    return pt.theta, gnorm, "line search failed"
                endgame = True
        if endgame:
            polish_left -= 1
            if polish_left < 0:
                return pt.theta, gnorm, ""
            alpha = min(
                1.0, settings.fraction_to_boundary * _max_step(prob, pt, delta)
            )
            cand = _try_point(prob, pt.theta + alpha * delta)
            if cand is None:
                return pt.theta, gnorm, ""
            w1c, w2c = _inverses(cand)
            gnew = float(np.linalg.norm(_gradient(prob, cand, mu, w1c, w2c)))
            if gnew >= gnorm:
                return pt.theta, gnorm, ""
            accepted = cand
            if gnew > 0.9 * gnorm:
                # Barely moving: keep the better point but stop here.
                if trace_hook is not None:
                    trace_hook(
                        TraceRecord(
                            stage=stage_idx,
                            barrier_weight=mu,
                            newton_iter=it,
                            phi=_phi(prob, accepted, mu),
                            grad_norm=gnorm,
                            step_size=alpha,
                        )
                    )
                return accepted.theta, gnew, ""
        if trace_hook is not None:
            trace_hook(
                TraceRecord(
                    stage=stage_idx,
                    barrier_weight=mu,
                    newton_iter=it,
                    phi=_phi(prob, accepted, mu),
                    grad_norm=gnorm,
                    step_size=alpha,
                )
            )
        pt = accepted
    w1, w2 = _inverses(pt)
    gnorm = float(np.linalg.norm(_gradient(prob, pt, mu, w1, w2)))
    if gnorm <= grad_tol:
        return pt.theta, gnorm, ""
    return pt.theta, gnorm, "stage newton limit reached"


# --------------------------------------------------------------------------
# Strictly feasible starting points.


def _identity_candidate(prob: _VecProblem) -> np.ndarray:
    """Scaled-identity point sitting inside every <= constraint."""
    eye = np.concatenate(
        [mat_to_param(np.eye(prob.d1, dtype=complex)), mat_to_param(np.eye(prob.d2, dtype=complex))]
    )
    scale = np.inf
    for j in range(prob.n_con):
        if prob.signs[j] < 0:
            continue
        rate = float(prob.con_vecs[j] @ eye)
        if rate <= 0.0:
            if prob.bounds[j] < 0.0:
                raise _Infeasible(f"constraint {j} cannot hold at any identity scale")
            continue
        scale = min(scale, prob.bounds[j] / rate)
    if not np.isfinite(scale):
        scale = 2.0  # no binding <= constraint; any positive scale works
    if scale <= 0.0:
        raise _Infeasible("a <= constraint excludes every positive-definite point")
    return 0.5 * scale * eye


def _strictly_ok(prob: _VecProblem, theta: np.ndarray) -> bool:
    pt = _try_point(prob, theta)
    if pt is None:
        return False
    if prob.n_con:
        margin = pt.slack / (1.0 + np.abs(prob.bounds) + np.abs(prob.con_vecs @ theta))
        if float(margin.min()) < 1e-12:
            return False
    return True


def phase1_feasible(
    sub: SubproblemData, settings: SolverSettings | None = None
) -> Phase1Result:
    """Find a strictly feasible point of the constraint system.

    Tries a scaled identity first.  If a >= constraint cuts it off, maximises
    that constraint's functional subject to the remaining constraints (a
    linear-objective run of the same barrier machinery) and blends the
    maximiser with the identity point.  Reports ``boundary`` when the best
    achievable value only touches the bound, ``infeasible`` when it falls
    short; ``max_ge_value`` carries the maximised functional either way.
    """
    settings = settings or SolverSettings()
    prob = _VecProblem(sub)
    ge_idx = [j for j in range(prob.n_con) if prob.signs[j] < 0]
    if len(ge_idx) > 1:
        raise ValueError("phase-I supports at most one >= constraint")
    try:
        theta_id = _identity_candidate(prob)
    except _Infeasible:
        return Phase1Result("infeasible", None, "identity", None)
    if not ge_idx:
        return Phase1Result("interior", prob.lift_of(theta_id), "identity", None)

    j = ge_idx[0]
    bound = float(prob.bounds[j])
    ge_val_id = float(prob.con_vecs[j] @ theta_id)
    scale = max(abs(ge_val_id), abs(bound), 1e-300)
    if ge_val_id - bound > 1e-9 * scale and _strictly_ok(prob, theta_id):
        return Phase1Result("interior", prob.lift_of(theta_id), "identity", None)

    # Maximise the >= functional under the remaining constraints.
    ge_con = sub.constraints[j]
    aux = SubproblemData(
        dim_id=sub.dim_id,
        dim_eh=sub.dim_eh,
        log_terms=(),
        linear_id=-ge_con.mat_id,
        linear_eh=-ge_con.mat_eh,
        constraints=tuple(c for i, c in enumerate(sub.constraints) if i != j),
        constant_offset=0.0,
        rho=sub.rho,
    )
    report = solve(aux, settings=settings)
    if report.status != "optimal" or report.solution is None:
        return Phase1Result("infeasible", None, "harvest-blend", None)
    best = float(report.objective)
    rel = (best - bound) / max(abs(best), abs(bound), 1e-300)
    if rel <= -1e-6:
        return Phase1Result("infeasible", None, "harvest-blend", best)
    if rel <= 1e-6:
        return Phase1Result("boundary", None, "harvest-blend", best)
    theta_star = prob.theta_of(report.solution)
    if ge_val_id >= bound:
        beta = 0.25
    else:
        beta = min(0.25, 0.9 * (best - bound) / (best - ge_val_id))
    for _ in range(12):
        theta = (1.0 - beta) * theta_star + beta * theta_id
        if (
            float(prob.con_vecs[j] @ theta) > bound
            and _try_point(prob, theta) is not None
        ):
            return Phase1Result(
                "interior", prob.lift_of(theta), "harvest-blend", best
            )
        beta *= 0.5
    return Phase1Result("infeasible", None, "harvest-blend", best)


# --------------------------------------------------------------------------
# Main entry point.


def solve(
    sub: SubproblemData,
    settings: SolverSettings | None = None,
    warm_start: LiftedPair | None = None,
    trace_hook: Callable[[TraceRecord], None] | None = None,
) -> SolveReport:
    """Maximise the assembled concave objective over the feasible set.

    Returns status ``optimal`` with the interior optimum (objective within
    barrier-gap accuracy, every constraint strictly satisfied), ``infeasible``
    when phase-I proves there is no strict interior, ``max-iters`` when the
    Newton budget runs out, or ``numerical-failure`` with diagnostics.  Deterministic for fixed inputs;
    a warm start changes the path, not the answer.
    """
    settings = settings or SolverSettings()
    prob = _VecProblem(sub)

    theta0 = None
    if warm_start is not None:
        cand = prob.theta_of(warm_start)
        if _strictly_ok(prob, cand):
            theta0 = cand
    if theta0 is None:
        try:
            theta_id = _identity_candidate(prob)
        except _Infeasible:
            return SolveReport(
                "infeasible", -np.inf, None, 0, 0, np.inf, np.inf,
                "no identity-scaled interior point for the <= constraints",
            )
        if _strictly_ok(prob, theta_id):
            theta0 = theta_id
        if theta0 is None and warm_start is not None:
            cand = prob.theta_of(warm_start)
            for beta in (1e-3, 1e-2, 0.1, 0.5):
                mix = (1.0 - beta) * cand + beta * theta_id
                if _strictly_ok(prob, mix):
                    theta0 = mix
                    break
        if theta0 is None:
            p1 = phase1_feasible(sub, settings)
            if p1.status != "interior" or p1.lift is None:
                return SolveReport(
                    "infeasible", -np.inf, None, 0, 0, np.inf, np.inf,
                    f"phase-I status: {p1.status}",
                )
            theta0 = prob.theta_of(p1.lift)

    grad_tol = settings.grad_tol_rel * (1.0 + float(np.linalg.norm(prob.lin_vec)))
    budget = [settings.max_total_newton]
    theta = theta0
    schedule = [settings.barrier_init]
    while schedule[-1] * settings.barrier_decay * prob.nu >= settings.barrier_target:
        schedule.append(schedule[-1] * settings.barrier_decay)
    note = ""
    gnorm = np.inf
    stage_idx = 0
    for stage_idx, mu in enumerate(schedule):
        theta, gnorm, note = _stage(
            prob, theta, mu, settings, stage_idx, budget, trace_hook, grad_tol
        )
        if note:
            break
    stage_idx += 1

    pt = _try_point(prob, theta)
    if pt is None:
        return SolveReport(
            "numerical-failure", -np.inf, None, stage_idx,
            settings.max_total_newton - budget[0], np.inf, np.inf,
            note or "final iterate left the feasible domain",
        )
    lift_out = prob.lift_of(theta)
    violation = max(
        (c.violation(lift_out) for c in sub.constraints), default=0.0
    )
    objective = prob.objective(theta)
    steps = settings.max_total_newton - budget[0]
    if note:
        budget_out = note in ("newton budget exhausted", "stage newton limit reached")
        return SolveReport(
            "max-iters" if budget_out else "numerical-failure",
            objective, lift_out, stage_idx, steps, gnorm, violation, note,
        )
    # Certify stationarity at the final barrier weight: the reported point is
    # only "optimal" when the barrier-augmented gradient is small relative to
    # the linear objective scale.  The achievable norm is limited by the
    # floating-point noise of evaluating the barrier gradient itself — the
    # matrix term mu*F^-1 carries error ~ eps * cond(F) * ||mu*F^-1||_F and a
    # near-active slack s = b - a.x is computed with cancellation error
    # ~ eps * (|b| + |a.x|) — so the certificate never demands accuracy below
    # that floor.
    eps = float(np.finfo(np.float64).eps)
    mu_final = schedule[-1]
    tiny = float(np.finfo(np.float64).tiny)
    noise_floor = 0.0
    for block in (pt.f1, pt.f2):
        lam = np.maximum(np.linalg.eigvalsh(block), tiny)
        inv_frob = float(np.sqrt((1.0 / lam**2).sum()))
        noise_floor += float(lam[-1] / lam[0]) * mu_final * inv_frob
    if len(pt.slack):
        ax = prob.con_vecs @ theta
        row_norms = np.linalg.norm(prob.con_vecs, axis=1)
        noise_floor += float(
            np.linalg.norm(
                (np.abs(prob.bounds) + np.abs(ax))
                / pt.slack
                * (mu_final / pt.slack)
                * row_norms
            )
        )
    certificate = max(100.0 * grad_tol, eps * noise_floor)
    if gnorm > certificate:
        return SolveReport(
            "numerical-failure", objective, lift_out, stage_idx, steps,
            gnorm, violation,
            f"final gradient norm {gnorm:.3e} above certificate {certificate:.3e}",
        )
    return SolveReport(
        "optimal", objective, lift_out, stage_idx, steps, gnorm, violation, ""
    )
