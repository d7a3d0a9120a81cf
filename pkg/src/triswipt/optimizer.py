"""Outer optimisation loop: surrogate ascent with a rank-one penalty.

Each outer iteration rebuilds the concave inner program at the current
lifted iterate (tight first-order surrogate of the penalised objective) and
solves it with the barrier solver, warm-started from that iterate.  A
penalty schedule shrinks the weight parameter rho whenever the lifted blocks
are still far from rank one — the penalty term carries a 1/(2 rho) factor,
so smaller rho presses harder.  The loop stops once the surrogate value
stalls and both blocks are numerically rank one; the dominant eigenpair of
each block then yields the beamformers.

The loop is deterministic: no randomness beyond the channel draw that
produced the inputs, fixed iteration order, and a deterministic eigenvector
convention in the recovery step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metrics import (
    BeamformerPair,
    LiftedPair,
    harvest_lifted,
    harvested_energy,
    per_antenna_power_all,
    principal_eigvec,
    spectral_residual,
    sum_rate,
    sum_rate_lifted,
)
from .solver import SolverSettings, phase1_feasible, solve
from .subproblem import (
    SubproblemData,
    build_subproblem,
    power_harvest_constraints,
)
from .system import (
    ChannelSet,
    QuadFormCache,
    SelectionOperators,
    SystemConfig,
    build_quadform_cache,
    build_selection_operators,
)


class InfeasibleScenarioError(RuntimeError):
    """No strictly feasible point exists for the power/harvest system."""


class RankOneNotReachedError(RuntimeError):
    """Beam recovery was asked for while a block is still far from rank one."""

    def __init__(self, residual_id: float, residual_eh: float, target_id: float, target_eh: float):
        self.residual_id = residual_id
        self.residual_eh = residual_eh
        self.target_id = target_id
        self.target_eh = target_eh
        super().__init__(
            "penalty residuals above target: "
            f"id {residual_id:.3e} (target {target_id:.3e}), "
            f"eh {residual_eh:.3e} (target {target_eh:.3e})"
        )


class NumericalFailureError(RuntimeError):
    """The inner solver failed twice on one subproblem; diagnostics attached."""

    def __init__(self, iteration: int, diagnostics: str):
        self.iteration = iteration
        self.diagnostics = diagnostics
        super().__init__(f"inner solve failed at outer iteration {iteration}: {diagnostics}")


# --------------------------------------------------------------------------
# Penalty schedule.


@dataclass(frozen=True)
class PenaltySchedule:
    """Shrink rule for the penalty weight rho.

    While either block's rank-one residual exceeds ``residual_target_rel``
    times that block's trace, rho decays by ``decay`` down to ``floor``;
    once the residuals meet the target rho stays put.
    """

    rho_init: float = 1.0
    decay: float = 0.7
    floor: float = 1e-6
    residual_target_rel: float = 1e-7

    def __post_init__(self) -> None:
        if not self.rho_init > 0.0:
            raise ValueError("rho_init must be positive")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if not 0.0 < self.floor <= self.rho_init:
            raise ValueError("floor must lie in (0, rho_init]")
        if not self.residual_target_rel > 0.0:
            raise ValueError("residual_target_rel must be positive")


def penalty_schedule_step(
    rho: float,
    residuals: Sequence[float],
    traces: Sequence[float] | None = None,
    schedule: PenaltySchedule | None = None,
) -> float:
    """One schedule update: decay rho while any residual exceeds its target.

    ``residuals`` holds the per-block rank-one residuals; ``traces`` the
    matching block traces (defaults to 1.0 each, making the target absolute).
    """
    if not rho > 0.0:
        raise ValueError("rho must be positive")
    sched = schedule or PenaltySchedule()
    if traces is None:
        traces = [1.0] * len(list(residuals))
    above = any(
        res > sched.residual_target_rel * max(tr, 0.0)
        for res, tr in zip(residuals, traces)
    )
    if above:
        return max(rho * sched.decay, sched.floor)
    return rho


# --------------------------------------------------------------------------
# Iterate bookkeeping.


@dataclass(frozen=True)
class IterateState:
    """Snapshot of one outer iteration."""

    lift: LiftedPair
    sum_rate: float
    penalty_residual_id: float
    penalty_residual_eh: float
    surrogate_objective: float
    rho: float
    iteration: int

    def __post_init__(self) -> None:
        if self.penalty_residual_id < -1e-9 or self.penalty_residual_eh < -1e-9:
            raise ValueError("penalty residuals must be nonnegative up to round-off")


@dataclass(frozen=True)
class RunResult:
    """Outcome of one full outer run."""

    beams: BeamformerPair | None
    achieved_sum_rate: float
    achieved_harvest: float
    trajectory: tuple[IterateState, ...]
    status: str  # converged | max-iters | infeasible

    def __post_init__(self) -> None:
        if self.status not in ("converged", "max-iters", "infeasible"):
            raise ValueError(f"unknown status {self.status!r}")
        object.__setattr__(self, "trajectory", tuple(self.trajectory))


TRAJECTORY_HEADER = (
    "iteration,sum_rate_bits,penalty_residual_I,penalty_residual_E,rho,surrogate_objective"
)


def trajectory_csv(trajectory: Sequence[IterateState]) -> str:
    """Render a trajectory as CSV text; float fields use repr so that equal
    runs serialize to identical bytes."""
    lines = [TRAJECTORY_HEADER]
    for it in trajectory:
        lines.append(
            f"{it.iteration},{it.sum_rate!r},{it.penalty_residual_id!r},"
            f"{it.penalty_residual_eh!r},{it.rho!r},{it.surrogate_objective!r}"
        )
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Initialization.


def _constraint_only_subproblem(
    cfg: SystemConfig, ops: SelectionOperators, qf: QuadFormCache
) -> SubproblemData:
    return SubproblemData(
        dim_id=cfg.dim_id,
        dim_eh=cfg.dim_eh,
        log_terms=(),
        linear_id=np.zeros((cfg.dim_id, cfg.dim_id), dtype=complex),
        linear_eh=np.zeros((cfg.dim_eh, cfg.dim_eh), dtype=complex),
        constraints=power_harvest_constraints(cfg, ops, qf),
        constant_offset=0.0,
        rho=1.0,
    )


def initialize(
    cfg: SystemConfig,
    ch: ChannelSet,
    ops: SelectionOperators,
    qf: QuadFormCache,
    settings: SolverSettings | None = None,
) -> LiftedPair:
    """Strictly feasible, near-rank-one starting point for the outer loop.

    Construction: the ID block is the outer product of the summed (unit
    normalised) per-user matched filters; the EH block points along the top
    eigenvector of the total-harvest quadratic form, scaled so the EH block
    alone clears the harvest floor with 10% margin.  The ID block is then
    scaled into the per-element headroom left under 95% of the caps, and both
    blocks receive a small identity ridge so the pair is strictly positive
    definite.  Starting near the rank-one manifold matters: the penalty term
    only has to hold the iterates on the manifold instead of dragging a
    high-rank relaxation back to it, which keeps the sum-rate trajectory
    monotone.

    Falls back to the feasibility-phase point (EH-channel biased when the
    harvest margin is thin) whenever the construction cannot clear the floor
    under the caps.  Raises InfeasibleScenarioError when no strictly interior
    point exists at all.
    """
    sub = _constraint_only_subproblem(cfg, ops, qf)
    p1 = phase1_feasible(sub, settings)
    if p1.status != "interior" or p1.lift is None:
        raise InfeasibleScenarioError(
            f"harvest floor {cfg.q_harvest_min!r} unreachable "
            f"(best achievable {p1.max_ge_value!r})"
        )
    cand = _matched_filter_init(cfg, ch, ops, qf)
    if cand is not None:
        return cand
    return _harvest_biased_init(cfg, ch, ops, qf, p1.lift)


def _matched_filter_init(
    cfg: SystemConfig,
    ch: ChannelSet,
    ops: SelectionOperators,
    qf: QuadFormCache,
    ridge_rel: float = 1e-4,
) -> LiftedPair | None:
    q_min = cfg.q_harvest_min
    stacked = np.zeros(cfg.dim_id, dtype=complex)
    for k in range(cfg.n_id):
        hbar = ch.hbar_id_idspace[k]
        norm = float(np.linalg.norm(hbar))
        if norm > 0.0:
            stacked += hbar / norm
    if float(np.linalg.norm(stacked)) == 0.0:
        return None
    f_id = np.outer(stacked, stacked.conj())

    f_eh = np.zeros((cfg.dim_eh, cfg.dim_eh), dtype=complex)
    if q_min > 0.0:
        he = qf.harvest_matrix_eh(cfg.eh_efficiency)
        lam, vecs = np.linalg.eigh(he)
        top = float(lam[-1])
        if top <= 0.0:
            return None
        v = vecs[:, -1]
        f_eh = (1.1 * q_min / top) * np.outer(v, v.conj())

    cap = 0.95 * cfg.p_elem_max
    diag_eh = np.diag(f_eh).real
    diag_id = np.diag(f_id).real
    p_eh = np.array([float(ops.elem_mask_eh[n] @ diag_eh) for n in range(cfg.n_elements)])
    p_id = np.array([float(ops.elem_mask_id[n] @ diag_id) for n in range(cfg.n_elements)])
    if float(p_eh.max()) >= cap:
        # the harvest floor alone exhausts the caps; leave room handling to
        # the feasibility-phase construction
        return None
    scale = min(
        (cap - p_eh[n]) / p_id[n]
        for n in range(cfg.n_elements)
        if p_id[n] > 0.0
    )
    if not scale > 0.0:
        return None
    f_id = scale * f_id

    ridge_id = ridge_rel * float(np.trace(f_id).real) / cfg.dim_id
    ridge_eh = ridge_rel * max(
        float(np.trace(f_eh).real), 1e-2 * float(np.trace(f_id).real)
    ) / cfg.dim_eh
    cand = LiftedPair(
        f_lift_id=f_id + ridge_id * np.eye(cfg.dim_id),
        f_lift_eh=f_eh + ridge_eh * np.eye(cfg.dim_eh),
    )
    peak = float(_per_element_powers_lifted(cand, ops, cfg).max())
    if peak >= cfg.p_elem_max:
        return None
    if q_min > 0.0 and not harvest_lifted(cand, qf, cfg) > q_min * (1.0 + 1e-9):
        return None
    return cand


def _harvest_biased_init(
    cfg: SystemConfig,
    ch: ChannelSet,
    ops: SelectionOperators,
    qf: QuadFormCache,
    start: LiftedPair,
) -> LiftedPair:
    q_min = cfg.q_harvest_min
    if q_min == 0.0 or harvest_lifted(start, qf, cfg) >= 1.1 * q_min:
        return start

    # Harvest margin is thin: point the EH block at the EH channels.
    eps_id = 0.01 * cfg.p_elem_max / (cfg.n_id + cfg.n_eh)
    f_id = eps_id * np.eye(cfg.dim_id, dtype=complex)
    direction = np.zeros((cfg.dim_eh, cfg.dim_eh), dtype=complex)
    for g in range(cfg.n_eh):
        hbar = ch.hbar_eh_ehspace[g]
        direction += np.outer(hbar, hbar.conj())
    # a small multiple of the identity keeps the block strictly positive
    # definite without moving its eigenvectors
    ridge = 1e-4 * float(np.trace(direction).real) / cfg.dim_eh
    direction = direction + ridge * np.eye(cfg.dim_eh)

    base = LiftedPair(f_lift_id=f_id, f_lift_eh=np.zeros_like(direction))
    h_base = harvest_lifted(base, qf, cfg)
    unit = LiftedPair(f_lift_id=np.zeros_like(f_id), f_lift_eh=direction)
    h_unit = harvest_lifted(unit, qf, cfg)
    if h_unit <= 0.0:
        return start
    c = max(1.1 * q_min - h_base, 0.0) / h_unit
    cand = LiftedPair(f_lift_id=f_id, f_lift_eh=c * direction)

    powers = _per_element_powers_lifted(cand, ops, cfg)
    peak = float(powers.max())
    if peak > 0.95 * cfg.p_elem_max:
        scale = 0.95 * cfg.p_elem_max / peak
        cand = LiftedPair(
            f_lift_id=scale * cand.f_lift_id, f_lift_eh=scale * cand.f_lift_eh
        )
    if harvest_lifted(cand, qf, cfg) > q_min * (1.0 + 1e-9):
        return cand
    return start


def _per_element_powers_lifted(
    lift_pair: LiftedPair, ops: SelectionOperators, cfg: SystemConfig
) -> np.ndarray:
    d_id = np.diag(lift_pair.f_lift_id).real
    d_eh = np.diag(lift_pair.f_lift_eh).real
    return np.array(
        [
            float(d_id @ ops.elem_mask_id[n] + d_eh @ ops.elem_mask_eh[n])
            for n in range(cfg.n_elements)
        ]
    )


# --------------------------------------------------------------------------
# Rank-one recovery.


def extract_rank_one(
    lift_pair: LiftedPair,
    cfg: SystemConfig | None = None,
    ops: SelectionOperators | None = None,
    residual_target_rel: float = 1e-7,
) -> BeamformerPair:
    """Dominant-eigenpair beams sqrt(lmax) * vmax from a near-rank-one pair.

    Requires both blocks' rank-one residuals (trace minus top eigenvalue)
    to sit below ``residual_target_rel`` times the pair's total trace; the
    total sets the scale so that a vanishing block (all eigenvalues at the
    solver's noise floor) counts as rank one rather than failing a
    comparison against its own near-zero trace.  Raises
    RankOneNotReachedError otherwise.  When ``cfg`` and ``ops`` are given the
    recovered beams are checked against the per-element caps and uniformly
    scaled down by at most 0.1% to absorb round-off.
    """
    res_id = spectral_residual(lift_pair.f_lift_id)
    res_eh = spectral_residual(lift_pair.f_lift_eh)
    total = float(
        np.trace(lift_pair.f_lift_id).real + np.trace(lift_pair.f_lift_eh).real
    )
    tgt_id = residual_target_rel * total
    tgt_eh = residual_target_rel * total
    if res_id > tgt_id or res_eh > tgt_eh:
        raise RankOneNotReachedError(res_id, res_eh, tgt_id, tgt_eh)
    bf = _eigen_beams(lift_pair)
    if cfg is not None and ops is not None:
        peak = float(per_antenna_power_all(bf, ops).max())
        if peak > cfg.p_elem_max:
            scale = float(np.sqrt(cfg.p_elem_max / peak))
            if scale < 0.999:
                raise RankOneNotReachedError(res_id, res_eh, tgt_id, tgt_eh)
            bf = BeamformerPair(f_id=scale * bf.f_id, f_eh=scale * bf.f_eh)
    return bf


def _eigen_beams(lift_pair: LiftedPair) -> BeamformerPair:
    beams = []
    for block in (lift_pair.f_lift_id, lift_pair.f_lift_eh):
        lmax, vmax = principal_eigvec(block)
        beams.append(np.sqrt(max(lmax, 0.0)) * vmax)
    return BeamformerPair(f_id=beams[0], f_eh=beams[1])


# --------------------------------------------------------------------------
# Penalty weight calibration.


def _rate_gradient_scale(
    lift_pair: LiftedPair,
    qf: QuadFormCache,
    ops: SelectionOperators,
    cfg: SystemConfig,
) -> float:
    """Frobenius scale of the surrogate rate gradient at ``lift_pair``.

    Built from the subproblem at a penalty weight large enough (1/(2 rho)
    vanishing) that the linear term reduces to the concave-part linearisation;
    the log-term gradients are added analytically.
    """
    sub = build_subproblem(lift_pair, qf, ops, cfg, 1e12)
    f_id, f_eh = lift_pair.f_lift_id, lift_pair.f_lift_eh
    ln2 = float(np.log(2.0))
    g_id = -sub.linear_id.astype(complex)
    g_eh = -sub.linear_eh.astype(complex)
    for term in sub.log_terms:
        arg = (
            term.constant
            + float(np.trace(term.mat_id @ f_id).real)
            + float(np.trace(term.mat_eh @ f_eh).real)
        )
        g_id = g_id + term.mat_id / (ln2 * arg)
        g_eh = g_eh + term.mat_eh / (ln2 * arg)
    return max(float(np.linalg.norm(g_id)), float(np.linalg.norm(g_eh)))


def calibrated_schedule(
    cfg: SystemConfig,
    ch: ChannelSet,
    base: PenaltySchedule | None = None,
) -> PenaltySchedule:
    """Penalty schedule whose starting weight matches the objective scale.

    The linear penalty acts as an angular trust region around the rank-one
    manifold: its pull toward the manifold must be comparable to the rate
    gradient, not drown it out and not vanish against it.  Starting from a
    near-rank-one point, ``rho_init`` is lowered to ``1 / g`` (``g`` the rate
    gradient's Frobenius scale at the initial point) whenever the base value
    would make the penalty negligible; the schedule floor is lowered along
    with it.  This keeps the per-iteration rank growth bounded, which is what
    makes the sum-rate trajectory monotone in practice.
    """
    sched = base or PenaltySchedule()
    ops = build_selection_operators(cfg)
    qf = build_quadform_cache(cfg, ch)
    lift0 = initialize(cfg, ch, ops, qf)
    scale = _rate_gradient_scale(lift0, qf, ops, cfg)
    if not np.isfinite(scale) or scale <= 0.0:
        return sched
    rho_init = min(sched.rho_init, 1.0 / scale)
    return PenaltySchedule(
        rho_init=rho_init,
        decay=sched.decay,
        floor=min(sched.floor, rho_init),
        residual_target_rel=sched.residual_target_rel,
    )


# --------------------------------------------------------------------------
# The outer loop.


_COLD_SETTINGS = SolverSettings(barrier_decay=0.05)
_WARM_SETTINGS = SolverSettings(barrier_init=1e-4, barrier_decay=0.05)


def _retry_settings(base: SolverSettings) -> SolverSettings:
    """Fallback for a failed inner solve: default conservative schedule with
    a ten times smaller barrier target."""
    return SolverSettings(
        barrier_target=0.1 * base.barrier_target,
        grad_tol_rel=base.grad_tol_rel,
        newton_mode=base.newton_mode,
        dense_dim_max=base.dense_dim_max,
    )


def _acceptable_fallback(attempts, sub, current):
    """Best feasible ascent point among failed solve attempts, or ``None``.

    At milliwatt power scales the stationarity certificate of the final
    barrier stage can sit below the floating-point noise floor of the barrier
    gradient (absolute error ~ eps * cond(F) * gradient scale), so the solver
    reports a failure even though the point is within barrier-gap accuracy of
    the optimum.  The outer loop only needs a strictly feasible point that
    does not decrease the surrogate, so such near-misses are accepted.
    """
    floor = sub.objective_value(current)
    best = None
    for rep in attempts:
        if rep.solution is None or not np.isfinite(rep.objective):
            continue
        if rep.max_constraint_violation > 1e-9:
            continue
        if rep.objective < floor - 1e-12 * (1.0 + abs(floor)):
            continue
        if best is None or rep.objective > best.objective:
            best = rep
    return best


def _blend_warm_start(
    current: LiftedPair, anchor: LiftedPair, beta: float = 0.01
) -> LiftedPair:
    """Convex blend pulling an iterate slightly off the cone's boundary.

    The previous solution sits on a degenerate face (near-zero eigenvalues,
    near-active caps) where Newton conditioning collapses; blending a small
    weight of the strictly interior starting point restores margin on every
    constraint at once — by convexity the blend inherits a ``beta`` fraction
    of the anchor's slack — while staying close enough to warm-start the
    short barrier schedule.
    """
    return LiftedPair(
        f_lift_id=(1.0 - beta) * current.f_lift_id + beta * anchor.f_lift_id,
        f_lift_eh=(1.0 - beta) * current.f_lift_eh + beta * anchor.f_lift_eh,
    )


def run(
    cfg: SystemConfig,
    ch: ChannelSet,
    schedule: PenaltySchedule | None = None,
    max_outer_iters: int = 50,
    surrogate_tol: float = 1e-4,
    solver_settings: SolverSettings | None = None,
) -> RunResult:
    """Full outer loop from initialization to recovered beams.

    When ``schedule`` is omitted the starting penalty weight is calibrated to
    the rate-gradient scale at the initial point (see calibrated_schedule);
    pass an explicit schedule to override.  Stops with status ``converged``
    once the surrogate objective changes by at most ``surrogate_tol``
    (relative) between consecutive iterations and both penalty residuals are
    below the schedule's target, with the recovered beams re-validated
    against the original constraints; ``max-iters`` after ``max_outer_iters``
    outer iterations; ``infeasible`` when no strictly feasible point exists.
    A failed inner solve is retried cold, then once more with a ten times
    smaller barrier target; if every attempt fails the best feasible
    non-decreasing iterate among them is accepted (stationarity below the
    float noise floor cannot be certified), and only when none qualifies is
    NumericalFailureError raised.
    """
    ops = build_selection_operators(cfg)
    qf = build_quadform_cache(cfg, ch)
    try:
        lift0 = initialize(cfg, ch, ops, qf, settings=solver_settings)
    except InfeasibleScenarioError:
        return RunResult(
            beams=None,
            achieved_sum_rate=float("nan"),
            achieved_harvest=float("nan"),
            trajectory=(),
            status="infeasible",
        )
    if schedule is None:
        scale = _rate_gradient_scale(lift0, qf, ops, cfg)
        base = PenaltySchedule()
        if np.isfinite(scale) and scale > 0.0:
            rho_init = min(base.rho_init, 1.0 / scale)
            sched = PenaltySchedule(
                rho_init=rho_init,
                decay=base.decay,
                floor=min(base.floor, rho_init),
                residual_target_rel=base.residual_target_rel,
            )
        else:
            sched = base
    else:
        sched = schedule

    current = lift0
    rho = sched.rho_init
    trajectory: list[IterateState] = []
    prev_surrogate: float | None = None
    status = "max-iters"

    for iteration in range(1, max_outer_iters + 1):
        sub = build_subproblem(current, qf, ops, cfg, rho)
        if iteration == 1:
            trajectory.append(
                _snapshot(current, sub.objective_value(current), rho, 0, qf, cfg)
            )
        attempts = []
        if iteration == 1:
            report = solve(sub, settings=solver_settings or _COLD_SETTINGS)
        else:
            report = solve(
                sub,
                settings=solver_settings or _WARM_SETTINGS,
                warm_start=_blend_warm_start(current, lift0),
            )
        attempts.append(report)
        if report.status != "optimal" and iteration > 1:
            # the warm start may still be too close to the cone's boundary;
            # restart from the solver's own interior point
            report = solve(sub, settings=solver_settings or _COLD_SETTINGS)
            attempts.append(report)
        if report.status != "optimal":
            report = solve(sub, settings=_retry_settings(solver_settings or _COLD_SETTINGS))
            attempts.append(report)
        if report.status != "optimal":
            report = _acceptable_fallback(attempts, sub, current)
            if report is None:
                last = attempts[-1]
                raise NumericalFailureError(
                    iteration,
                    f"status {last.status}: {last.diagnostics} "
                    f"(kkt {last.kkt_residual:.3e})",
                )
        current = report.solution
        state = _snapshot(current, report.objective, rho, iteration, qf, cfg)
        trajectory.append(state)

        # residual targets are scaled by the pair's total trace so a block
        # that the optimum sends to zero (barrier noise floor) passes
        total_trace = float(
            np.trace(current.f_lift_id).real + np.trace(current.f_lift_eh).real
        )
        residuals_met = (
            state.penalty_residual_id <= sched.residual_target_rel * total_trace
            and state.penalty_residual_eh <= sched.residual_target_rel * total_trace
        )
        surrogate_flat = prev_surrogate is not None and abs(
            report.objective - prev_surrogate
        ) <= surrogate_tol * (1.0 + abs(report.objective))
        if surrogate_flat and residuals_met:
            status = "converged"
            break
        prev_surrogate = report.objective
        rho = penalty_schedule_step(
            rho,
            (state.penalty_residual_id, state.penalty_residual_eh),
            (total_trace, total_trace),
            sched,
        )

    beams = _recover_beams(current, cfg, ops, sched.residual_target_rel)
    return RunResult(
        beams=beams,
        achieved_sum_rate=float(sum_rate(beams, ch, cfg)),
        achieved_harvest=float(harvested_energy(beams, ch, cfg)),
        trajectory=tuple(trajectory),
        status=status,
    )


def _snapshot(
    lift_pair: LiftedPair,
    surrogate: float,
    rho: float,
    iteration: int,
    qf: QuadFormCache,
    cfg: SystemConfig,
) -> IterateState:
    return IterateState(
        lift=lift_pair,
        sum_rate=sum_rate_lifted(lift_pair, qf, cfg),
        penalty_residual_id=spectral_residual(lift_pair.f_lift_id),
        penalty_residual_eh=spectral_residual(lift_pair.f_lift_eh),
        surrogate_objective=surrogate,
        rho=rho,
        iteration=iteration,
    )


def _recover_beams(
    lift_pair: LiftedPair,
    cfg: SystemConfig,
    ops: SelectionOperators,
    residual_target_rel: float,
) -> BeamformerPair:
    try:
        return extract_rank_one(lift_pair, cfg, ops, residual_target_rel)
    except RankOneNotReachedError:
        # best effort for non-converged runs: dominant eigenpair, scaled
        # fully back under the caps
        bf = _eigen_beams(lift_pair)
        peak = float(per_antenna_power_all(bf, ops).max())
        if peak > cfg.p_elem_max:
            bf = BeamformerPair(
                f_id=np.sqrt(cfg.p_elem_max / peak) * bf.f_id,
                f_eh=np.sqrt(cfg.p_elem_max / peak) * bf.f_eh,
            )
        return bf


# --------------------------------------------------------------------------
# Harvest ceiling (used to place meaningful harvest floors in experiments).


def max_total_harvest(
    cfg: SystemConfig,
    ch: ChannelSet,
    settings: SolverSettings | None = None,
) -> float:
    """Largest total harvested power under the per-element caps alone.

    Solves the linear-objective member of the inner-program family (no log
    terms, objective = total harvest, harvest floor dropped).  Useful for
    choosing harvest floors that are feasible but not trivial.
    """
    ops = build_selection_operators(cfg)
    qf = build_quadform_cache(cfg, ch)
    all_cons = power_harvest_constraints(cfg, ops, qf)
    caps_only = tuple(c for c in all_cons if c.sense == "le")
    sub = SubproblemData(
        dim_id=cfg.dim_id,
        dim_eh=cfg.dim_eh,
        log_terms=(),
        linear_id=-qf.harvest_matrix_id(cfg.eh_efficiency),
        linear_eh=-qf.harvest_matrix_eh(cfg.eh_efficiency),
        constraints=caps_only,
        constant_offset=0.0,
        rho=1.0,
    )
    base = settings or SolverSettings()
    attempts = [solve(sub, settings=base)]
    if attempts[-1].status != "optimal":
        attempts.append(solve(sub, settings=_retry_settings(base)))
    for report in attempts:
        if report.status == "optimal":
            return float(report.objective)
    # a feasible near-stationary point still bounds the ceiling well enough
    # for placing harvest floors
    best = max(
        (
            r.objective
            for r in attempts
            if r.solution is not None
            and np.isfinite(r.objective)
            and r.max_constraint_violation <= 1e-9
        ),
        default=None,
    )
    if best is None:
        raise NumericalFailureError(
            0, f"harvest ceiling solve: {attempts[-1].status}"
        )
    return float(best)
