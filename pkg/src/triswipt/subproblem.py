"""Assembly of the per-iteration concave surrogate problem.

Given an expansion point (the previous lifted iterate) and a penalty weight
rho, `build_subproblem` produces the data of one inner convex program:

    maximise    sum_k log2(c_k + <M_k_id, F_id> + <M_k_eh, F_eh>)
                - <L_id, F_id> - <L_eh, F_eh> + constant_offset
    subject to  per-element power (<=) and total harvest (>=) trace
                constraints, F_id PSD, F_eh PSD.

The log terms are the concave halves of the per-user rates; the linear parts
collect the gradients of the subtracted concave halves plus the linearised
rank-one penalty (I - v v^H) / (2 rho) per block.  ``constant_offset`` makes
the assembled objective equal the SCA surrogate, so values are directly
comparable across outer iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import (
    LiftedPair,
    dc_gradient,
    harvest_lifted,
    herm_inner,
    per_antenna_power_lifted,
    principal_eigvec,
)
from .system import QuadFormCache, SelectionOperators, SystemConfig


class StaleIterateError(RuntimeError):
    """The expansion point violates the trust constraints it must satisfy."""


def _check_herm(name: str, mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square, got {mat.shape}")
    gap = np.linalg.norm(mat - mat.conj().T)
    if gap > 1e-10 * (1.0 + np.linalg.norm(mat)):
        raise ValueError(f"{name} is not Hermitian (gap {gap:.3e})")
    out = np.array(mat, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LogTerm:
    """One concave objective term log2(constant + <mat_id, F_id> + <mat_eh, F_eh>)."""

    mat_id: np.ndarray
    mat_eh: np.ndarray
    constant: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "mat_id", _check_herm("mat_id", self.mat_id))
        object.__setattr__(self, "mat_eh", _check_herm("mat_eh", self.mat_eh))
        if not self.constant > 0.0:
            raise ValueError("log-term constant must be positive")


@dataclass(frozen=True)
class TraceConstraint:
    """<mat_id, F_id> + <mat_eh, F_eh> (<=|>=) bound."""

    mat_id: np.ndarray
    mat_eh: np.ndarray
    bound: float
    sense: str
    label: str = ""

    def __post_init__(self) -> None:
        if self.sense not in ("le", "ge"):
            raise ValueError("sense must be 'le' or 'ge'")
        object.__setattr__(self, "mat_id", _check_herm("mat_id", self.mat_id))
        object.__setattr__(self, "mat_eh", _check_herm("mat_eh", self.mat_eh))

    def value(self, lift_pair: LiftedPair) -> float:
        return herm_inner(self.mat_id, lift_pair.f_lift_id) + herm_inner(
            self.mat_eh, lift_pair.f_lift_eh
        )

    def violation(self, lift_pair: LiftedPair) -> float:
        v = self.value(lift_pair)
        return max(0.0, v - self.bound) if self.sense == "le" else max(0.0, self.bound - v)


@dataclass(frozen=True)
class SubproblemData:
    """Container of one inner concave program over two PSD blocks."""

    dim_id: int
    dim_eh: int
    log_terms: tuple[LogTerm, ...]
    linear_id: np.ndarray
    linear_eh: np.ndarray
    constraints: tuple[TraceConstraint, ...]
    constant_offset: float
    rho: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "log_terms", tuple(self.log_terms))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "linear_id", _check_herm("linear_id", self.linear_id))
        object.__setattr__(self, "linear_eh", _check_herm("linear_eh", self.linear_eh))
        if self.linear_id.shape != (self.dim_id, self.dim_id):
            raise ValueError("linear_id shape does not match dim_id")
        if self.linear_eh.shape != (self.dim_eh, self.dim_eh):
            raise ValueError("linear_eh shape does not match dim_eh")
        if not self.rho > 0.0:
            raise ValueError("rho must be positive")
        for term in self.log_terms:
            if term.mat_id.shape != (self.dim_id, self.dim_id):
                raise ValueError("log-term mat_id shape mismatch")
            if term.mat_eh.shape != (self.dim_eh, self.dim_eh):
                raise ValueError("log-term mat_eh shape mismatch")
        for con in self.constraints:
            if con.mat_id.shape != (self.dim_id, self.dim_id):
                raise ValueError(f"constraint {con.label} mat_id shape mismatch")
            if con.mat_eh.shape != (self.dim_eh, self.dim_eh):
                raise ValueError(f"constraint {con.label} mat_eh shape mismatch")

    def objective_value(self, lift_pair: LiftedPair) -> float:
        """Assembled surrogate objective (bits), -inf outside the log domain."""
        total = self.constant_offset
        total -= herm_inner(self.linear_id, lift_pair.f_lift_id)
        total -= herm_inner(self.linear_eh, lift_pair.f_lift_eh)
        for term in self.log_terms:
            arg = (
                term.constant
                + herm_inner(term.mat_id, lift_pair.f_lift_id)
                + herm_inner(term.mat_eh, lift_pair.f_lift_eh)
            )
            if arg <= 0.0:
                return -np.inf
            total += np.log2(arg)
        return float(total)

    def max_violation(self, lift_pair: LiftedPair) -> float:
        """Largest trace-constraint violation, normalised by 1 + |bound|."""
        worst = 0.0
        for con in self.constraints:
            worst = max(worst, con.violation(lift_pair) / (1.0 + abs(con.bound)))
        return worst

    def dump_text(self) -> str:
        """Human-readable dump: dims, scalars, matrices as re/im pairs."""
        lines = [
            f"dims id={self.dim_id} eh={self.dim_eh}",
            f"rho {self.rho!r}",
            f"constant_offset {self.constant_offset!r}",
            f"log_terms {len(self.log_terms)}",
        ]
        for t, term in enumerate(self.log_terms):
            lines.append(f"log_term {t} constant {term.constant!r}")
            lines.append(_matrix_text(f"log_term {t} mat_id", term.mat_id))
            lines.append(_matrix_text(f"log_term {t} mat_eh", term.mat_eh))
        lines.append(_matrix_text("linear_id", self.linear_id))
        lines.append(_matrix_text("linear_eh", self.linear_eh))
        lines.append(f"constraints {len(self.constraints)}")
        for con in self.constraints:
            lines.append(
                f"constraint {con.label or '?'} sense {con.sense} bound {con.bound!r}"
            )
            lines.append(_matrix_text("mat_id", con.mat_id))
            lines.append(_matrix_text("mat_eh", con.mat_eh))
        return "\n".join(lines) + "\n"


def _matrix_text(name: str, mat: np.ndarray) -> str:
    rows = [name]
    for row in mat:
        rows.append(" ".join(f"{z.real!r} {z.imag!r}" for z in row))
    return "\n".join(rows)


def power_harvest_constraints(
    cfg: SystemConfig, ops: SelectionOperators, qf: QuadFormCache
) -> tuple[TraceConstraint, ...]:
    """The fixed constraint family: N per-element caps plus one harvest floor."""
    cons = []
    zero_eh = np.zeros((cfg.dim_eh, cfg.dim_eh), dtype=complex)
    for n in range(cfg.n_elements):
        cons.append(
            TraceConstraint(
                mat_id=np.diag(ops.elem_mask_id[n]).astype(complex),
                mat_eh=np.diag(ops.elem_mask_eh[n]).astype(complex),
                bound=cfg.p_elem_max,
                sense="le",
                label=f"elem_power[{n}]",
            )
        )
    cons.append(
        TraceConstraint(
            mat_id=qf.harvest_matrix_id(cfg.eh_efficiency),
            mat_eh=qf.harvest_matrix_eh(cfg.eh_efficiency),
            bound=cfg.q_harvest_min,
            sense="ge",
            label="harvest",
        )
    )
    return tuple(cons)


def build_subproblem(
    lift0: LiftedPair,
    qf: QuadFormCache,
    ops: SelectionOperators,
    cfg: SystemConfig,
    rho: float,
) -> SubproblemData:
    """Assemble the inner program around expansion point lift0.

    Raises StaleIterateError when lift0 is not (within 1e-6 relative)
    feasible for the harvest and per-element constraints, or has left the
    PSD cone beyond 1e-9; gradients taken there would not majorise.
    """
    if lift0.f_lift_id.shape != (cfg.dim_id, cfg.dim_id):
        raise ValueError("lift0 ID block has wrong shape")
    if lift0.f_lift_eh.shape != (cfg.dim_eh, cfg.dim_eh):
        raise ValueError("lift0 EH block has wrong shape")
    if not rho > 0.0:
        raise ValueError("rho must be positive")
    lift0.validate_psd(rtol=1e-9)

    q0 = harvest_lifted(lift0, qf, cfg)
    if q0 < cfg.q_harvest_min * (1.0 - 1e-6):
        raise StaleIterateError(
            f"expansion point harvests {q0:.6e} < required {cfg.q_harvest_min:.6e}"
        )
    for n in range(cfg.n_elements):
        p_n = per_antenna_power_lifted(lift0, ops, n)
        if p_n > cfg.p_elem_max * (1.0 + 1e-6):
            raise StaleIterateError(
                f"expansion point element {n} power {p_n:.6e} exceeds cap "
                f"{cfg.p_elem_max:.6e}"
            )

    log_terms = []
    lin_id = np.zeros((cfg.dim_id, cfg.dim_id), dtype=complex)
    lin_eh = np.zeros((cfg.dim_eh, cfg.dim_eh), dtype=complex)
    offset = 0.0
    for k in range(cfg.n_id):
        log_terms.append(
            LogTerm(
                mat_id=qf.sum_m_id_id_dense(k),
                mat_eh=qf.sum_m_id_eh_dense(k),
                constant=float(cfg.noise_pow[k]),
            )
        )
        grads = dc_gradient(lift0, qf, k, cfg)
        lin_id += grads.grad_id
        lin_eh += grads.grad_eh
        offset += (
            herm_inner(grads.grad_id, lift0.f_lift_id)
            + herm_inner(grads.grad_eh, lift0.f_lift_eh)
            - grads.rddot0
        )

    # Linearised rank-one penalty: (tr F - Re v^H F v) / (2 rho) per block.
    _, v_id = principal_eigvec(lift0.f_lift_id)
    _, v_eh = principal_eigvec(lift0.f_lift_eh)
    lin_id += (np.eye(cfg.dim_id) - np.outer(v_id, v_id.conj())) / (2.0 * rho)
    lin_eh += (np.eye(cfg.dim_eh) - np.outer(v_eh, v_eh.conj())) / (2.0 * rho)

    return SubproblemData(
        dim_id=cfg.dim_id,
        dim_eh=cfg.dim_eh,
        log_terms=tuple(log_terms),
        linear_id=(lin_id + lin_id.conj().T) / 2.0,
        linear_eh=(lin_eh + lin_eh.conj().T) / 2.0,
        constraints=power_harvest_constraints(cfg, ops, qf),
        constant_offset=float(offset),
        rho=float(rho),
    )
