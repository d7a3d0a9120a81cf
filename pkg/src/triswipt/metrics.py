"""Rate and harvest metrics in beamformer and lifted (matrix) form.

The lifted form replaces each stacked beamformer f with F = f f^H, turning
every quadratic in f into a trace that is linear in F.  Rates are computed in
bits (base-2 logs) by default; pass ``nats=True`` for natural logs when
cross-checking.

The per-user rate splits as a difference of two concave terms,
``rdot - rddot``, where both are logs of affine functions of (F_id, F_eh).
`dc_gradient` returns the gradient of the subtracted term at an expansion
point; `sca_rate_bound` is its first-order overestimate, which turns the
difference into a concave minorant of the true rate.  `penalty_terms` gives
the linearised trace-minus-spectral-norm penalty that drives iterates toward
rank one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import QuadFormCache, SelectionOperators, SystemConfig, ChannelSet

_LN2 = float(np.log(2.0))


class NumericalPSDError(ArithmeticError):
    """A trace that must be nonnegative for PSD inputs came out negative."""


def herm_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Re tr(a @ b) for Hermitian a, b."""
    return float(np.real(np.vdot(a, b)))


def _freeze(arr: np.ndarray, dtype=complex) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class BeamformerPair:
    """Stacked ID and EH beamformers (lengths N*K and N*G)."""

    f_id: np.ndarray
    f_eh: np.ndarray

    def __post_init__(self) -> None:
        f_id = np.asarray(self.f_id, dtype=complex)
        f_eh = np.asarray(self.f_eh, dtype=complex)
        if f_id.ndim != 1 or f_eh.ndim != 1:
            raise ValueError("beamformers must be one-dimensional stacked vectors")
        object.__setattr__(self, "f_id", _freeze(f_id))
        object.__setattr__(self, "f_eh", _freeze(f_eh))


@dataclass(frozen=True)
class LiftedPair:
    """Lifted beamformer matrices, one Hermitian block per beam space."""

    f_lift_id: np.ndarray
    f_lift_eh: np.ndarray

    def __post_init__(self) -> None:
        for name in ("f_lift_id", "f_lift_eh"):
            mat = np.asarray(getattr(self, name), dtype=complex)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError(f"{name} must be a square matrix")
            herm_gap = np.linalg.norm(mat - mat.conj().T)
            if herm_gap > 1e-12 * (1.0 + np.linalg.norm(mat)):
                raise ValueError(f"{name} is not Hermitian (gap {herm_gap:.3e})")
            object.__setattr__(self, name, _freeze(mat))

    def validate_psd(self, rtol: float = 1e-9) -> None:
        """Raise NumericalPSDError if either block has an eigenvalue below
        -rtol * ||F||_2."""
        for name in ("f_lift_id", "f_lift_eh"):
            w = np.linalg.eigvalsh(getattr(self, name))
            scale = max(abs(w[0]), abs(w[-1]), 1e-300)
            if w[0] < -rtol * scale:
                raise NumericalPSDError(
                    f"{name} has eigenvalue {w[0]:.3e} below -{rtol:.1e} * {scale:.3e}"
                )


def lift(bf: BeamformerPair) -> LiftedPair:
    """Rank-one lift F = f f^H of both stacked beamformers."""
    return LiftedPair(
        f_lift_id=np.outer(bf.f_id, bf.f_id.conj()),
        f_lift_eh=np.outer(bf.f_eh, bf.f_eh.conj()),
    )


# --------------------------------------------------------------------------
# Vector-form metrics.


def per_antenna_power(bf: BeamformerPair, ops: SelectionOperators, n: int) -> float:
    """Power emitted by element n across all ID and EH beams."""
    p_id = float(np.sum(np.abs(bf.f_id) ** 2 * ops.elem_mask_id[n]))
    p_eh = float(np.sum(np.abs(bf.f_eh) ** 2 * ops.elem_mask_eh[n]))
    return p_id + p_eh


def per_antenna_power_all(bf: BeamformerPair, ops: SelectionOperators) -> np.ndarray:
    """Vector of per-element powers, shape (N,)."""
    n = ops.n_elements
    p_id = np.abs(bf.f_id.reshape(-1, n)) ** 2
    p_eh = np.abs(bf.f_eh.reshape(-1, n)) ** 2
    return p_id.sum(axis=0) + p_eh.sum(axis=0)


def _beam_gains(h: np.ndarray, f_stacked: np.ndarray) -> np.ndarray:
    """|h^H f_b|^2 for every beam block b of a stacked beamformer."""
    blocks = f_stacked.reshape(-1, h.shape[0])
    return np.abs(blocks @ h.conj()) ** 2


def sinr(bf: BeamformerPair, ch: ChannelSet, k: int, cfg: SystemConfig) -> float:
    """SINR of ID user k: own beam over other beams plus noise."""
    gains_id = _beam_gains(ch.h_id[k], bf.f_id)
    gains_eh = _beam_gains(ch.h_id[k], bf.f_eh)
    desired = gains_id[k]
    interference = gains_id.sum() - desired + gains_eh.sum()
    return float(desired / (interference + cfg.noise_pow[k]))


def rate(
    bf: BeamformerPair, ch: ChannelSet, k: int, cfg: SystemConfig, nats: bool = False
) -> float:
    """Achievable rate of ID user k, bits (default) or nats per channel use."""
    r = np.log2(1.0 + sinr(bf, ch, k, cfg))
    return float(r * _LN2) if nats else float(r)


def sum_rate(
    bf: BeamformerPair, ch: ChannelSet, cfg: SystemConfig, nats: bool = False
) -> float:
    return sum(rate(bf, ch, k, cfg, nats) for k in range(cfg.n_id))


def harvested_energy(bf: BeamformerPair, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Total harvested power: every beam contributes at every EH user."""
    total = 0.0
    for g in range(cfg.n_eh):
        total += _beam_gains(ch.h_eh[g], bf.f_eh).sum()
        total += _beam_gains(ch.h_eh[g], bf.f_id).sum()
    return cfg.eh_efficiency * total


# --------------------------------------------------------------------------
# Lifted-form metrics.


def _guard_nonneg(value: float, scale: float, what: str) -> float:
    # PSD arguments make these traces nonnegative; a real violation means the
    # iterate left the cone, which must surface instead of silently clamping.
    if value < -1e-9 * max(scale, 1e-300):
        raise NumericalPSDError(f"{what} = {value:.6e} at scale {scale:.3e}")
    return value if value > 0.0 else 0.0


def _qf_scale(h: np.ndarray, f_lift: np.ndarray) -> float:
    return float(np.vdot(h, h).real * (np.abs(np.diag(f_lift)).sum() + 1e-300))


def rate_lifted(
    lift_pair: LiftedPair,
    qf: QuadFormCache,
    k: int,
    cfg: SystemConfig,
    nats: bool = False,
) -> float:
    """Rate of ID user k evaluated on lifted matrices via trace forms."""
    f_i, f_e = lift_pair.f_lift_id, lift_pair.f_lift_eh
    scale = _qf_scale(qf.h_id[k], f_i) + _qf_scale(qf.h_id[k], f_e)
    desired = _guard_nonneg(qf.m_id_id(k, k).trace_with(f_i), scale, "desired power")
    interf = _guard_nonneg(
        qf.id_power_from_id(k, f_i, exclude=k) + qf.id_power_from_eh(k, f_e),
        scale,
        "interference power",
    )
    r = np.log2(1.0 + desired / (interf + cfg.noise_pow[k]))
    return float(r * _LN2) if nats else float(r)


def sum_rate_lifted(
    lift_pair: LiftedPair, qf: QuadFormCache, cfg: SystemConfig, nats: bool = False
) -> float:
    return sum(rate_lifted(lift_pair, qf, k, cfg, nats) for k in range(cfg.n_id))


def harvest_lifted(lift_pair: LiftedPair, qf: QuadFormCache, cfg: SystemConfig) -> float:
    """Total harvested power in lifted form."""
    f_i, f_e = lift_pair.f_lift_id, lift_pair.f_lift_eh
    total = 0.0
    for g in range(cfg.n_eh):
        scale = _qf_scale(qf.h_eh[g], f_e) + _qf_scale(qf.h_eh[g], f_i)
        total += _guard_nonneg(
            qf.eh_power_from_eh(g, f_e) + qf.eh_power_from_id(g, f_i),
            scale,
            f"harvest power of EH user {g}",
        )
    return cfg.eh_efficiency * total


def per_antenna_power_lifted(
    lift_pair: LiftedPair, ops: SelectionOperators, n: int
) -> float:
    """tr of the element-n mask against both lifted blocks."""
    p_id = float(np.real(np.diag(lift_pair.f_lift_id)) @ ops.elem_mask_id[n])
    p_eh = float(np.real(np.diag(lift_pair.f_lift_eh)) @ ops.elem_mask_eh[n])
    return p_id + p_eh


# --------------------------------------------------------------------------
# Difference-of-concave split and SCA machinery.


def dc_parts(
    lift_pair: LiftedPair,
    qf: QuadFormCache,
    k: int,
    cfg: SystemConfig,
    nats: bool = False,
) -> tuple[float, float]:
    """(rdot, rddot) with rate = rdot - rddot.

    rdot is the log of total received power plus noise at ID user k; rddot
    the log of the same sum with the desired beam removed.
    """
    f_i, f_e = lift_pair.f_lift_id, lift_pair.f_lift_eh
    scale = _qf_scale(qf.h_id[k], f_i) + _qf_scale(qf.h_id[k], f_e)
    from_eh = _guard_nonneg(qf.id_power_from_eh(k, f_e), scale, "EH-beam power")
    own = _guard_nonneg(qf.m_id_id(k, k).trace_with(f_i), scale, "desired power")
    others = _guard_nonneg(
        qf.id_power_from_id(k, f_i, exclude=k), scale, "intra-ID power"
    )
    noise = cfg.noise_pow[k]
    log = np.log if nats else np.log2
    rdot = float(log(own + others + from_eh + noise))
    rddot = float(log(others + from_eh + noise))
    return rdot, rddot


@dataclass(frozen=True)
class DcGradients:
    """Gradient of the subtracted concave term rddot_k at an expansion point.

    ``grad_id``/``grad_eh`` are Hermitian matrices such that the first-order
    Taylor term is Re tr(grad_id (F_id - F_id0)) + Re tr(grad_eh (F_eh -
    F_eh0)).  ``rddot0`` is the value at the expansion point and ``denom``
    the interference-plus-noise power there.
    """

    grad_id: np.ndarray
    grad_eh: np.ndarray
    rddot0: float
    denom: float


def dc_gradient(
    lift0: LiftedPair,
    qf: QuadFormCache,
    k: int,
    cfg: SystemConfig,
    nats: bool = False,
) -> DcGradients:
    """Gradient of rddot_k with respect to both lifted blocks at lift0."""
    _, rddot0 = dc_parts(lift0, qf, k, cfg, nats)
    denom = (
        qf.id_power_from_id(k, lift0.f_lift_id, exclude=k)
        + qf.id_power_from_eh(k, lift0.f_lift_eh)
        + cfg.noise_pow[k]
    )
    scale = denom if nats else denom * _LN2
    return DcGradients(
        grad_id=qf.sum_m_id_id_dense(k, exclude=k) / scale,
        grad_eh=qf.sum_m_id_eh_dense(k) / scale,
        rddot0=rddot0,
        denom=float(denom),
    )


def sca_rate_bound(
    lift_pair: LiftedPair,
    lift0: LiftedPair,
    qf: QuadFormCache,
    k: int,
    cfg: SystemConfig,
    nats: bool = False,
) -> float:
    """First-order overestimate of rddot_k around lift0 (exact at lift0).

    Subtracting this from rdot_k gives a concave global underestimate of the
    user rate, the surrogate maximised in each inner convex problem.
    """
    grads = dc_gradient(lift0, qf, k, cfg, nats)
    return (
        grads.rddot0
        + herm_inner(grads.grad_id, lift_pair.f_lift_id - lift0.f_lift_id)
        + herm_inner(grads.grad_eh, lift_pair.f_lift_eh - lift0.f_lift_eh)
    )


# --------------------------------------------------------------------------
# Rank-one penalty.


def principal_eigvec(mat: np.ndarray, gap_rtol: float = 1e-10) -> tuple[float, np.ndarray]:
    """Largest eigenpair with a deterministic eigenvector convention.

    The returned vector is phase-normalised so its first component of
    non-negligible magnitude is real and positive.  When the top eigenvalue
    is degenerate within gap_rtol (relative), the candidate whose normalised
    entries compare lexicographically largest (real parts, then imaginary)
    is returned, making the choice reproducible across runs.
    """
    w, v = np.linalg.eigh(mat)
    lmax = w[-1]
    tol = gap_rtol * max(abs(lmax), 1e-300)
    cands = [v[:, i] for i in range(len(w)) if w[i] >= lmax - tol]
    normed = [_phase_normalise(c) for c in cands]
    best = normed[0]
    for cand in normed[1:]:
        if _lex_greater(cand, best):
            best = cand
    return float(lmax), best


def _phase_normalise(vec: np.ndarray) -> np.ndarray:
    mags = np.abs(vec)
    idx = int(np.argmax(mags > 1e-12 * mags.max())) if mags.max() > 0 else 0
    pivot = vec[idx]
    if abs(pivot) == 0.0:
        return vec.copy()
    return vec * (pivot.conj() / abs(pivot))


def _lex_greater(a: np.ndarray, b: np.ndarray) -> bool:
    ka = np.concatenate([a.real, a.imag])
    kb = np.concatenate([b.real, b.imag])
    diff = ka != kb
    if not diff.any():
        return False
    i = int(np.argmax(diff))
    return bool(ka[i] > kb[i])


def nuclear_norm(mat: np.ndarray) -> float:
    """Sum of absolute eigenvalues (Hermitian input)."""
    return float(np.abs(np.linalg.eigvalsh(mat)).sum())


def spectral_residual(mat: np.ndarray) -> float:
    """Nuclear norm minus spectral norm; zero exactly when rank <= 1."""
    w = np.abs(np.linalg.eigvalsh(mat))
    return float(w.sum() - w.max())


def penalty_terms(lift_pair: LiftedPair, lift0: LiftedPair) -> tuple[float, float]:
    """Linearised rank-one penalties (ID block, EH block).

    Each is tr(F) minus the tangent minorant of the spectral norm at the
    expansion block, i.e. tr(F) - Re(v0^H F v0) with v0 the principal
    eigenvector of the expansion block.  Nonnegative on PSD F; exact value
    tr(F) - ||F||_2 at F = F0.
    """
    out = []
    for f, f0 in (
        (lift_pair.f_lift_id, lift0.f_lift_id),
        (lift_pair.f_lift_eh, lift0.f_lift_eh),
    ):
        _, v0 = principal_eigvec(f0)
        out.append(float(np.trace(f).real - np.real(np.vdot(v0, f @ v0))))
    return out[0], out[1]
