"""Core system model for a transmissive-RIS transceiver serving ID and EH users.

An N-element transceiver radiates K information-decoding (ID) beams and G
energy-harvesting (EH) beams.  Beamformers are stacked end to end:
``f_id`` in C^{N*K} holds the K per-user ID beams, ``f_eh`` in C^{N*G} the EH
beams.  Selection operators pick per-element and per-beam slices of the
stacked vectors so power and rate terms become quadratic forms; all of the
resulting coefficient matrices are block-diagonal with rank-one blocks, which
`BlockOuter` exploits instead of materialising dense matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SystemConfig:
    """Static scenario description.

    Args:
        n_elements: number of radiating elements N.
        n_id: number of information-decoding users K (one beam each).
        n_eh: number of energy-harvesting users G (one beam each).
        p_elem_max: per-element transmit power cap in watt.
        q_harvest_min: minimum total harvested power in watt (>= 0).
        eh_efficiency: energy conversion efficiency, in (0, 1].
        noise_pow: per-ID-user noise power in watt, shape (K,).
    """

    n_elements: int
    n_id: int
    n_eh: int
    p_elem_max: float
    q_harvest_min: float
    eh_efficiency: float
    noise_pow: np.ndarray

    def __post_init__(self) -> None:
        if self.n_elements < 1 or self.n_id < 1 or self.n_eh < 1:
            raise ValueError("n_elements, n_id and n_eh must all be >= 1")
        if not self.p_elem_max > 0.0:
            raise ValueError("p_elem_max must be positive")
        if self.q_harvest_min < 0.0:
            raise ValueError("q_harvest_min must be nonnegative")
        if not 0.0 < self.eh_efficiency <= 1.0:
            raise ValueError("eh_efficiency must lie in (0, 1]")
        noise = np.atleast_1d(np.asarray(self.noise_pow, dtype=float))
        if noise.shape != (self.n_id,):
            raise ValueError(
                f"noise_pow must have shape ({self.n_id},), got {noise.shape}"
            )
        if not np.all(noise > 0.0):
            raise ValueError("noise powers must be positive")
        object.__setattr__(self, "noise_pow", _freeze(noise))

    @property
    def dim_id(self) -> int:
        """Length N*K of the stacked ID beamformer."""
        return self.n_elements * self.n_id

    @property
    def dim_eh(self) -> int:
        """Length N*G of the stacked EH beamformer."""
        return self.n_elements * self.n_eh


@dataclass(frozen=True)
class ChannelSet:
    """Per-user channels plus their stacked (tiled) copies.

    ``h_id[k]`` is the length-N channel of ID user k, ``h_eh[g]`` of EH user
    g.  The stacked copy of a channel in a beam space is the channel tiled
    once per beam, so that inner products against a stacked beamformer pick
    up every beam through the same physical channel.
    """

    h_id: np.ndarray  # (K, N) complex
    h_eh: np.ndarray  # (G, N) complex
    hbar_id_idspace: np.ndarray  # (K, N*K)
    hbar_id_ehspace: np.ndarray  # (K, N*G)
    hbar_eh_idspace: np.ndarray  # (G, N*K)
    hbar_eh_ehspace: np.ndarray  # (G, N*G)


def stack_channels(cfg: SystemConfig, h_id: np.ndarray, h_eh: np.ndarray) -> ChannelSet:
    """Validate raw channel arrays and build their stacked copies."""
    h_id = np.asarray(h_id, dtype=complex)
    h_eh = np.asarray(h_eh, dtype=complex)
    if h_id.shape != (cfg.n_id, cfg.n_elements):
        raise ValueError(
            f"h_id must have shape ({cfg.n_id}, {cfg.n_elements}), got {h_id.shape}"
        )
    if h_eh.shape != (cfg.n_eh, cfg.n_elements):
        raise ValueError(
            f"h_eh must have shape ({cfg.n_eh}, {cfg.n_elements}), got {h_eh.shape}"
        )
    return ChannelSet(
        h_id=_freeze(h_id),
        h_eh=_freeze(h_eh),
        hbar_id_idspace=_freeze(np.tile(h_id, (1, cfg.n_id))),
        hbar_id_ehspace=_freeze(np.tile(h_id, (1, cfg.n_eh))),
        hbar_eh_idspace=_freeze(np.tile(h_eh, (1, cfg.n_id))),
        hbar_eh_ehspace=_freeze(np.tile(h_eh, (1, cfg.n_eh))),
    )


@dataclass(frozen=True)
class SelectionOperators:
    """Element and beam selection masks for the stacked beamformer spaces.

    All operators are diagonal 0/1 matrices; only their diagonals are stored.
    ``elem_ind[n]`` indicates element n within one beam.  ``elem_mask_id[n]``
    is that indicator tiled across the K ID beams, i.e. the diagonal of the
    per-element power mask in ID space; likewise ``elem_mask_eh``.
    ``beam_mask_id[k]`` indicates the k-th length-N block of ID space.
    """

    n_elements: int
    n_id: int
    n_eh: int
    elem_ind: np.ndarray  # (N, N)
    elem_mask_id: np.ndarray  # (N, N*K)
    elem_mask_eh: np.ndarray  # (N, N*G)
    beam_mask_id: np.ndarray  # (K, N*K)
    beam_mask_eh: np.ndarray  # (G, N*G)

    def elem_matrix(self, n: int) -> np.ndarray:
        """Dense N x N single-element selector."""
        return np.diag(self.elem_ind[n])

    def elem_matrix_id(self, n: int) -> np.ndarray:
        """Dense per-element mask over the stacked ID space."""
        return np.diag(self.elem_mask_id[n])

    def elem_matrix_eh(self, n: int) -> np.ndarray:
        return np.diag(self.elem_mask_eh[n])

    def beam_matrix_id(self, k: int) -> np.ndarray:
        """Dense selector of the k-th ID beam block."""
        return np.diag(self.beam_mask_id[k])

    def beam_matrix_eh(self, g: int) -> np.ndarray:
        return np.diag(self.beam_mask_eh[g])


def build_selection_operators(cfg: SystemConfig) -> SelectionOperators:
    """Construct all element/beam selection masks for a configuration."""
    n, k, g = cfg.n_elements, cfg.n_id, cfg.n_eh
    elem = np.eye(n)
    beam_id = np.kron(np.eye(k), np.ones(n))
    beam_eh = np.kron(np.eye(g), np.ones(n))
    return SelectionOperators(
        n_elements=n,
        n_id=k,
        n_eh=g,
        elem_ind=_freeze(elem),
        elem_mask_id=_freeze(np.tile(elem, (1, k))),
        elem_mask_eh=_freeze(np.tile(elem, (1, g))),
        beam_mask_id=_freeze(beam_id),
        beam_mask_eh=_freeze(beam_eh),
    )


@dataclass(frozen=True)
class BlockOuter:
    """Rank-one Hermitian matrix vec*vec^H sitting in one diagonal block.

    Represents a (n_blocks*N) x (n_blocks*N) matrix that is zero everywhere
    except block ``block`` on the diagonal, where it equals the outer product
    of ``vec`` with itself.  Traces against it reduce to one quadratic form.
    """

    n_blocks: int
    block: int
    vec: np.ndarray  # (N,) complex

    @property
    def dim(self) -> int:
        return self.n_blocks * self.vec.shape[0]

    def dense(self) -> np.ndarray:
        n = self.vec.shape[0]
        out = np.zeros((self.dim, self.dim), dtype=complex)
        s = slice(self.block * n, (self.block + 1) * n)
        out[s, s] = np.outer(self.vec, self.vec.conj())
        return out

    def trace_with(self, mat: np.ndarray) -> float:
        """Re tr(self @ mat) = Re(vec^H mat_block vec) for Hermitian mat."""
        n = self.vec.shape[0]
        s = slice(self.block * n, (self.block + 1) * n)
        return float(np.real(np.vdot(self.vec, mat[s, s] @ self.vec)))


def block_diag_outer(
    vec: np.ndarray, n_blocks: int, exclude: int | None = None
) -> np.ndarray:
    """Dense block-diagonal matrix with vec*vec^H in each block.

    Block ``exclude`` is left zero when given; this is the interference
    aggregate sum_i M[k][i] over i != exclude.
    """
    n = vec.shape[0]
    outer = np.outer(vec, vec.conj())
    out = np.zeros((n_blocks * n, n_blocks * n), dtype=complex)
    for b in range(n_blocks):
        if b == exclude:
            continue
        s = slice(b * n, (b + 1) * n)
        out[s, s] = outer
    return out


def sum_block_qf(
    vec: np.ndarray, mat: np.ndarray, n_blocks: int, exclude: int | None = None
) -> float:
    """sum over diagonal blocks b of Re(vec^H mat_bb vec), skipping exclude."""
    n = vec.shape[0]
    total = 0.0
    for b in range(n_blocks):
        if b == exclude:
            continue
        s = slice(b * n, (b + 1) * n)
        total += np.real(np.vdot(vec, mat[s, s] @ vec))
    return float(total)


@dataclass(frozen=True)
class QuadFormCache:
    """Block-sparse store of every lifted-metric coefficient matrix.

    Each coefficient matrix is block-diagonal with at most one nonzero
    rank-one block, so only the K + G base channel vectors are kept.
    Accessors return `BlockOuter` views or evaluate aggregate traces
    directly, avoiding dense (N*K)^2 / (N*G)^2 intermediates.
    """

    n_elements: int
    n_id: int
    n_eh: int
    h_id: np.ndarray  # (K, N)
    h_eh: np.ndarray  # (G, N)

    def m_id_id(self, k: int, i: int) -> BlockOuter:
        """Coefficient of F_id in ID user k's power received from ID beam i."""
        return BlockOuter(self.n_id, i, self.h_id[k])

    def m_id_eh(self, k: int, g: int) -> BlockOuter:
        """Coefficient of F_eh in ID user k's power received from EH beam g."""
        return BlockOuter(self.n_eh, g, self.h_id[k])

    def m_eh_eh(self, g: int, j: int) -> BlockOuter:
        """Coefficient of F_eh in EH user g's harvest from EH beam j."""
        return BlockOuter(self.n_eh, j, self.h_eh[g])

    def m_eh_id(self, g: int, i: int) -> BlockOuter:
        """Coefficient of F_id in EH user g's harvest from ID beam i."""
        return BlockOuter(self.n_id, i, self.h_eh[g])

    # Aggregate quadratic forms (sums of traces over beams).

    def id_power_from_id(
        self, k: int, f_lift_id: np.ndarray, exclude: int | None = None
    ) -> float:
        """sum_i tr(m_id_id(k, i) F_id), optionally skipping beam ``exclude``."""
        return sum_block_qf(self.h_id[k], f_lift_id, self.n_id, exclude)

    def id_power_from_eh(self, k: int, f_lift_eh: np.ndarray) -> float:
        return sum_block_qf(self.h_id[k], f_lift_eh, self.n_eh)

    def eh_power_from_eh(self, g: int, f_lift_eh: np.ndarray) -> float:
        return sum_block_qf(self.h_eh[g], f_lift_eh, self.n_eh)

    def eh_power_from_id(self, g: int, f_lift_id: np.ndarray) -> float:
        return sum_block_qf(self.h_eh[g], f_lift_id, self.n_id)

    # Dense aggregates used when assembling subproblem data.

    def sum_m_id_id_dense(self, k: int, exclude: int | None = None) -> np.ndarray:
        return block_diag_outer(self.h_id[k], self.n_id, exclude)

    def sum_m_id_eh_dense(self, k: int) -> np.ndarray:
        return block_diag_outer(self.h_id[k], self.n_eh)

    def harvest_matrix_id(self, eff: float) -> np.ndarray:
        """eff * sum_g sum_i m_eh_id(g, i), the F_id side of total harvest."""
        out = np.zeros((self.n_elements * self.n_id,) * 2, dtype=complex)
        for g in range(self.n_eh):
            out += block_diag_outer(self.h_eh[g], self.n_id)
        return eff * out

    def harvest_matrix_eh(self, eff: float) -> np.ndarray:
        out = np.zeros((self.n_elements * self.n_eh,) * 2, dtype=complex)
        for g in range(self.n_eh):
            out += block_diag_outer(self.h_eh[g], self.n_eh)
        return eff * out


def build_quadform_cache(cfg: SystemConfig, ch: ChannelSet) -> QuadFormCache:
    """Bind a channel set to the block-sparse coefficient store."""
    return QuadFormCache(
        n_elements=cfg.n_elements,
        n_id=cfg.n_id,
        n_eh=cfg.n_eh,
        h_id=ch.h_id,
        h_eh=ch.h_eh,
    )
