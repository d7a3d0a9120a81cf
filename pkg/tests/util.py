"""Shared helpers for the test suite: random scenarios at friendly scales."""

from __future__ import annotations

import numpy as np

from triswipt import (
    BeamformerPair,
    SystemConfig,
    build_quadform_cache,
    build_selection_operators,
    stack_channels,
)


def crandn(shape, rng: np.random.Generator) -> np.ndarray:
    """CN(0,1) array."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def unit_scenario(
    n: int = 2,
    k: int = 2,
    g: int = 1,
    seed: int = 0,
    noise: float = 1.0,
    p_elem: float = 1.0,
    q_min: float = 0.0,
    eff: float = 0.5,
):
    """Random scenario with O(1) channels; returns (cfg, ch, ops, qf, rng)."""
    rng = np.random.default_rng(seed)
    cfg = SystemConfig(
        n_elements=n,
        n_id=k,
        n_eh=g,
        p_elem_max=p_elem,
        q_harvest_min=q_min,
        eh_efficiency=eff,
        noise_pow=np.full(k, noise),
    )
    ch = stack_channels(cfg, crandn((k, n), rng), crandn((g, n), rng))
    ops = build_selection_operators(cfg)
    qf = build_quadform_cache(cfg, ch)
    return cfg, ch, ops, qf, rng


def random_bf(cfg: SystemConfig, rng: np.random.Generator, power_frac: float = 0.5) -> BeamformerPair:
    """Random beams scaled so the worst per-element power is power_frac * cap."""
    f_id = crandn((cfg.dim_id,), rng)
    f_eh = crandn((cfg.dim_eh,), rng)
    n = cfg.n_elements
    per_elem = (np.abs(f_id.reshape(-1, n)) ** 2).sum(axis=0) + (
        np.abs(f_eh.reshape(-1, n)) ** 2
    ).sum(axis=0)
    scale = np.sqrt(power_frac * cfg.p_elem_max / per_elem.max())
    return BeamformerPair(f_id=f_id * scale, f_eh=f_eh * scale)


def random_psd(dim: int, rng: np.random.Generator, rank: int | None = None, ridge: float = 0.0) -> np.ndarray:
    a = crandn((dim, rank or dim), rng)
    return a @ a.conj().T + ridge * np.eye(dim)


def random_herm(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = crandn((dim, dim), rng)
    return (a + a.conj().T) / 2.0
