"""Scenario geometry and random channel generation.

Users sit in a sector in front of the transceiver.  ID users are drawn at
distances within ``id_distance_range``, EH users within ``eh_distance_range``
(distances are straight-line from the transceiver; the distance law is
uniform over the range, azimuth uniform over the sector).  Small-scale fading
is i.i.d. Rayleigh; large-scale gain follows pl0 * d^(-alpha) with a
per-user-class exponent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import ChannelSet, SystemConfig, stack_channels


def dbm_to_watt(p_dbm: float) -> float:
    """Convert a power in dBm to watt."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watt_to_dbm(p_watt: float) -> float:
    if not p_watt > 0.0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * np.log10(p_watt) + 30.0


def pathloss_gain(distance_m: float | np.ndarray, alpha: float, pl0_db: float) -> np.ndarray:
    """Linear power gain pl0 * d^(-alpha); pl0_db is the gain at 1 m in dB."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0.0):
        raise ValueError("distances must be positive")
    return 10.0 ** (pl0_db / 10.0) * d ** (-alpha)


@dataclass(frozen=True)
class ScenarioParams:
    """Geometry and propagation parameters for random scenario draws.

    Distance ranges bound the straight-line distance between transceiver and
    user.  ``sector_halfwidth_deg`` bounds the azimuth of user positions
    around boresight.  Heights enter the placement only; when user and
    transceiver heights are equal the drawn distance is realised in the
    horizontal plane.
    """

    tris_position: tuple[float, float, float] = (0.0, 0.0, 1.5)
    user_height: float = 1.5
    id_distance_range: tuple[float, float] = (20.0, 50.0)
    eh_distance_range: tuple[float, float] = (5.0, 10.0)
    sector_halfwidth_deg: float = 60.0
    alpha_id: float = 3.2
    alpha_eh: float = 2.2
    pl0_db: float = -30.0

    def __post_init__(self) -> None:
        dz = abs(self.user_height - self.tris_position[2])
        for name, rng in (
            ("id_distance_range", self.id_distance_range),
            ("eh_distance_range", self.eh_distance_range),
        ):
            lo, hi = rng
            if not 0.0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < min <= max, got {rng}")
            if lo < dz:
                raise ValueError(
                    f"{name} min {lo} is below the height offset {dz}; "
                    "no placement can realise that distance"
                )
        if not 0.0 < self.sector_halfwidth_deg <= 180.0:
            raise ValueError("sector_halfwidth_deg must lie in (0, 180]")
        if self.alpha_id <= 0.0 or self.alpha_eh <= 0.0:
            raise ValueError("pathloss exponents must be positive")


@dataclass(frozen=True)
class UserPlacement:
    """Drawn user positions and their distances from the transceiver."""

    id_positions: np.ndarray  # (K, 3)
    eh_positions: np.ndarray  # (G, 3)
    id_distances: np.ndarray  # (K,)
    eh_distances: np.ndarray  # (G,)


def _draw_positions(
    count: int,
    dist_range: tuple[float, float],
    params: ScenarioParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = dist_range
    dist = rng.uniform(lo, hi, size=count)
    half = np.deg2rad(params.sector_halfwidth_deg)
    azim = rng.uniform(-half, half, size=count)
    dz = params.user_height - params.tris_position[2]
    # Horizontal reach realising the drawn straight-line distance.
    rho = np.sqrt(np.maximum(dist**2 - dz**2, 0.0))
    x0, y0, _ = params.tris_position
    pos = np.stack(
        [x0 + rho * np.cos(azim), y0 + rho * np.sin(azim), np.full(count, params.user_height)],
        axis=1,
    )
    return pos, dist


def place_users(
    cfg: SystemConfig, params: ScenarioParams, rng: np.random.Generator
) -> UserPlacement:
    """Draw ID and EH user positions (ID draws consume the stream first)."""
    id_pos, id_dist = _draw_positions(cfg.n_id, params.id_distance_range, params, rng)
    eh_pos, eh_dist = _draw_positions(cfg.n_eh, params.eh_distance_range, params, rng)
    return UserPlacement(
        id_positions=id_pos,
        eh_positions=eh_pos,
        id_distances=id_dist,
        eh_distances=eh_dist,
    )


def _rayleigh(count: int, n: int, rng: np.random.Generator) -> np.ndarray:
    # CN(0, 1) entries: unit variance split across real and imaginary parts.
    re = rng.standard_normal((count, n))
    im = rng.standard_normal((count, n))
    return (re + 1j * im) / np.sqrt(2.0)


def draw_channels(
    cfg: SystemConfig,
    params: ScenarioParams,
    rng: np.random.Generator,
    placement: UserPlacement | None = None,
) -> tuple[ChannelSet, UserPlacement]:
    """Draw a full channel set: placement (unless given) then fading.

    Consumption order is fixed (ID placement, EH placement, ID fading, EH
    fading) so equal seeds give equal channels.
    """
    if placement is None:
        placement = place_users(cfg, params, rng)
    gain_id = pathloss_gain(placement.id_distances, params.alpha_id, params.pl0_db)
    gain_eh = pathloss_gain(placement.eh_distances, params.alpha_eh, params.pl0_db)
    h_id = np.sqrt(gain_id)[:, None] * _rayleigh(cfg.n_id, cfg.n_elements, rng)
    h_eh = np.sqrt(gain_eh)[:, None] * _rayleigh(cfg.n_eh, cfg.n_elements, rng)
    return stack_channels(cfg, h_id, h_eh), placement
