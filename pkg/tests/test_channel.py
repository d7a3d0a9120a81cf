"""Channel generation: unit conversions, placement bounds, fading statistics."""

import numpy as np
import pytest

from triswipt import (
    ScenarioParams,
    SystemConfig,
    dbm_to_watt,
    draw_channels,
    pathloss_gain,
    place_users,
    watt_to_dbm,
)


def make_cfg(n=4, k=2, g=2):
    return SystemConfig(
        n_elements=n,
        n_id=k,
        n_eh=g,
        p_elem_max=dbm_to_watt(10.0),
        q_harvest_min=0.0,
        eh_efficiency=0.5,
        noise_pow=np.full(k, dbm_to_watt(-90.0)),
    )


class TestUnits:
    def test_dbm_to_watt_frozen_values(self):
        assert np.isclose(dbm_to_watt(10.0), 0.01, rtol=1e-12)
        assert np.isclose(dbm_to_watt(-90.0), 1e-12, rtol=1e-12)
        assert np.isclose(dbm_to_watt(30.0), 1.0, rtol=1e-12)
        assert np.isclose(dbm_to_watt(0.0), 1e-3, rtol=1e-12)

    def test_watt_to_dbm_roundtrip(self):
        for p in (-35.0, 0.0, 17.5):
            assert np.isclose(watt_to_dbm(dbm_to_watt(p)), p, atol=1e-10)
        with pytest.raises(ValueError):
            watt_to_dbm(0.0)

    def test_pathloss_frozen_values(self):
        assert np.isclose(pathloss_gain(1.0, 3.2, -30.0), 1e-3, rtol=1e-12)
        assert np.isclose(
            pathloss_gain(10.0, 2.2, -30.0), 1e-3 * 10 ** (-2.2), rtol=1e-12
        )

    def test_pathloss_rejects_nonpositive_distance(self):
        with pytest.raises(ValueError):
            pathloss_gain(0.0, 3.2, -30.0)
        with pytest.raises(ValueError):
            pathloss_gain(np.array([1.0, -2.0]), 3.2, -30.0)


class TestScenarioParams:
    def test_rejects_inverted_or_zero_ranges(self):
        with pytest.raises(ValueError):
            ScenarioParams(id_distance_range=(50.0, 20.0))
        with pytest.raises(ValueError):
            ScenarioParams(eh_distance_range=(0.0, 10.0))
        with pytest.raises(ValueError):
            ScenarioParams(sector_halfwidth_deg=0.0)
        with pytest.raises(ValueError):
            ScenarioParams(alpha_id=-1.0)

    def test_rejects_unreachable_distance_below_height_offset(self):
        with pytest.raises(ValueError):
            ScenarioParams(
                tris_position=(0.0, 0.0, 10.0),
                user_height=1.5,
                id_distance_range=(5.0, 20.0),
            )


class TestPlacement:
    def test_degenerate_range_is_exact(self):
        cfg = make_cfg(k=3, g=2)
        params = ScenarioParams(
            id_distance_range=(20.0, 20.0), eh_distance_range=(7.0, 7.0)
        )
        placement = place_users(cfg, params, np.random.default_rng(0))
        assert np.all(placement.id_distances == 20.0)
        assert np.all(placement.eh_distances == 7.0)

    def test_distance_bounds_hold_over_many_draws(self):
        cfg = make_cfg(k=10, g=10)
        params = ScenarioParams()
        rng = np.random.default_rng(1)
        lo = np.inf
        hi = -np.inf
        for _ in range(1000):
            placement = place_users(cfg, params, rng)
            lo = min(lo, placement.id_distances.min())
            hi = max(hi, placement.id_distances.max())
        assert lo >= 20.0
        assert hi <= 50.0

    def test_positions_realise_drawn_distance(self):
        cfg = make_cfg()
        params = ScenarioParams()
        placement = place_users(cfg, params, np.random.default_rng(2))
        tris = np.array(params.tris_position)
        for pos, d in zip(placement.id_positions, placement.id_distances):
            assert np.isclose(np.linalg.norm(pos - tris), d, rtol=1e-12)

    def test_positions_realise_distance_with_height_offset(self):
        cfg = make_cfg()
        params = ScenarioParams(
            tris_position=(0.0, 0.0, 10.0),
            user_height=1.5,
            id_distance_range=(10.0, 12.0),
            eh_distance_range=(9.0, 10.0),
        )
        placement = place_users(cfg, params, np.random.default_rng(3))
        tris = np.array(params.tris_position)
        for pos, d in zip(placement.id_positions, placement.id_distances):
            assert np.isclose(np.linalg.norm(pos - tris), d, rtol=1e-12)
            assert pos[2] == 1.5

    def test_sector_limits(self):
        cfg = make_cfg(k=10, g=2)
        params = ScenarioParams(sector_halfwidth_deg=60.0)
        rng = np.random.default_rng(4)
        for _ in range(200):
            placement = place_users(cfg, params, rng)
            x = placement.id_positions[:, 0]
            y = placement.id_positions[:, 1]
            azim = np.abs(np.degrees(np.arctan2(y, x)))
            assert np.all(azim <= 60.0 + 1e-9)


class TestDrawChannels:
    def test_determinism(self):
        cfg = make_cfg()
        params = ScenarioParams()
        ch1, pl1 = draw_channels(cfg, params, np.random.default_rng(42))
        ch2, pl2 = draw_channels(cfg, params, np.random.default_rng(42))
        assert np.array_equal(ch1.h_id, ch2.h_id)
        assert np.array_equal(ch1.h_eh, ch2.h_eh)
        assert np.array_equal(pl1.id_positions, pl2.id_positions)

    def test_different_seeds_differ(self):
        cfg = make_cfg()
        params = ScenarioParams()
        ch1, _ = draw_channels(cfg, params, np.random.default_rng(1))
        ch2, _ = draw_channels(cfg, params, np.random.default_rng(2))
        assert not np.allclose(ch1.h_id, ch2.h_id)

    def test_mean_channel_power_tracks_pathloss(self):
        # Pin the distance so the large-scale gain is deterministic, then
        # check E||h||^2 = N * gain over many fading draws.
        cfg = make_cfg(n=4, k=1, g=1)
        d = 30.0
        params = ScenarioParams(
            id_distance_range=(d, d), eh_distance_range=(7.0, 7.0)
        )
        rng = np.random.default_rng(5)
        acc = 0.0
        trials = 4000
        for _ in range(trials):
            ch, _ = draw_channels(cfg, params, rng)
            acc += float(np.vdot(ch.h_id[0], ch.h_id[0]).real)
        gain = pathloss_gain(d, params.alpha_id, params.pl0_db)
        expect = cfg.n_elements * gain
        assert abs(acc / trials - expect) <= 0.05 * expect

    def test_fading_entry_variance_near_unity(self):
        cfg = make_cfg(n=8, k=1, g=1)
        params = ScenarioParams(
            id_distance_range=(10.0, 10.0), eh_distance_range=(10.0, 10.0)
        )
        gain = pathloss_gain(10.0, params.alpha_id, params.pl0_db)
        rng = np.random.default_rng(6)
        entries = []
        for _ in range(13000):
            ch, _ = draw_channels(cfg, params, rng)
            entries.append(ch.h_id[0] / np.sqrt(gain))
        flat = np.concatenate(entries)
        var = float(np.mean(np.abs(flat) ** 2))
        assert abs(var - 1.0) <= 0.05
        assert abs(float(np.mean(flat.real))) <= 0.05
