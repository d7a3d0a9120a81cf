"""System model: selection operators, stacked channels, block-sparse traces."""

import numpy as np
import pytest

from triswipt import (
    BlockOuter,
    SystemConfig,
    build_quadform_cache,
    build_selection_operators,
    stack_channels,
)
from triswipt.system import block_diag_outer, sum_block_qf

from util import crandn, random_psd, unit_scenario


def make_cfg(n=2, k=2, g=1, noise=1.0):
    return SystemConfig(
        n_elements=n,
        n_id=k,
        n_eh=g,
        p_elem_max=1.0,
        q_harvest_min=0.0,
        eh_efficiency=0.5,
        noise_pow=np.full(k, noise),
    )


class TestConfigValidation:
    def test_rejects_nonpositive_counts(self):
        with pytest.raises(ValueError):
            make_cfg(n=0)
        with pytest.raises(ValueError):
            make_cfg(k=0)
        with pytest.raises(ValueError):
            make_cfg(g=0)

    def test_rejects_bad_powers(self):
        with pytest.raises(ValueError):
            SystemConfig(2, 1, 1, 0.0, 0.0, 0.5, np.array([1.0]))
        with pytest.raises(ValueError):
            SystemConfig(2, 1, 1, 1.0, -1.0, 0.5, np.array([1.0]))
        with pytest.raises(ValueError):
            SystemConfig(2, 1, 1, 1.0, 0.0, 1.5, np.array([1.0]))
        with pytest.raises(ValueError):
            SystemConfig(2, 1, 1, 1.0, 0.0, 0.5, np.array([0.0]))

    def test_noise_shape_enforced(self):
        with pytest.raises(ValueError):
            SystemConfig(2, 2, 1, 1.0, 0.0, 0.5, np.array([1.0]))

    def test_dims(self):
        cfg = make_cfg(n=3, k=2, g=4)
        assert cfg.dim_id == 6
        assert cfg.dim_eh == 12


class TestSelectionOperators:
    def test_beam_mask_frozen_value(self):
        # N=2, K=2: first ID beam occupies the first two slots.
        ops = build_selection_operators(make_cfg(n=2, k=2))
        assert ops.beam_mask_id[0].tolist() == [1.0, 1.0, 0.0, 0.0]
        assert ops.beam_mask_id[1].tolist() == [0.0, 0.0, 1.0, 1.0]

    def test_elem_mask_frozen_value(self):
        # N=2, K=2: element 0 appears at stacked slots 0 and 2.
        ops = build_selection_operators(make_cfg(n=2, k=2))
        assert ops.elem_mask_id[0].tolist() == [1.0, 0.0, 1.0, 0.0]
        assert ops.elem_mask_id[1].tolist() == [0.0, 1.0, 0.0, 1.0]

    def test_partitions_of_identity(self):
        cfg = make_cfg(n=3, k=2, g=2)
        ops = build_selection_operators(cfg)
        assert np.array_equal(ops.elem_mask_id.sum(axis=0), np.ones(cfg.dim_id))
        assert np.array_equal(ops.elem_mask_eh.sum(axis=0), np.ones(cfg.dim_eh))
        assert np.array_equal(ops.beam_mask_id.sum(axis=0), np.ones(cfg.dim_id))
        assert np.array_equal(ops.beam_mask_eh.sum(axis=0), np.ones(cfg.dim_eh))
        assert np.array_equal(ops.elem_ind, np.eye(3))

    def test_dense_accessors_are_diagonal(self):
        ops = build_selection_operators(make_cfg(n=2, k=2, g=2))
        assert np.array_equal(ops.elem_matrix_id(1), np.diag([0, 1, 0, 1.0]))
        assert np.array_equal(ops.beam_matrix_eh(0), np.diag([1, 1, 0, 0.0]))
        assert np.array_equal(ops.elem_matrix(0), np.diag([1.0, 0.0]))

    def test_elem_quadratic_form_matches_indexing(self):
        cfg, _, ops, _, rng = unit_scenario(n=3, k=2, g=2, seed=5)
        f = crandn((cfg.dim_id,), rng)
        for n in range(cfg.n_elements):
            direct = sum(abs(f[b * cfg.n_elements + n]) ** 2 for b in range(cfg.n_id))
            quad = np.real(np.vdot(f, ops.elem_matrix_id(n) @ f))
            assert np.isclose(quad, direct, rtol=1e-12)

    def test_beam_selection_matches_slicing(self):
        cfg, ch, ops, _, rng = unit_scenario(n=3, k=3, g=1, seed=6)
        f = crandn((cfg.dim_id,), rng)
        for k in range(cfg.n_id):
            for i in range(cfg.n_id):
                lhs = np.vdot(ch.hbar_id_idspace[k], ops.beam_matrix_id(i) @ f)
                block = f[i * cfg.n_elements : (i + 1) * cfg.n_elements]
                rhs = np.vdot(ch.h_id[k], block)
                assert np.isclose(lhs, rhs, rtol=1e-12)


class TestStackChannels:
    def test_shapes_and_tiling(self):
        cfg = make_cfg(n=2, k=2, g=3)
        rng = np.random.default_rng(0)
        h_id, h_eh = crandn((2, 2), rng), crandn((3, 2), rng)
        ch = stack_channels(cfg, h_id, h_eh)
        assert ch.hbar_id_idspace.shape == (2, 4)
        assert ch.hbar_id_ehspace.shape == (2, 6)
        assert ch.hbar_eh_idspace.shape == (3, 4)
        assert np.array_equal(ch.hbar_id_idspace[1], np.tile(h_id[1], 2))

    def test_rejects_wrong_shapes(self):
        cfg = make_cfg(n=2, k=2, g=1)
        good_id = np.zeros((2, 2), dtype=complex)
        good_eh = np.zeros((1, 2), dtype=complex)
        with pytest.raises(ValueError):
            stack_channels(cfg, np.zeros((2, 3)), good_eh)
        with pytest.raises(ValueError):
            stack_channels(cfg, good_id, np.zeros((2, 2)))

    def test_arrays_immutable(self):
        cfg, ch, ops, _, _ = unit_scenario()
        with pytest.raises(ValueError):
            ch.h_id[0, 0] = 0.0
        with pytest.raises(ValueError):
            ops.beam_mask_id[0, 0] = 5.0


class TestQuadFormCache:
    def test_single_element_frozen_value(self):
        # N=1, K=2, scalar channel h=2: the own-beam coefficient for user 0
        # is diag(4, 0) in the stacked 2x2 ID space.
        cfg = make_cfg(n=1, k=2, g=1)
        ch = stack_channels(cfg, np.array([[2.0], [1.0]]), np.array([[1.0]]))
        qf = build_quadform_cache(cfg, ch)
        assert np.array_equal(qf.m_id_id(0, 0).dense(), np.diag([4.0, 0.0]))
        assert np.array_equal(qf.m_id_id(0, 1).dense(), np.diag([0.0, 4.0]))

    def test_block_outer_dense_matches_selection_product(self):
        # M = B h hbar^H B built from dense operators equals the BlockOuter view.
        cfg, ch, ops, qf, _ = unit_scenario(n=3, k=2, g=2, seed=7)
        for k in range(cfg.n_id):
            for i in range(cfg.n_id):
                hbar = ch.hbar_id_idspace[k]
                b = ops.beam_matrix_id(i)
                dense = b @ np.outer(hbar, hbar.conj()) @ b
                assert np.allclose(qf.m_id_id(k, i).dense(), dense, atol=1e-14)
        for g in range(cfg.n_eh):
            for j in range(cfg.n_eh):
                hbar = ch.hbar_eh_ehspace[g]
                b = ops.beam_matrix_eh(j)
                dense = b @ np.outer(hbar, hbar.conj()) @ b
                assert np.allclose(qf.m_eh_eh(g, j).dense(), dense, atol=1e-14)

    def test_trace_with_matches_dense_trace(self):
        cfg, _, _, qf, rng = unit_scenario(n=3, k=2, g=2, seed=8)
        mat = random_psd(cfg.dim_id, rng)
        for k in range(cfg.n_id):
            for i in range(cfg.n_id):
                bo = qf.m_id_id(k, i)
                expect = np.trace(bo.dense() @ mat).real
                assert np.isclose(bo.trace_with(mat), expect, rtol=1e-12)

    def test_aggregates_match_dense(self):
        cfg, _, _, qf, rng = unit_scenario(n=2, k=3, g=2, seed=9)
        f_i = random_psd(cfg.dim_id, rng)
        f_e = random_psd(cfg.dim_eh, rng)
        for k in range(cfg.n_id):
            total = sum(qf.m_id_id(k, i).trace_with(f_i) for i in range(cfg.n_id))
            assert np.isclose(qf.id_power_from_id(k, f_i), total, rtol=1e-12)
            skip = total - qf.m_id_id(k, k).trace_with(f_i)
            assert np.isclose(qf.id_power_from_id(k, f_i, exclude=k), skip, rtol=1e-10)
            dense = qf.sum_m_id_id_dense(k, exclude=k)
            assert np.isclose(np.trace(dense @ f_i).real, skip, rtol=1e-10)
        harvest_direct = 0.0
        for g in range(cfg.n_eh):
            harvest_direct += qf.eh_power_from_eh(g, f_e) + qf.eh_power_from_id(g, f_i)
        via_mats = (
            np.trace(qf.harvest_matrix_id(1.0) @ f_i).real
            + np.trace(qf.harvest_matrix_eh(1.0) @ f_e).real
        )
        assert np.isclose(harvest_direct, via_mats, rtol=1e-12)

    def test_block_diag_outer_exclude(self):
        rng = np.random.default_rng(3)
        v = crandn((3,), rng)
        full = block_diag_outer(v, 3)
        skip1 = block_diag_outer(v, 3, exclude=1)
        s = slice(3, 6)
        assert np.allclose(skip1[s, s], 0.0)
        assert np.allclose(full[s, s], np.outer(v, v.conj()))
        diff = full - skip1
        diff[s, s] = 0.0
        assert np.count_nonzero(diff) == 0

    def test_sum_block_qf_matches_loop(self):
        rng = np.random.default_rng(4)
        v = crandn((2,), rng)
        mat = random_psd(6, rng)
        expect = sum(
            np.vdot(v, mat[2 * b : 2 * b + 2, 2 * b : 2 * b + 2] @ v).real
            for b in range(3)
        )
        assert np.isclose(sum_block_qf(v, mat, 3), expect, rtol=1e-12)


class TestBlockOuter:
    def test_dim_and_placement(self):
        bo = BlockOuter(n_blocks=3, block=2, vec=np.array([1.0 + 0j, 2.0]))
        assert bo.dim == 6
        dense = bo.dense()
        assert np.allclose(dense[4:6, 4:6], [[1, 2], [2, 4]])
        assert np.count_nonzero(dense[:4, :4]) == 0
