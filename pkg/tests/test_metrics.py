"""Metrics: vector/lifted equivalence, DC split, gradients, penalties."""

import numpy as np
import pytest

from triswipt import (
    BeamformerPair,
    LiftedPair,
    NumericalPSDError,
    dc_gradient,
    dc_parts,
    harvest_lifted,
    harvested_energy,
    lift,
    nuclear_norm,
    penalty_terms,
    per_antenna_power,
    per_antenna_power_all,
    principal_eigvec,
    rate,
    rate_lifted,
    sca_rate_bound,
    sinr,
    spectral_residual,
    sum_rate,
    sum_rate_lifted,
)
from triswipt.metrics import herm_inner, per_antenna_power_lifted

from util import crandn, random_bf, random_herm, random_psd, unit_scenario


def lifted_from_psd(cfg, rng, ridge=0.0):
    return LiftedPair(
        f_lift_id=random_psd(cfg.dim_id, rng, ridge=ridge),
        f_lift_eh=random_psd(cfg.dim_eh, rng, ridge=ridge),
    )


class TestVectorMetrics:
    def test_per_antenna_frozen_value(self):
        # N=2, K=2, EH beam silent: element powers collect one entry per beam.
        cfg, _, ops, _, _ = unit_scenario(n=2, k=2, g=1)
        bf = BeamformerPair(f_id=[1.0, 2.0, 3.0, 0.0], f_eh=[0.0, 0.0])
        assert np.isclose(per_antenna_power(bf, ops, 0), 10.0, rtol=1e-12)
        assert np.isclose(per_antenna_power(bf, ops, 1), 4.0, rtol=1e-12)
        assert np.allclose(per_antenna_power_all(bf, ops), [10.0, 4.0])

    def test_sinr_single_user_frozen_value(self):
        cfg, ch, ops, qf, _ = unit_scenario(n=2, k=1, g=1, noise=1.0)
        ch_fixed = type(ch)(
            h_id=np.array([[1.0 + 0j, 0.0]]),
            h_eh=np.array([[0.0 + 0j, 1.0]]),
            hbar_id_idspace=np.array([[1.0 + 0j, 0.0]]),
            hbar_id_ehspace=np.array([[1.0 + 0j, 0.0]]),
            hbar_eh_idspace=np.array([[0.0 + 0j, 1.0]]),
            hbar_eh_ehspace=np.array([[0.0 + 0j, 1.0]]),
        )
        bf = BeamformerPair(f_id=[1.0, 0.0], f_eh=[0.0, 0.0])
        assert np.isclose(sinr(bf, ch_fixed, 0, cfg), 1.0, rtol=1e-12)
        assert np.isclose(rate(bf, ch_fixed, 0, cfg), 1.0, rtol=1e-12)

    def test_harvest_frozen_value(self):
        # zeta=0.5, h_eh=[1,0], f_eh=[2,0], ID beam silent: 0.5*|2|^2 = 2.
        from triswipt import SystemConfig, stack_channels, build_quadform_cache

        cfg = SystemConfig(2, 1, 1, 10.0, 0.0, 0.5, np.array([1.0]))
        ch = stack_channels(cfg, np.array([[1.0, 1.0]]), np.array([[1.0, 0.0]]))
        bf = BeamformerPair(f_id=[0.0, 0.0], f_eh=[2.0, 0.0])
        assert np.isclose(harvested_energy(bf, ch, cfg), 2.0, rtol=1e-12)

    def test_rate_nats_cross_check(self):
        cfg, ch, _, _, rng = unit_scenario(n=3, k=2, g=2, seed=11)
        bf = random_bf(cfg, rng)
        for k in range(cfg.n_id):
            bits = rate(bf, ch, k, cfg)
            nats = rate(bf, ch, k, cfg, nats=True)
            assert np.isclose(nats, bits * np.log(2.0), rtol=1e-12)


class TestLiftEquivalence:
    def test_rate_and_harvest_match_vector_form(self):
        for seed in range(12):
            cfg, ch, ops, qf, rng = unit_scenario(n=3, k=2, g=2, seed=seed)
            bf = random_bf(cfg, rng)
            lifted = lift(bf)
            for k in range(cfg.n_id):
                assert np.isclose(
                    rate_lifted(lifted, qf, k, cfg),
                    rate(bf, ch, k, cfg),
                    rtol=1e-10,
                )
            assert np.isclose(
                harvest_lifted(lifted, qf, cfg),
                harvested_energy(bf, ch, cfg),
                rtol=1e-10,
            )
            assert np.isclose(
                sum_rate_lifted(lifted, qf, cfg), sum_rate(bf, ch, cfg), rtol=1e-10
            )
            for n in range(cfg.n_elements):
                assert np.isclose(
                    per_antenna_power_lifted(lifted, ops, n),
                    per_antenna_power(bf, ops, n),
                    rtol=1e-10,
                )

    def test_zero_beams(self):
        cfg, ch, ops, qf, _ = unit_scenario(n=2, k=1, g=1)
        bf = BeamformerPair(f_id=np.zeros(2), f_eh=np.zeros(2))
        lifted = lift(bf)
        assert rate_lifted(lifted, qf, 0, cfg) == 0.0
        assert harvest_lifted(lifted, qf, cfg) == 0.0
        assert per_antenna_power(bf, ops, 0) == 0.0

    def test_general_psd_against_eigen_expansion(self):
        # tr(M F) for F with eigendecomposition sum_i w_i v_i v_i^H equals
        # sum_i w_i (v_i^H M v_i); checks the block-sparse path on rank > 1.
        cfg, ch, _, qf, rng = unit_scenario(n=3, k=2, g=2, seed=21)
        lifted = lifted_from_psd(cfg, rng)
        for k in range(cfg.n_id):
            m = qf.m_id_id(k, k).dense()
            w, v = np.linalg.eigh(lifted.f_lift_id)
            expect = sum(
                w[i] * np.vdot(v[:, i], m @ v[:, i]).real for i in range(len(w))
            )
            assert np.isclose(qf.m_id_id(k, k).trace_with(lifted.f_lift_id), expect, rtol=1e-9)

    def test_negative_trace_raises(self):
        cfg, ch, _, qf, _ = unit_scenario(n=2, k=1, g=1)
        bad = np.diag([-1.0, 0.0]).astype(complex)
        lifted = LiftedPair(f_lift_id=bad, f_lift_eh=np.eye(2, dtype=complex))
        h = qf.h_id[0].copy()
        # Only raises when the channel actually probes the negative direction.
        if abs(h[0]) > 1e-6:
            with pytest.raises(NumericalPSDError):
                rate_lifted(lifted, qf, 0, cfg)

    def test_validate_psd(self):
        lifted = LiftedPair(
            f_lift_id=np.diag([1.0, -1e-3]).astype(complex),
            f_lift_eh=np.eye(2, dtype=complex),
        )
        with pytest.raises(NumericalPSDError):
            lifted.validate_psd()
        ok = LiftedPair(
            f_lift_id=np.eye(2, dtype=complex), f_lift_eh=np.eye(2, dtype=complex)
        )
        ok.validate_psd()

    def test_lifted_pair_rejects_non_hermitian(self):
        bad = np.array([[1.0, 2.0], [3.0, 1.0]], dtype=complex)
        with pytest.raises(ValueError):
            LiftedPair(f_lift_id=bad, f_lift_eh=np.eye(2, dtype=complex))


class TestDcSplit:
    def test_difference_equals_rate(self):
        for seed in range(8):
            cfg, _, _, qf, rng = unit_scenario(n=3, k=2, g=2, seed=seed)
            lifted = lifted_from_psd(cfg, rng)
            for k in range(cfg.n_id):
                rdot, rddot = dc_parts(lifted, qf, k, cfg)
                assert np.isclose(
                    rdot - rddot, rate_lifted(lifted, qf, k, cfg), rtol=1e-11
                )

    def test_zero_matrices_give_log_noise(self):
        cfg, _, _, qf, _ = unit_scenario(n=2, k=2, g=1, noise=0.25)
        zero = LiftedPair(
            f_lift_id=np.zeros((4, 4), dtype=complex),
            f_lift_eh=np.zeros((2, 2), dtype=complex),
        )
        rdot, rddot = dc_parts(zero, qf, 0, cfg)
        assert np.isclose(rdot, np.log2(0.25), rtol=1e-12)
        assert np.isclose(rddot, np.log2(0.25), rtol=1e-12)

    def test_gradient_against_central_differences(self):
        cfg, _, _, qf, rng = unit_scenario(n=2, k=2, g=2, seed=33)
        lift0 = lifted_from_psd(cfg, rng, ridge=0.5)
        step = 1e-6
        for k in range(cfg.n_id):
            grads = dc_gradient(lift0, qf, k, cfg)
            for _ in range(20):
                h_id = random_herm(cfg.dim_id, rng)
                h_eh = random_herm(cfg.dim_eh, rng)

                def rddot_at(t):
                    shifted = LiftedPair(
                        f_lift_id=lift0.f_lift_id + t * h_id,
                        f_lift_eh=lift0.f_lift_eh + t * h_eh,
                    )
                    return dc_parts(shifted, qf, k, cfg)[1]

                fd = (rddot_at(step) - rddot_at(-step)) / (2 * step)
                analytic = herm_inner(grads.grad_id, h_id) + herm_inner(
                    grads.grad_eh, h_eh
                )
                assert np.isclose(fd, analytic, rtol=1e-6, atol=1e-10)

    def test_gradient_nats_scaling(self):
        cfg, _, _, qf, rng = unit_scenario(n=2, k=1, g=1, seed=3)
        lift0 = lifted_from_psd(cfg, rng, ridge=0.5)
        g_bits = dc_gradient(lift0, qf, 0, cfg)
        g_nats = dc_gradient(lift0, qf, 0, cfg, nats=True)
        assert np.allclose(g_nats.grad_id, g_bits.grad_id * np.log(2.0), rtol=1e-12)


class TestScaBound:
    def test_majorizes_and_tight_at_expansion(self):
        for seed in range(10):
            cfg, _, _, qf, rng = unit_scenario(n=2, k=2, g=1, seed=seed)
            lift0 = lifted_from_psd(cfg, rng, ridge=0.1)
            other = lifted_from_psd(cfg, rng)
            for k in range(cfg.n_id):
                bound_at_0 = sca_rate_bound(lift0, lift0, qf, k, cfg)
                _, rddot0 = dc_parts(lift0, qf, k, cfg)
                assert np.isclose(bound_at_0, rddot0, rtol=1e-12)
                bound = sca_rate_bound(other, lift0, qf, k, cfg)
                _, rddot = dc_parts(other, qf, k, cfg)
                assert bound >= rddot - 1e-9 * max(1.0, abs(rddot))

    def test_surrogate_rate_minorizes_true_rate(self):
        cfg, _, _, qf, rng = unit_scenario(n=2, k=2, g=2, seed=77)
        lift0 = lifted_from_psd(cfg, rng, ridge=0.1)
        for _ in range(20):
            other = lifted_from_psd(cfg, rng)
            for k in range(cfg.n_id):
                rdot, _ = dc_parts(other, qf, k, cfg)
                surrogate = rdot - sca_rate_bound(other, lift0, qf, k, cfg)
                true_rate = rate_lifted(other, qf, k, cfg)
                assert surrogate <= true_rate + 1e-9 * max(1.0, abs(true_rate))


class TestPenalty:
    def test_rank_one_gives_zero(self):
        cfg, _, _, _, rng = unit_scenario(n=2, k=2, g=1, seed=1)
        bf = random_bf(cfg, rng)
        lifted = lift(bf)
        p_id, p_eh = penalty_terms(lifted, lifted)
        assert abs(p_id) <= 1e-12 * max(1.0, np.trace(lifted.f_lift_id).real)
        assert abs(p_eh) <= 1e-12 * max(1.0, np.trace(lifted.f_lift_eh).real)

    def test_identity_frozen_value(self):
        eye = LiftedPair(
            f_lift_id=np.eye(2, dtype=complex), f_lift_eh=np.eye(2, dtype=complex)
        )
        p_id, p_eh = penalty_terms(eye, eye)
        assert np.isclose(p_id, 1.0, rtol=1e-12)
        assert np.isclose(p_eh, 1.0, rtol=1e-12)

    def test_nonnegative_on_psd(self):
        cfg, _, _, _, rng = unit_scenario(n=3, k=2, g=2, seed=2)
        for _ in range(50):
            a = lifted_from_psd(cfg, rng)
            b = lifted_from_psd(cfg, rng)
            p_id, p_eh = penalty_terms(a, b)
            assert p_id >= -1e-9
            assert p_eh >= -1e-9

    def test_linearisation_exact_at_expansion(self):
        cfg, _, _, _, rng = unit_scenario(n=3, k=2, g=2, seed=4)
        a = lifted_from_psd(cfg, rng)
        p_id, p_eh = penalty_terms(a, a)
        assert np.isclose(p_id, spectral_residual(a.f_lift_id), rtol=1e-9, atol=1e-12)
        assert np.isclose(p_eh, spectral_residual(a.f_lift_eh), rtol=1e-9, atol=1e-12)

    def test_tangent_minorizes_spectral_norm(self):
        # Re(v0^H F v0) <= lambda_max(F) for any unit v0, so the linearised
        # penalty always upper-bounds the true residual.
        rng = np.random.default_rng(9)
        for _ in range(50):
            f = random_psd(5, rng)
            f0 = random_psd(5, rng)
            _, v0 = principal_eigvec(f0)
            assert np.vdot(v0, f @ v0).real <= np.linalg.eigvalsh(f)[-1] + 1e-9

    def test_nuclear_equals_trace_on_psd(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            f = random_psd(6, rng)
            tr = np.trace(f).real
            assert abs(nuclear_norm(f) - tr) <= 1e-9 * max(1.0, tr)

    def test_spectral_residual_values(self):
        assert np.isclose(spectral_residual(np.diag([3.0, 1.0, 0.5])), 1.5)
        assert spectral_residual(np.outer([1, 2.0], [1, 2.0])) <= 1e-12


class TestPrincipalEigvec:
    def test_known_diagonal(self):
        val, vec = principal_eigvec(np.diag([1.0, 3.0]).astype(complex))
        assert np.isclose(val, 3.0)
        assert np.allclose(vec, [0.0, 1.0])

    def test_phase_convention(self):
        rng = np.random.default_rng(12)
        v = crandn((4,), rng)
        f = np.outer(v, v.conj())
        _, top = principal_eigvec(f)
        idx = int(np.argmax(np.abs(top) > 1e-12))
        assert top[idx].imag == pytest.approx(0.0, abs=1e-12)
        assert top[idx].real > 0
        # And it spans the same line as v.
        cos = abs(np.vdot(top, v / np.linalg.norm(v)))
        assert np.isclose(cos, 1.0, rtol=1e-10)

    def test_degenerate_spectrum_is_deterministic(self):
        f = np.eye(3, dtype=complex)
        _, v1 = principal_eigvec(f)
        _, v2 = principal_eigvec(f)
        assert np.array_equal(v1, v2)
