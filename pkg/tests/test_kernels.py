"""Backend-paired kernels: identical results, correct math, env selection."""

import os
import subprocess
import sys

import numpy as np
import pytest

from triswipt import kernels
from triswipt.solver import param_to_mat

from util import random_psd

HAVE_NUMBA = kernels._HAVE_NUMBA
needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not importable")


@pytest.fixture
def restore_backend():
    before = kernels.get_backend()
    yield
    kernels.set_backend(before)


def test_backend_default_is_valid():
    assert kernels.get_backend() in ("numba", "numpy")


def test_set_backend_roundtrip(restore_backend):
    kernels.set_backend("numpy")
    assert kernels.get_backend() == "numpy"
    if HAVE_NUMBA:
        kernels.set_backend("numba")
        assert kernels.get_backend() == "numba"


def test_set_backend_rejects_unknown(restore_backend):
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


def _scan_inputs(rng, n_i=400, n_j=300, n_e=2):
    sig = rng.uniform(0.0, 4.0, n_i)
    leak = rng.uniform(0.0, 0.5, n_i)
    pow_id = rng.uniform(0.0, 0.8, (n_i, n_e))
    gain = rng.uniform(0.0, 2.0, n_j)
    harv = rng.uniform(0.0, 0.6, n_j)
    pow_eh = rng.uniform(0.0, 0.8, (n_j, n_e))
    return sig, leak, pow_id, gain, harv, pow_eh


def _scan_reference(sig, leak, pow_id, gain, harv, pow_eh, p_max, q_thresh, noise):
    best = (-1, -1, -1.0)
    for i in range(sig.shape[0]):
        for j in range(gain.shape[0]):
            if np.any(pow_id[i] + pow_eh[j] > p_max):
                continue
            if leak[i] + harv[j] < q_thresh:
                continue
            r = sig[i] / (gain[j] + noise)
            if r > best[2]:
                best = (i, j, r)
    return best


def test_grid_scan_matches_reference_loop(restore_backend):
    rng = np.random.default_rng(11)
    args = _scan_inputs(rng, n_i=60, n_j=45) + (1.0, 0.4, 0.1)
    expect = _scan_reference(*args)
    for backend in ("numpy",) + (("numba",) if HAVE_NUMBA else ()):
        kernels.set_backend(backend)
        got = kernels.grid_scan(*args)
        assert got[0] == expect[0] and got[1] == expect[1]
        assert got[2] == pytest.approx(expect[2], rel=1e-15)


@needs_numba
def test_grid_scan_backends_bitwise_equal(restore_backend):
    rng = np.random.default_rng(7)
    for trial in range(5):
        args = _scan_inputs(rng) + (1.0, 0.5, 0.05)
        kernels.set_backend("numpy")
        np_pick = kernels.grid_scan(*args)
        kernels.set_backend("numba")
        nb_pick = kernels.grid_scan(*args)
        assert np_pick[:2] == nb_pick[:2]
        # same arithmetic on both sides, so the value is bitwise identical
        assert np_pick[2] == nb_pick[2]


def test_grid_scan_infeasible_sentinel(restore_backend):
    rng = np.random.default_rng(3)
    sig, leak, pow_id, gain, harv, pow_eh = _scan_inputs(rng, n_i=20, n_j=20)
    for backend in ("numpy",) + (("numba",) if HAVE_NUMBA else ()):
        kernels.set_backend(backend)
        assert kernels.grid_scan(
            sig, leak, pow_id, gain, harv, pow_eh, 1.0, 100.0, 0.1
        ) == (-1, -1, -1.0)


def test_grid_scan_tie_breaks_to_earliest_pair(restore_backend):
    # two exactly tied maxima at (0, 1) and (2, 0); the scan must keep (0, 1)
    sig = np.array([2.0, 0.1, 2.0])
    gain = np.array([3.0, 1.0, 1.0])
    leak = np.zeros(3)
    harv = np.zeros(3)
    pow_id = np.zeros((3, 1))
    pow_eh = np.zeros((3, 1))
    gain2 = gain.copy()
    gain2[0] = 1.0  # makes (0, 0), (0, 1) and (2, 0) all tie at ratio 2.0
    for backend in ("numpy",) + (("numba",) if HAVE_NUMBA else ()):
        kernels.set_backend(backend)
        assert kernels.grid_scan(
            sig, leak, pow_id, gain2, harv, pow_eh, 1.0, 0.0, 1.0
        )[:2] == (0, 0)
        assert kernels.grid_scan(
            sig, leak, pow_id, gain, harv, pow_eh, 1.0, 0.0, 1.0
        )[:2] == (0, 1)


def test_triu_index_arrays_layout():
    rows, cols = kernels.triu_index_arrays(3)
    assert rows.tolist() == [0, 0, 1]
    assert cols.tolist() == [1, 2, 2]


def _theta_size(d):
    return d * d


def _neg_logdet_of_theta(theta, d):
    f = param_to_mat(theta, d)
    sign, logdet = np.linalg.slogdet(f)
    if sign <= 0:
        return np.inf
    return -logdet


@pytest.mark.parametrize("d", [2, 3, 4])
def test_logdet_hessian_matches_finite_differences(restore_backend, d):
    kernels.set_backend("numpy")
    rng = np.random.default_rng(20 + d)
    f = random_psd(d, rng, ridge=0.5)
    w = np.linalg.inv(f)
    hess = kernels.logdet_hessian_params((w + w.conj().T) / 2.0)
    from triswipt.solver import mat_to_param

    theta0 = mat_to_param(f)
    p = theta0.size
    assert hess.shape == (p, p)
    step = 1e-5
    fd = np.empty((p, p))
    for a in range(p):
        ea = np.zeros(p)
        ea[a] = step

        def grad_at(theta):
            ff = param_to_mat(theta, d)
            ww = np.linalg.inv(ff)
            g = np.empty(p)
            for b in range(p):
                eb = np.zeros(p)
                eb[b] = 1.0
                g[b] = -np.trace(ww @ param_to_mat(eb, d)).real
            return g

        fd[a] = (grad_at(theta0 + ea) - grad_at(theta0 - ea)) / (2.0 * step)
    scale = np.abs(fd).max()
    assert np.abs(hess - fd).max() <= 2e-5 * scale


def test_logdet_hessian_symmetric_psd(restore_backend):
    kernels.set_backend("numpy")
    rng = np.random.default_rng(9)
    for d in (2, 5):
        f = random_psd(d, rng, ridge=0.3)
        w = np.linalg.inv(f)
        h = kernels.logdet_hessian_params((w + w.conj().T) / 2.0)
        assert np.abs(h - h.T).max() <= 1e-12 * max(1.0, np.abs(h).max())
        assert np.linalg.eigvalsh(h).min() >= -1e-10 * np.abs(h).max()


@needs_numba
def test_logdet_hessian_backends_agree(restore_backend):
    rng = np.random.default_rng(17)
    for d in (2, 4, 7):
        f = random_psd(d, rng, ridge=0.2)
        w = np.linalg.inv(f)
        w = (w + w.conj().T) / 2.0
        kernels.set_backend("numpy")
        h_np = kernels.logdet_hessian_params(w)
        kernels.set_backend("numba")
        h_nb = kernels.logdet_hessian_params(w)
        assert np.abs(h_np - h_nb).max() <= 1e-13 * max(1.0, np.abs(h_np).max())


def _backend_in_subprocess(env_value):
    env = dict(os.environ)
    if env_value is None:
        env.pop("TRISWIPT_BACKEND", None)
    else:
        env["TRISWIPT_BACKEND"] = env_value
    return subprocess.run(
        [sys.executable, "-c", "import triswipt.kernels as k; print(k.get_backend())"],
        capture_output=True,
        text=True,
        env=env,
    )


def test_env_flag_selects_numpy_backend():
    proc = _backend_in_subprocess("numpy")
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == "numpy"


@needs_numba
def test_env_flag_selects_numba_backend():
    proc = _backend_in_subprocess("numba")
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == "numba"


def test_env_flag_rejects_unknown_backend():
    proc = _backend_in_subprocess("cuda")
    assert proc.returncode != 0
    assert "TRISWIPT_BACKEND" in proc.stderr
