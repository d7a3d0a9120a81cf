"""Hot numerical kernels with a numba fast path and a pure-numpy fallback.

Backend selection: the ``TRISWIPT_BACKEND`` environment variable may be set
to ``numba`` or ``numpy``; unset (or ``auto``) picks numba when it imports
and numpy otherwise.  `set_backend` overrides at runtime.  Both backends
produce identical results (same arithmetic, same tie-breaking); the tests
assert bitwise-equal picks on the grid scan.

Kernels:
  grid_scan            exhaustive feasible-pair search used by the
                       brute-force oracle (ratio objective, per-element power
                       and harvest threshold constraints).
  logdet_hessian_params
                       Hessian of -log det F in the real parameter vector
                       [diag; Re upper; Im upper], given W = inv(F).
"""

from __future__ import annotations

import functools
import os

import numpy as np

try:
    import numba as nb

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    nb = None
    _HAVE_NUMBA = False


_VALID = ("numba", "numpy")


def _initial_backend() -> str:
    env = os.environ.get("TRISWIPT_BACKEND", "auto").strip().lower()
    if env in _VALID:
        if env == "numba" and not _HAVE_NUMBA:
            raise RuntimeError("TRISWIPT_BACKEND=numba but numba is not importable")
        return env
    if env not in ("", "auto"):
        raise RuntimeError(f"TRISWIPT_BACKEND must be one of {_VALID} or 'auto'")
    return "numba" if _HAVE_NUMBA else "numpy"


_BACKEND = _initial_backend()


def get_backend() -> str:
    return _BACKEND


def set_backend(name: str) -> None:
    global _BACKEND
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}")
    if name == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _BACKEND = name


# --------------------------------------------------------------------------
# Oracle pair scan.


def _grid_scan_np(sig, leak, pow_id, gain, harv, pow_eh, p_max, q_thresh, noise):
    n_i = sig.shape[0]
    best_i, best_j, best = -1, -1, -1.0
    chunk = max(1, int(2**22 // max(gain.shape[0], 1)))
    for start in range(0, n_i, chunk):
        stop = min(start + chunk, n_i)
        feas = pow_id[start:stop, None, :] + pow_eh[None, :, :] <= p_max
        feas = feas.all(axis=2)
        feas &= leak[start:stop, None] + harv[None, :] >= q_thresh
        ratio = sig[start:stop, None] / (gain[None, :] + noise)
        ratio = np.where(feas, ratio, -1.0)
        flat = int(np.argmax(ratio))
        val = float(ratio.flat[flat])
        if val > best:
            best = val
            best_i = start + flat // ratio.shape[1]
            best_j = flat % ratio.shape[1]
    if best < 0.0:
        return -1, -1, -1.0
    return best_i, best_j, best


if _HAVE_NUMBA:

    @nb.njit(cache=True)
    def _grid_scan_nb(sig, leak, pow_id, gain, harv, pow_eh, p_max, q_thresh, noise):
        n_i = sig.shape[0]
        n_j = gain.shape[0]
        n_e = pow_id.shape[1]
        best_i = -1
        best_j = -1
        best = -1.0
        for i in range(n_i):
            li = leak[i]
            si = sig[i]
            for j in range(n_j):
                ok = True
                for e in range(n_e):
                    if pow_id[i, e] + pow_eh[j, e] > p_max:
                        ok = False
                        break
                if not ok:
                    continue
                if li + harv[j] < q_thresh:
                    continue
                r = si / (gain[j] + noise)
                if r > best:
                    best = r
                    best_i = i
                    best_j = j
        return best_i, best_j, best


def grid_scan(
    sig: np.ndarray,
    leak: np.ndarray,
    pow_id: np.ndarray,
    gain: np.ndarray,
    harv: np.ndarray,
    pow_eh: np.ndarray,
    p_max: float,
    q_thresh: float,
    noise: float,
) -> tuple[int, int, float]:
    """Best feasible (ID candidate, EH candidate) pair.

    Maximises sig[i] / (gain[j] + noise) subject to per-element power
    pow_id[i, :] + pow_eh[j, :] <= p_max and leak[i] + harv[j] >= q_thresh.
    Returns (-1, -1, -1.0) when no pair is feasible.  Ties keep the earliest
    pair in (i, j) lexicographic order on both backends.
    """
    args = (
        np.ascontiguousarray(sig, dtype=float),
        np.ascontiguousarray(leak, dtype=float),
        np.ascontiguousarray(pow_id, dtype=float),
        np.ascontiguousarray(gain, dtype=float),
        np.ascontiguousarray(harv, dtype=float),
        np.ascontiguousarray(pow_eh, dtype=float),
        float(p_max),
        float(q_thresh),
        float(noise),
    )
    if _BACKEND == "numba":
        return _grid_scan_nb(*args)
    return _grid_scan_np(*args)


# --------------------------------------------------------------------------
# -log det Hessian in hvec parameters.
#
# Parameter layout for a d x d Hermitian F: theta = [F_11..F_dd (real);
# Re F_ij for i<j (row-major upper); Im F_ij likewise].  With W = inv(F) the
# Hessian of -log det F is H[a, b] = Tr(W E_a W E_b) over the basis
#   D_i  = e_i e_i^T
#   S_ij = e_i e_j^T + e_j e_i^T
#   T_ij = 1j (e_i e_j^T - e_j e_i^T)
# which reduces to products of W entries (derived below, verified against
# finite differences in the tests).


@functools.lru_cache(maxsize=None)
def triu_index_arrays(d: int) -> tuple[np.ndarray, np.ndarray]:
    iu = np.triu_indices(d, 1)
    return iu[0].astype(np.int64), iu[1].astype(np.int64)


def _logdet_hess_np(w: np.ndarray) -> np.ndarray:
    d = w.shape[0]
    rows, cols = triu_index_arrays(d)
    m = rows.shape[0]
    p = d + 2 * m
    out = np.empty((p, p))
    # diag-diag: Tr(W D_a W D_b) = |W_ab|^2
    out[:d, :d] = np.abs(w) ** 2
    if m:
        # diag-offdiag: z_kt = W[k, i_t] W[j_t, k]; DS = 2 Re z, DT = -2 Im z
        z = w[:, rows] * w[cols, :].T
        out[:d, d : d + m] = 2.0 * z.real
        out[:d, d + m :] = -2.0 * z.imag
        out[d : d + m, :d] = out[:d, d : d + m].T
        out[d + m :, :d] = out[:d, d + m :].T
        # offdiag-offdiag: with t1=(i,j), t2=(k,l),
        #   z1 = W_jk W_li, z2 = W_jl W_ki
        #   SS = 2 Re(z1 + z2), ST = 2 Im(z2 - z1), TT = 2 Re(z2 - z1)
        z1 = w[cols[:, None], rows[None, :]] * w[cols[None, :], rows[:, None]]
        z2 = w[cols[:, None], cols[None, :]] * w[rows[None, :], rows[:, None]]
        out[d : d + m, d : d + m] = 2.0 * (z1 + z2).real
        st = 2.0 * (z2 - z1).imag
        out[d : d + m, d + m :] = st
        out[d + m :, d : d + m] = st.T
        out[d + m :, d + m :] = 2.0 * (z2 - z1).real
    return out


if _HAVE_NUMBA:

    @nb.njit(cache=True)
    def _logdet_hess_nb(w: np.ndarray) -> np.ndarray:
        d = w.shape[0]
        m = d * (d - 1) // 2
        rows = np.empty(m, np.int64)
        cols = np.empty(m, np.int64)
        t = 0
        for i in range(d):
            for j in range(i + 1, d):
                rows[t] = i
                cols[t] = j
                t += 1
        p = d + 2 * m
        out = np.empty((p, p))
        for a in range(d):
            for b in range(d):
                out[a, b] = abs(w[a, b]) ** 2
        for k in range(d):
            for t in range(m):
                z = w[k, rows[t]] * w[cols[t], k]
                out[k, d + t] = 2.0 * z.real
                out[d + t, k] = 2.0 * z.real
                out[k, d + m + t] = -2.0 * z.imag
                out[d + m + t, k] = -2.0 * z.imag
        for t1 in range(m):
            i = rows[t1]
            j = cols[t1]
            for t2 in range(m):
                k = rows[t2]
                l = cols[t2]
                z1 = w[j, k] * w[l, i]
                z2 = w[j, l] * w[k, i]
                out[d + t1, d + t2] = 2.0 * (z1 + z2).real
                out[d + t1, d + m + t2] = 2.0 * (z2 - z1).imag
                out[d + m + t2, d + t1] = 2.0 * (z2 - z1).imag
                out[d + m + t1, d + m + t2] = 2.0 * (z2 - z1).real
        return out


def logdet_hessian_params(w: np.ndarray) -> np.ndarray:
    """Hessian of -log det F in hvec parameters, from W = inv(F)."""
    w = np.ascontiguousarray(w, dtype=complex)
    if _BACKEND == "numba":
        return _logdet_hess_nb(w)
    return _logdet_hess_np(w)
