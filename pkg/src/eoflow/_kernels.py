"""Element-local assembly kernels.

The per-element quadrature loops are the hot path of every matrix assembly.
Each kernel exists twice: a plain-loop version compiled with numba ``@njit``
and a vectorized pure-numpy fallback. The active implementation is chosen at
import time; set ``EOFLOW_NUMBA=0`` to force the numpy path (results agree to
rounding, see benchmarks/bench_kernels.py for the speed comparison).

Array conventions used throughout:

    det   (nt,)         element Jacobian determinants (= 2 * area)
    w     (nq,)         reference quadrature weights, summing to 1/2
    phi   (nb, nq)      scalar basis values at quadrature points
    grad  (nt, nb, nq, 2)  mapped basis gradients
    wind  (nt, nq, 2)   a vector coefficient field at quadrature points
    gphi  (nt, nq, 2)   gradient of a scalar coefficient field
"""

import os

import numpy as np

ENV_FLAG = "EOFLOW_NUMBA"


def _numba_requested():
    return os.environ.get(ENV_FLAG, "1") != "0"


# ---------------------------------------------------------------------------
# pure-numpy implementations


def _local_stiffness_numpy(det, w, grad, out):
    # pairwise gradient products are formed before the weighted sum so the
    # result is exactly symmetric
    pair = np.einsum("eiqk,ejqk->eijq", grad, grad)
    out += det[:, None, None] * np.einsum("q,eijq->eij", w, pair)
    return out


def _local_convection_numpy(det, w, phi, grad, wind, out):
    wdotg = np.einsum("eqk,ejqk->ejq", wind, grad)
    out += det[:, None, None] * np.einsum("q,iq,ejq->eij", w, phi, wdotg)
    return out


def _local_drift_numpy(det, w, phi, grad, gphi, out):
    gdotg = np.einsum("eqk,eiqk->eiq", gphi, grad)
    out += det[:, None, None] * np.einsum("q,eiq,jq->eij", w, gdotg, phi)
    return out


def _local_divergence_numpy(det, w, phi_p, grad, out):
    out -= det[:, None, None, None] * np.einsum("q,iq,ejqk->eijk", w, phi_p, grad)
    return out


def _local_load_numpy(det, w, phi, fvals, out):
    out += det[:, None] * np.einsum("q,eq,iq->ei", w, fvals, phi)
    return out


# ---------------------------------------------------------------------------
# loop implementations (compiled with numba when enabled)


def _local_stiffness_loops(det, w, grad, out):
    nt, nb, nq = grad.shape[0], grad.shape[1], grad.shape[2]
    for e in range(nt):
        for q in range(nq):
            wq = w[q] * det[e]
            for i in range(nb):
                gix = grad[e, i, q, 0]
                giy = grad[e, i, q, 1]
                for j in range(nb):
                    out[e, i, j] += wq * (gix * grad[e, j, q, 0] + giy * grad[e, j, q, 1])
    return out


def _local_convection_loops(det, w, phi, grad, wind, out):
    nt, nb, nq = grad.shape[0], grad.shape[1], grad.shape[2]
    for e in range(nt):
        for q in range(nq):
            wq = w[q] * det[e]
            wx = wind[e, q, 0]
            wy = wind[e, q, 1]
            for j in range(nb):
                adv = wq * (wx * grad[e, j, q, 0] + wy * grad[e, j, q, 1])
                for i in range(nb):
                    out[e, i, j] += phi[i, q] * adv
    return out


def _local_drift_loops(det, w, phi, grad, gphi, out):
    nt, nb, nq = grad.shape[0], grad.shape[1], grad.shape[2]
    for e in range(nt):
        for q in range(nq):
            wq = w[q] * det[e]
            gx = gphi[e, q, 0]
            gy = gphi[e, q, 1]
            for i in range(nb):
                gtest = wq * (gx * grad[e, i, q, 0] + gy * grad[e, i, q, 1])
                for j in range(nb):
                    out[e, i, j] += gtest * phi[j, q]
    return out


def _local_divergence_loops(det, w, phi_p, grad, out):
    nt = grad.shape[0]
    np_, nq = phi_p.shape
    nb = grad.shape[1]
    for e in range(nt):
        for q in range(nq):
            wq = w[q] * det[e]
            for i in range(np_):
                pw = wq * phi_p[i, q]
                for j in range(nb):
                    out[e, i, j, 0] -= pw * grad[e, j, q, 0]
                    out[e, i, j, 1] -= pw * grad[e, j, q, 1]
    return out


def _local_load_loops(det, w, phi, fvals, out):
    nt = fvals.shape[0]
    nb, nq = phi.shape
    for e in range(nt):
        for q in range(nq):
            fw = w[q] * det[e] * fvals[e, q]
            for i in range(nb):
                out[e, i] += fw * phi[i, q]
    return out


_LOOP_IMPLS = {
    "local_stiffness": _local_stiffness_loops,
    "local_convection": _local_convection_loops,
    "local_drift": _local_drift_loops,
    "local_divergence": _local_divergence_loops,
    "local_load": _local_load_loops,
}

_NUMPY_IMPLS = {
    "local_stiffness": _local_stiffness_numpy,
    "local_convection": _local_convection_numpy,
    "local_drift": _local_drift_numpy,
    "local_divergence": _local_divergence_numpy,
    "local_load": _local_load_numpy,
}


def _compile_numba():
    from numba import njit

    return {name: njit(fn, cache=True) for name, fn in _LOOP_IMPLS.items()}


NUMBA_ENABLED = False
if _numba_requested():
    try:
        _ACTIVE = _compile_numba()
        NUMBA_ENABLED = True
    except ImportError:
        _ACTIVE = _NUMPY_IMPLS
else:
    _ACTIVE = _NUMPY_IMPLS


def using_numba():
    """True when the JIT-compiled kernel path is active."""
    return NUMBA_ENABLED


def _dispatch(name):
    impl = _ACTIVE[name]

    def call(*arrays):
        return impl(*arrays)

    call.__name__ = name
    return call


local_stiffness = _dispatch("local_stiffness")
local_convection = _dispatch("local_convection")
local_drift = _dispatch("local_drift")
local_divergence = _dispatch("local_divergence")
local_load = _dispatch("local_load")


# ---------------------------------------------------------------------------
# helpers that are pure matmuls (numpy is already optimal for these)


def local_mass(det, w, phi):
    """Per-element mass blocks: out[e,i,j] = det[e] * sum_q w_q phi_i phi_j."""
    pair = phi[:, None, :] * phi[None, :, :]  # exactly symmetric products
    ref = np.einsum("q,ijq->ij", w, pair)
    return det[:, None, None] * ref


def field_values(cell_coefs, phi):
    """Field values at quadrature points: (nt, nb) x (nb, nq) -> (nt, nq)."""
    return cell_coefs @ phi


def field_gradients(cell_coefs, grad):
    """Field gradients at quadrature points: -> (nt, nq, 2)."""
    return np.einsum("ei,eiqk->eqk", cell_coefs, grad)
