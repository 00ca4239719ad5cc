# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled derivative kernels for dense networks.

Same contract as :func:`ffca._kernels_py.derivatives`.

Samples go through two levels of chunking. An outer chunk runs the forward
and reverse sweeps as BLAS ``dgemm`` calls over all of its samples, with the
activations evaluated by vectorised numpy ufuncs. Inside it, small inner
chunks run the second-order pass: hidden-unit tangents along all ``d`` basis
directions are stored as ``(width, m * d)`` matrices, so each layer is again
one ``dgemm``, and the activation-derivative scalings in between are fused
C loops that run without the GIL.

All buffers are row-major. A row-major product ``C = A @ B`` is issued as
the column-major product ``C' = B' A'``.
"""

import numpy as np
cimport numpy as cnp
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

cdef int RELU = 0
cdef int ORDER_GRADIENT = 0
cdef int ORDER_DIAGONAL = 1

# doubles of scratch per chunk level; the inner one is sized to stay in cache
cdef Py_ssize_t _OUTER_BUDGET = 1 << 18
cdef Py_ssize_t _INNER_BUDGET = 1 << 15


cdef inline void _mm(char* ta, char* tb, int M, int N, int K, double* A, int lda, double* B, int ldb,
                     double* C, int ldc) noexcept nogil:
    # column-major C (M x N) = op(A) op(B)
    cdef double one = 1.0, zero = 0.0
    dgemm(ta, tb, &M, &N, &K, &one, A, &lda, B, &ldb, &zero, C, &ldc)


def _activate(z, bias, int act, double beta, s1, s2):
    """Add ``bias`` to ``z`` and replace it by the activation; fill first and second derivatives."""
    z += bias
    if act == RELU:
        np.greater(z, 0.0, out=s1)
        np.maximum(z, 0.0, out=z)
        s2.fill(0.0)
        return
    t = z * beta
    e = np.exp(-np.abs(t))
    inv = 1.0 / (1.0 + e)
    np.copyto(s1, np.where(t > 0, inv, e * inv))
    np.maximum(t, 0.0, out=z)
    z += np.log1p(e)
    z /= beta
    np.multiply(s1, 1.0 - s1, out=s2)
    s2 *= beta


cdef void _second_order(int order, Py_ssize_t L, Py_ssize_t d, Py_ssize_t mc, Py_ssize_t m, Py_ssize_t so,
                        cnp.intp_t* dims, cnp.intp_t* woff, cnp.intp_t* hoff, double* W,
                        double* S1, double* S2, double* AB, double* T, double* P, double* pc, double* pn,
                        double* HC, Py_ssize_t md, double* diag_out, double* hess_out) noexcept nogil:
    # Hessian diagonal or full Hessian for samples so .. so + mc of the outer chunk. S1, S2 and AB
    # hold outer-chunk blocks laid out (m, width); diag_out / hess_out point at output row so.
    cdef Py_ssize_t i, j, k, s, l, din, dout, base, top = L - 2
    cdef double v, w
    cdef double* tmp
    cdef double* src
    cdef char* NN = b"N"
    cdef char* TT = b"T"

    # forward tangents, layout (width, mc, d): the first hidden layer is W0 itself
    for i in range(dims[1]):
        for s in range(mc):
            memcpy(T + i * md + s * d, W + i * d, d * sizeof(double))
    for l in range(1, L - 1):
        din = dims[l]
        dout = dims[l + 1]
        src = T + hoff[l - 1] * md
        for j in range(din):
            for s in range(mc):
                v = S1[m * hoff[l - 1] + (so + s) * din + j]
                for k in range(d):
                    P[j * md + s * d + k] = v * src[j * md + s * d + k]
        # T_l (dout, mc d) = W_l (dout, din) @ P (din, mc d)
        _mm(NN, NN, <int>(mc * d), <int>dout, <int>din, P, <int>md, W + woff[l], <int>din,
            T + hoff[l] * md, <int>md)

    # tangent of the reverse sweep; the top adjoint is constant
    dout = dims[top + 1]
    for i in range(dout):
        for s in range(mc):
            base = m * hoff[top] + (so + s) * dout + i
            v = AB[base] * S2[base]
            for k in range(d):
                pc[i * md + s * d + k] = v * T[(hoff[top] + i) * md + s * d + k]
    for l in range(top, 0, -1):
        din = dims[l]
        dout = dims[l + 1]
        # pn (din, mc d) = W_l.T (din, dout) @ pc (dout, mc d)
        _mm(NN, TT, <int>(mc * d), <int>din, <int>dout, pc, <int>md, W + woff[l], <int>din, pn, <int>md)
        for j in range(din):
            for s in range(mc):
                base = m * hoff[l - 1] + (so + s) * din + j
                v = S1[base]
                w = AB[base] * S2[base]
                for k in range(d):
                    pn[j * md + s * d + k] = pn[j * md + s * d + k] * v + w * T[(hoff[l - 1] + j) * md + s * d + k]
        tmp = pc
        pc = pn
        pn = tmp

    # project through the first layer: H[s, j, k] = sum_i W0[i, j] * pc[i, s, k]
    if order == ORDER_DIAGONAL:
        for i in range(dims[1]):
            for s in range(mc):
                for k in range(d):
                    diag_out[s * d + k] += W[i * d + k] * pc[i * md + s * d + k]
    else:
        _mm(NN, TT, <int>(mc * d), <int>d, <int>dims[1], pc, <int>md, W, <int>d, HC, <int>md)
        for j in range(d):
            for s in range(mc):
                memcpy(hess_out + (s * d + j) * d, HC + j * md + s * d, d * sizeof(double))


def derivatives(weights, biases, int act, double beta, X, out_index, int order):
    cdef Py_ssize_t L = len(weights)
    cdef cnp.intp_t[::1] dims = np.array([weights[0].shape[1]] + [layer.shape[0] for layer in weights], dtype=np.intp)
    cdef Py_ssize_t l
    cdef cnp.intp_t[::1] woff = np.zeros(L + 1, dtype=np.intp)
    for l in range(L):
        woff[l + 1] = woff[l] + dims[l + 1] * dims[l]
    cdef double[::1] Wv = np.concatenate([np.asarray(layer, dtype=np.float64).ravel() for layer in weights])
    bias_list = [np.asarray(bias, dtype=np.float64) for bias in biases]

    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.intp_t[::1] idx = np.ascontiguousarray(out_index, dtype=np.intp)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t d = Xv.shape[1]
    cdef Py_ssize_t H = L - 1
    cdef cnp.intp_t[::1] hoff = np.zeros(H + 1, dtype=np.intp)
    for l in range(H):
        hoff[l + 1] = hoff[l] + dims[l + 1]
    cdef Py_ssize_t htot = hoff[H]
    cdef Py_ssize_t wmax = max(dims)
    cdef bint second_order = order != ORDER_GRADIENT and L > 1

    # outer chunk: activations, derivatives and adjoints of every hidden unit, (m, width) per layer
    cdef Py_ssize_t m = max(1, min(n, _OUTER_BUDGET // (4 * htot + 2 * wmax + d + 1)))
    A_np = np.empty(m * htot + 1)
    S1_np = np.empty(m * htot + 1)
    S2_np = np.empty(m * htot + 1)
    OUT_np = np.empty(m * dims[L])
    cdef double[::1] A = A_np
    cdef double[::1] S1 = S1_np
    cdef double[::1] S2 = S2_np
    cdef double[::1] OUT = OUT_np
    cdef double[::1] AB = np.empty(m * htot + 1)
    cdef double[::1] ZB = np.empty(m * wmax)
    # inner chunk: tangent blocks of shape (width, mi * d)
    cdef Py_ssize_t mi = max(1, min(m, _INNER_BUDGET // ((htot + 3 * wmax + d) * d))) if second_order else 1
    cdef Py_ssize_t md = mi * d
    cdef double[::1] T = np.empty(htot * md if second_order else 1)
    cdef double[::1] P = np.empty(wmax * md if second_order else 1)
    cdef double[::1] Bc = np.empty(wmax * md if second_order else 1)
    cdef double[::1] Bn = np.empty(wmax * md if second_order else 1)
    cdef double[::1] HC = np.empty(d * md if second_order and order != ORDER_DIAGONAL else 1)

    score_arr = np.empty(n)
    grad_arr = np.empty((n, d))
    cdef double[::1] score = score_arr
    cdef double[:, ::1] grad = grad_arr
    cdef double* diag_p = NULL
    cdef double* hess_p = NULL
    if order == ORDER_GRADIENT:
        second = None
    elif order == ORDER_DIAGONAL:
        second = np.zeros((n, d))
    else:
        second = np.zeros((n, d, d))
    cdef double[::1] second_flat = second.reshape(-1) if second is not None and n > 0 else np.empty(1)

    cdef double* Wp = &Wv[0]
    cdef double* src
    cdef Py_ssize_t start, mc, s, j, din, dout, base, top = L - 2, so, mic
    cdef char* NN = b"N"
    cdef char* TT = b"T"

    start = 0
    while start < n:
        mc = min(m, n - start)
        # forward sweep: Z (mc, dout) = A_prev (mc, din) @ W.T, then bias and activation
        for l in range(L):
            din = dims[l]
            dout = dims[l + 1]
            src = &Xv[start, 0] if l == 0 else &A[m * hoff[l - 1]]
            if l < L - 1:
                base = m * hoff[l]
                with nogil:
                    _mm(TT, NN, <int>dout, <int>mc, <int>din, Wp + woff[l], <int>din, src, <int>din,
                        &A[base], <int>dout)
                blk = slice(base, base + mc * dout)
                _activate(A_np[blk].reshape(mc, dout), bias_list[l], act, beta,
                          S1_np[blk].reshape(mc, dout), S2_np[blk].reshape(mc, dout))
            else:
                with nogil:
                    _mm(TT, NN, <int>dout, <int>mc, <int>din, Wp + woff[l], <int>din, src, <int>din,
                        &OUT[0], <int>dout)
                OUT_np[:mc * dout].reshape(mc, dout)[...] += bias_list[l]

        with nogil:
            for s in range(mc):
                score[start + s] = OUT[s * dims[L] + idx[start + s]]
            if L == 1:
                for s in range(mc):
                    memcpy(&grad[start + s, 0], Wp + idx[start + s] * d, d * sizeof(double))
            else:
                # reverse sweep: the top adjoint is row c of the output weights
                dout = dims[L - 1]
                for s in range(mc):
                    memcpy(&AB[m * hoff[top] + s * dout], Wp + woff[L - 1] + idx[start + s] * dout,
                           dout * sizeof(double))
                for l in range(top, -1, -1):
                    din = dims[l]
                    dout = dims[l + 1]
                    base = m * hoff[l]
                    for j in range(mc * dout):
                        ZB[j] = AB[base + j] * S1[base + j]
                    # (mc, din) = ZB (mc, dout) @ W (dout, din)
                    _mm(NN, NN, <int>din, <int>mc, <int>dout, Wp + woff[l], <int>din, &ZB[0], <int>dout,
                        &grad[start, 0] if l == 0 else &AB[m * hoff[l - 1]], <int>din)
                so = 0
                while second_order and so < mc:
                    mic = min(mi, mc - so)
                    if order == ORDER_DIAGONAL:
                        diag_p = &second_flat[(start + so) * d]
                    else:
                        hess_p = &second_flat[(start + so) * d * d]
                    _second_order(order, L, d, mic, m, so, &dims[0], &woff[0], &hoff[0], Wp,
                                  &S1[0], &S2[0], &AB[0], &T[0], &P[0], &Bc[0], &Bn[0], &HC[0], md,
                                  diag_p, hess_p)
                    so += mic
        start += mc
    return score_arr, grad_arr, second
