# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled float32 training kernels.

Matrix products go through BLAS sgemm (via scipy's cython bindings); bias,
activation, residual and loss terms are fused C loops, which avoids the
per-op dispatch and temporary-array overhead that dominates numpy at the
small batch/width sizes this simulator runs at. Function-for-function
contract identical to numpy_backend.
"""

from libc.math cimport expf, logf
from scipy.linalg.cython_blas cimport sgemm

import numpy as np

NAME = "compiled"

ctypedef float f32


cdef void _blas(char ta, char tb, int m, int n, int k, f32 alpha,
                const f32* a, int lda, const f32* b, int ldb,
                f32 beta, f32* c, int ldc) noexcept nogil:
    sgemm(&ta, &tb, &m, &n, &k, &alpha, <f32*> a, &lda, <f32*> b, &ldb,
          &beta, c, &ldc)


# Row-major GEMM helpers expressed through column-major BLAS by computing
# the transposed product with swapped operands.

cdef void gemm_nn(const f32* A, const f32* B, f32* C,
                  int m, int n, int k, f32 alpha, f32 beta) noexcept nogil:
    # C(m,n) = alpha * A(m,k) @ B(k,n) + beta * C
    _blas(b'N', b'N', n, m, k, alpha, B, n, A, k, beta, C, n)


cdef void gemm_tn(const f32* A, const f32* B, f32* C,
                  int m, int n, int k, f32 alpha, f32 beta) noexcept nogil:
    # C(m,n) = alpha * A(k,m).T @ B(k,n) + beta * C
    _blas(b'N', b'T', n, m, k, alpha, B, n, A, m, beta, C, n)


cdef void gemm_nt(const f32* A, const f32* B, f32* C,
                  int m, int n, int k, f32 alpha, f32 beta) noexcept nogil:
    # C(m,n) = alpha * A(m,k) @ B(n,k).T + beta * C
    _blas(b'T', b'N', n, m, k, alpha, B, k, A, k, beta, C, n)


def dense_fwd(const f32[:, ::1] x, const f32[:, ::1] W, const f32[::1] b):
    cdef Py_ssize_t n = x.shape[0], i = x.shape[1], o = W.shape[1]
    y = np.empty((n, o), dtype=np.float32)
    cdef f32[:, ::1] ym = y
    cdef Py_ssize_t r, c
    with nogil:
        gemm_nn(&x[0, 0], &W[0, 0], &ym[0, 0], <int> n, <int> o, <int> i, 1.0, 0.0)
        for r in range(n):
            for c in range(o):
                ym[r, c] += b[c]
    return y


def dense_bwd(const f32[:, ::1] x, const f32[:, ::1] W, const f32[:, ::1] g,
              f32[:, ::1] gW, f32[::1] gb):
    cdef Py_ssize_t n = x.shape[0], i = x.shape[1], o = W.shape[1]
    gx = np.empty((n, i), dtype=np.float32)
    cdef f32[:, ::1] gxm = gx
    cdef Py_ssize_t r, c
    with nogil:
        gemm_tn(&x[0, 0], &g[0, 0], &gW[0, 0], <int> i, <int> o, <int> n, 1.0, 1.0)
        for r in range(n):
            for c in range(o):
                gb[c] += g[r, c]
        gemm_nt(&g[0, 0], &W[0, 0], &gxm[0, 0], <int> n, <int> i, <int> o, 1.0, 0.0)
    return gx


def relu_fwd(const f32[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], w = x.shape[1]
    y = np.empty((n, w), dtype=np.float32)
    cdef f32[:, ::1] ym = y
    cdef Py_ssize_t r, c
    with nogil:
        for r in range(n):
            for c in range(w):
                ym[r, c] = x[r, c] if x[r, c] > 0.0 else 0.0
    return y


def relu_bwd(const f32[:, ::1] x, const f32[:, ::1] g):
    cdef Py_ssize_t n = x.shape[0], w = x.shape[1]
    gx = np.empty((n, w), dtype=np.float32)
    cdef f32[:, ::1] gxm = gx
    cdef Py_ssize_t r, c
    with nogil:
        for r in range(n):
            for c in range(w):
                gxm[r, c] = g[r, c] if x[r, c] > 0.0 else 0.0
    return gx


def res_fwd(const f32[:, ::1] x, const f32[:, ::1] W, const f32[::1] b):
    cdef Py_ssize_t n = x.shape[0], w = x.shape[1]
    y = np.empty((n, w), dtype=np.float32)
    cdef f32[:, ::1] ym = y
    cdef f32 z
    cdef Py_ssize_t r, c
    with nogil:
        gemm_nn(&x[0, 0], &W[0, 0], &ym[0, 0], <int> n, <int> w, <int> w, 1.0, 0.0)
        for r in range(n):
            for c in range(w):
                z = ym[r, c] + b[c]
                ym[r, c] = x[r, c] + (z if z > 0.0 else 0.0)
    return y


def res_bwd(const f32[:, ::1] x, const f32[:, ::1] W, const f32[::1] b,
            const f32[:, ::1] g, f32[:, ::1] gW, f32[::1] gb):
    cdef Py_ssize_t n = x.shape[0], w = x.shape[1]
    z = np.empty((n, w), dtype=np.float32)
    gx = np.empty((n, w), dtype=np.float32)
    cdef f32[:, ::1] zm = z
    cdef f32[:, ::1] gxm = gx
    cdef Py_ssize_t r, c
    with nogil:
        # recompute pre-activation, then reuse its buffer for the masked grad
        gemm_nn(&x[0, 0], &W[0, 0], &zm[0, 0], <int> n, <int> w, <int> w, 1.0, 0.0)
        for r in range(n):
            for c in range(w):
                if zm[r, c] + b[c] > 0.0:
                    zm[r, c] = g[r, c]
                    gb[c] += g[r, c]
                else:
                    zm[r, c] = 0.0
        gemm_tn(&x[0, 0], &zm[0, 0], &gW[0, 0], <int> w, <int> w, <int> n, 1.0, 1.0)
        gemm_nt(&zm[0, 0], &W[0, 0], &gxm[0, 0], <int> n, <int> w, <int> w, 1.0, 0.0)
        for r in range(n):
            for c in range(w):
                gxm[r, c] += g[r, c]
    return gx


def meanpool_fwd(const f32[:, ::1] x, int group):
    cdef Py_ssize_t n = x.shape[0], w = x.shape[1], o = w // group
    y = np.empty((n, o), dtype=np.float32)
    cdef f32[:, ::1] ym = y
    cdef f32 acc, den = <f32> group
    cdef Py_ssize_t r, c, j
    with nogil:
        for r in range(n):
            for c in range(o):
                acc = 0.0
                for j in range(group):
                    acc += x[r, c * group + j]
                ym[r, c] = acc / den
    return y


def meanpool_bwd(const f32[:, ::1] g, int group):
    cdef Py_ssize_t n = g.shape[0], o = g.shape[1]
    gx = np.empty((n, o * group), dtype=np.float32)
    cdef f32[:, ::1] gxm = gx
    cdef f32 v, den = <f32> group
    cdef Py_ssize_t r, c, j
    with nogil:
        for r in range(n):
            for c in range(o):
                v = g[r, c] / den
                for j in range(group):
                    gxm[r, c * group + j] = v
    return gx


def softmax(const f32[:, ::1] logits):
    cdef Py_ssize_t n = logits.shape[0], k = logits.shape[1]
    p = np.empty((n, k), dtype=np.float32)
    cdef f32[:, ::1] pm = p
    cdef f32 mx, s
    cdef Py_ssize_t r, c
    with nogil:
        for r in range(n):
            mx = logits[r, 0]
            for c in range(1, k):
                if logits[r, c] > mx:
                    mx = logits[r, c]
            s = 0.0
            for c in range(k):
                pm[r, c] = expf(logits[r, c] - mx)
                s += pm[r, c]
            for c in range(k):
                pm[r, c] /= s
    return p


def softmax_xent(const f32[:, ::1] logits, const long[::1] labels):
    cdef Py_ssize_t n = logits.shape[0], k = logits.shape[1]
    losses = np.empty(n, dtype=np.float32)
    grad = np.empty((n, k), dtype=np.float32)
    cdef f32[::1] lm = losses
    cdef f32[:, ::1] gm = grad
    cdef f32 mx, s
    cdef Py_ssize_t r, c, y
    with nogil:
        for r in range(n):
            mx = logits[r, 0]
            for c in range(1, k):
                if logits[r, c] > mx:
                    mx = logits[r, c]
            s = 0.0
            for c in range(k):
                gm[r, c] = expf(logits[r, c] - mx)
                s += gm[r, c]
            y = labels[r]
            lm[r] = logf(s) - (logits[r, y] - mx)
            for c in range(k):
                gm[r, c] /= s
            gm[r, y] -= 1.0
    return losses, grad


def sgd_step(f32[::1] param, f32[::1] grad, double lr):
    cdef Py_ssize_t n = param.shape[0]
    cdef f32 eta = <f32> lr
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            param[i] -= eta * grad[i]
            grad[i] = 0.0
