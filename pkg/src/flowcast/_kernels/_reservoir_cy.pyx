# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled reservoir recurrence kernel.

Same contract as the pure-numpy fallback: batched leaky recurrent layer run
from a zero initial state. Matrix products go through BLAS; the leak blend
and activation are fused into one pass over the state block, which pays off
when the per-step block is small (long sequences, few units) where
per-step array-dispatch overhead dominates the numpy path.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh
from scipy.linalg.cython_blas cimport dgemm

ACT_TANH = 0
ACT_IDENTITY = 1


def batch_leaky_run(w_res, w_in, inputs, double alpha, int act):
    """Run one leaky recurrent layer over a batch of input sequences.

    Mirrors ``_reservoir_py.batch_leaky_run``: inputs (M, T, K) -> states
    (M, T, N), zero initial state, row t holds the state after step t.
    """
    cdef double[:, ::1] wr = np.ascontiguousarray(w_res, dtype=np.float64)
    cdef double[:, ::1] wi = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef double[:, :, ::1] u = np.ascontiguousarray(inputs, dtype=np.float64)

    cdef int m_batch = u.shape[0]
    cdef int t_len = u.shape[1]
    cdef int k_dim = u.shape[2]
    cdef int n_units = wr.shape[0]
    if wr.shape[1] != n_units:
        raise ValueError("recurrent matrix must be square")
    if wi.shape[0] != n_units or wi.shape[1] != k_dim:
        raise ValueError("input matrix shape mismatch")

    out_arr = np.empty((m_batch, t_len, n_units), dtype=np.float64)
    if m_batch == 0 or t_len == 0:
        return out_arr
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] pre = np.empty((m_batch, n_units), dtype=np.float64)
    cdef double[:, ::1] x0 = np.zeros((m_batch, n_units), dtype=np.float64)

    cdef double one = 1.0
    cdef double zero = 0.0
    cdef double keep = 1.0 - alpha
    cdef int ld_state
    cdef int ld_u = t_len * k_dim
    cdef int t, i, j
    cdef double v
    cdef double *xprev
    cdef char *tr_t = 'T'
    cdef char *tr_n = 'N'

    with nogil:
        for t in range(t_len):
            if t == 0:
                xprev = &x0[0, 0]
                ld_state = n_units
            else:
                xprev = &out[0, t - 1, 0]
                ld_state = t_len * n_units
            # pre = x_prev @ w_res.T   (row-major via transposed Fortran views)
            dgemm(tr_t, tr_n, &n_units, &m_batch, &n_units, &one,
                  &wr[0, 0], &n_units, xprev, &ld_state, &zero,
                  &pre[0, 0], &n_units)
            # pre += u_t @ w_in.T
            dgemm(tr_t, tr_n, &n_units, &m_batch, &k_dim, &one,
                  &wi[0, 0], &k_dim, &u[0, t, 0], &ld_u, &one,
                  &pre[0, 0], &n_units)
            if act == 0:
                for i in range(m_batch):
                    for j in range(n_units):
                        out[i, t, j] = (keep * xprev[i * ld_state + j]
                                        + alpha * tanh(pre[i, j]))
            else:
                for i in range(m_batch):
                    for j in range(n_units):
                        out[i, t, j] = (keep * xprev[i * ld_state + j]
                                        + alpha * pre[i, j])
    return out_arr
