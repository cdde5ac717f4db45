"""Pure-numpy reservoir recurrence kernel (fallback backend).

Semantics shared with the compiled backend: a batch of M independent
sequences is driven through one leaky recurrent layer from a zero initial
state, producing the full state trajectory of every sequence.
"""

import numpy as np

ACT_TANH = 0
ACT_IDENTITY = 1


def batch_leaky_run(w_res, w_in, inputs, alpha, act):
    """Run one leaky recurrent layer over a batch of input sequences.

    Args:
        w_res: (N, N) recurrent weight matrix.
        w_in: (N, K) input weight matrix.
        inputs: (M, T, K) batch of M sequences of T steps.
        alpha: leaking rate in (0, 1].
        act: ACT_TANH or ACT_IDENTITY.

    Returns:
        (M, T, N) state trajectories; initial state is zero for every
        sequence and the row at step t holds the state after consuming
        inputs[:, t, :].
    """
    w_res = np.ascontiguousarray(w_res, dtype=np.float64)
    w_in = np.ascontiguousarray(w_in, dtype=np.float64)
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    m, t_len, _ = inputs.shape
    n = w_res.shape[0]
    out = np.empty((m, t_len, n), dtype=np.float64)
    x = np.zeros((m, n), dtype=np.float64)
    w_res_t = w_res.T
    w_in_t = w_in.T
    for t in range(t_len):
        pre = x @ w_res_t
        pre += inputs[:, t, :] @ w_in_t
        if act == ACT_TANH:
            np.tanh(pre, out=pre)
        x = (1.0 - alpha) * x + alpha * pre
        out[:, t, :] = x
    return out
