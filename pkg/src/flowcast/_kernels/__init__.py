"""Backend selection for the reservoir recurrence kernel.

The compiled extension is preferred when importable, with one refinement
measured by benchmarks/bench_kernels.py: the fused compiled loop wins when
the per-step state block (sequences x units) is small, where per-step numpy
dispatch overhead dominates; for large blocks BLAS plus numpy's vectorized
tanh is faster, so those calls route to the numpy implementation. Set
FLOWCAST_PURE_PYTHON=1 to force the numpy path everywhere.
"""

import os

from . import _reservoir_py

ACT_TANH = _reservoir_py.ACT_TANH
ACT_IDENTITY = _reservoir_py.ACT_IDENTITY

# per-step block size (M * N) below which the fused compiled loop wins
_SMALL_BLOCK = 4096

if os.environ.get("FLOWCAST_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
    BACKEND = "python"
else:
    try:
        from . import _reservoir_cy as _compiled

        BACKEND = "cython"
    except ImportError:
        _compiled = None
        BACKEND = "python"


def batch_leaky_run(w_res, w_in, inputs, alpha, act):
    """Dispatch one layer run to the best backend for the problem shape."""
    if _compiled is not None and inputs.shape[0] * w_res.shape[0] <= _SMALL_BLOCK:
        return _compiled.batch_leaky_run(w_res, w_in, inputs, alpha, act)
    return _reservoir_py.batch_leaky_run(w_res, w_in, inputs, alpha, act)


def backend_name() -> str:
    return BACKEND
