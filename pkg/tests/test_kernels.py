import subprocess
import sys

import numpy as np
import pytest

from flowcast import _kernels
from flowcast._kernels import _reservoir_py

try:
    from flowcast._kernels import _reservoir_cy
except ImportError:
    _reservoir_cy = None

needs_ext = pytest.mark.skipif(_reservoir_cy is None,
                               reason="compiled kernel not built")


def random_problem(seed, m=9, t=14, k=3, n=32):
    rng = np.random.default_rng(seed)
    w_res = rng.uniform(-1, 1, (n, n)) * 0.3
    w_in = rng.uniform(-1, 1, (n, k))
    inputs = rng.standard_normal((m, t, k))
    return w_res, w_in, inputs


def test_python_kernel_matches_naive_loop():
    w_res, w_in, inputs = random_problem(0, m=3, t=6, k=2, n=10)
    alpha = 0.6
    got = _reservoir_py.batch_leaky_run(w_res, w_in, inputs, alpha, _kernels.ACT_TANH)
    for seq in range(3):
        x = np.zeros(10)
        for t in range(6):
            x = (1 - alpha) * x + alpha * np.tanh(w_res @ x + w_in @ inputs[seq, t])
            np.testing.assert_allclose(got[seq, t], x, atol=1e-14)


@needs_ext
@pytest.mark.parametrize("act", [_kernels.ACT_TANH, _kernels.ACT_IDENTITY])
@pytest.mark.parametrize("alpha", [0.3, 1.0])
def test_backend_parity(act, alpha):
    w_res, w_in, inputs = random_problem(1)
    a = _reservoir_cy.batch_leaky_run(w_res, w_in, inputs, alpha, act)
    b = _reservoir_py.batch_leaky_run(w_res, w_in, inputs, alpha, act)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@needs_ext
def test_backend_parity_single_sequence():
    w_res, w_in, inputs = random_problem(2, m=1, t=200, k=1, n=50)
    a = _reservoir_cy.batch_leaky_run(w_res, w_in, inputs, 0.5, _kernels.ACT_TANH)
    b = _reservoir_py.batch_leaky_run(w_res, w_in, inputs, 0.5, _kernels.ACT_TANH)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@needs_ext
def test_backend_handles_noncontiguous_inputs():
    w_res, w_in, inputs = random_problem(3)
    view = inputs[::1, :, :]  # contiguous
    strided = np.asfortranarray(inputs)  # force copy path inside kernel
    a = _reservoir_cy.batch_leaky_run(w_res, w_in, strided, 0.7, _kernels.ACT_TANH)
    b = _reservoir_py.batch_leaky_run(w_res, w_in, view, 0.7, _kernels.ACT_TANH)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_env_var_forces_python_backend():
    code = ("import flowcast; print(flowcast.backend_name())")
    out = subprocess.run([sys.executable, "-c", code],
                         env={"PATH": "/usr/bin:/bin", "FLOWCAST_PURE_PYTHON": "1"},
                         capture_output=True, text=True)
    assert out.stdout.strip() == "python"


def test_empty_batch():
    w_res, w_in, _ = random_problem(4)
    out = _kernels.batch_leaky_run(w_res, w_in, np.empty((0, 5, 3)), 0.5,
                                   _kernels.ACT_TANH)
    assert out.shape == (0, 5, 32)
