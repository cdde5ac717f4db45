"""Linear readout fitting: ridge regression and pseudo-inverse solves.

The readout is the only trained part of a reservoir model. Both fitters are
closed-form; the ridge path solves the regularized normal equations with a
stable factorization (never an explicit inverse).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError

OUTPUT_ACTIVATIONS = ("identity", "tanh")


@dataclass
class ReadoutMatrix:
    """Trained output weights: L x D map from state rows to targets."""

    weights: np.ndarray
    ridge_lambda: float = 0.0
    output_activation: str = "identity"

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("readout weights must be finite")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")

    @property
    def state_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights.shape[0]


def _check_fit_inputs(states, targets):
    z = np.asarray(states, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("states must be a T x D matrix")
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] != z.shape[0]:
        raise ValueError(f"targets must align with states rows ({z.shape[0]})")
    if z.shape[0] < 1:
        raise ValueError("need at least one state row")
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(y))):
        raise ValueError("states and targets must be finite")
    return z, y


def fit_ridge(states, targets, ridge_lambda: float,
              output_activation: str = "identity") -> ReadoutMatrix:
    """Minimize squared error plus lambda * ||w||^2 per output row.

    Solves (Z'Z + lambda I) w = Z'y via Cholesky (lambda > 0 makes the
    system positive definite); with lambda = 0 a rank-deficient Z'Z is an
    error suggesting regularization or the pseudo-inverse fitter.
    """
    z, y = _check_fit_inputs(states, targets)
    if ridge_lambda < 0:
        raise ValueError("ridge_lambda must be >= 0")
    d = z.shape[1]
    gram = z.T @ z + ridge_lambda * np.eye(d)
    rhs = z.T @ y
    if ridge_lambda == 0.0:
        if np.linalg.matrix_rank(z) < d:
            raise NumericalError(
                "states are rank deficient with lambda=0; use lambda > 0 or fit_pinv")
        solution = scipy.linalg.solve(gram, rhs, assume_a="sym")
    else:
        solution = scipy.linalg.solve(gram, rhs, assume_a="pos")
    return ReadoutMatrix(weights=solution.T, ridge_lambda=float(ridge_lambda),
                         output_activation=output_activation)


def fit_pinv(states, targets, output_activation: str = "identity") -> ReadoutMatrix:
    """Minimum-norm least squares via the Moore-Penrose pseudo-inverse.

    Singular values below max(T, D) * machine-eps * sigma_max are treated as
    zero (the lstsq rcond=None policy).
    """
    z, y = _check_fit_inputs(states, targets)
    solution, *_ = np.linalg.lstsq(z, y, rcond=None)
    return ReadoutMatrix(weights=solution.T, ridge_lambda=0.0,
                         output_activation=output_activation)


def predict(readout: ReadoutMatrix, state) -> np.ndarray:
    """Apply the readout to one state row: g(W_out @ state)."""
    s = np.asarray(state, dtype=np.float64)
    if s.shape != (readout.state_dim,):
        raise ValueError(f"state must have length {readout.state_dim}, got {s.shape}")
    out = readout.weights @ s
    if readout.output_activation == "tanh":
        out = np.tanh(out)
    return out


def predict_many(readout: ReadoutMatrix, states) -> np.ndarray:
    """Vectorized predict over rows of a T x D state matrix."""
    z = np.asarray(states, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != readout.state_dim:
        raise ValueError(f"states must be T x {readout.state_dim}")
    out = z @ readout.weights.T
    if readout.output_activation == "tanh":
        out = np.tanh(out)
    return out
