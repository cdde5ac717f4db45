"""Sliding-window dataset construction, baseline forecasters and metrics.

Every forecaster exposes fit(dataset) and predict(window) -> float plus a
vectorized predict_many for the evaluation driver. Baselines follow their
conventional definitions (the linear model includes an intercept); the
stacked-reservoir forecaster wires the reservoir and readout modules
together.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import readout as readout_mod
from . import reservoir
from .errors import NumericalError


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised pairs: row i is series[i .. i+W-1] -> series[i+W+h-1]."""

    inputs: np.ndarray
    targets: np.ndarray
    window: int
    horizon: int

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.targets.ndim != 1:
            raise ValueError("inputs must be M x W, targets length M")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets misaligned")
        if self.inputs.shape[1] != self.window:
            raise ValueError("window width mismatch")

    def __len__(self) -> int:
        return self.targets.size


def make_windows(series, window: int, horizon: int) -> WindowedDataset:
    """Slice a fully imputed series into (window, target) pairs.

    Produces exactly T - window - horizon + 1 pairs in temporal order.
    """
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("series must be univariate")
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be >= 1")
    t = values.size
    m = t - window - horizon + 1
    if m < 1:
        raise ValueError(f"series too short: need length >= {window + horizon}, got {t}")
    idx = np.arange(window)[None, :] + np.arange(m)[:, None]
    inputs = values[idx]
    targets = values[np.arange(m) + window + horizon - 1]
    return WindowedDataset(inputs=inputs, targets=targets, window=window, horizon=horizon)


def rmse(actual, predicted) -> float:
    """Root mean squared error over aligned vectors."""
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if a.shape != p.shape or a.ndim != 1 or a.size < 1:
        raise ValueError("inputs must be equal-length vectors")
    return float(np.sqrt(np.mean((a - p) ** 2)))


def r2(actual, predicted) -> float:
    """Coefficient of determination on the evaluation segment.

    The denominator uses the mean of `actual` itself; a constant actual
    vector leaves it undefined and raises.
    """
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if a.shape != p.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("inputs must be equal-length vectors of length >= 2")
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("r2 undefined: actual values are constant")
    ss_res = float(np.sum((a - p) ** 2))
    return 1.0 - ss_res / ss_tot


def persistence_forecast(window, horizon: int = 1) -> float:
    """Last known value, regardless of horizon."""
    w = np.asarray(window, dtype=np.float64)
    if w.size == 0:
        raise ValueError("window must be non-empty")
    return float(w[-1])


class PersistenceForecaster:
    """Naive baseline: predict the last window element."""

    name = "persistence"

    def fit(self, dataset: WindowedDataset) -> "PersistenceForecaster":
        return self

    def predict(self, window) -> float:
        return persistence_forecast(window)

    def predict_many(self, windows) -> np.ndarray:
        return np.asarray(windows, dtype=np.float64)[:, -1]


class LinearForecaster:
    """Ordinary least squares on window features plus an intercept."""

    name = "linear"

    def __init__(self):
        self.coef = None
        self.intercept = 0.0

    def fit(self, dataset: WindowedDataset) -> "LinearForecaster":
        x = np.column_stack([np.ones(len(dataset)), dataset.inputs])
        try:
            beta, *_ = np.linalg.lstsq(x, dataset.targets, rcond=None)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"linear fit failed: {exc}") from exc
        self.intercept = float(beta[0])
        self.coef = beta[1:]
        return self

    def predict(self, window) -> float:
        w = np.asarray(window, dtype=np.float64)
        return float(self.intercept + w @ self.coef)

    def predict_many(self, windows) -> np.ndarray:
        return self.intercept + np.asarray(windows, dtype=np.float64) @ self.coef


class KnnForecaster:
    """Mean target of the k nearest training windows (Euclidean distance).

    Distance ties break toward the lower training index.
    """

    name = "knn"

    def __init__(self, k: int = 5):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self._inputs = None
        self._targets = None

    def fit(self, dataset: WindowedDataset) -> "KnnForecaster":
        if self.k > len(dataset):
            raise ValueError(f"k ({self.k}) exceeds training size ({len(dataset)})")
        self._inputs = dataset.inputs
        self._targets = dataset.targets
        return self

    def _neighbor_mean(self, dist_row: np.ndarray) -> float:
        # stable sort keeps ties ordered by training index
        order = np.argsort(dist_row, kind="stable")[: self.k]
        return float(self._targets[order].mean())

    def predict(self, window) -> float:
        w = np.asarray(window, dtype=np.float64)
        d = np.linalg.norm(self._inputs - w[None, :], axis=1)
        return self._neighbor_mean(d)

    def predict_many(self, windows) -> np.ndarray:
        q = np.asarray(windows, dtype=np.float64)
        # chunked pairwise distances to bound memory
        out = np.empty(q.shape[0])
        step = max(1, 2_000_000 // max(1, self._inputs.shape[0]))
        for lo in range(0, q.shape[0], step):
            hi = min(lo + step, q.shape[0])
            block = q[lo:hi]
            d2 = ((block[:, None, :] - self._inputs[None, :, :]) ** 2).sum(axis=2)
            order = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
            out[lo:hi] = self._targets[order].mean(axis=1)
        return out


class DeepEsnForecaster:
    """Stacked-reservoir forecaster with a ridge readout.

    fit harvests one final state per training window and fits the readout;
    predict runs a window through a fresh zero state. Deterministic given
    the seed.
    """

    def __init__(self, layer_configs: list[reservoir.LayerConfig],
                 ridge_lambda: float = 1e-6, seed: int = 0,
                 include_input_in_readout: bool = False, name: str = "deepesn"):
        self.layer_configs = list(layer_configs)
        self.ridge_lambda = ridge_lambda
        self.seed = seed
        self.include_input_in_readout = include_input_in_readout
        self.name = name
        self.model: reservoir.DeepEsnModel | None = None

    def fit(self, dataset: WindowedDataset) -> "DeepEsnForecaster":
        self.model = reservoir.build_model(
            self.layer_configs, input_dim=1, seed=self.seed, mode="windowed",
            include_input_in_readout=self.include_input_in_readout)
        states = reservoir.harvest_states(self.model, dataset.inputs)
        self.model.readout = readout_mod.fit_ridge(states, dataset.targets,
                                                   self.ridge_lambda)
        return self

    def _states(self, windows: np.ndarray) -> np.ndarray:
        if self.model is None or self.model.readout is None:
            raise ValueError("forecaster is not fitted")
        return reservoir.harvest_states(self.model, windows)

    def predict(self, window) -> float:
        w = np.asarray(window, dtype=np.float64)[None, :]
        states = self._states(w)
        return float(readout_mod.predict(self.model.readout, states[0])[0])

    def predict_many(self, windows) -> np.ndarray:
        states = self._states(np.asarray(windows, dtype=np.float64))
        return readout_mod.predict_many(self.model.readout, states)[:, 0]


def fit_linear(dataset: WindowedDataset) -> LinearForecaster:
    return LinearForecaster().fit(dataset)


def fit_knn(dataset: WindowedDataset, k: int = 5) -> KnnForecaster:
    return KnnForecaster(k=k).fit(dataset)


def deep_esn_forecaster(units: int = 100, layers: int = 2, leak_rate: float = 0.3,
                        density: float = 0.1, spectral_target: float = 0.9,
                        input_scale: float = 1.0, ridge_lambda: float = 1e-6,
                        seed: int = 0, include_input_in_readout: bool = False,
                        name: str = "deepesn") -> DeepEsnForecaster:
    """Convenience constructor: `layers` identical reservoir layers."""
    cfg = reservoir.LayerConfig(units=units, leak_rate=leak_rate, density=density,
                                spectral_target=spectral_target,
                                input_scale=input_scale)
    return DeepEsnForecaster([cfg] * layers, ridge_lambda=ridge_lambda, seed=seed,
                             include_input_in_readout=include_input_in_readout,
                             name=name)


FORECASTER_FORMAT = "flowcast-forecaster"
FORECASTER_VERSION = 1


def save_forecaster(forecaster, path, window: int, horizon: int,
                    scaler_mean: float = 0.0, scaler_std: float = 1.0,
                    meta: str = "") -> None:
    """Serialize a fitted forecaster with its window/horizon metadata.

    The optional scaler records the train-time standardization so the
    forecast command can reproduce raw-scale predictions.
    """
    if isinstance(forecaster, PersistenceForecaster):
        payload = {"type": "persistence"}
    elif isinstance(forecaster, LinearForecaster):
        if forecaster.coef is None:
            raise ValueError("forecaster is not fitted")
        payload = {"type": "linear", "intercept": forecaster.intercept,
                   "coef": forecaster.coef.tolist()}
    elif isinstance(forecaster, KnnForecaster):
        if forecaster._inputs is None:
            raise ValueError("forecaster is not fitted")
        payload = {"type": "knn", "k": forecaster.k,
                   "inputs": forecaster._inputs.tolist(),
                   "targets": forecaster._targets.tolist()}
    elif isinstance(forecaster, DeepEsnForecaster):
        if forecaster.model is None or forecaster.model.readout is None:
            raise ValueError("forecaster is not fitted")
        payload = {"type": "deepesn", "ridge_lambda": forecaster.ridge_lambda,
                   "model": reservoir.model_doc(forecaster.model)}
    else:
        raise ValueError(f"cannot serialize forecaster of type {type(forecaster).__name__}")
    doc = {"format": FORECASTER_FORMAT, "version": FORECASTER_VERSION,
           "name": forecaster.name, "window": window, "horizon": horizon,
           "scaler_mean": scaler_mean, "scaler_std": scaler_std,
           "meta": meta, "model": payload}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_forecaster(path):
    """Load a serialized forecaster; returns (forecaster, metadata dict)."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORECASTER_FORMAT:
        raise ValueError(f"{path}: not a forecaster file")
    if doc.get("version") != FORECASTER_VERSION:
        raise ValueError(f"{path}: unsupported version {doc.get('version')}")
    payload = doc["model"]
    kind = payload["type"]
    if kind == "persistence":
        f = PersistenceForecaster()
    elif kind == "linear":
        f = LinearForecaster()
        f.intercept = float(payload["intercept"])
        f.coef = np.asarray(payload["coef"], dtype=np.float64)
    elif kind == "knn":
        f = KnnForecaster(k=int(payload["k"]))
        f._inputs = np.asarray(payload["inputs"], dtype=np.float64)
        f._targets = np.asarray(payload["targets"], dtype=np.float64)
    elif kind == "deepesn":
        model = reservoir.model_from_doc(payload["model"], source=str(path))
        f = DeepEsnForecaster([layer.config for layer in model.layers],
                              ridge_lambda=float(payload["ridge_lambda"]))
        f.model = model
    else:
        raise ValueError(f"{path}: unknown forecaster type {kind!r}")
    f.name = doc.get("name", kind)
    meta = {"window": int(doc["window"]), "horizon": int(doc["horizon"]),
            "scaler_mean": float(doc.get("scaler_mean", 0.0)),
            "scaler_std": float(doc.get("scaler_std", 1.0))}
    return f, meta


class SpecFactory:
    """Picklable zero-arg forecaster factory (needed by worker pools)."""

    def __init__(self, spec: dict, seed: int = 0):
        self.spec = dict(spec)
        self.seed = seed

    def __call__(self):
        return make_forecaster(self.spec, seed=self.seed)


def make_forecaster(spec: dict, seed: int = 0):
    """Build a forecaster from a config-style spec dict (CLI entry path)."""
    spec = dict(spec)
    kind = spec.pop("type", None)
    name = spec.pop("name", kind)
    if kind == "persistence":
        f = PersistenceForecaster()
    elif kind == "linear":
        f = LinearForecaster()
    elif kind == "knn":
        f = KnnForecaster(k=int(spec.pop("k", 5)))
    elif kind == "deepesn":
        spec.setdefault("seed", seed)
        f = deep_esn_forecaster(name=name, **{k: v for k, v in spec.items()})
    else:
        raise ValueError(f"unknown model type {kind!r}")
    if name:
        f.name = name
    return f
