"""Random sparse reservoir layers and stacked-reservoir state recurrences.

A layer holds a fixed random recurrent matrix, rescaled at construction so
the leaky effective recurrence matrix (1-a)I + a*W stays strictly inside the
unit spectral circle (the stability condition that makes states forget their
initial value). Only the linear readout (see `readout`) is ever trained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import NumericalError

ACTIVATIONS = ("tanh", "identity")
MODES = ("windowed", "continuous")

DEFAULT_WASHOUT = 50  # continuous-mode default; windowed mode ignores washout

_ACT_CODE = {"tanh": _kernels.ACT_TANH, "identity": _kernels.ACT_IDENTITY}


@dataclass(frozen=True)
class LayerConfig:
    """Hyper-parameters of one reservoir layer."""

    units: int
    leak_rate: float = 0.3
    density: float = 0.1
    spectral_target: float = 0.9
    input_scale: float = 1.0
    activation: str = "tanh"

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("units must be >= 1")
        if not 0.0 < self.leak_rate <= 1.0:
            raise ValueError("leak_rate must lie in (0, 1]")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must lie in (0, 1]")
        if not 0.0 < self.spectral_target < 1.0:
            raise ValueError("spectral_target must lie in (0, 1)")
        # A plain scalar rescale of the recurrent matrix cannot pull the
        # effective radius below 1 - leak_rate (the leak term's share), so
        # targets at or under that floor are unreachable.
        if self.spectral_target <= 1.0 - self.leak_rate:
            raise ValueError(
                f"spectral_target ({self.spectral_target}) must exceed "
                f"1 - leak_rate ({1.0 - self.leak_rate:.3g}); lower targets are "
                "unreachable by rescaling the recurrent weights")
        if self.input_scale <= 0:
            raise ValueError("input_scale must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")


@dataclass
class EsnLayer:
    """One reservoir layer: fixed weights plus its current state vector."""

    w_res: np.ndarray
    w_in: np.ndarray
    config: LayerConfig
    state: np.ndarray = field(default=None)  # type: ignore[assignment]
    seed: int | None = None
    input_dim: int = 0

    def __post_init__(self):
        self.w_res = np.asarray(self.w_res, dtype=np.float64)
        self.w_in = np.asarray(self.w_in, dtype=np.float64)
        n = self.config.units
        if self.w_res.shape != (n, n):
            raise ValueError(f"w_res must be {n}x{n}")
        if self.w_in.ndim != 2 or self.w_in.shape[0] != n:
            raise ValueError("w_in must be units x input_dim")
        if self.input_dim == 0:
            self.input_dim = self.w_in.shape[1]
        if self.state is None:
            self.state = np.zeros(n)
        self.state = np.asarray(self.state, dtype=np.float64)

    @property
    def units(self) -> int:
        return self.config.units

    def reset_state(self) -> None:
        self.state = np.zeros(self.units)


@dataclass
class DeepEsnModel:
    """A stack of reservoir layers plus an optional trained readout.

    Layer n > 1 receives the state of layer n-1 as its input. The readout
    consumes the concatenation of all layer states; for a single-layer model
    the current input vector may be appended to that concatenation
    (include_input_in_readout).
    """

    layers: list[EsnLayer]
    mode: str = "windowed"
    include_input_in_readout: bool = False
    readout: "object | None" = None  # ReadoutMatrix, kept loose to avoid a cycle

    def __post_init__(self):
        if not self.layers:
            raise ValueError("need at least one layer")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        for prev, layer in zip(self.layers, self.layers[1:]):
            if layer.input_dim != prev.units:
                raise ValueError(
                    f"layer input dim {layer.input_dim} != previous layer units {prev.units}")
        if self.include_input_in_readout and len(self.layers) > 1:
            raise ValueError("include_input_in_readout applies to single-layer models only")

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def state_dim(self) -> int:
        d = sum(layer.units for layer in self.layers)
        if self.include_input_in_readout:
            d += self.input_dim
        return d

    def reset_states(self) -> None:
        for layer in self.layers:
            layer.reset_state()


def spectral_radius(m: np.ndarray) -> float:
    """Largest absolute eigenvalue of a square matrix.

    Dense eigendecomposition for small matrices; Arnoldi iteration (the
    robust form of power iteration, restarted with a fresh random vector if
    it fails to converge) for larger ones, accurate to relative 1e-6.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if m.shape[0] == 0:
        raise ValueError("matrix must be non-empty")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix must be finite")
    n = m.shape[0]
    if n <= 256:
        return float(np.max(np.abs(np.linalg.eigvals(m))))
    from scipy.sparse.linalg import ArpackNoConvergence, eigs

    rng = np.random.default_rng(0)
    for _ in range(3):
        try:
            # k > 1 so a dominant complex-conjugate pair is fully resolved
            vals = eigs(m, k=4, which="LM", v0=rng.standard_normal(n),
                        return_eigenvectors=False, tol=1e-9)
            return float(np.max(np.abs(vals)))
        except ArpackNoConvergence:
            continue
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def _rescale_factor(eigenvalues: np.ndarray, leak_rate: float, target: float,
                    zero_tol: float = 0.0) -> float:
    """Scalar s such that max_i |(1-a) + a*s*lam_i| == target.

    Each eigenvalue contributes a convex constraint quadratic in s; the
    binding scale is the smallest positive root across the spectrum, which
    solves the max-equation exactly (no search needed). Eigenvalues at or
    below zero_tol are treated as exact zeros (numerically nilpotent
    directions impose no constraint).
    """
    a = leak_rate
    keep = 1.0 - a
    lam = eigenvalues[np.abs(eigenvalues) > zero_tol]
    if lam.size == 0:
        raise NumericalError(
            "drawn recurrent matrix has spectral radius 0; increase density or units")
    re = lam.real
    mag2 = np.abs(lam) ** 2
    qa = a * a * mag2
    qb = 2.0 * a * keep * re
    qc = keep * keep - target * target  # negative because target > 1 - a
    roots = (-qb + np.sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa)
    return float(np.min(roots))


def init_layer(config: LayerConfig, input_dim: int, seed: int) -> EsnLayer:
    """Draw and rescale one reservoir layer, deterministically from the seed.

    Recurrent entries are uniform on [-1, 1], kept with probability
    `density` (others exactly zero); input weights are dense uniform on
    [-1, 1] times input_scale. The recurrent matrix is then multiplied by
    the scalar that puts the leaky effective matrix's spectral radius
    exactly on spectral_target.

    Draw order (stable contract, relied on for reproducibility): full
    uniform recurrent block, then the keep mask, then the input block.
    """
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    n = config.units
    rng = np.random.default_rng(seed)
    w_full = rng.uniform(-1.0, 1.0, (n, n))
    keep = rng.random((n, n)) < config.density
    w_raw = np.where(keep, w_full, 0.0)
    w_in = rng.uniform(-1.0, 1.0, (n, input_dim)) * config.input_scale

    eigenvalues = np.linalg.eigvals(w_raw)
    zero_tol = n * np.finfo(np.float64).eps * np.linalg.norm(w_raw, "fro")
    scale = _rescale_factor(eigenvalues, config.leak_rate,
                            config.spectral_target, zero_tol)
    w_res = scale * w_raw

    # verify on the actual scaled matrix (guards against ill-conditioned
    # spectra where predicted and realized radii diverge)
    eff = (1.0 - config.leak_rate) * np.eye(n) + config.leak_rate * w_res
    achieved = float(np.max(np.abs(np.linalg.eigvals(eff))))
    if abs(achieved - config.spectral_target) > 1e-9:
        raise NumericalError(
            f"echo-state rescaling failed: radius {achieved!r} vs target "
            f"{config.spectral_target!r}")
    return EsnLayer(w_res=w_res, w_in=w_in, config=config, seed=seed,
                    input_dim=input_dim)


def esp_radius(layer: EsnLayer) -> float:
    """Spectral radius of the layer's leaky effective recurrence matrix."""
    a = layer.config.leak_rate
    eff = (1.0 - a) * np.eye(layer.units) + a * layer.w_res
    return spectral_radius(eff)


def build_model(layer_configs: list[LayerConfig], input_dim: int, seed: int,
                mode: str = "windowed",
                include_input_in_readout: bool = False) -> DeepEsnModel:
    """Initialize a stacked model; layer seeds are spawned from `seed`."""
    seeds = np.random.SeedSequence(seed).spawn(len(layer_configs))
    layers = []
    dim = input_dim
    for cfg, seq in zip(layer_configs, seeds):
        layer_seed = int(seq.generate_state(1)[0])
        layers.append(init_layer(cfg, dim, layer_seed))
        dim = cfg.units
    return DeepEsnModel(layers=layers, mode=mode,
                        include_input_in_readout=include_input_in_readout)


def _activation(layer: EsnLayer):
    if layer.config.activation == "tanh":
        return np.tanh
    return lambda v: v


def update_state(model: DeepEsnModel, input_vector) -> np.ndarray:
    """Advance every layer one step in place; return the concatenated state.

    Layer 1 blends its previous state with the activation of
    W x + W_in u(t+1); each deeper layer does the same driven by the fresh
    state of the layer below.
    """
    u = np.atleast_1d(np.asarray(input_vector, dtype=np.float64))
    if u.shape != (model.input_dim,):
        raise ValueError(f"input must have length {model.input_dim}, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("input must be finite")
    feed = u
    parts = []
    for layer in model.layers:
        a = layer.config.leak_rate
        pre = layer.w_res @ layer.state + layer.w_in @ feed
        layer.state = (1.0 - a) * layer.state + a * _activation(layer)(pre)
        feed = layer.state
        parts.append(layer.state)
    if model.include_input_in_readout:
        parts.append(u)
    return np.concatenate(parts)


def _run_layers(model: DeepEsnModel, inputs3d: np.ndarray) -> list[np.ndarray]:
    """Kernel-backed trajectories (M, T, N_n) for every layer."""
    trajectories = []
    feed = inputs3d
    for layer in model.layers:
        traj = _kernels.batch_leaky_run(layer.w_res, layer.w_in, feed,
                                        layer.config.leak_rate,
                                        _ACT_CODE[layer.config.activation])
        trajectories.append(traj)
        feed = traj
    return trajectories


def harvest_states(model: DeepEsnModel, inputs, washout: int | None = None) -> np.ndarray:
    """Collect readout-ready state rows for a batch of inputs.

    Continuous mode: `inputs` is one sequence (T, K) or (T,); states start
    from zero once, the first `washout` rows (default DEFAULT_WASHOUT) are
    discarded, and the model's layer states are left at the final step.
    Windowed mode: `inputs` is a stack of windows (M, W) or (M, W, K); every
    window starts from a zero state and contributes its final state row
    (washout is ignored).
    """
    arr = np.asarray(inputs, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty input sequence")
    k = model.input_dim
    if washout is None:
        washout = DEFAULT_WASHOUT if model.mode == "continuous" else 0
    if model.mode == "continuous":
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[1] != k:
            raise ValueError(f"continuous inputs must be (T, {k})")
        t_len = arr.shape[0]
        if washout < 0 or washout >= t_len:
            raise ValueError(f"washout ({washout}) must be < sequence length ({t_len})")
        trajectories = _run_layers(model, arr[None, :, :])
        for layer, traj in zip(model.layers, trajectories):
            layer.state = traj[0, -1, :].copy()
        rows = [traj[0, washout:, :] for traj in trajectories]
        if model.include_input_in_readout:
            rows.append(arr[washout:, :])
        return np.concatenate(rows, axis=1)

    if arr.ndim == 2:
        if k != 1:
            raise ValueError(f"windows of scalars require input_dim 1, model has {k}")
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] != k:
        raise ValueError(f"windowed inputs must be (M, W) or (M, W, {k})")
    trajectories = _run_layers(model, arr)
    rows = [traj[:, -1, :] for traj in trajectories]
    if model.include_input_in_readout:
        rows.append(arr[:, -1, :])
    return np.concatenate(rows, axis=1)


MODEL_FORMAT = "flowcast-model"
MODEL_VERSION = 1


def model_doc(model: DeepEsnModel) -> dict:
    """Serializable dict form of a model (matrices regenerate from seeds)."""
    from .readout import ReadoutMatrix

    for layer in model.layers:
        if layer.seed is None:
            raise ValueError("cannot serialize hand-built layers (no seed recorded)")
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "mode": model.mode,
        "include_input_in_readout": model.include_input_in_readout,
        "layers": [
            {
                "seed": layer.seed,
                "input_dim": layer.input_dim,
                "units": layer.config.units,
                "leak_rate": layer.config.leak_rate,
                "density": layer.config.density,
                "spectral_target": layer.config.spectral_target,
                "input_scale": layer.config.input_scale,
                "activation": layer.config.activation,
            }
            for layer in model.layers
        ],
        "readout": None,
    }
    if model.readout is not None:
        ro: ReadoutMatrix = model.readout
        doc["readout"] = {
            "weights": ro.weights.tolist(),
            "ridge_lambda": ro.ridge_lambda,
            "output_activation": ro.output_activation,
        }
    return doc


def model_from_doc(doc: dict, source: str = "model doc") -> DeepEsnModel:
    from .readout import ReadoutMatrix

    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{source}: not a model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{source}: unsupported model version {doc.get('version')}")
    layers = []
    for spec in doc["layers"]:
        cfg = LayerConfig(units=spec["units"], leak_rate=spec["leak_rate"],
                          density=spec["density"],
                          spectral_target=spec["spectral_target"],
                          input_scale=spec["input_scale"],
                          activation=spec["activation"])
        layers.append(init_layer(cfg, spec["input_dim"], spec["seed"]))
    model = DeepEsnModel(layers=layers, mode=doc["mode"],
                         include_input_in_readout=doc["include_input_in_readout"])
    if doc.get("readout") is not None:
        ro = doc["readout"]
        model.readout = ReadoutMatrix(weights=np.array(ro["weights"], dtype=np.float64),
                                      ridge_lambda=ro["ridge_lambda"],
                                      output_activation=ro["output_activation"])
    return model


def save_model(model: DeepEsnModel, path: str | Path) -> None:
    """Serialize a model to a versioned JSON file.

    Reservoir matrices are regenerated from layer seeds on load, so layers
    must have been produced by init_layer/build_model. Floats round-trip
    exactly (JSON uses repr).
    """
    Path(path).write_text(json.dumps(model_doc(model), indent=1) + "\n")


def load_model(path: str | Path) -> DeepEsnModel:
    return model_from_doc(json.loads(Path(path).read_text()), source=str(path))
