"""Forward-chaining cross-validation driver and the score tensor it fills.

The series is cut into P+1 contiguous equal blocks; split p trains on blocks
1..p and tests on block p+1, so training data always precedes test targets.
Scores are R-squared on the test block, computed on raw (unstandardized)
values; model inputs are standardized with training-block statistics.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataQualityError
from .models import make_windows, r2

log = logging.getLogger(__name__)


class FoldEvaluationError(Exception):
    """A fold could not be scored; carries the reason for the failure record."""


def time_splits(length: int, folds: int, window: int, horizon: int):
    """Expanding-window splits: P (train_range, test_range) index pairs.

    Ranges are half-open [start, end). Block boundaries sit at
    floor(i * T / (P+1)); split p trains on [0, b_p) and tests on
    [b_p, b_{p+1}).
    """
    if folds < 1:
        raise ValueError("folds must be >= 1")
    block = length // (folds + 1)
    min_block = max(window + horizon, 2)
    if block < min_block:
        raise ValueError(
            f"series too short for {folds} time splits: need length >= "
            f"{(folds + 1) * min_block}, got {length}")
    bounds = [(i * length) // (folds + 1) for i in range(folds + 2)]
    return [((0, bounds[p]), (bounds[p], bounds[p + 1]))
            for p in range(1, folds + 1)]


@dataclass
class Standardizer:
    mean: float
    std: float

    @classmethod
    def from_values(cls, values: np.ndarray) -> "Standardizer":
        std = float(values.std())
        return cls(mean=float(values.mean()), std=std if std > 0 else 1.0)

    def transform(self, v):
        return (np.asarray(v, dtype=np.float64) - self.mean) / self.std

    def invert(self, v):
        return np.asarray(v, dtype=np.float64) * self.std + self.mean


def evaluate_model(forecaster_factory, series, folds: int, window: int,
                   horizon: int, standardize: bool = True) -> np.ndarray:
    """Train/test a model over every time split; returns P R-squared scores.

    Test windows may reach into the last window+horizon-1 training slots for
    their inputs, but every test target lies inside the test block. Raises
    FoldEvaluationError if any fold cannot be scored.
    """
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    splits = time_splits(values.size, folds, window, horizon)
    scores = np.empty(len(splits))
    lead = window + horizon - 1
    for p, ((tr_lo, tr_hi), (te_lo, te_hi)) in enumerate(splits):
        train_values = values[tr_lo:tr_hi]
        test_slice = values[te_lo - lead:te_hi]
        scaler = (Standardizer.from_values(train_values) if standardize
                  else Standardizer(0.0, 1.0))
        train_set = make_windows(scaler.transform(train_values), window, horizon)
        test_set = make_windows(scaler.transform(test_slice), window, horizon)
        actual = values[te_lo:te_hi]
        try:
            model = forecaster_factory()
            model.fit(train_set)
            predicted = scaler.invert(model.predict_many(test_set.inputs))
        except Exception as exc:
            raise FoldEvaluationError(f"fold {p + 1}: {exc}") from exc
        try:
            scores[p] = r2(actual, predicted)
        except ValueError as exc:
            raise FoldEvaluationError(f"fold {p + 1}: constant test segment ({exc})") from exc
    return scores


@dataclass
class ScoreTensor:
    """R-squared scores indexed by (dataset id, model id, fold 1..P).

    Either all P folds of an (atr, model) pair are present and finite, or
    the pair is recorded in `failures` with a reason.
    """

    horizon: int
    folds: int
    metric: str = "r2"
    scores: dict = field(default_factory=dict)  # (atr, model) -> np.ndarray (P,)
    failures: dict = field(default_factory=dict)  # (atr, model) -> reason

    def set_scores(self, atr: str, model: str, values) -> None:
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (self.folds,):
            raise ValueError(f"expected {self.folds} fold scores, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("fold scores must be finite")
        self.scores[(atr, model)] = arr

    def mark_failed(self, atr: str, model: str, reason: str) -> None:
        self.failures[(atr, model)] = reason

    def has(self, atr: str, model: str) -> bool:
        return (atr, model) in self.scores or (atr, model) in self.failures

    @property
    def atrs(self) -> list[str]:
        seen = dict.fromkeys(a for a, _ in self.scores)
        seen.update(dict.fromkeys(a for a, _ in self.failures))
        return sorted(seen)

    @property
    def models(self) -> list[str]:
        seen = dict.fromkeys(m for _, m in self.scores)
        seen.update(dict.fromkeys(m for _, m in self.failures))
        return sorted(seen)

    def fold_matrix(self, atr: str, models: list[str]) -> np.ndarray:
        """P x M matrix of fold scores for one dataset."""
        cols = []
        for m in models:
            if (atr, m) not in self.scores:
                raise KeyError(f"no scores for ({atr!r}, {m!r})")
            cols.append(self.scores[(atr, m)])
        return np.column_stack(cols)

    def average_score(self, atr: str, model: str) -> float:
        return float(self.scores[(atr, model)].mean())

    def save(self, path: str | Path, header_comment: str = "") -> None:
        path = Path(path)
        lines = []
        if header_comment:
            lines.append(f"# {header_comment}")
        lines.append("atr,model,fold,horizon,metric,score")
        for (atr, model) in sorted(self.scores):
            for fold, score in enumerate(self.scores[(atr, model)], start=1):
                lines.append(f"{atr},{model},{fold},{self.horizon},"
                             f"{self.metric},{float(score)!r}")
        path.write_text("\n".join(lines) + "\n")
        if self.failures:
            fail_path = path.with_suffix(path.suffix + ".failures")
            flines = ["atr,model,reason"]
            for (atr, model), reason in sorted(self.failures.items()):
                flines.append(f"{atr},{model},{reason.replace(',', ';')}")
            fail_path.write_text("\n".join(flines) + "\n")

    @classmethod
    def load(cls, path: str | Path, horizon: int | None = None) -> "ScoreTensor":
        """Read the delimiter-separated export (also the external-score format)."""
        path = Path(path)
        rows = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",")
                if parts[0] == "atr":
                    continue
                if len(parts) != 6:
                    raise DataQualityError(f"{path}:{lineno}: expected 6 columns")
                rows.append(parts)
        if not rows:
            raise DataQualityError(f"{path}: no score rows")
        horizons = {int(r[3]) for r in rows}
        if horizon is not None:
            rows = [r for r in rows if int(r[3]) == horizon]
            if not rows:
                raise DataQualityError(f"{path}: no rows for horizon {horizon} (has {sorted(horizons)})")
        elif len(horizons) > 1:
            raise DataQualityError(f"{path}: mixed horizons {sorted(horizons)}; pass horizon=")
        h = int(rows[0][3])
        metric = rows[0][4]
        per_pair: dict = {}
        for atr, model, fold, _, met, score in rows:
            if met != metric:
                raise DataQualityError(f"{path}: mixed metrics {metric!r} vs {met!r}")
            per_pair.setdefault((atr, model), {})[int(fold)] = float(score)
        folds = max(max(d) for d in per_pair.values())
        tensor = cls(horizon=h, folds=folds, metric=metric)
        for (atr, model), d in per_pair.items():
            if sorted(d) != list(range(1, folds + 1)):
                raise DataQualityError(
                    f"{path}: ({atr},{model}) has folds {sorted(d)}, expected 1..{folds}")
            tensor.set_scores(atr, model, [d[i] for i in range(1, folds + 1)])
        return tensor

    def merge(self, other: "ScoreTensor") -> None:
        if other.horizon != self.horizon or other.folds != self.folds:
            raise ValueError("cannot merge tensors with different horizon/folds")
        self.scores.update(other.scores)
        self.failures.update(other.failures)


def _evaluate_pair(args):
    atr_id, values, factory, folds, window, horizon, standardize = args
    try:
        scores = evaluate_model(factory, values, folds, window, horizon, standardize)
        return atr_id, scores, None
    except FoldEvaluationError as exc:
        return atr_id, None, str(exc)


def run_benchmark(model_factories: dict, series_by_atr: dict, folds: int,
                  window: int, horizon: int, standardize: bool = True,
                  existing: ScoreTensor | None = None,
                  workers: int = 1) -> ScoreTensor:
    """Fill the (atr, model, fold) score tensor; resumable and parallel.

    `model_factories` maps model id -> zero-arg factory returning a fresh
    forecaster; `series_by_atr` maps dataset id -> TimeSeries or array.
    Cells already present in `existing` are kept, failures are recorded
    without aborting the run.
    """
    tensor = existing if existing is not None else ScoreTensor(horizon=horizon, folds=folds)
    if tensor.horizon != horizon or tensor.folds != folds:
        raise ValueError("existing tensor does not match horizon/folds")
    tasks = []
    for model_id, factory in model_factories.items():
        for atr_id, series in series_by_atr.items():
            if tensor.has(atr_id, model_id):
                continue
            values = np.asarray(getattr(series, "values", series), dtype=np.float64)
            tasks.append((model_id, (atr_id, values, factory, folds, window,
                                     horizon, standardize)))
    if not tasks:
        return tensor
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_pair, [t[1] for t in tasks]))
    else:
        results = [_evaluate_pair(t[1]) for t in tasks]
    for (model_id, _), (atr_id, scores, failure) in zip(tasks, results):
        if failure is None:
            tensor.set_scores(atr_id, model_id, scores)
            log.info("scored %s on %s: mean %.4f", model_id, atr_id, scores.mean())
        else:
            tensor.mark_failed(atr_id, model_id, failure)
            log.warning("failed %s on %s: %s", model_id, atr_id, failure)
    return tensor


def grid_search(factory_for_config, grid: dict, tuning_series: dict, folds: int,
                window: int, horizon: int, standardize: bool = True):
    """Exhaustive grid search maximizing mean score across tuning datasets.

    `factory_for_config` maps a config dict to a zero-arg forecaster
    factory. Ties break toward the lexicographically smallest value tuple
    (keys sorted, candidate values in ascending order, numbers before
    other types). Returns (best_config, results) where results is a list
    of (config, mean score or None, failure reason or None).
    """
    if not grid:
        raise ValueError("grid must be non-empty")

    def order_key(v):
        return (0, v, "") if isinstance(v, (int, float)) else (1, 0, repr(v))

    keys = sorted(grid)
    candidates = [sorted(grid[k], key=order_key) for k in keys]
    results = []
    best = None
    for combo in itertools.product(*candidates):
        config = dict(zip(keys, combo))
        factory = factory_for_config(config)
        means = []
        failure = None
        for atr_id, series in tuning_series.items():
            try:
                scores = evaluate_model(factory, series, folds, window, horizon,
                                        standardize)
            except FoldEvaluationError as exc:
                failure = f"{atr_id}: {exc}"
                break
            means.append(scores.mean())
        if failure is not None:
            results.append((config, None, failure))
            continue
        mean_score = float(np.mean(means))
        results.append((config, mean_score, None))
        if best is None or mean_score > best[1]:
            best = (config, mean_score)
    if best is None:
        raise DataQualityError("every grid configuration failed")
    return best[0], results
