"""flowcast: reservoir-computing toolkit for short-term traffic forecasting.

Single and stacked echo state networks with ridge readouts, baseline
forecasters, a forward-chaining evaluation harness, and the statistical
ranking pipeline (Friedman gate, pairwise Wilcoxon, fractional ranks,
Nemenyi critical distance, CD diagrams).
"""

__version__ = "0.1.0"

from ._kernels import backend_name
from .data import TimeSeries, impute, load_series
from .models import WindowedDataset, make_windows, r2, rmse
from .readout import ReadoutMatrix, fit_pinv, fit_ridge
from .reservoir import (DeepEsnModel, EsnLayer, LayerConfig, build_model,
                        harvest_states, init_layer, spectral_radius,
                        update_state)
from .stats import (RankReport, RankTally, average_ranks, cd_diagram,
                    friedman_test, nemenyi_cd, rank_models_for_atr,
                    wilcoxon_signed_rank)

__all__ = [
    "__version__", "backend_name",
    "TimeSeries", "load_series", "impute",
    "WindowedDataset", "make_windows", "rmse", "r2",
    "ReadoutMatrix", "fit_ridge", "fit_pinv",
    "LayerConfig", "EsnLayer", "DeepEsnModel", "init_layer", "build_model",
    "spectral_radius", "update_state", "harvest_states",
    "RankTally", "RankReport", "friedman_test", "wilcoxon_signed_rank",
    "rank_models_for_atr", "nemenyi_cd", "average_ranks", "cd_diagram",
]
