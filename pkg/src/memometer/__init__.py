"""memometer: volume-growth analysis of sample reproducibility in
diffusion-style generative flows."""

__version__ = "0.1.0"

from .dataset import Dataset, augment_hflip, load_cifar10, load_raw, save_raw, split
from .errors import (
    BridgeError,
    ConfigError,
    DataFormatError,
    IntegrationError,
    MemometerError,
)
from .growth import (
    GrowthConfig,
    GrowthSeries,
    cheap_rate,
    derive_seed,
    gram_schmidt,
    growth_report,
    volume_growth,
)
from .ode import Trajectory, forward_step, integrate_forward, integrate_reverse
from .oracle import (
    OracleReport,
    Toy2DResult,
    analytic_single,
    mc_frequencies,
    spearman,
    toy2d,
)
from .schedule import Schedule, StepGrid, v_of_m
from .score import (
    BridgeScoreProvider,
    ExactMixtureScore,
    ScoreFrame,
    ScoreProvider,
    ZeroScore,
    decode_frame,
)
from .stats import (
    CopyMetricConfig,
    TTestResult,
    copy_metric,
    histogram,
    rank_topk,
    t_sf,
    welch_ttest,
)

__all__ = [
    "BridgeError",
    "BridgeScoreProvider",
    "ConfigError",
    "CopyMetricConfig",
    "DataFormatError",
    "Dataset",
    "ExactMixtureScore",
    "GrowthConfig",
    "GrowthSeries",
    "IntegrationError",
    "MemometerError",
    "OracleReport",
    "Schedule",
    "ScoreFrame",
    "ScoreProvider",
    "StepGrid",
    "Toy2DResult",
    "TTestResult",
    "Trajectory",
    "ZeroScore",
    "analytic_single",
    "augment_hflip",
    "cheap_rate",
    "copy_metric",
    "decode_frame",
    "derive_seed",
    "forward_step",
    "gram_schmidt",
    "growth_report",
    "histogram",
    "integrate_forward",
    "integrate_reverse",
    "load_cifar10",
    "load_raw",
    "mc_frequencies",
    "rank_topk",
    "save_raw",
    "spearman",
    "split",
    "t_sf",
    "toy2d",
    "v_of_m",
    "volume_growth",
    "welch_ttest",
]
