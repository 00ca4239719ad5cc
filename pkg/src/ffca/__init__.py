"""Feature-function curvature analysis.

Per-feature signatures (impact, volatility, nonlinearity, interaction) of a
trained MLP, their archetype labels, and their evolution during training.
"""

from .archetype import Archetype, Classification, ThresholdPolicy, classify, recommend
from .baselines import (
    engineer_features,
    gradient_importance,
    permutation_importance,
    ridge_fit,
    robustness_report,
    sampled_shapley,
)
from .datasets import GENERATORS, Dataset, RoleSpec, load_csv, write_csv
from .dynamics import (
    SignatureHistory,
    com_distance,
    detect_volatility_spike,
    diagnose,
    drift_epoch,
    fbr,
    hierarchical_order,
    track,
)
from .errors import *  # noqa: F401,F403
from .kernels import BACKEND
from .model import Mlp, ModelFunction, TaskKind, init_model, load_model, save_model, with_smoothed_activations
from .normalize import normalize_for_analysis
from .signature import AnalysisConfig, FeatureSignature, analyze, compute_signatures, signature_correlation
from .training import TrainConfig, train

__version__ = "0.1.0"
