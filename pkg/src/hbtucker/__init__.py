"""Hierarchical Bayesian Tucker decomposition of count tensors."""

from .config import ConfigError, EvalConfig, ModelConfig, RunConfig, SamplerConfig, load_config
from .gibbs import AuditError, FitResult, run
from .hierarchy import HierarchyState
from .model import DecompositionState, Priors, collapsed_log_joint, generate, log_model_probability
from .tensor import CountTensor, TopicIndexMap, load_counts, normalize, save_counts

__all__ = [
    "AuditError",
    "ConfigError",
    "CountTensor",
    "DecompositionState",
    "EvalConfig",
    "FitResult",
    "HierarchyState",
    "ModelConfig",
    "Priors",
    "RunConfig",
    "SamplerConfig",
    "TopicIndexMap",
    "collapsed_log_joint",
    "generate",
    "load_config",
    "load_counts",
    "log_model_probability",
    "normalize",
    "run",
    "save_counts",
]

__version__ = "0.1.0"
