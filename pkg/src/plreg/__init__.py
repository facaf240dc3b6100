"""Partial-logic feature-mask regularization and its evaluation harnesses.

The package trains small models whose latent features are split by a
learned sigmoid gate into a currently-defined part and a reserved part,
regularized so the two stay separable, the gate stays sharp, and defined
dimensions commit to classes with a balanced marginal.  Harnesses cover
category discovery over partially labeled data, its leave-one-domain-out
extension, and long-tailed incremental sessions.
"""

__version__ = "0.1.0"

from .autodiff import Graph, Tensor, grad_check
from .data import CILSchedule, Sample, SyntheticSpec, TaskSplit
from .estimators import PartialLogicCIL, PartialLogicGCD
from .evaluation import CILMetrics, Metrics, cluster_accuracy, hungarian
from .losses import LossBreakdown, LossWeights
from .model import MaskReport, ModelBundle, init_bundle

__all__ = [
    "CILMetrics", "CILSchedule", "Graph", "LossBreakdown", "LossWeights",
    "MaskReport", "Metrics", "ModelBundle", "PartialLogicCIL",
    "PartialLogicGCD", "Sample", "SyntheticSpec", "TaskSplit", "Tensor",
    "cluster_accuracy", "grad_check", "hungarian", "init_bundle",
    "__version__",
]
