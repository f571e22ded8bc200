"""Graph normalization experiments: shift preconditioning, GraphNorm and friends, in numpy."""

from .graphs import Graph, GraphBatch
from .model import ModelConfig, forward, backward, init_params, train
from .norms import NormSpec, apply_shift_scale, normalize, q_gcn, q_gin, shift_matrix
from .spectral import spectrum_report

__version__ = "0.1.0"

__all__ = [
    "Graph", "GraphBatch", "ModelConfig", "NormSpec",
    "apply_shift_scale", "backward", "forward", "init_params", "normalize",
    "q_gcn", "q_gin", "shift_matrix", "spectrum_report", "train",
]
