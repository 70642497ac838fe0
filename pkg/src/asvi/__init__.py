"""Adaptive sparse variational inference for ReLU regression networks."""
from asvi.elbo import ElboReport, TrainConfig, TrainingError, train_width
from asvi.evaluate import empirical_hellinger_sq, posterior_mean_predict, rmse, sparsity_summary
from asvi.net import NetworkShape
from asvi.select import SelectionReport, WidthCandidate, select_width
from asvi.teacher import TeacherNetwork, generate_teacher, synthesize
from asvi.variational import PriorConfig, VariationalParams

__all__ = [
    "ElboReport",
    "NetworkShape",
    "PriorConfig",
    "SelectionReport",
    "TeacherNetwork",
    "TrainConfig",
    "TrainingError",
    "VariationalParams",
    "WidthCandidate",
    "empirical_hellinger_sq",
    "generate_teacher",
    "posterior_mean_predict",
    "rmse",
    "select_width",
    "sparsity_summary",
    "synthesize",
    "train_width",
]
