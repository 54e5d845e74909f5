"""Lie group embedded dynamical neural networks on SE(3)."""

from .geometry import (
    Pose,
    Twist,
    adjoint,
    compose,
    exp_se3,
    exp_so3,
    hat,
    inverse,
    left_jacobian,
    linear_rep,
    parameterize,
    unparameterize,
    vee,
)
from .learning import TrainConfig, TrainRecord, default_setup, train
from .network import NetworkParams, StructuredWeights, Trajectory, integrate
from .projection import project_adjoint, project_so3, project_weights

__version__ = "0.1.0"
