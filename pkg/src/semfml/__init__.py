"""Federated meta-learning for distributed semantic communication.

Subsystems: wireless ``channel`` simulation, round ``cost_model``, joint SU
selection and resource ``allocator``, split federated meta-learning
(``fml``), distributed multimodal information bottleneck (``dmib``), and
the experiment ``harness``.
"""
from .allocator import AllocationDecision, ObjectiveWeights, joint_optimize
from .cost_model import NetworkConfig, PayloadSizes, SUProfile, round_cost
from .errors import (ConstraintViolationError, DegenerateWorkloadError, InsufficientDataError,
                     InvalidParameterError, ModeViolationError, NumericFailureError, SemFmlError)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "AllocationDecision", "BACKEND", "ConstraintViolationError", "DegenerateWorkloadError",
    "InsufficientDataError", "InvalidParameterError", "ModeViolationError", "NetworkConfig",
    "NumericFailureError", "ObjectiveWeights", "PayloadSizes", "SUProfile", "SemFmlError",
    "joint_optimize", "round_cost", "__version__",
]
