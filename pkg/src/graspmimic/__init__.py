"""Transfer human grasp demonstrations to multi-fingered grippers.

Given an object mesh and a posed hand demonstration, the pipeline finds a
gripper configuration minimizing a contact-heatmap, orientation, and
penetration objective, then scores the grasp with wrench-space quality and
similarity metrics.
"""

from .geometry import TriMesh, load_mesh
from .kinematics import (
    GripperConfig,
    GripperModel,
    HandDemo,
    PalmFrame,
    forward_kinematics,
    initial_config_from_hand,
)
from .losses import ContactHeatmap, Hyperparams, LossBreakdown, LossMask, contact_heatmap
from .metrics import MetricsReport, WrenchModel, evaluate
from .optim import OptSchedule
from .pipeline import RetargetRequest, RetargetResult, retarget

__version__ = "0.1.0"

__all__ = [
    "ContactHeatmap",
    "GripperConfig",
    "GripperModel",
    "HandDemo",
    "Hyperparams",
    "LossBreakdown",
    "LossMask",
    "MetricsReport",
    "OptSchedule",
    "PalmFrame",
    "RetargetRequest",
    "RetargetResult",
    "TriMesh",
    "WrenchModel",
    "contact_heatmap",
    "evaluate",
    "forward_kinematics",
    "initial_config_from_hand",
    "load_mesh",
    "retarget",
    "__version__",
]
