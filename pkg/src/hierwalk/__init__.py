"""Number variance and fluctuation limits for hierarchical random walks."""

__version__ = "0.1.0"

from .hiergroup import GroupElement, ball_size, sphere_size
from .stepdist import CRW, JBeta, PowerLaw, Custom, StepLaw, law_from_dict

__all__ = [
    "GroupElement",
    "ball_size",
    "sphere_size",
    "CRW",
    "JBeta",
    "PowerLaw",
    "Custom",
    "StepLaw",
    "law_from_dict",
]
