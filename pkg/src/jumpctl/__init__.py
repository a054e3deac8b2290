"""Thermodynamics of quantum-jump trajectories for a V-system under catch-and-reverse control."""

__version__ = "0.1.0"

from .model import ControlPolicy, ModelParams, PolicyKind  # noqa: E402

__all__ = ["ControlPolicy", "ModelParams", "PolicyKind", "__version__"]
