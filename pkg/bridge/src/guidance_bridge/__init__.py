"""HTTP guidance service for the mesh deformation and texturing engine."""

from .app import BridgeConfig, create_app
from .backends import AnalyticBackend, MockBackend

__version__ = "0.1.0"

__all__ = ["AnalyticBackend", "BridgeConfig", "MockBackend", "create_app"]
