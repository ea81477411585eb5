"""Grant-free random access activity detection in cell-free massive MIMO with a per-AP MLP detector."""

from .numerics import SeededRng
from .system import Deployment, Seeds, SystemConfig, build_deployment, preset

__version__ = "0.1.0"

__all__ = ["SeededRng", "Deployment", "Seeds", "SystemConfig", "build_deployment", "preset", "__version__"]
