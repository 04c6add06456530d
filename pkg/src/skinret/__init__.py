"""skinret: residual skinned-motion retargeting with an interactive balancing gate."""

__version__ = "0.1.0"

from .backend import backend_name

__all__ = ["backend_name", "__version__"]
