"""ewclab: a desk-scale continual-learning laboratory.

Injects arithmetic skill into a small masked language model and prevents
catastrophic forgetting of its linguistic ability via elastic weight
consolidation, with Fisher-information analysis, lambda-sweep convergence
studies and parameter-space visualizations.
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
