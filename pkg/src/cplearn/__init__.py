"""cplearn: a finite-domain CP solver that learns its value ordering.

The solver exposes restart-based dives as an MDP, encodes solver states as
tripartite graphs, scores candidate values with a message-passing Q-network
trained by double deep Q-learning, and evaluates the learned ordering inside
DFS and limited-discrepancy search on graph benchmarks.
"""

from .cp import ConstraintKind, Domain, Model
from .problems import ProblemKind, build_model, generate_ba

__version__ = "0.1.0"

__all__ = [
    "ConstraintKind",
    "Domain",
    "Model",
    "ProblemKind",
    "build_model",
    "generate_ba",
    "__version__",
]
