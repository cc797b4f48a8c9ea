"""Optimal-transport domain generalization: Sinkhorn and barycenter solvers,
a small reverse-mode AD engine, transport-inequality bound checks and the
WBAE/WBMI training loops."""

__version__ = "0.1.0"
