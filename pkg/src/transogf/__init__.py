"""Transient optimal gas flow toolkit with DC-OPF coupling.

Solvers: lifted conic relaxations (simple SDP, weighted rank penalty, and a
single-level primal-dual rank minimization), an hourly Weymouth steady-state
baseline, and a sequential-convex nonconvex baseline.
"""

__version__ = "0.1.0"
