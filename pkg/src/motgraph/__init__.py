"""Sinkhorn belief propagation for graph-structured multi-marginal optimal transport."""
from .bp import TreeBP
from .errors import *  # noqa: F401,F403
from .junction import (
    GeneralGraphProblem,
    JunctionTree,
    make_general_problem,
    min_fill_decomposition,
    solve_general_graph,
    validate_junction_tree,
)
from .pipeline import ApproxResult, barycenter_estimate, certificate, solve_mot_eps
from .problem import (
    CostMatrix,
    TreeProblem,
    build_barycenter_problem,
    compute_constants,
    cost_of_plan,
    make_tree_problem,
)
from .rounding import round_bimarginal, round_tree
from .sinkhorn import SolverConfig, Transcript, UpdateRule, run

__version__ = "0.1.0"
