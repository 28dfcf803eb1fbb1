"""Stochastic approximation with Markovian noise: simulation and exact asymptotic theory."""
from .engine import SARunConfig, TrajectoryRecord, noise_free_euler, pr_average, run_sa
from .linear import (
    LinearSAModel,
    TheoryStats,
    bias_predict,
    make_linear_model,
    section3_model,
    theory_beta,
    theory_sigma_pr,
    theory_stats,
    theory_upsilon_star,
    update_fn,
)
from .markov import (
    FiniteMarkovChain,
    clt_covariance,
    make_chain,
    poisson_solve_matrix,
    poisson_solve_vector,
    sample_path,
    two_state,
)
from .stepsize import StepSizeSchedule

__version__ = "0.1.0"
