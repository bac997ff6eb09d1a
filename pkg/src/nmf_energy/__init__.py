"""Non-negative matrix factorization as energy minimization.

Two formulations over the entries of W and H -- a degree-4 polynomial for
continuous/integer solvers with a sum constraint, and a bit-encoded QUBO for
Ising-style solvers -- plus stochastic solvers, a classical HALS/NNDSVDA
baseline, exact integer oracles, comparison statistics and experiment
drivers with a CLI (``nmf-energy``).
"""

from .matrices import (ContinuousDomain, FactorPair, IntegerDomain,
                       ProblemInstance, error_metrics, generate_case, matmul,
                       stream_rng)
from .polynomial import DegreeError, Poly
from .quartic import (BudgetCheck, QuarticModel, VariableLayout,
                      build_quartic_model, check_variable_budget,
                      default_sum_target)
from .qubo import (Auxiliary, BitEncoding, IsingModel, PenaltyPolicy,
                   QuboModel, SourceBit, build_binary_quartic, decode_bits,
                   ising_to_qubo, quadratize, qubo_to_ising)
from .solvers import (GRID_LEVELS, MAX_TOTAL_LEVELS, SCHEDULES,
                      QuboSolveParams, RelaxationSchedule, SolverRun,
                      simplex_project, solve_continuous, solve_discrete,
                      solve_qubo)
from .integer_solver import (ABS_DIFF, SQ_DIFF, IntObjective, SearchBudget,
                             brute_force_optimum, heuristic_search)
from .classic import (FitResult, GivenInit, NndsvdaInit, RandomInit, bcd_loop,
                      fusion_pipeline, hals_fit, nndsvda_init, truncated_svd)
from .stats import (binomial_p, comparison_summary, compare_deltas, fit_curve,
                    histogram_bins, median_mad, median_select_index,
                    pct_decrease)

__version__ = "0.1.0"


def __getattr__(name):
    # estimators import sklearn; experiments pull in every solver -- both are
    # loaded lazily so plain library use stays light.
    if name in ("HalsNMF", "EnergyNMF", "FusionNMF"):
        from . import estimators
        return getattr(estimators, name)
    if name in ("ExperimentConfig", "ExperimentReport", "run_experiment",
                "default_config"):
        from . import experiments
        return getattr(experiments, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
