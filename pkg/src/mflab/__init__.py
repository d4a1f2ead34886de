"""Finite-population game simulation, mean-field ODEs and deviation certificates."""

__version__ = "0.1.0"

from .core import (DiscretePopulationState, GridTrajectory, JumpTrajectory, SampledTrajectory,
                   SimplexPoint, make_population_state, to_simplex_point)
from .engine import (ModelSpec, estimate_first_jump_drift, interval_count_probs, simulate,
                     state_at)
from .errors import (BoundViolation, ConfigError, DimensionMismatch, EmptyPopulation,
                     HorizonMismatch, InvalidParameter, MflabError, NegativeCount, OutOfRange,
                     StepInvalid, TooFewReplicas)
from .games import GameSpec, builtin_game, congestion_game, matrix_game, payoff, payoff_lipschitz
from .protocols import ProtocolSpec, switch_distribution, switch_rates
from .meanfield import (FieldConstants, field_constants, field_lipschitz, field_max_norm,
                        mean_vector_field, solve_mean_ode)
from .certificates import (BoundParams, DeviationBoundReport, deviation_bound, ell_star,
                           n_threshold_b, tail_h, variance_bound)
from .harness import (ExceedanceReport, ReplicaEnsemble, empirical_variance, exceedance_report,
                      run_replicas, sup_deviation)
