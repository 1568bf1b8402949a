"""No-regret caching with online mirror descent over the capped simplex."""

from .core import (Catalog, FractionalState, IntegralState, InvalidInputError, NumericFailureError,
                   RequestBatch, Trace, UnsupportedTraceError, service_cost, update_cost)
from .projections import (InfeasibleDeltaError, NegEntropyScaledVector, euclid_project,
                          euclid_project_single, negentropy_project, negentropy_project_delta,
                          qnorm_project_numeric)
from .policies import (LearningSchedule, MirrorMapKind, OMDPolicy, ftl_step, initial_state,
                       omd_step, theory_learning_rate)
from .rounding import decompose, online_round, optimal_coupling
from .bounds import BoundInputs, q_star, regime, regret_ub
from .harness import ExperimentConfig, run_experiment

__version__ = "0.1.0"
