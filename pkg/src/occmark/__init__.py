"""Occupancy measures of arbitrary policies on finite MDPs and their Markovian projection."""

from .errors import (
    HorizonInsufficientError,
    NonFiniteOccupancyError,
    NumericalError,
    OccmarkError,
    SchemaError,
    UsageError,
)
from .mdp import TERMINAL, FiniteMdp, load_mdp, sample_initial, sample_transition, validate_mdp
from .occupancy import (
    OccupancyTable,
    conservation_residual,
    finiteness_check,
    occupancy_enumerate,
    occupancy_exact_markovian,
    occupancy_monte_carlo,
    performance_from_occupancy,
)
from .offline import (
    behavior_mle_discounted,
    behavior_mle_undiscounted,
    bias_experiment,
    collect_dataset,
    compute_counts,
    mle_mdp,
)
from .policy import (
    History,
    MarkovianTable,
    Mixture,
    Scripted,
    TimeDependentTable,
    action_distribution,
    make_mixture,
    sample_episode,
)
from .projection import (
    markovianize,
    trajectory_support_check,
    verify_idempotence,
    verify_occupancy_equivalence,
)

__version__ = "0.1.0"
