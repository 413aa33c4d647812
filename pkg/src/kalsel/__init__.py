"""Randomized sensor selection for Kalman filtering with covariance certificates.

The package designs a sampling law over a pool of candidate sensors so that
drawing a fixed number of them independently keeps the Kalman error
covariance inside a two-sided Loewner sandwich with a stated probability
floor.  The pieces:

- :mod:`kalsel.system` — LTI model, sensor pools, selections, partitions.
- :mod:`kalsel.kalman` — covariance recursions and their fixed points.
- :mod:`kalsel.concentration` — sandwich certificates, sample-size rules,
  heterogeneous fusion, and repetition-cap bounds.
- :mod:`kalsel.optimizer` — semidefinite design programs and grid search.
- :mod:`kalsel.sampling` — reproducible streams and (constrained) draws.
- :mod:`kalsel.greedy` — deterministic and subset-randomized baselines.
- :mod:`kalsel.experiments` — seeded study runners producing CSV artifacts.
- :mod:`kalsel.service` / :mod:`kalsel.cli` — HTTP facade and its client.

The most common entry points are re-exported here; import the submodules
for the full surface.
"""

from kalsel.concentration import (
    AwParameters,
    ConstraintSpec,
    CovarianceBounds,
    bounds_at_time,
    bounds_heterogeneous,
    bounds_steady_state,
    cap_satisfaction_bound,
    constrained_floors,
    domination_ratio,
    min_domination_ratio,
    select_parameters_for_sample_size,
    select_sample_size,
)
from kalsel.errors import (
    AssumptionError,
    ConfigError,
    DetectabilityError,
    DomainError,
    InfeasibleSampleSizeError,
    InvalidInputError,
    KalselError,
    OptimizationError,
    RejectionBudgetError,
    SimplexError,
)
from kalsel.greedy import GreedyConfig, greedy_select
from kalsel.instances import generate_instance
from kalsel.kalman import selection_steady_state, steady_state, warmup_sigma
from kalsel.optimizer import grid_search, grid_search_heterogeneous, uniform_baseline
from kalsel.sampling import (
    CategoricalSampler,
    RngStream,
    draw_constrained,
    draw_heterogeneous,
    draw_homogeneous,
)
from kalsel.system import LtiSystem, Partitioning, Selection, SensorPool

__version__ = "0.1.0"

__all__ = [
    "AssumptionError",
    "AwParameters",
    "CategoricalSampler",
    "ConfigError",
    "ConstraintSpec",
    "CovarianceBounds",
    "DetectabilityError",
    "DomainError",
    "GreedyConfig",
    "InfeasibleSampleSizeError",
    "InvalidInputError",
    "KalselError",
    "LtiSystem",
    "OptimizationError",
    "Partitioning",
    "RejectionBudgetError",
    "RngStream",
    "Selection",
    "SensorPool",
    "SimplexError",
    "bounds_at_time",
    "bounds_heterogeneous",
    "bounds_steady_state",
    "cap_satisfaction_bound",
    "constrained_floors",
    "domination_ratio",
    "draw_constrained",
    "draw_heterogeneous",
    "draw_homogeneous",
    "generate_instance",
    "greedy_select",
    "grid_search",
    "grid_search_heterogeneous",
    "min_domination_ratio",
    "select_parameters_for_sample_size",
    "select_sample_size",
    "selection_steady_state",
    "steady_state",
    "uniform_baseline",
    "warmup_sigma",
    "__version__",
]
