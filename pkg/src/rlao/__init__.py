"""Tabular RL with state abstraction: abstract models learned from abstract
observations, R-MAX on top of them, and exact or Monte Carlo checks of the
accompanying concentration and value-loss bounds."""

__version__ = "0.1.0"

from .abstraction import (  # noqa: E402
    Abstraction,
    AbstractModel,
    BenchmarkSpec,
    SimilarityErrors,
    WeightingFn,
    build_abstract_mdp,
    generate_benchmark,
    lift_transition,
    measure_similarity,
    validate_weighting,
)
from .errors import (  # noqa: E402
    ConfigError,
    ContractViolationError,
    DomainError,
    InvalidArgumentError,
    ModelViolationError,
    PreconditionError,
    ResourceLimitError,
    RlaoError,
    StateError,
)
from .mdp import (  # noqa: E402
    OPTIMAL,
    GroundMDP,
    Policy,
    TrajectoryDistribution,
    ValueTable,
    average_return,
    trajectory_distribution,
    validate_mdp,
    value_discounted,
    value_finite,
)

__all__ = [
    "Abstraction", "AbstractModel", "BenchmarkSpec", "SimilarityErrors", "WeightingFn",
    "build_abstract_mdp", "generate_benchmark", "lift_transition", "measure_similarity", "validate_weighting",
    "ConfigError", "ContractViolationError", "DomainError", "InvalidArgumentError", "ModelViolationError",
    "PreconditionError", "ResourceLimitError", "RlaoError", "StateError",
    "OPTIMAL", "GroundMDP", "Policy", "TrajectoryDistribution", "ValueTable", "average_return",
    "trajectory_distribution", "validate_mdp", "value_discounted", "value_finite",
]
