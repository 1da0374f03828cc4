import numpy as np

from ..config import CostConfig
from ..errors import ConfigError, WrongKind
from .area import AreaCost
from .base import CostFunctional
from .energy import EnergyCost
from .length import LengthCost
from .time_max import TimeMaxCost

ALL_COSTS = [
    EnergyCost,
    LengthCost,
    AreaCost,
    TimeMaxCost,
]

COST_REGISTRY = {cost.type_name: cost for cost in ALL_COSTS}


# Load a cost functional from a config dictionary
def load_cost(config) -> CostFunctional:
    config = config if isinstance(config, CostConfig) else CostConfig(config)
    try:
        cost_cls = COST_REGISTRY[config.kind]
    except KeyError:
        raise ConfigError(f"Unknown cost kind: {config.kind}")

    kwargs = {key: value for key, value in config.items() if key != "kind"}
    try:
        return cost_cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"Bad {config.kind} cost spec: {e}")


def evaluate_cost(spec: CostFunctional, control, sys=None) -> float:
    return spec.evaluate(control, sys)


def in_constraint_set(spec: CostFunctional, control, step: int, sys=None) -> bool:
    """Whether the control values on `step` lie in the constraint set equivalent to the cost."""
    return spec.in_constraint_set(control, step, sys)


def constant_speed_residual(spec: CostFunctional, control, sys=None) -> float:
    """
    Largest relative deviation of the energy integrand from its mean over the steps.
    """
    if not isinstance(spec, EnergyCost):
        raise WrongKind(f"constant_speed_residual needs the energy cost, got {spec.type_name}")
    speed = spec.integrand(spec.scaled_moduli(control, sys))
    mean = float(np.mean(speed))
    return float(np.max(np.abs(speed - mean)) / max(mean, 1e-15))


def evaluate_all(control, sys=None, weights=None) -> dict:
    """Values of every cost kind with shared weights, keyed by kind."""
    return {kind: cost_cls(weights=weights).evaluate(control, sys) for kind, cost_cls in COST_REGISTRY.items()}
