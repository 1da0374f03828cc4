from abc import abstractmethod
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..config import CostConfig, Configurable
from ..errors import ConfigError, MissingWeight
from ..utils import Edge, edge_key, format_edge_label, parse_edge_label

FINAL_TIME_MODES = ("fixed", "free")


class CostFunctional(Configurable):
    """
    An integral cost over a piecewise-constant control, f0 depending only on the scaled moduli
    c_e = |control_e| / mu_e of the edges.

    Subclasses define the per-step integrand, the equivalent constraint set of the time-minimization
    problem, and (when the solver minimizes them directly) a smooth objective with its gradient.
    """

    type_name = None
    # Reparametrization-invariant costs accept a free final time
    reparametrization_invariant = None

    @abstractmethod
    def __init__(self, weights: Optional[Dict[str, float]] = None, final_time: str = "fixed", **kwargs):
        if final_time not in FINAL_TIME_MODES:
            raise ConfigError(f"final_time must be one of {FINAL_TIME_MODES}, got {final_time!r}")
        if final_time == "free" and not self.reparametrization_invariant:
            raise ConfigError(f"The {self.type_name} cost needs a fixed final time")
        weights = dict(weights or {})
        super().__init__(weights=weights, final_time=final_time, **kwargs)
        self.final_time = final_time
        self.weights = {}
        for label, mu in weights.items():
            try:
                key = edge_key(*parse_edge_label(label))
                mu = float(mu)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"Bad cost weight {label!r}: {e}")
            if not mu > 0:
                raise ConfigError(f"Cost weight for {label} must be positive, got {mu}")
            self.weights[key] = mu

    def __init_subclass__(cls, **kwargs):
        # check if the subclass has the required attributes
        for required in ("type_name", "reparametrization_invariant"):
            if getattr(cls, required) is None:
                raise TypeError(
                    f"Can't instantiate abstract class {cls.__name__} without {required} attribute defined"
                )
        return super().__init_subclass__(**kwargs)

    def to_config(self) -> CostConfig:
        self._config_dict["kind"] = self.type_name
        return CostConfig(**self._config_dict)

    def weight_vector(self, edges: Sequence[Edge], sys=None) -> np.ndarray:
        """
        mu per edge: explicit weights first, then the system's coupling strengths.
        """
        mu = np.empty(len(edges))
        for e, key in enumerate(edges):
            key = edge_key(*key)
            if key in self.weights:
                mu[e] = self.weights[key]
            elif sys is not None and key in sys.edge_index:
                mu[e] = sys.couplings[sys.edge_index[key]].mu
            else:
                raise MissingWeight(f"No weight for edge {format_edge_label(key)}")
        return mu

    def scaled_moduli(self, control, sys=None) -> np.ndarray:
        """|c_e(t_i)| / mu_e, shape (N, edges)."""
        return np.abs(control.values) / self.weight_vector(control.edges, sys)[None, :]

    @abstractmethod
    def integrand(self, scaled: np.ndarray) -> np.ndarray:
        """Per-step f0 values from scaled moduli of shape (N, edges)."""
        raise NotImplementedError

    @abstractmethod
    def constraint_measure(self, scaled: np.ndarray) -> np.ndarray:
        """The gauge whose unit sublevel set is the equivalent constraint set; shape (N,)."""
        raise NotImplementedError

    def evaluate(self, control, sys=None) -> float:
        """Left-endpoint Riemann sum of f0 over the grid."""
        return float(control.grid.dt * np.sum(self.integrand(self.scaled_moduli(control, sys))))

    def in_constraint_set(self, control, step: int, sys=None, rtol: float = 1e-12) -> bool:
        scaled = self.scaled_moduli(control, sys)[step : step + 1]
        return bool(self.constraint_measure(scaled)[0] <= 1.0 + rtol)

    def smooth_objective(self, U: np.ndarray, mu: np.ndarray, dt: float, **kwargs) -> Tuple[float, np.ndarray]:
        """Value and gradient with respect to the real controls U (N, edges) of the cost the solver minimizes."""
        raise NotImplementedError(f"The {self.type_name} cost is not minimized directly")
