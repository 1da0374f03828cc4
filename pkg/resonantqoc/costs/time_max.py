import numpy as np

from .base import CostFunctional


class TimeMaxCost(CostFunctional):
    """
    f0 = max_e |c_e| / mu_e. Under the box |c_e| <= mu_e minimizing it is minimizing the transfer time,
    which the solver does by bisection on T over feasibility problems.
    """

    type_name = "time-max"
    reparametrization_invariant = True

    def __init__(self, weights=None, final_time: str = "free", **kwargs):
        super().__init__(weights=weights, final_time=final_time, **kwargs)

    def integrand(self, scaled: np.ndarray) -> np.ndarray:
        return np.max(scaled, axis=1, initial=0.0)

    def constraint_measure(self, scaled: np.ndarray) -> np.ndarray:
        return np.max(scaled, axis=1, initial=0.0)
