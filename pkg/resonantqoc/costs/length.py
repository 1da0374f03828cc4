import numpy as np

from .base import CostFunctional
from .energy import EnergyCost


class LengthCost(CostFunctional):
    """f0 = sqrt(sum_e |c_e|^2 / mu_e^2); invariant under reparametrization, so the final time may be free."""

    type_name = "length"
    reparametrization_invariant = True

    def __init__(self, weights=None, final_time: str = "fixed", **kwargs):
        super().__init__(weights=weights, final_time=final_time, **kwargs)

    def integrand(self, scaled: np.ndarray) -> np.ndarray:
        return np.sqrt(np.sum(scaled ** 2, axis=1))

    def constraint_measure(self, scaled: np.ndarray) -> np.ndarray:
        return np.sum(scaled ** 2, axis=1)

    def surrogate(self) -> EnergyCost:
        """
        The energy cost with the same weights. Its minimizers run at constant speed, and a constant-speed
        length minimizer minimizes energy, so the solver minimizes this instead.
        """
        return EnergyCost(weights=self._config_dict["weights"])
