import numpy as np

from .base import CostFunctional


class EnergyCost(CostFunctional):
    """
    f0 = sum_e |c_e|^2 / mu_e^2. Minimizers run at constant speed; the final time must be fixed.

    The equivalent time-minimization constraint set is the ellipsoid sum_e |c_e|^2 / mu_e^2 <= 1.
    """

    type_name = "energy"
    reparametrization_invariant = False

    def __init__(self, weights=None, final_time: str = "fixed", **kwargs):
        super().__init__(weights=weights, final_time=final_time, **kwargs)

    def integrand(self, scaled: np.ndarray) -> np.ndarray:
        return np.sum(scaled ** 2, axis=1)

    def constraint_measure(self, scaled: np.ndarray) -> np.ndarray:
        return np.sum(scaled ** 2, axis=1)

    def smooth_objective(self, U, mu, dt, **kwargs):
        w = 1.0 / mu ** 2
        value = dt * float(np.sum(U ** 2 * w[None, :]))
        return value, 2.0 * dt * U * w[None, :]
