import numpy as np

from .base import CostFunctional

# Smoothing schedule for |U|: delta starts here and shrinks geometrically to the floor
SMOOTHING_START = 1e-2
SMOOTHING_FLOOR = 1e-8
SMOOTHING_FACTOR = 0.1


class AreaCost(CostFunctional):
    """
    f0 = sum_e |c_e| / mu_e, proportional to the area of the pulses. Reparametrization invariant.

    The equivalent constraint set is the scaled cross-polytope sum_e |c_e| / mu_e <= 1.
    """

    type_name = "area"
    reparametrization_invariant = True

    def __init__(self, weights=None, final_time: str = "fixed", **kwargs):
        super().__init__(weights=weights, final_time=final_time, **kwargs)

    def integrand(self, scaled: np.ndarray) -> np.ndarray:
        return np.sum(scaled, axis=1)

    def constraint_measure(self, scaled: np.ndarray) -> np.ndarray:
        return np.sum(scaled, axis=1)

    def smooth_objective(self, U, mu, dt, delta: float = SMOOTHING_FLOOR, **kwargs):
        root = np.sqrt(U ** 2 + delta ** 2)
        value = dt * float(np.sum((root - delta) / mu[None, :]))
        return value, dt * U / root / mu[None, :]

    @staticmethod
    def smoothing_schedule():
        delta = SMOOTHING_START
        while delta > SMOOTHING_FLOOR * (1 + 1e-9):
            yield delta
            delta *= SMOOTHING_FACTOR
        yield SMOOTHING_FLOOR
