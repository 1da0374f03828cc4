"""
Pontryagin lifts of solutions of the reduced problem and their residuals.

The covector P lives at the grid nodes and follows the discrete adjoint P_i = R_i^T P_{i+1}. The switching
function h_e on a step is the step average of <P, E_e rho>, and the Hamiltonian on a step is
sum_e U_e h_e + p0 f0(U). Its maximum over the admissible controls has a closed form for every cost:

    energy, length  clip(h mu^2 / (-2 p0), box) maximizes a concave quadratic
    area            0 while mu |h| <= -p0, unbounded otherwise; the excess max(mu |h|) + p0 is reported
    time-max        sum_e box_e |h_e| + p0, with f0 = 1 the running time

Length solutions are constant-speed energy solutions, so they are lifted with the energy Hamiltonian.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import pandas as pd

from .. import const
from ..dynamics import AdmissiblePair
from ..errors import DimensionMismatch
from ..resonance import realify, torus_directions
from ..system import BoundarySpec
from .steps import StepCache

logger = logging.getLogger(__name__)


@dataclass
class PMPLift:
    """
    Covectors at the nodes with the multiplier p0 <= 0, for a real pair on the same grid.

    `switching` and `hamiltonian` are cached from construction; `pmp_residual` recomputes both from the
    covectors, so a modified lift is judged on its own covectors.
    """

    kind: str
    p0: float
    covectors: np.ndarray
    switching: np.ndarray
    hamiltonian: np.ndarray
    hamiltonian_max: np.ndarray
    mu: np.ndarray
    box: np.ndarray

    def scaled(self, factor: float) -> "PMPLift":
        """The lift with every covector multiplied by `factor` and p0 unchanged."""
        return replace(self, covectors=self.covectors * factor, switching=self.switching * factor)

    def to_frame(self, times: np.ndarray) -> pd.DataFrame:
        data = {"t": times}
        for j in range(self.covectors.shape[1]):
            data[f"P_{j + 1}"] = self.covectors[:, j]
        # the Hamiltonian of step i is reported at its left node
        data["H"] = np.append(self.hamiltonian, np.nan)
        return pd.DataFrame(data)


def hamiltonian_values(kind: str, U: np.ndarray, h: np.ndarray, mu: np.ndarray, box: np.ndarray, p0: float):
    """Per-step Hamiltonian and its maximum over the admissible controls."""
    mu = mu[None, :]
    pairing = np.sum(U * h, axis=1)
    if kind == "time-max":
        return pairing + p0, np.sum(box[None, :] * np.abs(h), axis=1) + p0
    if kind == "area":
        f0 = np.sum(np.abs(U) / mu, axis=1)
        # the supremum is 0 or unbounded; the excess of mu |h| over -p0 stands in for it
        excess = np.max(mu * np.abs(h), axis=1) + p0
        excess = np.where(excess > const.PMP_TOL * max(-p0, 1.0), excess, 0.0)
        return pairing + p0 * f0, excess
    f0 = np.sum(U ** 2 / mu ** 2, axis=1)
    if p0 < 0:
        best = np.clip(h * mu ** 2 / (-2.0 * p0), -box[None, :], box[None, :])
        h_max = np.sum(best * h + p0 * best ** 2 / mu ** 2, axis=1)
    else:
        # p0 = 0: the pairing is linear in U
        h_max = np.sum(np.where(np.isfinite(box)[None, :], box[None, :] * np.abs(h),
                                np.where(np.abs(h) > 0, np.inf, 0.0)), axis=1)
    return pairing + p0 * f0, h_max


def hamiltonian_kind(cost_kind: str) -> str:
    return "energy" if cost_kind == "length" else cost_kind


def _lift_from_covectors(kind: str, problem, pair: AdmissiblePair, covectors: np.ndarray, p0: float) -> PMPLift:
    U = pair.control.values
    cache = StepCache(U, problem.edges, problem.n, problem.grid.dt)
    h = cache.switching(covectors, pair.trajectory.states)
    H, H_max = hamiltonian_values(kind, U, h, problem.mu, problem.box, p0)
    return PMPLift(kind, p0, covectors, h, H, H_max, problem.mu.copy(), problem.box.copy())


def build_normal_lift(problem, pair: AdmissiblePair, penalty) -> PMPLift:
    """
    The normal lift (p0 = -1) carried by the converged adjoint: P = -lam with lam_N = J^T m, where m are
    the updated boundary multipliers.
    """
    states = pair.trajectory.states
    cache = StepCache(pair.control.values, problem.edges, problem.n, problem.grid.dt)
    _, jacobian = problem.target.residual(states[-1])
    terminal = jacobian.T @ penalty.target_multipliers if jacobian.size else np.zeros(problem.n)
    covectors = -cache.backward(terminal)
    return _lift_from_covectors(hamiltonian_kind(problem.cost.type_name), problem, pair, covectors, -1.0)


def build_time_optimal_lift(problem, pair: AdmissiblePair) -> PMPLift:
    """
    Lift of a minimum-time transfer under the box.

    P_N is sought among the normals of the target set at rho_N: the coefficients are fitted by least squares so
    that box_e h_e tracks U_e, then P is scaled so that the mean of sum_e box_e |h_e| is 1 and p0 = -1 makes
    the maximized Hamiltonian vanish on average.
    """
    states = pair.trajectory.states
    cache = StepCache(pair.control.values, problem.edges, problem.n, problem.grid.dt)
    _, jacobian = problem.target.residual(states[-1])
    box = problem.box
    if jacobian.size == 0:
        covectors = np.zeros_like(states)
        return _lift_from_covectors("time-max", problem, pair, covectors, -1.0)

    basis = [-cache.backward(row) for row in jacobian]
    switching = np.stack([cache.switching(P, states) for P in basis], axis=-1)
    design = (switching * box[None, :, None]).reshape(-1, len(basis))
    goal = (pair.control.values / box[None, :]).ravel()
    coefficients, *_ = np.linalg.lstsq(design, goal, rcond=None)
    covectors = sum(c * P for c, P in zip(coefficients, basis))
    h = cache.switching(covectors, states)
    mean = float(np.mean(np.sum(box[None, :] * np.abs(h), axis=1)))
    if mean > 0:
        covectors = covectors / mean
    return _lift_from_covectors("time-max", problem, pair, covectors, -1.0)


@dataclass
class PMPResidualReport:
    state_residual: float
    costate_residual: float
    maximality_gap: float
    hamiltonian_mean: float
    hamiltonian_std: float
    constancy: float
    transversality_target: float
    transversality_source: float
    torus_transversality: float
    min_covector_norm: float

    def passed(self, tol: float = const.PMP_TOL, constancy_tol: float = const.CONSTANCY_TOL) -> bool:
        residuals = (self.state_residual, self.costate_residual, self.maximality_gap,
                     self.transversality_target, self.transversality_source, self.torus_transversality)
        return bool(max(residuals) <= tol and self.constancy <= constancy_tol and self.min_covector_norm > 0)

    def to_dict(self) -> dict:
        out = {key: float(value) for key, value in self.__dict__.items()}
        out["passed"] = self.passed()
        return out


def pmp_residual(pair: AdmissiblePair, lift: PMPLift, source: Optional[BoundarySpec] = None,
                 target: Optional[BoundarySpec] = None) -> PMPResidualReport:
    """
    Residuals of a lift along a real pair: the state and costate equations, the maximality gap
    max_i (H_M - H), the deviation of H from a constant (relative to its mean for energy and length, to |p0|
    otherwise), the pairing of P with the tangent directions of the boundary sets and of the phase torus, and
    the smallest |P| + |p0| over the nodes.
    """
    control = pair.control.as_real()
    states = np.real(pair.trajectory.states)
    N, E = control.values.shape
    if lift.covectors.shape != states.shape or lift.mu.shape != (E,):
        raise DimensionMismatch(
            f"Lift with covectors {lift.covectors.shape} and {lift.mu.shape[0]} edges does not match a pair with "
            f"states {states.shape} and {E} edges"
        )
    cache = StepCache(control.values, control.edges, control.n, control.grid.dt)
    P = lift.covectors
    predicted = np.einsum("iba,ib->ia", cache.steps, P[1:])
    costate = float(np.max(np.abs(P[:-1] - predicted), initial=0.0))
    h = cache.switching(P, states)
    H, H_max = hamiltonian_values(lift.kind, control.values, h, lift.mu, lift.box, lift.p0)
    gap = float(np.max(H_max - H, initial=0.0))
    mean, std = float(np.mean(H)), float(np.std(H))
    scale = max(abs(mean), 1e-15) if lift.kind == "energy" else max(abs(lift.p0), 1e-15)
    constancy = std / scale if std > 0 else 0.0

    def transversality(spec: Optional[BoundarySpec], rho: np.ndarray, covector: np.ndarray) -> float:
        if spec is None:
            return 0.0
        directions = spec.tangent_directions(rho)
        return float(np.max(np.abs(directions @ covector), initial=0.0))

    torus = 0.0
    for i in range(N + 1):
        directions = torus_directions(states[i])
        if directions.size:
            torus = max(torus, float(np.max(np.abs(directions @ realify(P[i])))))

    report = PMPResidualReport(
        state_residual=pair.residual(),
        costate_residual=costate,
        maximality_gap=gap,
        hamiltonian_mean=mean,
        hamiltonian_std=std,
        constancy=constancy,
        transversality_target=transversality(target, states[-1], P[-1]),
        transversality_source=transversality(source, states[0], P[0]),
        torus_transversality=torus,
        min_covector_norm=float(np.min(np.linalg.norm(P, axis=1)) + abs(lift.p0)),
    )
    logger.debug(f"PMP residuals: {report.to_dict()}")
    return report
