"""
Direct transcription of the reduced real problem.

Decision variables are the real controls U_e(t_i) on the edges (plus an unnormalized initial state when the
source is a moduli-set). The dynamics are enforced exactly by rotation steps, the boundary sets by an
augmented Lagrangian, and every inner problem is solved by L-BFGS-B with gradients from the discrete adjoint.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize
from tqdm import tqdm

from .. import const
from ..config import Config
from ..costs import AreaCost, CostFunctional, EnergyCost, LengthCost, TimeMaxCost
from ..dynamics import AdmissiblePair, ControlGrid, StateTrajectory, TimeGrid
from ..errors import ConfigError, NoConvergence, NotControllable
from ..system import BoundarySpec, LevelSystem, connected_components, is_controllable, require_valid
from .lift import PMPLift, build_normal_lift, build_time_optimal_lift
from .steps import StepCache

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 64
MAX_PENALTY = 1e12
MAX_DOUBLINGS = 12
# Outer iterations of a feasibility solve; an infeasible T keeps its violation at every penalty weight
FEASIBILITY_OUTER = 10


@dataclass
class SolveOptions:
    """Settings of `solve_reduced`. `N` defaults to 64 steps; `threads` to the QOC_THREADS variable."""

    T: float = 1.0
    N: Optional[int] = None
    max_iter: int = 500
    max_outer: int = 30
    grad_tol: float = 1e-5
    endpoint_tol: float = 1e-8
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    restarts: int = const.DEFAULT_RESTARTS
    seed: int = 0
    amplitude: float = 1.0
    time_tol: float = 1e-5
    threads: Optional[int] = None
    progress: bool = False

    def __post_init__(self):
        for name in ("T", "grad_tol", "endpoint_tol", "penalty_init", "time_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.penalty_growth <= 1:
            raise ConfigError(f"penalty_growth must exceed 1, got {self.penalty_growth}")
        if self.restarts < 1 or self.max_iter < 1 or self.max_outer < 1:
            raise ConfigError("restarts, max_iter and max_outer must be at least 1")
        if self.N is not None and self.N < 1:
            raise ConfigError(f"N must be at least 1, got {self.N}")

    @property
    def steps(self) -> int:
        return self.N or DEFAULT_STEPS

    @property
    def workers(self) -> int:
        if self.threads is not None:
            return max(1, int(self.threads))
        value = os.environ.get(const.THREADS_ENV, "1")
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigError(f"{const.THREADS_ENV} must be an integer, got {value!r}")

    @classmethod
    def from_config(cls, config: Config, **overrides) -> "SolveOptions":
        names = {f.name for f in fields(cls)}
        kwargs = {key: value for key, value in config.items() if key in names}
        kwargs.update({key: value for key, value in overrides.items() if value is not None})
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError(f"Bad solver settings: {e}")

    def to_config(self) -> Config:
        return Config(asdict(self))


@dataclass
class PenaltyState:
    """Augmented-Lagrangian multipliers and penalty weight for the boundary constraints."""

    target_multipliers: np.ndarray
    sigma: float
    source_multipliers: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, problem: "ReducedProblem", sigma: float) -> "PenaltyState":
        source = np.zeros(problem.source_rows) if problem.free_source else None
        return cls(np.zeros(problem.target_rows), float(sigma), source)

    def updated(self, target_values: np.ndarray, source_values: Optional[np.ndarray]) -> "PenaltyState":
        source = None
        if self.source_multipliers is not None:
            source = self.source_multipliers + self.sigma * source_values
        return PenaltyState(self.target_multipliers + self.sigma * target_values, self.sigma, source)


class ReducedProblem:
    """
    The transfer problem on S^{n-1} for one grid and one cost.

    `cost_options` are forwarded to the cost's smooth objective (the smoothing width for area).
    `feasibility` drops the cost and keeps only the boundary constraints. `initial_state` pins the initial
    real state, signs included, in place of the source set.
    """

    def __init__(self, sys: LevelSystem, cost: CostFunctional, source: Optional[BoundarySpec], target: BoundarySpec,
                 grid: TimeGrid, bounds: Optional[np.ndarray] = None, feasibility: bool = False,
                 initial_state: Optional[np.ndarray] = None):
        self.sys = sys
        self.cost = cost
        self.source = source
        self.target = target
        self.grid = grid
        self.edges = sys.edges
        self.n = sys.n
        self.E = len(self.edges)
        self.mu = cost.weight_vector(self.edges, sys)
        self.box = bounds if bounds is not None else np.full(self.E, np.inf)
        self.feasibility = feasibility
        self.cost_options: Dict[str, float] = {}
        self.initial_state = None if initial_state is None else np.asarray(initial_state, dtype=float)
        self.free_source = self.initial_state is None and not source.is_point
        self.target_rows = len(target.constraint_rows(self.n))
        self.source_rows = len(source.constraint_rows(self.n)) if self.free_source else 0

    @property
    def size(self) -> int:
        return self.grid.N * self.E + (self.n if self.free_source else 0)

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        U = x[: self.grid.N * self.E].reshape(self.grid.N, self.E)
        if self.initial_state is not None:
            return U, self.initial_state, None
        if not self.free_source:
            return U, self.source.real_state(self.n), None
        z = x[self.grid.N * self.E :]
        return U, z / np.linalg.norm(z), z

    def scipy_bounds(self) -> Optional[List[Tuple[Optional[float], Optional[float]]]]:
        if not np.any(np.isfinite(self.box)):
            return None
        per_step = [(-b, b) if math.isfinite(b) else (None, None) for b in self.box]
        bounds = per_step * self.grid.N
        return bounds + [(None, None)] * (self.n if self.free_source else 0)

    def simulate(self, x: np.ndarray) -> Tuple[StepCache, np.ndarray]:
        U, rho0, _ = self.split(x)
        cache = StepCache(U, self.edges, self.n, self.grid.dt)
        return cache, cache.forward(rho0)

    def constraint_values(self, x: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        _, states = self.simulate(x)
        target_values, _ = self.target.residual(states[-1])
        source_values = None
        if self.free_source:
            _, rho0, _ = self.split(x)
            source_values, _ = self.source.residual(rho0)
        return target_values, source_values

    def violation(self, x: np.ndarray) -> float:
        target_values, source_values = self.constraint_values(x)
        values = target_values if source_values is None else np.concatenate([target_values, source_values])
        return float(np.max(np.abs(values), initial=0.0))

    def cost_terms(self, U: np.ndarray) -> Tuple[float, np.ndarray]:
        if self.feasibility or isinstance(self.cost, TimeMaxCost):
            return 0.0, np.zeros_like(U)
        cost = self.cost.surrogate() if isinstance(self.cost, LengthCost) else self.cost
        return cost.smooth_objective(U, self.mu, self.grid.dt, **self.cost_options)

    def lagrangian(self, x: np.ndarray, penalty: PenaltyState) -> Tuple[float, np.ndarray]:
        """Augmented Lagrangian value and its gradient with respect to x."""
        U, rho0, z = self.split(x)
        cache = StepCache(U, self.edges, self.n, self.grid.dt)
        states = cache.forward(rho0)
        value, grad_U = self.cost_terms(U)

        target_values, jacobian = self.target.residual(states[-1])
        value += float(penalty.target_multipliers @ target_values) + 0.5 * penalty.sigma * float(target_values @ target_values)
        terminal = jacobian.T @ (penalty.target_multipliers + penalty.sigma * target_values)
        lam = cache.backward(terminal)
        grad_U = grad_U + cache.pullback(lam[1:], states[:-1])
        if not self.free_source:
            return value, grad_U.ravel()

        source_values, source_jacobian = self.source.residual(rho0)
        value += float(penalty.source_multipliers @ source_values) + 0.5 * penalty.sigma * float(source_values @ source_values)
        grad_rho0 = lam[0] + source_jacobian.T @ (penalty.source_multipliers + penalty.sigma * source_values)
        grad_z = (grad_rho0 - rho0 * (rho0 @ grad_rho0)) / np.linalg.norm(z)
        return value, np.concatenate([grad_U.ravel(), grad_z])

    def projected_gradient_norm(self, x: np.ndarray, gradient: np.ndarray) -> float:
        """Largest projected gradient entry, per unit time for the control entries."""
        g = gradient.copy()
        lower, upper = self._box_arrays()
        NE = self.grid.N * self.E
        at_lower = np.isclose(x[:NE], lower, rtol=0, atol=1e-12) & (g[:NE] > 0)
        at_upper = np.isclose(x[:NE], upper, rtol=0, atol=1e-12) & (g[:NE] < 0)
        g[:NE][at_lower | at_upper] = 0.0
        g[:NE] /= self.grid.dt
        return float(np.max(np.abs(g), initial=0.0))

    def _box_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        upper = np.tile(self.box, self.grid.N)
        return -upper, upper

    def initial_guess(self, rng: np.random.Generator, amplitude: float) -> np.ndarray:
        """A random constant per edge plus small per-step noise, kept inside the box."""
        U = amplitude * (rng.standard_normal(self.E)[None, :] + 0.1 * rng.standard_normal((self.grid.N, self.E)))
        finite = np.isfinite(self.box)
        if np.any(finite):
            U[:, finite] = np.clip(U[:, finite], -0.9 * self.box[finite], 0.9 * self.box[finite])
        if not self.free_source:
            return U.ravel()
        return np.concatenate([U.ravel(), np.abs(rng.standard_normal(self.n)) + 0.1])

    def to_pair(self, x: np.ndarray) -> AdmissiblePair:
        U, rho0, _ = self.split(x)
        cache = StepCache(U, self.edges, self.n, self.grid.dt)
        trajectory = StateTrajectory(self.grid, cache.forward(rho0), "real")
        control = ControlGrid(self.grid, "U", self.n, tuple(self.edges), U.copy())
        return AdmissiblePair(trajectory, control, self.sys)


def penalized_objective(sys: LevelSystem, cost: CostFunctional, pair: AdmissiblePair, target: BoundarySpec,
                        penalty: PenaltyState) -> float:
    """Discretized cost plus the augmented-Lagrangian endpoint terms, for the pair's control and initial state."""
    problem = _problem_for_pair(sys, cost, pair, target)
    value, _ = problem.lagrangian(pair.control.values.ravel(), penalty)
    return value


def adjoint_gradient(sys: LevelSystem, cost: CostFunctional, pair: AdmissiblePair, target: BoundarySpec,
                     penalty: PenaltyState) -> np.ndarray:
    """
    Gradient of `penalized_objective` with respect to every U_e(t_i), shape (N, edges), by one backward
    sweep through the transposed steps.
    """
    problem = _problem_for_pair(sys, cost, pair, target)
    _, gradient = problem.lagrangian(pair.control.values.ravel(), penalty)
    return gradient.reshape(pair.grid.N, problem.E)


def _problem_for_pair(sys, cost, pair, target) -> ReducedProblem:
    control = pair.control.as_real()
    if list(control.edges) != sys.edges:
        raise ConfigError("The control must carry the system's edges in the system's order")
    rho0 = np.real(pair.trajectory.initial)
    return ReducedProblem(sys, cost, None, target, pair.grid, initial_state=rho0)


@dataclass
class SolveResult:
    pair: AdmissiblePair
    lift: Optional[PMPLift]
    cost_kind: str
    cost_value: float
    converged: bool
    violation: float
    grad_norm: float
    restart: int
    minimal_time: Optional[float] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def __iter__(self):
        # (pair, lift) unpacking
        return iter((self.pair, self.lift))

    def to_dict(self) -> dict:
        out = {
            "cost_kind": self.cost_kind,
            "cost": self.cost_value,
            "converged": self.converged,
            "violation": self.violation,
            "grad_norm": self.grad_norm,
            "restart": self.restart,
            "T": self.pair.grid.T,
            "N": self.pair.grid.N,
        }
        if self.minimal_time is not None:
            out["minimal_time"] = self.minimal_time
        out.update(self.diagnostics)
        return out


@dataclass
class _RestartOutcome:
    index: int
    x: np.ndarray
    penalty: PenaltyState
    violation: float
    grad_norm: float
    converged: bool
    cost_value: float


def _augmented_lagrangian(problem: ReducedProblem, x: np.ndarray, opts: SolveOptions, index: int,
                          stages=({},)) -> _RestartOutcome:
    """One restart: for each stage of cost options, the outer multiplier loop around L-BFGS-B."""
    penalty = PenaltyState.initial(problem, opts.penalty_init)
    bounds = problem.scipy_bounds()
    violation, grad_norm, converged = math.inf, math.inf, False
    max_outer = min(opts.max_outer, FEASIBILITY_OUTER) if problem.feasibility else opts.max_outer
    for stage in stages:
        problem.cost_options = dict(stage)
        previous = math.inf
        for outer in range(max_outer):
            result = minimize(
                problem.lagrangian,
                x,
                args=(penalty,),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": opts.max_iter, "ftol": 1e-15, "gtol": 1e-2 * opts.grad_tol * problem.grid.dt,
                         "maxcor": 20},
            )
            x = result.x
            target_values, source_values = problem.constraint_values(x)
            _, gradient = problem.lagrangian(x, penalty)
            grad_norm = problem.projected_gradient_norm(x, gradient)
            penalty = penalty.updated(target_values, source_values)
            violation = problem.violation(x)
            logger.debug(
                f"restart {index} stage {stage} outer {outer}: violation {violation:.3e}, "
                f"gradient {grad_norm:.3e}, sigma {penalty.sigma:.1e}"
            )
            converged = violation <= opts.endpoint_tol and (problem.feasibility or grad_norm <= opts.grad_tol)
            if converged:
                break
            if violation > 0.25 * previous:
                penalty.sigma = min(penalty.sigma * opts.penalty_growth, MAX_PENALTY)
            previous = violation
    pair = problem.to_pair(x)
    return _RestartOutcome(index, x, penalty, violation, grad_norm, converged,
                           problem.cost.evaluate(pair.control, problem.sys))


def _run_restarts(problem_factory, opts: SolveOptions, stages=({},), stop_on_success: bool = False,
                  label: str = "restarts") -> List[_RestartOutcome]:
    """
    Run the seeded restarts, concurrently when more than one worker is allowed. Every restart builds its own
    problem so that restarts share no mutable state.
    """

    def run(index: int) -> _RestartOutcome:
        problem = problem_factory()
        rng = np.random.default_rng([opts.seed, index])
        return _augmented_lagrangian(problem, problem.initial_guess(rng, opts.amplitude), opts, index, stages)

    if stop_on_success or opts.workers == 1:
        outcomes = []
        for index in range(opts.restarts):
            outcome = run(index)
            outcomes.append(outcome)
            if stop_on_success and outcome.converged:
                break
        return outcomes

    with ThreadPoolExecutor(max_workers=opts.workers) as executor:
        iterator = executor.map(run, range(opts.restarts))
        if opts.progress:
            iterator = tqdm(iterator, total=opts.restarts, desc=label)
        return list(iterator)


def _best(outcomes: List[_RestartOutcome]) -> _RestartOutcome:
    return min(outcomes, key=lambda o: (not o.converged, o.cost_value if o.converged else o.violation, o.index))


def _box_for(sys: LevelSystem, cost: CostFunctional) -> np.ndarray:
    box = sys.bound_vector.copy()
    if isinstance(cost, TimeMaxCost):
        box = np.minimum(box, cost.weight_vector(sys.edges, sys))
    return box


def _check_request(sys: LevelSystem, source: BoundarySpec, target: BoundarySpec) -> None:
    require_valid(sys)
    if not is_controllable(sys):
        raise NotControllable(connected_components(sys))
    source.validate(sys.n)
    target.validate(sys.n)


def _zero_solution(sys, cost, source, target, grid) -> Optional[SolveResult]:
    """Zero control is optimal when the source point already lies in the target."""
    if not source.is_point:
        return None
    rho0 = source.real_state(sys.n)
    values, _ = target.residual(rho0)
    if values.size and np.max(np.abs(values)) > 1e-12:
        return None
    problem = ReducedProblem(sys, cost, source, target, grid)
    pair = problem.to_pair(np.zeros(problem.size))
    lift = build_normal_lift(problem, pair, PenaltyState.initial(problem, 0.0))
    result = SolveResult(pair, lift, cost.type_name, 0.0, True, 0.0, 0.0, -1)
    if isinstance(cost, TimeMaxCost):
        result.minimal_time = 0.0
    return result


def solve_reduced(sys: LevelSystem, cost: CostFunctional, source: BoundarySpec, target: BoundarySpec,
                  opts: Optional[SolveOptions] = None) -> SolveResult:
    """
    Minimize the cost over real controls steering the source set to the target set on the real sphere.

    Energy and area are minimized at fixed T (area through a smoothing continuation), length through its
    energy surrogate, and time-max by bisection on T over feasibility problems under the box
    |U_e| <= mu_e (intersected with the system bounds).

    Returns:
        SolveResult: the best restart's real pair, its normal PMP lift (p0 = -1) and diagnostics. It unpacks
        as (pair, lift).

    Raises:
        NotControllable: the coupling graph is disconnected.
        NoConvergence: no restart met the tolerances; `best` holds the least-violating iterate.
    """
    opts = opts or SolveOptions()
    _check_request(sys, source, target)
    grid = TimeGrid(opts.T, opts.steps)
    zero = _zero_solution(sys, cost, source, target, grid)
    if zero is not None:
        logger.info("Source lies in the target set: zero control")
        return zero

    if isinstance(cost, TimeMaxCost):
        return _solve_time_max(sys, cost, source, target, opts)

    stages = ({},)
    if isinstance(cost, AreaCost):
        stages = tuple({"delta": delta} for delta in AreaCost.smoothing_schedule())
    box = _box_for(sys, cost)

    def factory():
        return ReducedProblem(sys, cost, source, target, grid, bounds=box)

    logger.info(f"Solving {cost.type_name} transfer on T = {opts.T:g}, N = {grid.N} with {opts.restarts} restarts")
    outcomes = _run_restarts(factory, opts, stages)
    for outcome in outcomes:
        if not outcome.converged:
            logger.warning(f"Restart {outcome.index} did not converge (violation {outcome.violation:.2e})")
    best = _best(outcomes)
    problem = factory()
    problem.cost_options = dict(stages[-1])
    result = _finish(problem, best, cost)
    if not best.converged:
        raise NoConvergence(
            f"No restart met endpoint_tol = {opts.endpoint_tol:g} and grad_tol = {opts.grad_tol:g}",
            best=result,
            diagnostics={"violation": best.violation, "grad_norm": best.grad_norm},
        )
    logger.info(f"Best restart {best.index}: {cost.type_name} = {best.cost_value:.10g}")
    return result


def _finish(problem: ReducedProblem, outcome: _RestartOutcome, cost: CostFunctional) -> SolveResult:
    pair = problem.to_pair(outcome.x)
    lift = build_normal_lift(problem, pair, outcome.penalty)
    result = SolveResult(pair, lift, cost.type_name, outcome.cost_value, outcome.converged, outcome.violation,
                         outcome.grad_norm, outcome.index)
    if isinstance(cost, EnergyCost):
        # same path at unit speed under the ellipsoid: time sqrt(T E)
        result.diagnostics["time_under_ellipsoid"] = math.sqrt(problem.grid.T * outcome.cost_value)
    if isinstance(cost, LengthCost):
        result.diagnostics["energy"] = cost.surrogate().evaluate(pair.control, problem.sys)
    return result


def _solve_time_max(sys, cost, source, target, opts: SolveOptions) -> SolveResult:
    box = _box_for(sys, cost)
    if not np.all(np.isfinite(box)):
        raise ConfigError("Time-max needs finite bounds on every edge")
    N = opts.steps

    def attempt(T: float) -> Tuple[bool, ReducedProblem, _RestartOutcome]:
        grid = TimeGrid(T, N)

        def factory():
            return ReducedProblem(sys, cost, source, target, grid, bounds=box, feasibility=True)

        outcomes = _run_restarts(factory, opts, stop_on_success=True)
        best = _best(outcomes)
        return best.converged, factory(), best

    hi = opts.T
    feasible, problem, outcome = attempt(hi)
    lo = 0.0
    doublings = 0
    while not feasible:
        if doublings >= MAX_DOUBLINGS:
            raise NoConvergence(f"No feasible transfer found up to T = {hi:g}",
                                diagnostics={"T": hi, "violation": outcome.violation})
        lo = hi
        hi *= 2.0
        doublings += 1
        feasible, problem, outcome = attempt(hi)

    while hi - lo > opts.time_tol:
        mid = 0.5 * (lo + hi)
        ok, mid_problem, mid_outcome = attempt(mid)
        logger.info(f"Bisection on T: [{lo:.8f}, {hi:.8f}] -> {mid:.8f} {'feasible' if ok else 'infeasible'}")
        if ok:
            hi, problem, outcome = mid, mid_problem, mid_outcome
        else:
            lo = mid

    pair = problem.to_pair(outcome.x)
    lift = build_time_optimal_lift(problem, pair)
    return SolveResult(pair, lift, cost.type_name, outcome.cost_value, True, outcome.violation, outcome.grad_norm,
                       outcome.index, minimal_time=hi, diagnostics={"time_lower_bound": lo})
