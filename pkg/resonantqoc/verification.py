"""
Property suites behind the `verify` subcommand.

Every criterion is a function registered with `criterion(...)`; it receives a `VerifyContext` and returns its
measured values together with the thresholds it compares them against. `run_verify` never raises for a failed
or crashed criterion: the failure is recorded in the report instead.
"""
import itertools
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from . import FIXTURES_DIR, const
from .config import Config, read_json
from .costs import EnergyCost, constant_speed_residual, evaluate_all, load_cost
from .dynamics import (
    AdmissiblePair,
    ControlGrid,
    TimeGrid,
    eliminate_drift,
    propagate_drift,
    propagate_driftless,
    propagate_real,
)
from .errors import QOCError
from .optimizer import (
    PenaltyState,
    SolveOptions,
    adjoint_gradient,
    classify_extremal,
    clean_windows,
    distribution_rank,
    partition_indexes,
    penalized_objective,
    pmp_residual,
    solve_reduced,
    spanning_family_rank,
)
from .resonance import (
    classify_resonance,
    counterexample_pair,
    decompose_intervals,
    phase_drift,
    resonance_transform,
    rot_alpha,
    uv_decompose,
)
from .system import BoundarySpec, LevelSystem, is_controllable, is_transitive

logger = logging.getLogger(__name__)


@dataclass
class VerifyContext:
    fixtures: str = FIXTURES_DIR
    seed: int = 0
    # instance counts are multiplied by `scale`; unit tests run with a fraction of the full suites
    scale: float = 1.0
    progress: bool = False
    # solutions shared by the solver-based criteria
    solutions: Dict[str, object] = field(default_factory=dict)

    def count(self, full: int) -> int:
        return max(1, int(round(full * self.scale)))

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def fixture(self, name: str) -> Config:
        return Config(read_json(os.path.join(self.fixtures, name)))

    def instances(self, full: int, desc: str):
        iterator = range(self.count(full))
        return tqdm(iterator, desc=desc, leave=False) if self.progress else iterator


@dataclass
class Criterion:
    id: str
    group: str
    description: str
    func: Callable[[VerifyContext], Tuple[Dict[str, float], Dict[str, float], bool]]


@dataclass
class CriterionResult:
    id: str
    group: str
    description: str
    passed: bool
    measured: Dict[str, float] = field(default_factory=dict)
    thresholds: Dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "group": self.group,
            "description": self.description,
            "passed": self.passed,
            "measured": self.measured,
            "thresholds": self.thresholds,
            "seconds": self.seconds,
            "error": self.error,
        }


CRITERIA: Dict[str, Criterion] = {}


def criterion(id: str, group: str, description: str):
    def register(func):
        CRITERIA[id] = Criterion(id, group, description, func)
        return func

    return register


def random_system(rng: np.random.Generator, n: int, extra_edges: int = 1, bound: float = math.inf) -> LevelSystem:
    """A connected system: a random spanning tree plus up to `extra_edges` further edges."""
    order = rng.permutation(n)
    edges = {tuple(sorted((int(order[i]), int(order[rng.integers(0, i)])))) for i in range(1, n)}
    others = [e for e in itertools.combinations(range(n), 2) if e not in edges]
    for idx in rng.permutation(len(others))[:extra_edges]:
        edges.add(others[idx])
    energies = np.sort(rng.uniform(0.0, 1.0, n))
    return LevelSystem.build(energies, sorted(edges), bound=bound)


def random_unit_state(rng: np.random.Generator, n: int) -> np.ndarray:
    psi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return psi / np.linalg.norm(psi)


def smooth_series(rng: np.random.Generator, grid: TimeGrid, amplitude: float, modes: int = 3,
                  complex_valued: bool = True) -> np.ndarray:
    """A few Fourier modes sampled at step midpoints."""
    t = grid.midpoints / grid.T
    out = np.zeros(grid.N, dtype=complex if complex_valued else float)
    for m in range(modes):
        coefficient = rng.standard_normal() + (1j * rng.standard_normal() if complex_valued else 0.0)
        out = out + coefficient * np.cos(np.pi * m * t + rng.uniform(0, 2 * np.pi))
    return amplitude * out / modes


def random_skew_pair(rng: np.random.Generator, sys: LevelSystem, grid: TimeGrid, amplitude: float) -> AdmissiblePair:
    values = np.column_stack([smooth_series(rng, grid, amplitude) for _ in sys.edges])
    control = ControlGrid(grid, "H", sys.n, tuple(sys.edges), values)
    return AdmissiblePair(propagate_driftless(control, random_unit_state(rng, sys.n)), control, sys)


@criterion("controllability", "system", "Connectivity of the coupling graph agrees with the Lie-rank oracle")
def _controllability(ctx: VerifyContext):
    rng = ctx.rng(1)
    disagreements, graphs = 0, 0
    for n in (2, 3, 4):
        complete = list(itertools.combinations(range(n), 2))
        energies = np.sort(rng.uniform(0.0, 1.0, n))
        for size in range(len(complete) + 1):
            for edges in itertools.combinations(complete, size):
                sys = LevelSystem.build(energies, edges)
                graphs += 1
                if is_controllable(sys) != is_transitive(sys):
                    disagreements += 1
                    logger.warning(f"Controllability disagreement for n = {n}, edges {edges}")
    return {"graphs": graphs, "disagreements": disagreements}, {"disagreements": 0}, disagreements == 0


@criterion("drift-elimination", "dynamics", "Drifted and driftless propagation give the same moduli")
def _drift_elimination(ctx: VerifyContext):
    rng = ctx.rng(2)
    refine, N, worst = 32, 200, 0.0
    for _ in ctx.instances(100, "drift elimination"):
        n = int(rng.integers(2, 5))
        sys = random_system(rng, n)
        grid = TimeGrid(1.0, N)
        values = np.column_stack([smooth_series(rng, grid, 0.5) for _ in sys.edges])
        V = ControlGrid(grid, "V", n, tuple(sys.edges), values)
        psi0 = random_unit_state(rng, n)
        drifted = propagate_drift(sys, V, psi0)
        driftless = propagate_driftless(eliminate_drift(sys, V, refine), psi0)
        deviation = np.max(np.abs(drifted.moduli() - driftless.moduli()[::refine]))
        worst = max(worst, float(deviation))
    return {"max_modulus_deviation": worst}, {"max_modulus_deviation": 1e-8}, worst <= 1e-8


@criterion("resonance-construction", "resonance",
           "The resonant representative keeps the populations and lowers every cost")
def _resonance_construction(ctx: VerifyContext):
    rng = ctx.rng(3)
    N = 4000
    population, phase, cost_excess, energy_gap = 0.0, 0.0, -math.inf, math.inf
    verdicts_ok = True
    for _ in ctx.instances(100, "resonance construction"):
        n = int(rng.integers(2, 5))
        sys = random_system(rng, n)
        pair = random_skew_pair(rng, sys, TimeGrid(1.0, N), 0.5)
        resonant = resonance_transform(pair, tol=1e-6)
        population = max(population, float(np.max(np.abs(
            resonant.trajectory.populations() - pair.trajectory.populations()))))
        phase = max(phase, float(np.max(phase_drift(resonant.trajectory))))
        verdicts_ok &= classify_resonance(resonant).is_resonant

        before = evaluate_all(pair.control, sys)
        after = evaluate_all(resonant.control, sys)
        cost_excess = max(cost_excess, max(after[k] - before[k] for k in before))
        removed = before["energy"] - after["energy"]
        uv = uv_decompose(pair, decompose_intervals(pair.trajectory, pair.control.edges))
        if uv.v_energy() > 1e-6:
            energy_gap = min(energy_gap, removed)
    measured = {
        "max_population_deviation": population,
        "max_phase_drift": phase,
        "max_cost_increase": cost_excess,
        "min_energy_decrease": energy_gap if math.isfinite(energy_gap) else 0.0,
        "all_resonant": float(verdicts_ok),
    }
    thresholds = {"max_population_deviation": 1e-8, "max_phase_drift": 1e-6, "max_cost_increase": 1e-12,
                  "min_energy_decrease": 1e-8}
    passed = (population <= 1e-8 and phase <= 1e-6 and cost_excess <= 1e-12 and verdicts_ok
              and (not math.isfinite(energy_gap) or energy_gap > 1e-8))
    return measured, thresholds, passed


@criterion("rot-alpha", "resonance", "Diagonal phase rotations keep every cost and the dynamics")
def _rot_alpha(ctx: VerifyContext):
    rng = ctx.rng(4)
    cost_change, residual = 0.0, 0.0
    for _ in ctx.instances(100, "rot alpha"):
        n = int(rng.integers(2, 5))
        sys = random_system(rng, n)
        pair = random_skew_pair(rng, sys, TimeGrid(1.0, 200), 1.0)
        rotated = rot_alpha(pair, rng.uniform(-np.pi, np.pi, n))
        before = evaluate_all(pair.control, sys)
        after = evaluate_all(rotated.control, sys)
        cost_change = max(cost_change, max(abs(after[k] - before[k]) for k in before))
        residual = max(residual, rotated.residual())
    measured = {"max_cost_change": cost_change, "max_dynamics_residual": residual}
    thresholds = {"max_cost_change": 1e-12, "max_dynamics_residual": const.ADMISSIBILITY_TOL}
    return measured, thresholds, cost_change <= 1e-12 and residual <= const.ADMISSIBILITY_TOL


@criterion("counterexample", "resonance", "The two built-in ladder controls share a path; only one is resonant")
def _counterexample(ctx: VerifyContext):
    pair_a, pair_b = counterexample_pair()
    t = pair_a.grid.nodes
    expected = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t), np.zeros_like(t)])
    deviation = max(float(np.max(np.abs(p.trajectory.states - expected))) for p in (pair_a, pair_b))
    status_a = classify_resonance(pair_a).status
    status_b = classify_resonance(pair_b).status
    measured = {"max_path_deviation": deviation, "pair_A": status_a, "pair_B": status_b}
    thresholds = {"max_path_deviation": 1e-10, "pair_A": const.RESONANT, "pair_B": const.NEITHER}
    passed = deviation <= 1e-10 and status_a == const.RESONANT and status_b == const.NEITHER
    return measured, thresholds, passed


def _fixture_solution(ctx: VerifyContext, system: str, request: str, cost: str):
    """Solve a bundled request once per context."""
    key = f"{system}:{request}:{cost}"
    if key not in ctx.solutions:
        sys = LevelSystem.from_config(ctx.fixture(system))
        config = ctx.fixture(request)
        spec = load_cost(ctx.fixture(cost))
        opts = SolveOptions.from_config(config, seed=ctx.seed)
        source = BoundarySpec.from_config(config.source)
        target = BoundarySpec.from_config(config.target)
        ctx.solutions[key] = (sys, spec, source, target, solve_reduced(sys, spec, source, target, opts))
    return ctx.solutions[key]


@criterion("two-level-energy", "optimizer", "Two-level eigenstate transfer at T = 1 costs pi^2/4")
def _two_level_energy(ctx: VerifyContext):
    *_, result = _fixture_solution(ctx, "two_level.json", "solve_two_level.json", "energy_cost.json")
    error = abs(result.cost_value - np.pi ** 2 / 4)
    return {"cost": result.cost_value, "error": error}, {"error": 1e-3}, error <= 1e-3


@criterion("two-level-time", "optimizer", "Two-level eigenstate transfer under a unit bound takes pi/2")
def _two_level_time(ctx: VerifyContext):
    *_, result = _fixture_solution(ctx, "two_level.json", "solve_two_level.json", "time_max_cost.json")
    error = abs(result.minimal_time - np.pi / 2)
    return {"minimal_time": result.minimal_time, "error": error}, {"error": 1e-3}, error <= 1e-3


@criterion("gradient-check", "optimizer", "Adjoint gradients match central finite differences")
def _gradient_check(ctx: VerifyContext):
    rng = ctx.rng(7)
    worst, h = 0.0, 1e-6
    for _ in ctx.instances(20, "gradient check"):
        n = int(rng.integers(2, 5))
        sys = random_system(rng, n)
        grid = TimeGrid(1.0, 20)
        U = np.column_stack([smooth_series(rng, grid, 1.0, complex_valued=False) for _ in sys.edges])
        U = U + 0.1 * rng.standard_normal(U.shape)
        control = ControlGrid(grid, "U", n, tuple(sys.edges), U)
        rho0 = rng.standard_normal(n)
        pair = AdmissiblePair(propagate_real(control, rho0 / np.linalg.norm(rho0)), control, sys)
        target = BoundarySpec.eigenstate(int(rng.integers(0, n)))
        rows = len(target.constraint_rows(n))
        penalty = PenaltyState(rng.standard_normal(rows), 10.0)
        cost = EnergyCost()
        gradient = adjoint_gradient(sys, cost, pair, target, penalty)

        entries = [(int(rng.integers(0, grid.N)), int(rng.integers(0, len(sys.edges)))) for _ in range(10)]
        exact, approx = [], []
        for i, e in entries:
            shifted = []
            for sign in (1.0, -1.0):
                V = U.copy()
                V[i, e] += sign * h
                moved = control.with_values(V)
                shifted.append(penalized_objective(
                    sys, cost, AdmissiblePair(propagate_real(moved, pair.trajectory.initial), moved, sys), target,
                    penalty))
            approx.append((shifted[0] - shifted[1]) / (2 * h))
            exact.append(gradient[i, e])
        exact, approx = np.array(exact), np.array(approx)
        worst = max(worst, float(np.linalg.norm(exact - approx) / max(np.linalg.norm(exact), 1e-12)))
    return {"max_relative_error": worst}, {"max_relative_error": 1e-5}, worst <= 1e-5


def _energy_solutions(ctx: VerifyContext):
    return [
        _fixture_solution(ctx, "two_level.json", "solve_two_level.json", "energy_cost.json"),
        _fixture_solution(ctx, "ladder3.json", "solve_ladder3.json", "energy_cost.json"),
    ]


@criterion("pmp-consistency", "optimizer", "Converged energy solutions carry a normal lift with constant Hamiltonian")
def _pmp_consistency(ctx: VerifyContext):
    residual, constancy, speed = 0.0, 0.0, 0.0
    for sys, cost, source, target, result in _energy_solutions(ctx):
        report = pmp_residual(result.pair, result.lift, source, target)
        residual = max(residual, report.costate_residual, report.maximality_gap, report.transversality_target,
                       report.transversality_source, report.torus_transversality)
        constancy = max(constancy, report.constancy)
        speed = max(speed, constant_speed_residual(cost, result.pair.control, sys))
    measured = {"max_residual": residual, "hamiltonian_constancy": constancy, "constant_speed_residual": speed}
    thresholds = {"max_residual": const.PMP_TOL, "hamiltonian_constancy": const.CONSTANCY_TOL,
                  "constant_speed_residual": 1e-3}
    passed = residual <= const.PMP_TOL and constancy <= const.CONSTANCY_TOL and speed <= 1e-3
    return measured, thresholds, passed


@criterion("extremal-machinery", "extremals",
           "Class norms are conserved, spanning families have full rank, minimizers are not strictly abnormal")
def _extremal_machinery(ctx: VerifyContext):
    rng = ctx.rng(9)
    norm_drift, deficits, windows = 0.0, 0, 0
    for _ in ctx.instances(50, "extremal machinery"):
        n = int(rng.integers(3, 5))
        sys = random_system(rng, n, extra_edges=2)
        support = sorted(rng.choice(n, size=int(rng.integers(2, n + 1)), replace=False).tolist())
        grid = TimeGrid(1.0, 200)
        U = np.zeros((grid.N, len(sys.edges)))
        for e, (j, k) in enumerate(sys.edges):
            if j in support and k in support:
                U[:, e] = smooth_series(rng, grid, 2.0, complex_valued=False)
        rho0 = np.zeros(n)
        rho0[support] = rng.standard_normal(len(support))
        traj = propagate_real(ControlGrid(grid, "U", n, tuple(sys.edges), U), rho0 / np.linalg.norm(rho0))
        for window in clean_windows(traj):
            partition = partition_indexes(traj, window, sys.edges, norm_tol=np.inf)
            i1, i2 = window
            squares = traj.states[i1 : i2 + 1] ** 2
            for members, radius in zip(partition.classes, partition.radii):
                norm_drift = max(norm_drift, float(np.max(np.abs(squares[:, list(members)].sum(axis=1) - radius ** 2))))
            windows += 1
            for i in (i1, (i1 + i2) // 2, i2):
                rank, dimension = distribution_rank(partition, traj.states[i], sys.edges)
                families = spanning_family_rank(partition, traj.states[i], sys.edges)
                deficits += int(rank != dimension) + sum(int(r != m) for r, m in families.values())

    verified, full_rank = True, 0
    for sys, cost, _, _, result in _energy_solutions(ctx):
        for report in classify_extremal(result.pair, cost, sys=sys):
            if report.rank == report.dimension and not report.bound_active and report.dimension > 0:
                full_rank += 1
                verified &= report.verdict == const.NOT_STRICTLY_ABNORMAL and bool(report.lift_verified)
    measured = {"windows": windows, "max_class_norm_drift": norm_drift, "rank_deficits": deficits,
                "full_rank_solver_windows": full_rank, "lifts_verified": float(verified)}
    thresholds = {"max_class_norm_drift": const.CLASS_NORM_TOL, "rank_deficits": 0}
    passed = norm_drift <= const.CLASS_NORM_TOL and deficits == 0 and verified and full_rank > 0
    return measured, thresholds, passed


@criterion("solver-resonance", "resonance", "Converged energy solutions are at least weakly resonant")
def _solver_resonance(ctx: VerifyContext):
    statuses = {}
    for sys, _, _, _, result in _energy_solutions(ctx):
        statuses[f"n={sys.n}"] = classify_resonance(result.pair, tol=1e-4).status
    passed = all(s in (const.RESONANT, const.WEAKLY_RESONANT) for s in statuses.values())
    return statuses, {"tol": 1e-4}, passed


def select_criteria(filter: Optional[str] = None) -> List[Criterion]:
    """All criteria, or those whose id or group contains one of the comma-separated words of `filter`."""
    if not filter:
        return list(CRITERIA.values())
    words = [w.strip() for w in filter.split(",") if w.strip()]
    return [c for c in CRITERIA.values() if any(w in c.id or w == c.group for w in words)]


def run_verify(filter: Optional[str] = None, ctx: Optional[VerifyContext] = None) -> List[CriterionResult]:
    ctx = ctx or VerifyContext()
    results = []
    for c in select_criteria(filter):
        logger.info(f"Criterion {c.id} ({c.group}): {c.description}")
        start = time.perf_counter()
        try:
            measured, thresholds, passed = c.func(ctx)
            result = CriterionResult(c.id, c.group, c.description, bool(passed), measured, thresholds)
        except (QOCError, ValueError, TypeError, KeyError, OSError, FloatingPointError, np.linalg.LinAlgError) as e:
            logger.warning(f"Criterion {c.id} failed with {type(e).__name__}: {e}")
            result = CriterionResult(c.id, c.group, c.description, False, error=f"{type(e).__name__}: {e}")
        result.seconds = time.perf_counter() - start
        logger.info(f"Criterion {c.id}: {'passed' if result.passed else 'FAILED'} in {result.seconds:.1f} s")
        results.append(result)
    return results
