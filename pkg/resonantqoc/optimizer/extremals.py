"""
Abnormal-extremal analysis of real pairs on clean windows.

A window is clean when every coordinate is either at most epsilon on the whole window or above epsilon on the
whole window. The vanishing coordinates I stay frozen, the others J split into classes K_l (components of the
coupling graph restricted to J), and each class keeps its norm C_l, so the trajectory stays on the product
of spheres S^{m_l - 1}(C_l). When the fields F_jk(rho) = rho_k e_j - rho_j e_k of the edges inside the
classes span the tangent space of that product, no lift with p0 = 0 exists on the window, and a normal lift
on the product extends to the whole sphere by giving it zero components on the radial directions of the
classes and on the frozen coordinates.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space, svdvals

from .. import const
from ..costs import AreaCost, CostFunctional, TimeMaxCost
from ..dynamics import AdmissiblePair, StateTrajectory
from ..errors import (
    ClassNormDrift,
    InconsistentState,
    MixedWindow,
    NoCleanWindow,
    NotConnected,
)
from ..system import UnionFind, graph_components
from ..utils import Edge, edge_key
from .lift import hamiltonian_kind, hamiltonian_values
from .steps import StepCache

logger = logging.getLogger(__name__)

Window = Tuple[int, int]


@dataclass
class IndexPartition:
    """Partition of the levels on a window [t1, t2] given by node indices (i1, i2); zero-based levels."""

    window: Window
    times: Tuple[float, float]
    I: Tuple[int, ...]
    J: Tuple[int, ...]
    classes: List[Tuple[int, ...]]
    radii: np.ndarray
    epsilon: float

    @property
    def sizes(self) -> List[int]:
        return [len(c) for c in self.classes]

    @property
    def offsets(self) -> List[int]:
        """Cumulative class sizes M_l, starting at 0."""
        return [int(m) for m in np.concatenate([[0], np.cumsum(self.sizes)])[:-1]]

    @property
    def manifold_dimension(self) -> int:
        return int(sum(m - 1 for m in self.sizes))

    def class_edges(self, edges: Sequence[Edge]) -> List[Edge]:
        """Edges with both ends in the same class."""
        label = {j: l for l, members in enumerate(self.classes) for j in members}
        return [edge_key(j, k) for j, k in edges if j in label and k in label and label[j] == label[k]]

    def to_dict(self) -> dict:
        return {
            "window": list(self.times),
            "nodes": list(self.window),
            "I": [j + 1 for j in self.I],
            "J": [j + 1 for j in self.J],
            "classes": [[j + 1 for j in c] for c in self.classes],
            "offsets": self.offsets,
            "radii": [float(c) for c in self.radii],
            "dimension": self.manifold_dimension,
        }


def partition_indexes(traj: StateTrajectory, window: Window, edges: Sequence[Edge],
                      epsilon: float = const.DEFAULT_EPSILON,
                      norm_tol: float = const.CLASS_NORM_TOL) -> IndexPartition:
    """
    I = coordinates at most epsilon on the whole window, J the rest, classes the components of the edges
    inside J; radii C_l measured at the window start.

    Raises:
        MixedWindow: a coordinate crosses epsilon inside the window.
        ClassNormDrift: a class norm drifts by more than `norm_tol` over the window.
    """
    i1, i2 = window
    if not 0 <= i1 < i2 <= traj.grid.N:
        raise MixedWindow(f"Window nodes {window} must satisfy 0 <= i1 < i2 <= {traj.grid.N}")
    moduli = traj.moduli()[i1 : i2 + 1]
    above = moduli > epsilon
    mixed = [j for j in range(traj.n) if above[:, j].any() and not above[:, j].all()]
    if mixed:
        raise MixedWindow(f"Levels {[j + 1 for j in mixed]} cross epsilon = {epsilon:g} inside the window")
    J = tuple(j for j in range(traj.n) if above[0, j])
    I = tuple(j for j in range(traj.n) if not above[0, j])
    classes = [tuple(sorted(c)) for c in graph_components(list(J), [edge_key(j, k) for j, k in edges])]

    squares = moduli ** 2
    radii = np.array([np.sqrt(np.sum(squares[0, list(c)])) for c in classes])
    for c, radius in zip(classes, radii):
        norms = np.sum(squares[:, list(c)], axis=1)
        drift = float(np.max(np.abs(norms - radius ** 2)))
        if drift > norm_tol:
            raise ClassNormDrift(f"Class {[j + 1 for j in c]} norm drifts by {drift:.3e} > {norm_tol:.1e}")
    times = (float(traj.grid.nodes[i1]), float(traj.grid.nodes[i2]))
    return IndexPartition((i1, i2), times, I, J, classes, radii, float(epsilon))


def clean_windows(traj: StateTrajectory, epsilon: float = const.DEFAULT_EPSILON) -> List[Window]:
    """Maximal runs of at least two nodes on which the pattern of coordinates above epsilon is constant."""
    pattern = traj.moduli() > epsilon
    windows, start = [], 0
    for i in range(1, traj.grid.N + 2):
        if i == traj.grid.N + 1 or not np.array_equal(pattern[i], pattern[start]):
            if i - 1 > start:
                windows.append((start, i - 1))
            start = i
    return windows


def find_clean_window(traj: StateTrajectory, t: float, epsilon: float = const.DEFAULT_EPSILON) -> Window:
    """
    The maximal clean window containing the node nearest t, or the nearest clean window when that node
    sits on a change of pattern (a zero crossing); ties go to the earlier window.
    """
    windows = clean_windows(traj, epsilon)
    if not windows:
        raise NoCleanWindow(f"No clean window of two or more nodes at epsilon = {epsilon:g}")
    node = int(round(t / traj.grid.dt))
    node = min(max(node, 0), traj.grid.N)

    def distance(window: Window) -> int:
        a, b = window
        return 0 if a <= node <= b else min(abs(node - a), abs(node - b))

    return min(windows, key=lambda w: (distance(w), w[0]))


def spanning_tree(members: Sequence[int], edges: Sequence[Edge]) -> List[Edge]:
    """A spanning tree (m - 1 edges) of the class, from the edges with both ends in it."""
    members = sorted(set(members))
    index = {j: i for i, j in enumerate(members)}
    forest = UnionFind(len(members))
    tree = []
    for j, k in sorted(edge_key(j, k) for j, k in edges):
        if j in index and k in index and forest.union(index[j], index[k]):
            tree.append((j, k))
    if len(tree) != len(members) - 1:
        raise NotConnected(f"Levels {[j + 1 for j in members]} are not connected by the given edges")
    return tree


def real_field(rho: np.ndarray, j: int, k: int) -> np.ndarray:
    out = np.zeros_like(rho, dtype=float)
    out[j] = rho[k]
    out[k] = -rho[j]
    return out


def _rank(vectors: List[np.ndarray], rtol: float = const.RANK_RTOL) -> int:
    if not vectors:
        return 0
    s = svdvals(np.array(vectors))
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def _check_consistent(partition: IndexPartition, rho: np.ndarray) -> None:
    if partition.I and np.max(np.abs(rho[list(partition.I)])) > partition.epsilon:
        raise InconsistentState("A coordinate of I exceeds epsilon in the given state")


def distribution_rank(partition: IndexPartition, rho: np.ndarray, edges: Sequence[Edge]) -> Tuple[int, int]:
    """Rank of the fields of the edges inside the classes at rho, and the dimension sum (m_l - 1)."""
    rho = np.asarray(rho, dtype=float)
    _check_consistent(partition, rho)
    vectors = [real_field(rho, j, k) for j, k in partition.class_edges(edges)]
    return _rank(vectors), partition.manifold_dimension


def spanning_family_rank(partition: IndexPartition, rho: np.ndarray, edges: Sequence[Edge]) -> Dict[int, Tuple[int, int]]:
    """Per class, the rank of its spanning-tree fields at rho against m_l - 1."""
    rho = np.asarray(rho, dtype=float)
    _check_consistent(partition, rho)
    out = {}
    for l, members in enumerate(partition.classes):
        tree = spanning_tree(members, edges)
        out[l] = (_rank([real_field(rho, j, k) for j, k in tree]), len(members) - 1)
    return out


def tangent_basis(partition: IndexPartition, rho: np.ndarray) -> np.ndarray:
    """Orthonormal rows spanning the tangent space at rho of the product of class spheres."""
    n = rho.shape[0]
    normals = [np.eye(n)[i] for i in partition.I]
    for members in partition.classes:
        radial = np.zeros(n)
        radial[list(members)] = rho[list(members)]
        normals.append(radial)
    if not normals:
        return np.eye(n)
    return null_space(np.array(normals)).T


def _window_cache(pair: AdmissiblePair, partition: IndexPartition) -> Tuple[StepCache, np.ndarray]:
    """Step cache of the window's steps and the real states on its nodes."""
    control = pair.control.as_real()
    i1, i2 = partition.window
    cache = StepCache(control.values[i1:i2], control.edges, control.n, control.grid.dt)
    return cache, np.real(pair.trajectory.states[i1 : i2 + 1])


def _window_responses(partition: IndexPartition, cache: StepCache, states: np.ndarray):
    """
    Basis covectors at the window end, carried back over the window, and their switching functions on the
    window's steps for every edge.
    """
    basis = tangent_basis(partition, states[-1])
    covectors = [cache.backward(b) for b in basis]
    switching = [cache.switching(P, states) for P in covectors]
    return basis, covectors, switching


def probe_abnormal(pair: AdmissiblePair, partition: IndexPartition,
                   threshold: float = const.ABNORMAL_THRESHOLD) -> Tuple[float, bool]:
    """
    Smallest relative singular value of the map from tangent covectors at the window end to the switching
    functions of the class edges on the window. A covector annihilating every switching function is a lift
    with p0 = 0; values at most `threshold` flag an abnormal candidate.
    """
    if partition.manifold_dimension == 0:
        return 1.0, False
    cache, states = _window_cache(pair, partition)
    basis, _, switching = _window_responses(partition, cache, states)
    columns = _class_columns(cache.edges, partition)
    matrix = np.stack([h[:, columns].ravel() for h in switching], axis=1)
    s = svdvals(matrix)
    value = float(s[-1] / s[0]) if s[0] > 0 else 0.0
    if len(s) < basis.shape[0]:
        value = 0.0
    return value, value <= threshold


def _class_columns(edges: Sequence[Edge], partition: IndexPartition) -> List[int]:
    inside = set(partition.class_edges(edges))
    return [e for e, edge in enumerate(edges) if edge_key(*edge) in inside]


def _switching_goal(cost: CostFunctional, U: np.ndarray, mu: np.ndarray):
    """The switching function a normal lift (p0 = -1) must produce, with a mask of the entries it fixes."""
    if isinstance(cost, AreaCost):
        active = np.abs(U) > 1e-6 * max(float(np.max(np.abs(U), initial=0.0)), 1e-300)
        return np.sign(U) / mu[None, :], active
    return 2.0 * U / mu[None, :] ** 2, np.ones_like(U, dtype=bool)


def fit_normal_lift(pair: AdmissiblePair, partition: IndexPartition, cost: CostFunctional,
                    sys=None) -> Tuple[np.ndarray, float]:
    """
    Least-squares normal lift on the window: the covector at the window end, tangent to the product of
    spheres, whose switching functions best match the ones maximality requires. Returns the covectors on the
    window's nodes, padded with zero components on the radial directions of the classes and on the frozen
    coordinates, and the relative fit residual.
    """
    cache, states = _window_cache(pair, partition)
    if partition.manifold_dimension == 0:
        return np.zeros_like(states), 0.0
    i1, i2 = partition.window
    U = pair.control.as_real().values[i1:i2]
    mu = cost.weight_vector(cache.edges, sys)

    _, covectors, switching = _window_responses(partition, cache, states)
    goal, mask = _switching_goal(cost, U, mu)
    columns = _class_columns(cache.edges, partition)
    keep = mask[:, columns]
    design = np.stack([h[:, columns][keep] for h in switching], axis=1)
    target = goal[:, columns][keep]
    if target.size == 0:
        return np.zeros_like(states), 0.0
    coefficients, *_ = np.linalg.lstsq(design, target, rcond=None)
    residual = float(np.linalg.norm(design @ coefficients - target) / max(np.linalg.norm(target), 1e-15))

    P = sum(c * cov for c, cov in zip(coefficients, covectors))
    for i, rho in enumerate(states):
        tangent = tangent_basis(partition, rho)
        P[i] = tangent.T @ (tangent @ P[i])
    return P, residual


@dataclass
class WindowReport:
    partition: IndexPartition
    rank: int
    dimension: int
    verdict: str
    bound_active: bool = False
    abnormal_probe: Optional[float] = None
    abnormal_candidate: bool = False
    lift_fit_residual: Optional[float] = None
    lift_residuals: Dict[str, float] = field(default_factory=dict)
    lift_verified: Optional[bool] = None

    def to_dict(self) -> dict:
        out = self.partition.to_dict()
        out.update({
            "rank": self.rank,
            "tangent_dimension": self.dimension,
            "verdict": self.verdict,
            "bound_active": self.bound_active,
            "abnormal_probe": self.abnormal_probe,
            "abnormal_candidate": self.abnormal_candidate,
            "lift_fit_residual": self.lift_fit_residual,
            "lift_residuals": self.lift_residuals,
            "lift_verified": self.lift_verified,
        })
        return out


def _verify_window_lift(pair: AdmissiblePair, partition: IndexPartition, cost: CostFunctional, P: np.ndarray,
                        sys=None) -> Dict[str, float]:
    """Costate, maximality and constancy residuals of the extended lift restricted to the window."""
    cache, states = _window_cache(pair, partition)
    i1, i2 = partition.window
    U = pair.control.as_real().values[i1:i2]
    mu = cost.weight_vector(cache.edges, sys)
    predicted = np.einsum("iba,ib->ia", cache.steps, P[1:])
    costate = float(np.max(np.abs(P[:-1] - predicted), initial=0.0))
    h = cache.switching(P, states)
    kind = hamiltonian_kind(cost.type_name)
    box = np.full(len(cache.edges), np.inf)
    H, H_max = hamiltonian_values(kind, U, h, mu, box, -1.0)
    mean, std = float(np.mean(H)), float(np.std(H))
    scale = max(abs(mean), 1e-15) if kind == "energy" else 1.0
    return {
        "costate_residual": costate,
        "maximality_gap": float(np.max(H_max - H, initial=0.0)),
        "constancy": std / scale if std > 0 else 0.0,
    }


def classify_extremal(pair: AdmissiblePair, cost: CostFunctional, epsilon: float = const.DEFAULT_EPSILON,
                      sys=None, tol: float = const.PMP_TOL) -> List[WindowReport]:
    """
    Per clean window: the index partition, the distribution rank against the dimension of the product of
    spheres, and a verdict.

    "vacuously full rank" when every class is a singleton; "not strictly abnormal" when the rank is full,
    with the extended normal lift fitted and checked; "inconclusive" when the rank is deficient, the class
    norms drift, or a control bound is active on the window. Never raises for the conditions it reports.
    """
    control = pair.control.as_real()
    sys = sys or pair.system
    traj = StateTrajectory(pair.grid, np.real(pair.trajectory.states), "real")
    edges = list(control.edges)
    bounds = np.array([sys.bound(j, k) if sys is not None else np.inf for j, k in edges], dtype=float)
    reports = []
    for window in clean_windows(traj, epsilon):
        try:
            partition = partition_indexes(traj, window, edges, epsilon)
        except ClassNormDrift as e:
            logger.warning(f"Window {window}: {e}")
            continue
        i1, i2 = window
        rank, dimension = distribution_rank(partition, traj.states[i1], edges)
        # the rank is a pointwise property; take the worst node of the window
        for i in range(i1 + 1, i2 + 1):
            rank = min(rank, distribution_rank(partition, traj.states[i], edges)[0])
        U = control.values[i1:i2]
        finite = np.isfinite(bounds)
        bound_active = bool(np.any(np.abs(U[:, finite]) >= bounds[finite] * (1 - const.BOUND_ACTIVE_RTOL)))
        if isinstance(cost, TimeMaxCost):
            bound_active = True

        report = WindowReport(partition, rank, dimension, const.INCONCLUSIVE, bound_active)
        if bound_active or rank < dimension:
            logger.warning(f"Window {partition.times}: inconclusive (rank {rank}/{dimension}, "
                           f"bound active {bound_active})")
        elif dimension == 0:
            report.verdict = const.VACUOUSLY_FULL_RANK
        else:
            report.verdict = const.NOT_STRICTLY_ABNORMAL
            report.abnormal_probe, report.abnormal_candidate = probe_abnormal(pair, partition)
            if report.abnormal_candidate:
                logger.warning(f"Window {partition.times}: abnormal candidate "
                               f"(singular value ratio {report.abnormal_probe:.3g})")
            P, fit = fit_normal_lift(pair, partition, cost, sys)
            report.lift_fit_residual = fit
            report.lift_residuals = _verify_window_lift(pair, partition, cost, P, sys)
            report.lift_verified = bool(
                report.lift_residuals["costate_residual"] <= tol
                and report.lift_residuals["maximality_gap"] <= tol
                and report.lift_residuals["constancy"] <= const.CONSTANCY_TOL
            )
        reports.append(report)
    return reports
