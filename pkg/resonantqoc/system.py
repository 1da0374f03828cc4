"""
The n-level system: energies, coupling graph, coupling strengths and control bounds, together with
boundary specifications and the controllability analysis of the coupling graph.

Indices are zero-based in the API. Files use 1-based indices, converted in `from_config`/`to_config`.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space, svdvals

from . import const
from .config import BoundaryConfig, Config, SystemConfig
from .errors import ConfigError, DimensionExceeded, InvalidState, InvalidSystem
from .utils import Edge, edge_key

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Coupling:
    """One edge {j,k} of the coupling graph with its strength mu and control-modulus bound."""

    j: int
    k: int
    mu: float = 1.0
    bound: float = math.inf

    @property
    def key(self) -> Edge:
        return edge_key(self.j, self.k)


@dataclass(frozen=True)
class LevelSystem:
    """
    An n-level system with drift D = diag(energies) and controls on the edges of a coupling graph.

    Construction never raises on invariant breaches so that `validate_system` can report them;
    operations that need a valid system call `require_valid`.
    """

    n: int
    energies: Tuple[float, ...]
    couplings: Tuple[Coupling, ...] = ()

    @classmethod
    def build(cls, energies: Sequence[float], edges: Sequence[Sequence[int]],
              mu: float = 1.0, bound: float = math.inf) -> "LevelSystem":
        """Convenience constructor with uniform strengths and bounds; `edges` are zero-based pairs."""
        couplings = tuple(Coupling(int(j), int(k), float(mu), float(bound)) for j, k in edges)
        return cls(n=len(energies), energies=tuple(float(e) for e in energies), couplings=couplings)

    @property
    def edges(self) -> List[Edge]:
        return [c.key for c in self.couplings]

    @property
    def edge_index(self) -> Dict[Edge, int]:
        return {c.key: i for i, c in enumerate(self.couplings)}

    def coupling(self, j: int, k: int) -> Coupling:
        key = edge_key(j, k)
        for c in self.couplings:
            if c.key == key:
                return c
        raise KeyError(f"No edge {j + 1},{k + 1} in the coupling graph")

    def mu(self, j: int, k: int) -> float:
        return self.coupling(j, k).mu

    def bound(self, j: int, k: int) -> float:
        return self.coupling(j, k).bound

    @property
    def mu_vector(self) -> np.ndarray:
        return np.array([c.mu for c in self.couplings], dtype=float)

    @property
    def bound_vector(self) -> np.ndarray:
        return np.array([c.bound for c in self.couplings], dtype=float)

    @property
    def drift(self) -> np.ndarray:
        return np.diag(np.asarray(self.energies, dtype=float))

    def is_isotropic(self) -> bool:
        return all(c.mu == 1.0 for c in self.couplings)

    @classmethod
    def from_config(cls, config: Config) -> "LevelSystem":
        config = config if isinstance(config, SystemConfig) else SystemConfig(config)
        couplings = []
        for edge in config.edges:
            bound = edge.get("bound", "inf")
            bound = math.inf if bound in ("inf", None) else float(bound)
            couplings.append(Coupling(int(edge["j"]) - 1, int(edge["k"]) - 1,
                                      float(edge.get("mu", 1.0)), bound))
        try:
            energies = tuple(float(e) for e in config.energies)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Energies must be numbers: {e}")
        return cls(n=int(config.n), energies=energies, couplings=tuple(couplings))

    def to_config(self) -> SystemConfig:
        edges = [
            {"j": c.j + 1, "k": c.k + 1, "mu": c.mu, "bound": "inf" if math.isinf(c.bound) else c.bound}
            for c in self.couplings
        ]
        return SystemConfig(n=self.n, energies=list(self.energies), edges=edges)


@dataclass
class ValidationReport:
    ok: bool
    violations: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations)}


def validate_system(sys: LevelSystem) -> ValidationReport:
    """
    Check the invariants of a LevelSystem.

    Returns:
        ValidationReport: `ok` plus one human-readable line per violated invariant, each starting with the
        invariant's name (e.g. "self-loop", "non-positive coupling").
    """
    violations = []
    if sys.n < 2:
        violations.append(f"level count: n = {sys.n} < 2")
    if len(sys.energies) != sys.n:
        violations.append(f"energies: expected {sys.n} values, got {len(sys.energies)}")
    if not all(math.isfinite(e) for e in sys.energies):
        violations.append("non-finite energy")

    seen = set()
    for c in sys.couplings:
        label = f"{c.j + 1},{c.k + 1}"
        if c.j == c.k:
            violations.append(f"self-loop: edge {label}")
        if not (0 <= c.j < sys.n and 0 <= c.k < sys.n):
            violations.append(f"index out of range: edge {label}")
        if c.key in seen:
            violations.append(f"duplicate edge: {label}")
        seen.add(c.key)
        if not (c.mu > 0):
            violations.append(f"non-positive coupling: mu_{label} = {c.mu}")
        if not (c.bound > 0):
            violations.append(f"non-positive bound: M_{label} = {c.bound}")

    if not violations and len(set(sys.energies)) < len(sys.energies):
        logger.warning("Some energies coincide; drift elimination still applies but the physics is degenerate")

    return ValidationReport(ok=not violations, violations=violations)


def require_valid(sys: LevelSystem) -> None:
    report = validate_system(sys)
    if not report.ok:
        raise InvalidSystem("; ".join(report.violations), violations=report.violations)


class UnionFind:
    """Disjoint sets over 0..size-1 with path compression and union by rank."""

    def __init__(self, size: int):
        self.parent = list(range(size))
        self.rank = [0] * size

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> bool:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if self.rank[rx] < self.rank[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1
        return True

    def groups(self, members: Optional[Sequence[int]] = None) -> List[FrozenSet[int]]:
        members = range(len(self.parent)) if members is None else members
        buckets: Dict[int, set] = {}
        for x in members:
            buckets.setdefault(self.find(x), set()).add(x)
        return sorted((frozenset(b) for b in buckets.values()), key=min)


def graph_components(nodes: Sequence[int], edges: Sequence[Edge]) -> List[FrozenSet[int]]:
    """Connected components of the subgraph induced on `nodes`, sorted by smallest member."""
    nodes = list(nodes)
    position = {node: i for i, node in enumerate(nodes)}
    uf = UnionFind(len(nodes))
    for j, k in edges:
        if j in position and k in position:
            uf.union(position[j], position[k])
    return [frozenset(nodes[i] for i in group) for group in uf.groups()]


def connected_components(sys: LevelSystem) -> List[FrozenSet[int]]:
    return graph_components(range(sys.n), sys.edges)


def is_controllable(sys: LevelSystem) -> bool:
    return len(connected_components(sys)) == 1


def control_count_report(sys: LevelSystem) -> dict:
    """Edge count against the n-1 edges any connected coupling graph needs."""
    return {
        "edges": len(sys.couplings),
        "required_at_least": sys.n - 1,
        "sufficient_count": len(sys.couplings) >= sys.n - 1,
    }


def _edge_generators(sys: LevelSystem) -> List[np.ndarray]:
    gens = []
    for j, k in sys.edges:
        real_part = np.zeros((sys.n, sys.n), dtype=complex)
        real_part[j, k], real_part[k, j] = 1.0, -1.0
        imag_part = np.zeros((sys.n, sys.n), dtype=complex)
        imag_part[j, k], imag_part[k, j] = 1j, 1j
        gens += [real_part, imag_part]
    return gens


def _realify(matrix: np.ndarray) -> np.ndarray:
    return np.concatenate([matrix.real.ravel(), matrix.imag.ravel()])


class _SpanTracker:
    """Orthonormal basis of a growing real span; `add` reports whether a vector enlarged it."""

    def __init__(self, tol: float = const.RANK_RTOL):
        self.tol = tol
        self.basis: List[np.ndarray] = []

    def add(self, vector: np.ndarray) -> bool:
        norm = np.linalg.norm(vector)
        if norm == 0.0:
            return False
        residual = vector / norm
        # two passes of Gram-Schmidt
        for _ in range(2):
            for b in self.basis:
                residual = residual - np.dot(b, residual) * b
        if np.linalg.norm(residual) <= self.tol:
            return False
        self.basis.append(residual / np.linalg.norm(residual))
        return True


def lie_algebra_basis(sys: LevelSystem) -> List[np.ndarray]:
    """
    A basis of the real Lie algebra generated by the edge generators, by iterated bracket closure.

    Every element of the generated algebra is a combination of left-normed brackets
    [g_1, [g_2, ..., g_m]] of generators, so the frontier is only bracketed with generators.
    """
    if sys.n > const.LIE_MAX_LEVELS:
        raise DimensionExceeded(f"Bracket closure is limited to n <= {const.LIE_MAX_LEVELS}, got n = {sys.n}")

    gens = _edge_generators(sys)
    tracker = _SpanTracker()
    basis = [g for g in gens if tracker.add(_realify(g))]
    frontier = list(basis)
    while frontier:
        new = []
        for x in frontier:
            for g in gens:
                bracket = g @ x - x @ g
                if tracker.add(_realify(bracket)):
                    new.append(bracket)
        basis.extend(new)
        frontier = new
        logger.debug(f"Bracket closure: dimension {len(basis)}")
    return basis


def lie_rank_oracle(sys: LevelSystem) -> int:
    """Dimension of the real Lie algebra generated by the controls (n <= 6)."""
    return len(lie_algebra_basis(sys))


def lie_action_rank(sys: LevelSystem, point: Optional[np.ndarray] = None) -> int:
    """
    Rank of the generated algebra evaluated at a state, together with the global-phase direction.

    The action is transitive on the sphere S^{2n-1} up to global phase exactly when this equals 2n - 1.
    """
    if point is None:
        rng = np.random.default_rng(const.LIE_EVALUATION_SEED)
        point = rng.standard_normal(sys.n) + 1j * rng.standard_normal(sys.n)
    point = np.asarray(point, dtype=complex)
    if point.shape != (sys.n,):
        raise InvalidState(f"Evaluation point must have {sys.n} entries")
    point = point / np.linalg.norm(point)

    vectors = [np.concatenate([(x @ point).real, (x @ point).imag]) for x in lie_algebra_basis(sys)]
    vectors.append(np.concatenate([(1j * point).real, (1j * point).imag]))
    singular_values = svdvals(np.array(vectors))
    return int(np.sum(singular_values > const.RANK_RTOL * singular_values[0]))


def is_transitive(sys: LevelSystem, point: Optional[np.ndarray] = None) -> bool:
    return lie_action_rank(sys, point) == 2 * sys.n - 1


@dataclass(frozen=True)
class BoundarySpec:
    """
    A source or target set for the transfer problem, specified on the moduli only.

    kind:
        "moduli-point": `moduli` holds populations a_j = |psi_j|^2 with sum 1.
        "eigenstate": `index` (zero-based) is the level with population 1.
        "moduli-set": `constraints` is a tuple of (levels, population) pairs, each requiring
            sum_{j in levels} |psi_j|^2 = population.
    """

    kind: str
    moduli: Optional[Tuple[float, ...]] = None
    index: Optional[int] = None
    constraints: Tuple[Tuple[Tuple[int, ...], float], ...] = ()

    @classmethod
    def eigenstate(cls, index: int) -> "BoundarySpec":
        return cls(kind="eigenstate", index=int(index))

    @classmethod
    def point(cls, populations: Sequence[float]) -> "BoundarySpec":
        return cls(kind="moduli-point", moduli=tuple(float(a) for a in populations))

    @property
    def is_point(self) -> bool:
        return self.kind in ("moduli-point", "eigenstate")

    def validate(self, n: int) -> None:
        if self.kind not in const.BOUNDARY_KINDS:
            raise ConfigError(f"Unknown boundary kind: {self.kind}")
        if self.kind == "eigenstate":
            if self.index is None or not 0 <= self.index < n:
                raise InvalidState(f"Eigenstate index out of range for n = {n}: {self.index}")
        elif self.kind == "moduli-point":
            a = np.asarray(self.moduli if self.moduli is not None else [], dtype=float)
            if a.shape != (n,):
                raise InvalidState(f"Moduli point must have {n} entries")
            if np.any(a < 0) or abs(a.sum() - 1.0) > 1e-12:
                raise InvalidState("Moduli entries must be >= 0 and sum to 1 (tolerance 1e-12)")
        else:
            if not self.constraints:
                raise ConfigError("A moduli-set needs at least one constraint")
            for levels, population in self.constraints:
                if not levels or any(not 0 <= j < n for j in levels):
                    raise InvalidState(f"Constraint levels out of range: {levels}")
                if not 0.0 <= population <= 1.0:
                    raise InvalidState(f"Constraint population must lie in [0, 1], got {population}")

    def populations(self, n: int) -> np.ndarray:
        """The population vector of a point boundary."""
        if self.kind == "eigenstate":
            a = np.zeros(n)
            a[self.index] = 1.0
            return a
        if self.kind == "moduli-point":
            return np.asarray(self.moduli, dtype=float)
        raise InvalidState("A moduli-set has no single population vector")

    def real_state(self, n: int) -> np.ndarray:
        """The nonnegative real representative sqrt(a) of a point boundary."""
        return np.sqrt(self.populations(n))

    def constraint_rows(self, n: int) -> List[Tuple[str, Tuple[int, ...], float]]:
        """
        Equality constraints c(rho) = 0 describing the set, as (form, levels, value) rows.

        "linear" rows require rho_j = 0 for their single level; "quadratic" rows require
        sum_{levels} rho_j^2 = value. Zero populations use linear rows so that the constraint Jacobian
        does not vanish on the set; one redundant quadratic row of a point is dropped.
        """
        rows = []
        if self.is_point:
            a = self.populations(n)
            zero = [j for j in range(n) if a[j] <= 1e-15]
            positive = [j for j in range(n) if a[j] > 1e-15]
            rows += [("linear", (j,), 0.0) for j in zero]
            rows += [("quadratic", (j,), float(a[j])) for j in positive[:-1]]
            return rows
        for levels, population in self.constraints:
            levels = tuple(levels)
            if population <= 1e-15:
                rows += [("linear", (j,), 0.0) for j in levels]
            elif population >= 1.0 - 1e-15:
                rows += [("linear", (j,), 0.0) for j in range(n) if j not in levels]
            else:
                rows.append(("quadratic", levels, float(population)))
        return rows

    def residual(self, rho: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Constraint values c(rho) and Jacobian dc/drho for a real state."""
        rows = self.constraint_rows(len(rho))
        values = np.zeros(len(rows))
        jacobian = np.zeros((len(rows), len(rho)))
        for r, (form, levels, value) in enumerate(rows):
            if form == "linear":
                values[r] = rho[levels[0]]
                jacobian[r, levels[0]] = 1.0
            else:
                idx = list(levels)
                values[r] = float(np.sum(rho[idx] ** 2)) - value
                jacobian[r, idx] = 2.0 * rho[idx]
        return values, jacobian

    def tangent_directions(self, rho: np.ndarray) -> np.ndarray:
        """Orthonormal basis (rows) of the tangent space of the set within the real sphere at rho."""
        _, jacobian = self.residual(rho)
        normals = np.vstack([rho[None, :], jacobian]) if jacobian.size else rho[None, :]
        return null_space(normals).T

    def contains(self, psi: np.ndarray, tol: float = 1e-8) -> bool:
        values, _ = self.residual(np.abs(np.asarray(psi)))
        return bool(values.size == 0 or np.max(np.abs(values)) <= tol)

    @classmethod
    def from_config(cls, config: Config) -> "BoundarySpec":
        config = config if isinstance(config, BoundaryConfig) else BoundaryConfig(config)
        kind = config.kind
        if kind == "eigenstate":
            return cls(kind=kind, index=int(config["index"]) - 1)
        if kind == "moduli-point":
            return cls(kind=kind, moduli=tuple(float(a) for a in config["moduli"]))
        if kind == "moduli-set":
            constraints = tuple(
                (tuple(int(j) - 1 for j in item["levels"]), float(item["population"]))
                for item in config["constraints"]
            )
            return cls(kind=kind, constraints=constraints)
        raise ConfigError(f"Unknown boundary kind: {kind}")

    def to_config(self) -> BoundaryConfig:
        if self.kind == "eigenstate":
            return BoundaryConfig(kind=self.kind, index=self.index + 1)
        if self.kind == "moduli-point":
            return BoundaryConfig(kind=self.kind, moduli=list(self.moduli))
        return BoundaryConfig(kind=self.kind, constraints=[
            {"levels": [j + 1 for j in levels], "population": population}
            for levels, population in self.constraints
        ])
