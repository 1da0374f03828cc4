"""
Time grids, gridded controls, state trajectories and the three propagators: the Schrödinger system with
drift, the driftless system in the interaction frame, and the reduced real system on S^{n-1}.

Controls are piecewise constant on the grid, so each step is an exact matrix exponential. The step
exponentials are computed for the whole grid at once by batched eigendecomposition of Hermitian
generators, which keeps every step unitary (orthogonal for real controls) to machine precision.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from . import const
from .config import ControlConfig
from .errors import (
    AdmissibilityResidualExceeded,
    ConfigError,
    GridMismatch,
    InvalidControl,
    InvalidGrid,
    InvalidState,
)
from .system import LevelSystem
from .utils import Edge, edge_key, format_edge_label, from_complex_entries, parse_edge_label, to_complex_pairs

logger = logging.getLogger(__name__)

NDArrayFloat = npt.NDArray[np.float64]
NDArrayComplex = npt.NDArray[np.complex128]

__all__ = [
    "TimeGrid",
    "ControlGrid",
    "StateTrajectory",
    "AdmissiblePair",
    "default_step_count",
    "step_propagators",
    "propagate",
    "propagate_drift",
    "propagate_driftless",
    "propagate_real",
    "eliminate_drift",
    "restore_drift",
    "embed_real",
    "to_real_pair",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with N steps; nodes t_i = i T / N."""

    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise InvalidGrid(f"Final time must be positive and finite, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidGrid(f"Step count must be an integer >= 1, got {self.N}")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> NDArrayFloat:
        return np.arange(self.N + 1) * self.dt

    @property
    def midpoints(self) -> NDArrayFloat:
        return (np.arange(self.N) + 0.5) * self.dt

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.T, self.N * int(factor))

    def node_window(self, t1: float, t2: float) -> Tuple[int, int]:
        """Node indices of the grid points inside [t1, t2]."""
        i1 = int(math.ceil(t1 / self.dt - 1e-9))
        i2 = int(math.floor(t2 / self.dt + 1e-9))
        return max(i1, 0), min(i2, self.N)


def default_step_count(sys: LevelSystem, T: float, control_scale: float = 0.0, minimum: int = 1) -> int:
    """
    Smallest N such that both the largest drift phase advance max|E_j - E_k| dt and the control
    rotation control_scale * dt stay below 0.1 per step.
    """
    gaps = [abs(sys.energies[j] - sys.energies[k]) for j, k in sys.edges] or [0.0]
    rate = max(max(gaps), float(control_scale))
    return max(int(minimum), int(math.ceil(T * rate / const.MAX_PHASE_PER_STEP)))


@dataclass(frozen=True)
class ControlGrid:
    """
    Piecewise-constant control on a TimeGrid, stored per step and per edge.

    `values[i, e]` is the (j, k) entry with j < k of the control matrix on step i for edge `edges[e]`.
    The (k, j) entry follows from the flavor:
        "V" (hermitian-V): V_kj = conj(V_jk)
        "H" (skew-H):      H_kj = -conj(H_jk)
        "U" (real-U):      U_kj = -U_jk, real
    so the Hermitian, skew-Hermitian and antisymmetric invariants hold by construction.
    """

    grid: TimeGrid
    flavor: str
    n: int
    edges: Tuple[Edge, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.flavor not in const.FLAVORS:
            raise InvalidControl(f"Unknown control flavor: {self.flavor}")
        values = np.asarray(self.values)
        if values.shape != (self.grid.N, len(self.edges)):
            raise InvalidControl(
                f"Control values must have shape (N, edges) = ({self.grid.N}, {len(self.edges)}), got {values.shape}"
            )
        for j, k in self.edges:
            if j == k or not (0 <= j < self.n and 0 <= k < self.n) or j > k:
                raise InvalidControl(f"Control edges must be pairs j < k within range, got {(j, k)}")
        if len(set(self.edges)) != len(self.edges):
            raise InvalidControl("Control edges must be distinct")
        if self.flavor == "U":
            if np.iscomplexobj(values):
                if np.max(np.abs(values.imag), initial=0.0) > 0.0:
                    raise InvalidControl("real-U controls must be real")
                values = values.real
            values = values.astype(float)
        else:
            values = values.astype(complex)
        if not np.all(np.isfinite(values)):
            raise InvalidControl("Control values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: TimeGrid, n: int, edges: Sequence[Edge], flavor: str = "H") -> "ControlGrid":
        edges = tuple(edge_key(j, k) for j, k in edges)
        dtype = float if flavor == "U" else complex
        return cls(grid, flavor, n, edges, np.zeros((grid.N, len(edges)), dtype=dtype))

    @classmethod
    def constant(cls, grid: TimeGrid, n: int, entries: dict, flavor: str = "H") -> "ControlGrid":
        """A control constant in time; `entries` maps zero-based (j, k) pairs with j < k to values."""
        edges = tuple(edge_key(j, k) for j, k in entries)
        values = np.tile(np.array([entries[e] for e in entries]), (grid.N, 1))
        return cls(grid, flavor, n, edges, values)

    @property
    def is_real(self) -> bool:
        return self.flavor == "U"

    def with_values(self, values: np.ndarray, flavor: Optional[str] = None) -> "ControlGrid":
        return replace(self, values=values, flavor=flavor or self.flavor)

    def moduli(self) -> NDArrayFloat:
        return np.abs(self.values)

    def edge_values(self, j: int, k: int) -> np.ndarray:
        """Per-step (j, k) entry, for either orientation of the edge."""
        key = edge_key(j, k)
        try:
            column = self.values[:, self.edges.index(key)]
        except ValueError:
            return np.zeros(self.grid.N, dtype=self.values.dtype)
        if (j, k) == key:
            return column
        if self.flavor == "V":
            return np.conj(column)
        if self.flavor == "H":
            return -np.conj(column)
        return -column

    def matrices(self) -> np.ndarray:
        """Assembled control matrices, shape (N, n, n)."""
        dtype = float if self.flavor == "U" else complex
        mats = np.zeros((self.grid.N, self.n, self.n), dtype=dtype)
        for e, (j, k) in enumerate(self.edges):
            column = self.values[:, e]
            mats[:, j, k] = column
            if self.flavor == "V":
                mats[:, k, j] = np.conj(column)
            elif self.flavor == "H":
                mats[:, k, j] = -np.conj(column)
            else:
                mats[:, k, j] = -column
        return mats

    def as_skew(self) -> "ControlGrid":
        """The same control as a skew-H grid; real-U embeds directly, hermitian-V needs drift elimination."""
        if self.flavor == "H":
            return self
        if self.flavor == "U":
            return replace(self, flavor="H", values=self.values.astype(complex))
        raise InvalidControl("A hermitian-V control must go through eliminate_drift before this operation")

    def as_real(self, atol: float = 1e-12) -> "ControlGrid":
        """The same control as a real-U grid; only skew-H controls with real entries qualify."""
        if self.flavor == "U":
            return self
        if self.flavor != "H":
            raise InvalidControl("Only skew-H controls can be viewed as real-U controls")
        if np.max(np.abs(self.values.imag), initial=0.0) > atol:
            raise InvalidControl("The control has non-real entries and has no real-U view")
        return replace(self, flavor="U", values=self.values.real.copy())

    def check_against(self, sys: LevelSystem, check_bounds: bool = True) -> None:
        """Edges must belong to the system's graph; moduli must respect finite bounds."""
        if self.n != sys.n:
            raise GridMismatch(f"Control acts on {self.n} levels but the system has {sys.n}")
        index = sys.edge_index
        for e, key in enumerate(self.edges):
            if key not in index:
                raise GridMismatch(f"Control edge {format_edge_label(key)} is not an edge of the system")
            if check_bounds:
                bound = sys.couplings[index[key]].bound
                peak = float(np.max(np.abs(self.values[:, e]), initial=0.0))
                if math.isfinite(bound) and peak > bound * (1.0 + 1e-12):
                    raise InvalidControl(
                        f"Control modulus {peak:.6g} on edge {format_edge_label(key)} exceeds the bound {bound:.6g}"
                    )

    @classmethod
    def from_config(cls, config, n: int) -> "ControlGrid":
        """
        Build a control from a control file.

        Both orientations "j,k" and "k,j" may be present for the same edge; they must agree with the flavor's
        symmetry, otherwise InvalidControl names the broken invariant.
        """
        config = config if isinstance(config, ControlConfig) else ControlConfig(config)
        try:
            grid = TimeGrid(float(config["T"]), int(config["N"]))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Bad grid in control file: {e}")
        flavor = config["flavor"]
        columns = {}
        for label, entries in config["values"].items():
            try:
                j, k = parse_edge_label(label)
                series = from_complex_entries(entries)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"Bad control entry {label!r}: {e}")
            if len(series) != grid.N:
                raise ConfigError(f"Edge {label} has {len(series)} values, expected N = {grid.N}")
            if j == k:
                if np.max(np.abs(series), initial=0.0) > 0:
                    raise InvalidControl(f"{const.FLAVORS[flavor]}: diagonal entry {label} must be zero")
                continue
            key = edge_key(j, k)
            upper = series if (j, k) == key else _mirror(series, flavor)
            if key in columns:
                if np.max(np.abs(columns[key] - upper), initial=0.0) > 1e-12:
                    raise InvalidControl(
                        f"{const.FLAVORS[flavor]}: entries {format_edge_label(key)} and "
                        f"{format_edge_label(key[::-1])} break the flavor's symmetry"
                    )
            columns[key] = upper
        if flavor == "U":
            for key, column in columns.items():
                if np.max(np.abs(column.imag), initial=0.0) > 0:
                    raise InvalidControl(f"real-U: edge {format_edge_label(key)} has imaginary parts")
        edges = tuple(sorted(columns))
        values = np.column_stack([columns[e] for e in edges]) if edges else np.zeros((grid.N, 0))
        if flavor == "U":
            values = values.real
        return cls(grid, flavor, n, edges, values)

    def to_config(self) -> ControlConfig:
        values = {format_edge_label(e): to_complex_pairs(self.values[:, i]) for i, e in enumerate(self.edges)}
        return ControlConfig(T=self.grid.T, N=self.grid.N, flavor=self.flavor, values=values)


def _mirror(series: np.ndarray, flavor: str) -> np.ndarray:
    # entry (k, j) -> entry (j, k)
    if flavor == "V":
        return np.conj(series)
    if flavor == "H":
        return -np.conj(series)
    return -series


@dataclass(frozen=True)
class StateTrajectory:
    """Unit-norm states at the N+1 grid nodes; `flavor` is "complex" (psi) or "real" (rho)."""

    grid: TimeGrid
    states: np.ndarray
    flavor: str = "complex"

    def __post_init__(self):
        states = np.asarray(self.states)
        if states.ndim != 2 or states.shape[0] != self.grid.N + 1:
            raise InvalidState(f"Trajectory must have N + 1 = {self.grid.N + 1} rows, got shape {states.shape}")
        if self.flavor not in ("complex", "real"):
            raise InvalidState(f"Unknown trajectory flavor: {self.flavor}")
        states = states.real.astype(float) if self.flavor == "real" else states.astype(complex)
        object.__setattr__(self, "states", states)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def moduli(self) -> NDArrayFloat:
        return np.abs(self.states)

    def populations(self) -> NDArrayFloat:
        return np.abs(self.states) ** 2

    def phases(self) -> NDArrayFloat:
        return np.angle(self.states)

    def norm_drift(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.states, axis=1) - 1.0)))

    def check_norm(self, tol: float = const.NORM_TOL) -> None:
        drift = self.norm_drift()
        if drift > tol:
            raise InvalidState(f"State norm deviates from 1 by {drift:.3e} > {tol:.1e}")

    def as_complex(self) -> "StateTrajectory":
        if self.flavor == "complex":
            return self
        return StateTrajectory(self.grid, self.states.astype(complex), "complex")


def unit_state(psi0, n: int, real: bool = False) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=float if real else complex)
    if real and np.iscomplexobj(psi0):
        raise InvalidState("The reduced problem needs a real initial state")
    if psi0.shape != (n,):
        raise InvalidState(f"Initial state must have {n} entries, got shape {psi0.shape}")
    norm = np.linalg.norm(psi0)
    if abs(norm - 1.0) > const.NORM_TOL:
        raise InvalidState(f"Initial state must have unit norm, got {norm:.12g}")
    return psi0


def hermitian_exponentials(generators: np.ndarray, dt: float) -> NDArrayComplex:
    """exp(-i A dt) for a stack of Hermitian matrices A, via eigendecomposition."""
    w, q = np.linalg.eigh(generators)
    phases = np.exp(-1j * w * dt)
    return (q * phases[..., None, :]) @ np.conj(np.swapaxes(q, -1, -2))


def step_propagators(control: ControlGrid, sys: Optional[LevelSystem] = None, dt: Optional[float] = None) -> np.ndarray:
    """
    The per-step propagators of a control, shape (N, n, n).

    hermitian-V: exp(-i (D + V_i) dt), which needs the system for D.
    skew-H:      exp(H_i dt).
    real-U:      exp(U_i dt), returned real.
    """
    dt = control.grid.dt if dt is None else dt
    mats = control.matrices()
    if control.flavor == "V":
        if sys is None:
            raise InvalidControl("Propagating a hermitian-V control needs the system drift")
        return hermitian_exponentials(sys.drift[None, :, :] + mats, dt)
    # i H is Hermitian when H is skew-Hermitian, and exp(-i (i H) dt) = exp(H dt)
    steps = hermitian_exponentials(1j * mats.astype(complex), dt)
    return steps.real if control.flavor == "U" else steps


def march(steps: np.ndarray, state0: np.ndarray) -> np.ndarray:
    states = np.empty((steps.shape[0] + 1, state0.shape[0]), dtype=steps.dtype)
    states[0] = state0
    for i in range(steps.shape[0]):
        states[i + 1] = steps[i] @ states[i]
    return states


def propagate_drift(sys: LevelSystem, V: ControlGrid, psi0) -> StateTrajectory:
    """
    Propagate the Schrödinger system i psi' = (D + V) psi.

    Parameters:
        sys (LevelSystem): Supplies the drift D = diag(E).
        V (ControlGrid): A hermitian-V control on the system's edges.
        psi0: Unit complex initial state.

    Returns:
        StateTrajectory: psi(t_{i+1}) = exp(-i (D + V_i) dt) psi(t_i).
    """
    if V.flavor != "V":
        raise InvalidControl(f"propagate_drift expects a hermitian-V control, got {const.FLAVORS[V.flavor]}")
    V.check_against(sys)
    psi0 = unit_state(psi0, sys.n)
    return StateTrajectory(V.grid, march(step_propagators(V, sys), psi0), "complex")


def propagate_driftless(H: ControlGrid, psi0) -> StateTrajectory:
    """psi(t_{i+1}) = exp(H_i dt) psi(t_i) for a skew-H control (real-U controls are embedded)."""
    H = H.as_skew()
    psi0 = unit_state(psi0, H.n)
    return StateTrajectory(H.grid, march(step_propagators(H), psi0), "complex")


def propagate_real(U: ControlGrid, rho0) -> StateTrajectory:
    """rho(t_{i+1}) = exp(U_i dt) rho(t_i); rotation steps on S^{n-1}."""
    if U.flavor != "U":
        raise InvalidControl(f"propagate_real expects a real-U control, got {const.FLAVORS[U.flavor]}")
    rho0 = unit_state(rho0, U.n, real=True)
    return StateTrajectory(U.grid, march(step_propagators(U), rho0), "real")


def propagate(control: ControlGrid, state0, sys: Optional[LevelSystem] = None) -> StateTrajectory:
    """Dispatch on the control flavor."""
    if control.flavor == "V":
        if sys is None:
            raise InvalidControl("Propagating a hermitian-V control needs the system")
        return propagate_drift(sys, control, state0)
    if control.flavor == "U" and not np.iscomplexobj(np.asarray(state0)):
        return propagate_real(control, state0)
    return propagate_driftless(control, state0)


def _drift_phases(sys: LevelSystem, edges: Sequence[Edge], times: np.ndarray) -> NDArrayComplex:
    """e^{i[(E_k - E_j) t + pi/2]} per time and edge."""
    energies = np.asarray(sys.energies, dtype=float)
    gaps = np.array([energies[k] - energies[j] for j, k in edges], dtype=float)
    return np.exp(1j * (np.outer(times, gaps) + np.pi / 2))


def eliminate_drift(sys: LevelSystem, V: ControlGrid, refine: int = 1) -> ControlGrid:
    """
    Pass to the interaction frame U(t) = e^{-iDt}.

    H_jk = V_jk e^{-i[(E_k - E_j) t + pi/2]}, with the phase sampled at step midpoints. With `refine` > 1
    each step is split into `refine` equal sub-steps carrying the same V, and the phase is sampled at
    the sub-step midpoints; the output then lives on the refined grid.
    """
    if V.flavor != "V":
        raise InvalidControl(f"eliminate_drift expects a hermitian-V control, got {const.FLAVORS[V.flavor]}")
    if int(refine) < 1:
        raise InvalidGrid(f"Refinement factor must be >= 1, got {refine}")
    V.check_against(sys, check_bounds=False)
    grid = V.grid.refined(int(refine))
    values = np.repeat(V.values, int(refine), axis=0)
    phases = _drift_phases(sys, V.edges, grid.midpoints)
    return ControlGrid(grid, "H", V.n, V.edges, values * np.conj(phases))


def restore_drift(sys: LevelSystem, H: ControlGrid) -> ControlGrid:
    """Exact inverse of `eliminate_drift` (refine = 1) on the same grid: V_jk = H_jk e^{i[(E_k - E_j) t + pi/2]}."""
    H = H.as_skew()
    H.check_against(sys, check_bounds=False)
    phases = _drift_phases(sys, H.edges, H.grid.midpoints)
    return ControlGrid(H.grid, "V", H.n, H.edges, H.values * phases)


@dataclass(frozen=True)
class AdmissiblePair:
    """A trajectory together with the control that generates it on the same grid."""

    trajectory: StateTrajectory
    control: ControlGrid
    system: Optional[LevelSystem] = None

    def __post_init__(self):
        if self.trajectory.grid != self.control.grid:
            raise GridMismatch("Trajectory and control live on different grids")
        if self.trajectory.n != self.control.n:
            raise GridMismatch("Trajectory and control have different level counts")

    @property
    def grid(self) -> TimeGrid:
        return self.control.grid

    @property
    def n(self) -> int:
        return self.control.n

    def residual(self) -> float:
        """Sup-norm mismatch between each node and the propagation of the previous one."""
        steps = step_propagators(self.control, self.system)
        states = self.trajectory.states
        predicted = np.einsum("iab,ib->ia", steps, states[:-1])
        return float(np.max(np.abs(states[1:] - predicted), initial=0.0))

    def require_admissible(self, tol: float = const.ADMISSIBILITY_TOL) -> None:
        residual = self.residual()
        if residual > tol:
            raise AdmissibilityResidualExceeded(f"Dynamics residual {residual:.3e} exceeds {tol:.1e}",
                                                residual=residual)


def embed_real(pair: AdmissiblePair) -> AdmissiblePair:
    """View a real pair as a complex skew-H pair."""
    return AdmissiblePair(pair.trajectory.as_complex(), pair.control.as_skew(), pair.system)


def to_real_pair(pair: AdmissiblePair, atol: float = 1e-12) -> AdmissiblePair:
    """View a pair with real states and real skew-H control as a pair of the reduced real problem."""
    states = pair.trajectory.states
    if np.iscomplexobj(states) and np.max(np.abs(states.imag), initial=0.0) > atol:
        raise InvalidState("The trajectory has non-real entries and has no real view")
    trajectory = StateTrajectory(pair.grid, np.real(states), "real")
    return AdmissiblePair(trajectory, pair.control.as_real(atol), pair.system)
