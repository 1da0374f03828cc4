"""
Resonance analysis of admissible pairs of the driftless system.

On each maximal run of grid nodes where both coordinates coupled by an edge stay above a threshold, the
control entry is split as H_jk = (u + i v) e^{i beta} with beta = arg psi_j - arg psi_k: u moves the moduli
and v only moves phases. Dropping v, freezing the phases and switching the control off where a coupled
coordinate vanishes gives a pair with the same population history and a control that is nowhere larger,
which is the resonant representative built by `resonance_transform`.

Controls are piecewise constant, so u, v and beta live on steps. A run of nodes a..b owns the steps a-1..b
(clipped to the grid): the steps on either side of the run touch a node where a coordinate is small but
the open interval of nonvanishing product extends into them.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import const
from .dynamics import (
    AdmissiblePair,
    ControlGrid,
    StateTrajectory,
    TimeGrid,
    eliminate_drift,
    embed_real,
    hermitian_exponentials,
    propagate_driftless,
)
from .errors import (
    AdmissibilityResidualExceeded,
    BoundaryMismatch,
    ConfigError,
    InvalidControl,
    PhaseUndefined,
    SupportOverlap,
)
from .system import LevelSystem
from .utils import Edge, edge_key, format_edge_label, wrap_angle

logger = logging.getLogger(__name__)

__all__ = [
    "Interval",
    "IntervalDecomposition",
    "UVSegment",
    "UVDecomposition",
    "ResonanceVerdict",
    "decompose_intervals",
    "uv_decompose",
    "resonance_transform",
    "classify_resonance",
    "rot_alpha",
    "eigenstate_bridge",
    "counterexample_system",
    "counterexample_pair",
    "field_f",
    "field_g",
    "torus_directions",
    "phase_drift",
    "pseudo_initial_phases",
    "to_interaction_frame",
]


def _wrap_mod_pi(angle):
    """Signed distance of an angle to the nearest multiple of pi, in (-pi/2, pi/2]."""
    return wrap_angle(2.0 * np.asarray(angle)) / 2.0


def _node_runs(mask: np.ndarray, min_length: int = 1) -> List[Tuple[int, int]]:
    """Maximal runs of True in a boolean array as inclusive (start, stop) pairs."""
    padded = np.concatenate([[False], mask.astype(bool), [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    runs = [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]
    return [(a, b) for a, b in runs if b - a + 1 >= min_length]


@dataclass(frozen=True)
class Interval:
    """A maximal run of nodes start..stop (inclusive) where both coupled moduli exceed the threshold."""

    start: int
    stop: int

    def steps(self, N: int) -> np.ndarray:
        return np.arange(max(self.start - 1, 0), min(self.stop, N - 1) + 1)

    def times(self, grid: TimeGrid) -> Tuple[float, float]:
        return float(grid.nodes[self.start]), float(grid.nodes[self.stop])


@dataclass
class IntervalDecomposition:
    grid: TimeGrid
    epsilon: float
    intervals: Dict[Edge, List[Interval]]

    def step_mask(self, edge: Edge) -> np.ndarray:
        """True on the steps owned by an interval of the edge."""
        mask = np.zeros(self.grid.N, dtype=bool)
        for interval in self.intervals.get(edge_key(*edge), []):
            mask[interval.steps(self.grid.N)] = True
        return mask

    def bad_steps(self, edge: Edge) -> np.ndarray:
        return ~self.step_mask(edge)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "intervals": {
                format_edge_label(edge): [list(iv.times(self.grid)) for iv in items]
                for edge, items in self.intervals.items()
            },
        }


def decompose_intervals(traj: StateTrajectory, edges: Sequence[Edge],
                        epsilon: float = const.DEFAULT_EPSILON) -> IntervalDecomposition:
    """
    Per edge, the maximal runs of at least two consecutive nodes with min(|psi_j|, |psi_k|) > epsilon.
    A node dipping below epsilon splits a run.
    """
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    moduli = traj.moduli()
    intervals = {}
    for j, k in edges:
        key = edge_key(j, k)
        good = np.minimum(moduli[:, j], moduli[:, k]) > epsilon
        intervals[key] = [Interval(a, b) for a, b in _node_runs(good, min_length=2)]
    return IntervalDecomposition(traj.grid, float(epsilon), intervals)


@dataclass
class UVSegment:
    interval: Interval
    steps: np.ndarray
    u: np.ndarray
    v: np.ndarray
    beta: np.ndarray
    # beta at the first node of the run
    anchor: float


@dataclass
class UVDecomposition:
    decomposition: IntervalDecomposition
    segments: Dict[Edge, List[UVSegment]] = field(default_factory=dict)

    def max_abs_v(self, edge: Optional[Edge] = None) -> float:
        edges = [edge_key(*edge)] if edge is not None else list(self.segments)
        values = [float(np.max(np.abs(seg.v), initial=0.0)) for e in edges for seg in self.segments.get(e, [])]
        return max(values, default=0.0)

    def v_energy(self) -> float:
        """Integral of sum_e |v_e|^2 over the intervals."""
        dt = self.decomposition.grid.dt
        return float(sum(dt * np.sum(seg.v ** 2) for items in self.segments.values() for seg in items))


def midpoint_states(pair: AdmissiblePair) -> np.ndarray:
    """States at step midpoints, propagated exactly from the left node over half a step."""
    control = pair.control.as_skew()
    half = hermitian_exponentials(1j * control.matrices(), control.grid.dt / 2.0)
    return np.einsum("iab,ib->ia", half, pair.trajectory.states[:-1].astype(complex))


def uv_decompose(pair: AdmissiblePair, dec: IntervalDecomposition) -> UVDecomposition:
    """
    u + i v = H_jk e^{-i beta} on the steps of every interval, with beta taken from the exact midpoint
    state of the step. On the outer steps of a run the midpoint may fall below the threshold; beta is then
    taken at the adjacent node of the run.
    """
    control = pair.control.as_skew()
    states = pair.trajectory.states
    moduli = np.abs(states)
    mids = midpoint_states(pair)
    N = control.grid.N
    result = UVDecomposition(dec)
    for e, (j, k) in enumerate(control.edges):
        segments = []
        for interval in dec.intervals.get((j, k), []):
            run = slice(interval.start, interval.stop + 1)
            if np.min(np.minimum(moduli[run, j], moduli[run, k])) <= dec.epsilon:
                raise PhaseUndefined(
                    f"Edge {format_edge_label((j, k))}: a modulus falls below {dec.epsilon:g} inside the interval "
                    f"starting at node {interval.start}"
                )
            steps = interval.steps(N)
            beta = np.angle(mids[steps, j]) - np.angle(mids[steps, k])
            small = np.minimum(np.abs(mids[steps, j]), np.abs(mids[steps, k])) <= dec.epsilon
            if np.any(small):
                nodes = np.clip(steps, interval.start, interval.stop)
                node_beta = np.angle(states[nodes, j]) - np.angle(states[nodes, k])
                beta = np.where(small, node_beta, beta)
            w = control.values[steps, e] * np.exp(-1j * beta)
            anchor = float(np.angle(states[interval.start, j]) - np.angle(states[interval.start, k]))
            segments.append(UVSegment(interval, steps, w.real, w.imag, beta, anchor))
        result.segments[(j, k)] = segments
    return result


def to_interaction_frame(pair: AdmissiblePair) -> AdmissiblePair:
    """
    A skew-H view of any pair. Real-U pairs are embedded; hermitian-V pairs have their drift eliminated and
    their states moved to the interaction frame, psi_j -> e^{i E_j t} psi_j, which keeps every modulus.
    """
    if pair.control.flavor == "H":
        return pair
    if pair.control.flavor == "U":
        return embed_real(pair)
    if pair.system is None:
        raise InvalidControl("A hermitian-V pair needs its system to pass to the interaction frame")
    H = eliminate_drift(pair.system, pair.control)
    energies = np.asarray(pair.system.energies, dtype=float)
    frame = np.exp(1j * np.outer(pair.grid.nodes, energies))
    states = StateTrajectory(pair.grid, frame * pair.trajectory.states, "complex")
    return AdmissiblePair(states, H, pair.system)


def resonance_transform(pair: AdmissiblePair, epsilon: float = const.DEFAULT_EPSILON,
                        tol: float = const.DEFAULT_TOL) -> AdmissiblePair:
    """
    Build the resonant representative of a pair.

    On the steps of every interval the control becomes u_jk e^{i(theta_j - theta_k)} with theta the phases of
    psi(0) (0 for vanishing coordinates); everywhere else it is switched off. The trajectory is re-propagated
    from psi(0), so it keeps its initial state, its phases stay constant and its moduli follow those of the
    input.

    Raises:
        AdmissibilityResidualExceeded: the re-propagated moduli drift from the input's by more than `tol`,
            which means epsilon or the grid is too coarse for the input.
    """
    if pair.control.flavor == "V":
        raise InvalidControl("resonance_transform works on the driftless system; eliminate the drift first")
    pair.require_admissible()
    pair = to_interaction_frame(pair)
    control = pair.control
    psi0 = pair.trajectory.initial
    dec = decompose_intervals(pair.trajectory, control.edges, epsilon)
    uv = uv_decompose(pair, dec)
    theta = np.angle(psi0)

    values = np.zeros_like(control.values, dtype=complex)
    for e, (j, k) in enumerate(control.edges):
        phase = np.exp(1j * (theta[j] - theta[k]))
        for seg in uv.segments[(j, k)]:
            values[seg.steps, e] = seg.u * phase
    resonant = control.with_values(values)
    trajectory = propagate_driftless(resonant, psi0)

    drift = float(np.max(np.abs(trajectory.moduli() - pair.trajectory.moduli())))
    logger.debug(f"Resonance transform: moduli drift {drift:.3e}, removed v-energy {uv.v_energy():.3e}")
    if drift > tol:
        raise AdmissibilityResidualExceeded(
            f"Re-propagated moduli drift by {drift:.3e} > {tol:.1e}; refine the grid or raise epsilon",
            residual=drift,
        )
    return AdmissiblePair(trajectory, resonant, pair.system)


def pseudo_initial_phases(traj: StateTrajectory, epsilon: float = const.DEFAULT_EPSILON) -> np.ndarray:
    """
    arg psi_j at the first node where |psi_j| exceeds epsilon, 0 for a coordinate that never does. For a
    coordinate that starts at zero this is the phase it is born with.
    """
    moduli = traj.moduli()
    theta = np.zeros(traj.n)
    for j in range(traj.n):
        above = np.flatnonzero(moduli[:, j] > epsilon)
        if above.size:
            theta[j] = float(np.angle(traj.states[above[0], j]))
    return theta


def phase_drift(traj: StateTrajectory, epsilon: float = const.DEFAULT_EPSILON) -> np.ndarray:
    """Per level, the largest phase excursion from the run's first node over runs where |psi_j| > epsilon."""
    moduli = traj.moduli()
    phases = np.angle(traj.states)
    drift = np.zeros(traj.n)
    for j in range(traj.n):
        for a, b in _node_runs(moduli[:, j] > epsilon):
            excursion = np.abs(wrap_angle(phases[a : b + 1, j] - phases[a, j]))
            drift[j] = max(drift[j], float(np.max(excursion)))
    return drift


@dataclass
class ResonanceVerdict:
    status: str
    epsilon: float
    tol: float
    evidence: Dict[str, dict] = field(default_factory=dict)

    @property
    def is_resonant(self) -> bool:
        return self.status == const.RESONANT

    @property
    def is_weakly_resonant(self) -> bool:
        return self.status in (const.RESONANT, const.WEAKLY_RESONANT)

    def to_dict(self) -> dict:
        return {"status": self.status, "epsilon": self.epsilon, "tol": self.tol, "evidence": self.evidence}


def classify_resonance(pair: AdmissiblePair, epsilon: float = const.DEFAULT_EPSILON, tol: float = const.DEFAULT_TOL,
                       phase_tol: float = const.DEFAULT_TOL) -> ResonanceVerdict:
    """
    Resonant, weakly-resonant or neither.

    weakly-resonant: on every interval sup|v| <= tol, and on every run of steps outside the intervals the
        nonzero control entries keep one phase modulo pi.
    resonant: weakly-resonant, and every interval anchor phase and every off-interval control phase equals
        theta*_j - theta*_k modulo pi, with theta* the pseudo-initial phases.

    Hermitian-V pairs are analysed in the interaction frame. Never raises for the conditions it reports.
    """
    pair = to_interaction_frame(pair)
    control = pair.control
    dec = decompose_intervals(pair.trajectory, control.edges, epsilon)
    uv = uv_decompose(pair, dec)
    theta = pseudo_initial_phases(pair.trajectory, epsilon)

    weak, strong = True, True
    evidence = {}
    for e, (j, k) in enumerate(control.edges):
        target = theta[j] - theta[k]
        segments = uv.segments[(j, k)]
        max_v = max((float(np.max(np.abs(seg.v))) for seg in segments), default=0.0)
        anchors = [float(abs(_wrap_mod_pi(seg.anchor - target))) for seg in segments]

        column = control.values[:, e]
        bad_spread, bad_mismatch = 0.0, 0.0
        for a, b in _node_runs(dec.bad_steps((j, k))):
            entries = column[a : b + 1]
            active = entries[np.abs(entries) > max(tol, 1e-12)]
            if active.size == 0:
                continue
            phases = np.angle(active)
            bad_spread = max(bad_spread, float(np.max(np.abs(_wrap_mod_pi(phases - phases[0])))))
            bad_mismatch = max(bad_mismatch, float(np.max(np.abs(_wrap_mod_pi(phases - target)))))

        edge_weak = max_v <= tol and bad_spread <= phase_tol
        edge_strong = edge_weak and max(anchors, default=0.0) <= phase_tol and bad_mismatch <= phase_tol
        weak &= edge_weak
        strong &= edge_strong
        evidence[format_edge_label((j, k))] = {
            "intervals": [list(seg.interval.times(dec.grid)) for seg in segments],
            "max_abs_v": max_v,
            "max_anchor_mismatch": max(anchors, default=0.0),
            "bad_phase_spread": bad_spread,
            "bad_phase_mismatch": bad_mismatch,
        }

    status = const.RESONANT if strong else const.WEAKLY_RESONANT if weak else const.NEITHER
    return ResonanceVerdict(status, float(epsilon), float(tol), evidence)


def rot_alpha(pair: AdmissiblePair, alpha: Sequence[float]) -> AdmissiblePair:
    """
    Rotate every coordinate by its own constant phase: psi_j -> e^{i alpha_j} psi_j, and conjugate the
    control by the same diagonal unitary, H_jk -> H_jk e^{i(alpha_j - alpha_k)}. Moduli of states and
    controls are unchanged. Real-U pairs come back as skew-H pairs.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (pair.n,):
        raise ConfigError(f"alpha must have {pair.n} entries, got shape {alpha.shape}")
    if pair.control.flavor == "U":
        pair = embed_real(pair)
    control = pair.control
    j_idx = np.array([j for j, _ in control.edges], dtype=int)
    k_idx = np.array([k for _, k in control.edges], dtype=int)
    factor = np.exp(1j * (alpha[j_idx] - alpha[k_idx]))
    values = control.values * factor[None, :]
    states = pair.trajectory.states * np.exp(1j * alpha)[None, :]
    return AdmissiblePair(StateTrajectory(pair.grid, states, "complex"), control.with_values(values), pair.system)


def eigenstate_bridge(resonant_pair: AdmissiblePair, psi1, psi2, tol: float = 1e-6) -> AdmissiblePair:
    """
    Turn a resonant pair joining the moduli of psi1 and psi2 into one joining psi1 to a state with the exact
    phases of psi2 on its support. The supports of psi1 and psi2 must be disjoint.

    alpha_j is arg psi1_j on the support of psi1 and arg psi2_j on the support of psi2, each taken relative
    to the pair's own phase at that end, and 0 elsewhere.
    """
    psi1 = np.asarray(psi1, dtype=complex)
    psi2 = np.asarray(psi2, dtype=complex)
    overlap = np.abs(psi1 * psi2)
    if np.max(overlap) > 1e-12:
        levels = ", ".join(str(j + 1) for j in np.flatnonzero(overlap > 1e-12))
        raise SupportOverlap(f"psi1 and psi2 share support on levels {levels}")
    pair = to_interaction_frame(resonant_pair)
    start, end = pair.trajectory.initial, pair.trajectory.final
    if np.max(np.abs(np.abs(start) - np.abs(psi1))) > tol or np.max(np.abs(np.abs(end) - np.abs(psi2))) > tol:
        raise BoundaryMismatch("The pair does not join the moduli of psi1 to the moduli of psi2")

    alpha = np.zeros(pair.n)
    on1 = np.abs(psi1) > 0
    on2 = ~on1 & (np.abs(psi2) > 0)
    alpha[on1] = np.angle(psi1[on1]) - np.angle(start[on1])
    alpha[on2] = np.angle(psi2[on2]) - np.angle(end[on2])
    return rot_alpha(pair, alpha)


def counterexample_system() -> LevelSystem:
    """Four-level ladder with unit couplings and unit bounds."""
    return LevelSystem.build([0.0, 1.0, 2.0, 3.0], [(0, 1), (1, 2), (2, 3)], mu=1.0, bound=1.0)


def counterexample_pair(N: int = 400) -> Tuple[AdmissiblePair, AdmissiblePair]:
    """
    Two controls on the four-level ladder over [0, pi/2] that both steer (1, 0, 0, 0) along
    (cos t, sin t, 0, 0). Pair A drives edge {1,2} only. Pair B adds a unit control on edge {3,4} whose
    phase steps through 1, -1, i, -i on the four quarters of the interval; it acts on levels that stay empty,
    so the trajectory is the same, but no single phase describes it.
    """
    if N % 4:
        raise ConfigError(f"The step count must be a multiple of 4, got {N}")
    sys = counterexample_system()
    grid = TimeGrid(np.pi / 2, N)
    edges = ((0, 1), (1, 2), (2, 3))
    psi0 = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)

    values_a = np.zeros((N, 3), dtype=complex)
    values_a[:, 0] = -1.0
    values_b = values_a.copy()
    values_b[:, 2] = np.repeat(np.array([1.0, -1.0, 1j, -1j]), N // 4)

    pairs = []
    for values in (values_a, values_b):
        control = ControlGrid(grid, "H", sys.n, edges, values)
        pairs.append(AdmissiblePair(propagate_driftless(control, psi0), control, sys))
    return pairs[0], pairs[1]


def field_f(psi, j: int, k: int) -> np.ndarray:
    """F_jk(psi) = e^{i beta} psi_k d/dpsi_j - e^{-i beta} psi_j d/dpsi_k as a complex n-vector."""
    psi = np.asarray(psi, dtype=complex)
    beta = np.angle(psi[j]) - np.angle(psi[k])
    out = np.zeros_like(psi)
    out[j] = np.exp(1j * beta) * psi[k]
    out[k] = -np.exp(-1j * beta) * psi[j]
    return out


def field_g(psi, j: int, k: int) -> np.ndarray:
    """G_jk(psi) = i (e^{i beta} psi_k d/dpsi_j + e^{-i beta} psi_j d/dpsi_k); tangent to the torus of moduli."""
    psi = np.asarray(psi, dtype=complex)
    beta = np.angle(psi[j]) - np.angle(psi[k])
    out = np.zeros_like(psi)
    out[j] = 1j * np.exp(1j * beta) * psi[k]
    out[k] = 1j * np.exp(-1j * beta) * psi[j]
    return out


def realify(vector) -> np.ndarray:
    """Complex n-vector to the real 2n chart (Re, Im)."""
    vector = np.asarray(vector, dtype=complex)
    return np.concatenate([vector.real, vector.imag])


def torus_directions(psi, epsilon: float = const.DEFAULT_EPSILON) -> np.ndarray:
    """Rows i psi_j e_j in the real chart, one per coordinate above epsilon: the phase directions at psi."""
    psi = np.asarray(psi, dtype=complex)
    rows = []
    for j in np.flatnonzero(np.abs(psi) > epsilon):
        direction = np.zeros_like(psi)
        direction[j] = 1j * psi[j]
        rows.append(realify(direction))
    return np.array(rows).reshape(len(rows), 2 * psi.shape[0])
