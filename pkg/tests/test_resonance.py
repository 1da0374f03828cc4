import numpy as np
import pytest

from resonantqoc import const
from resonantqoc.costs import evaluate_all
from resonantqoc.dynamics import AdmissiblePair, ControlGrid, TimeGrid, propagate_drift, propagate_driftless
from resonantqoc.errors import AdmissibilityResidualExceeded, BoundaryMismatch, ConfigError, InvalidControl, SupportOverlap
from resonantqoc.resonance import (
    classify_resonance,
    counterexample_pair,
    decompose_intervals,
    eigenstate_bridge,
    field_f,
    field_g,
    phase_drift,
    pseudo_initial_phases,
    resonance_transform,
    rot_alpha,
    to_interaction_frame,
    torus_directions,
    uv_decompose,
)
from resonantqoc.system import LevelSystem
from resonantqoc.verification import random_skew_pair, random_system


def test_counterexample_pairs_share_the_path(ladder_pairs):
    t = ladder_pairs[0].grid.nodes
    expected = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t), np.zeros_like(t)])
    for pair in ladder_pairs:
        np.testing.assert_allclose(pair.trajectory.states, expected, atol=1e-10)


def test_counterexample_verdicts(ladder_pairs):
    pair_a, pair_b = ladder_pairs
    assert classify_resonance(pair_a).status == const.RESONANT
    verdict_b = classify_resonance(pair_b)
    assert verdict_b.status == const.NEITHER
    assert verdict_b.evidence["3,4"]["bad_phase_spread"] == pytest.approx(np.pi / 2)


def test_counterexample_step_count():
    with pytest.raises(ConfigError):
        counterexample_pair(N=402)


def test_intervals_split_at_vanishing_coordinates(ladder_pairs):
    pair_a = ladder_pairs[0]
    N = pair_a.grid.N
    dec = decompose_intervals(pair_a.trajectory, pair_a.control.edges)
    assert [(iv.start, iv.stop) for iv in dec.intervals[(0, 1)]] == [(1, N - 1)]
    assert dec.intervals[(1, 2)] == []
    assert dec.step_mask((0, 1)).all()
    assert dec.bad_steps((2, 3)).all()


def test_epsilon_must_be_positive(ladder_pairs):
    with pytest.raises(ConfigError):
        decompose_intervals(ladder_pairs[0].trajectory, ladder_pairs[0].control.edges, epsilon=0.0)


def test_uv_of_a_real_rotation(ladder_pairs):
    pair_a = ladder_pairs[0]
    uv = uv_decompose(pair_a, decompose_intervals(pair_a.trajectory, pair_a.control.edges))
    segment = uv.segments[(0, 1)][0]
    np.testing.assert_allclose(segment.u, -1.0, atol=1e-12)
    assert uv.max_abs_v() < 1e-12
    assert uv.v_energy() < 1e-20


def test_pure_phase_control_is_not_weakly_resonant():
    grid = TimeGrid(1.0, 50)
    control = ControlGrid.constant(grid, 2, {(0, 1): 1j}, "H")
    psi0 = np.array([1.0, 1.0]) / np.sqrt(2)
    pair = AdmissiblePair(propagate_driftless(control, psi0), control)
    np.testing.assert_allclose(pair.trajectory.moduli(), 1 / np.sqrt(2), atol=1e-12)
    verdict = classify_resonance(pair)
    assert verdict.status == const.NEITHER
    assert verdict.evidence["1,2"]["max_abs_v"] == pytest.approx(1.0)


def test_off_phase_idle_control_is_weakly_resonant(ladder_pairs):
    pair_a = ladder_pairs[0]
    values = pair_a.control.values.copy()
    values[:, 2] = 1j
    control = pair_a.control.with_values(values)
    pair = AdmissiblePair(propagate_driftless(control, pair_a.trajectory.initial), control, pair_a.system)
    verdict = classify_resonance(pair)
    assert verdict.status == const.WEAKLY_RESONANT
    assert verdict.is_weakly_resonant and not verdict.is_resonant


def test_transform_switches_off_idle_controls(ladder_pairs):
    pair_a, pair_b = ladder_pairs
    resonant = resonance_transform(pair_b)
    np.testing.assert_allclose(resonant.control.values, pair_a.control.values, atol=1e-12)
    np.testing.assert_allclose(resonant.trajectory.states, pair_a.trajectory.states, atol=1e-12)
    before = evaluate_all(pair_b.control, pair_b.system)
    after = evaluate_all(resonant.control, pair_b.system)
    assert before["energy"] == pytest.approx(np.pi)
    assert after["energy"] == pytest.approx(np.pi / 2)
    assert classify_resonance(resonant).is_resonant


def test_transform_keeps_populations_and_lowers_costs(rng):
    sys = random_system(rng, 3)
    pair = random_skew_pair(rng, sys, TimeGrid(1.0, 4000), 0.5)
    resonant = resonance_transform(pair)
    np.testing.assert_allclose(resonant.trajectory.populations(), pair.trajectory.populations(), atol=1e-6)
    np.testing.assert_allclose(resonant.trajectory.initial, pair.trajectory.initial)
    assert np.max(phase_drift(resonant.trajectory)) < 1e-6
    before = evaluate_all(pair.control, sys)
    after = evaluate_all(resonant.control, sys)
    for kind in before:
        assert after[kind] <= before[kind] + 1e-12
    assert np.all(np.abs(resonant.control.values) <= np.abs(pair.control.values) + 1e-12)


def test_transform_needs_an_admissible_pair(ladder_pairs):
    pair_a, _ = ladder_pairs
    tampered = AdmissiblePair(pair_a.trajectory, pair_a.control.with_values(2 * pair_a.control.values),
                              pair_a.system)
    with pytest.raises(AdmissibilityResidualExceeded):
        resonance_transform(tampered)


def test_transform_works_on_the_driftless_system_only():
    sys = LevelSystem.build([0.0, 1.0], [(0, 1)])
    V = ControlGrid.constant(TimeGrid(1.0, 10), 2, {(0, 1): 0.3}, "V")
    pair = AdmissiblePair(propagate_drift(sys, V, [1.0, 0.0]), V, sys)
    with pytest.raises(InvalidControl):
        resonance_transform(pair)
    framed = to_interaction_frame(pair)
    assert framed.control.flavor == "H"
    np.testing.assert_allclose(framed.trajectory.moduli(), pair.trajectory.moduli())


def test_rot_alpha_keeps_moduli_costs_and_dynamics(rng):
    sys = random_system(rng, 4)
    pair = random_skew_pair(rng, sys, TimeGrid(1.0, 100), 1.0)
    rotated = rot_alpha(pair, rng.uniform(-np.pi, np.pi, 4))
    np.testing.assert_allclose(rotated.trajectory.moduli(), pair.trajectory.moduli())
    np.testing.assert_allclose(rotated.control.moduli(), pair.control.moduli())
    assert rotated.residual() < 1e-10
    with pytest.raises(ConfigError):
        rot_alpha(pair, [0.0, 1.0])


def test_pseudo_initial_phases_follow_the_birth_phase():
    grid = TimeGrid(1.0, 20)
    control = ControlGrid.constant(grid, 2, {(0, 1): 1j}, "H")
    pair = AdmissiblePair(propagate_driftless(control, [1.0, 0.0]), control)
    theta = pseudo_initial_phases(pair.trajectory)
    assert theta[0] == pytest.approx(0.0)
    # psi_2 = i sin(t) e_2 is born with phase pi/2
    assert theta[1] == pytest.approx(np.pi / 2)


def test_eigenstate_bridge_sets_the_final_phases(ladder_pairs):
    target = np.array([0.0, 1j, 0.0, 0.0])
    bridged = eigenstate_bridge(ladder_pairs[0], [1.0, 0.0, 0.0, 0.0], target)
    np.testing.assert_allclose(bridged.trajectory.final, target, atol=1e-10)
    assert bridged.residual() < 1e-10
    with pytest.raises(SupportOverlap):
        eigenstate_bridge(ladder_pairs[0], [1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0])
    with pytest.raises(BoundaryMismatch):
        eigenstate_bridge(ladder_pairs[0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0])


def test_fields_split_moduli_and_phases(rng):
    psi = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    psi /= np.linalg.norm(psi)
    F = field_f(psi, 0, 2)
    G = field_g(psi, 0, 2)
    # F moves the moduli without turning the phases, G turns the phases only
    np.testing.assert_allclose(np.imag(F * np.conj(psi)), 0.0, atol=1e-12)
    np.testing.assert_allclose(np.real(G * np.conj(psi)), 0.0, atol=1e-12)
    assert np.real(np.vdot(psi, F)) == pytest.approx(0.0, abs=1e-12)


def test_torus_directions_skip_vanishing_coordinates():
    directions = torus_directions(np.array([0.6, 0.0, 0.8j]))
    assert directions.shape == (2, 6)


def test_rot_alpha_composes_additively(rng):
    sys = random_system(rng, 3)
    pair = random_skew_pair(rng, sys, TimeGrid(1.0, 50), 1.0)
    alpha, beta = rng.uniform(-np.pi, np.pi, 3), rng.uniform(-np.pi, np.pi, 3)
    twice = rot_alpha(rot_alpha(pair, alpha), beta)
    once = rot_alpha(pair, alpha + beta)
    np.testing.assert_allclose(twice.trajectory.states, once.trajectory.states, atol=1e-12)
    np.testing.assert_allclose(twice.control.values, once.control.values, atol=1e-12)


def test_uv_drive_moduli_and_phases():
    grid = TimeGrid(0.5, 500)
    control = ControlGrid.constant(grid, 2, {(0, 1): np.exp(0.7j)}, "H")
    pair = AdmissiblePair(propagate_driftless(control, [0.8, 0.6j]), control)
    uv = uv_decompose(pair, decompose_intervals(pair.trajectory, control.edges))
    (segment,) = uv.segments[(0, 1)]
    np.testing.assert_array_equal(segment.steps, np.arange(grid.N))

    states = pair.trajectory.states
    rho = np.abs(states)
    theta = np.unwrap(np.angle(states), axis=0)
    mid = 0.5 * (rho[:-1] + rho[1:])
    d_rho = np.diff(rho, axis=0) / grid.dt
    d_theta = np.diff(theta, axis=0) / grid.dt
    # d|psi_j|/dt = sum_k u_jk |psi_k| with u antisymmetric; d(arg psi_j)/dt = sum_k v_jk |psi_k| / |psi_j|
    np.testing.assert_allclose(d_rho[:, 0], segment.u * mid[:, 1], atol=1e-5)
    np.testing.assert_allclose(d_rho[:, 1], -segment.u * mid[:, 0], atol=1e-5)
    np.testing.assert_allclose(d_theta[:, 0], segment.v * mid[:, 1] / mid[:, 0], atol=1e-5)
    np.testing.assert_allclose(d_theta[:, 1], segment.v * mid[:, 0] / mid[:, 1], atol=1e-5)
    assert np.max(np.abs(segment.v)) > 0.1


def test_mismatched_anchors_are_only_weakly_resonant():
    # psi = (cos t, -sin t) until level 1 empties at pi/2, then level 1 refills through a control turned by 1
    grid = TimeGrid(np.pi, 200)
    values = np.where(np.arange(grid.N) < 100, 1.0, np.exp(1j))[:, None]
    control = ControlGrid(grid, "H", 2, ((0, 1),), values)
    pair = AdmissiblePair(propagate_driftless(control, [1.0, 0.0]), control, LevelSystem.build([0.0, 1.0], [(0, 1)]))
    verdict = classify_resonance(pair)
    evidence = verdict.evidence["1,2"]
    assert len(evidence["intervals"]) == 2
    assert evidence["max_abs_v"] < 1e-9
    assert evidence["bad_phase_spread"] == 0.0
    assert evidence["max_anchor_mismatch"] == pytest.approx(1.0, abs=1e-9)
    assert verdict.status == const.WEAKLY_RESONANT
