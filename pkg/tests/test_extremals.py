import numpy as np
import pytest

from resonantqoc import const
from resonantqoc.costs import EnergyCost, TimeMaxCost
from resonantqoc.dynamics import AdmissiblePair, ControlGrid, StateTrajectory, TimeGrid, propagate_real
from resonantqoc.errors import ClassNormDrift, InconsistentState, MixedWindow, NoCleanWindow, NotConnected
from resonantqoc.optimizer import (
    classify_extremal,
    clean_windows,
    distribution_rank,
    extremals,
    find_clean_window,
    fit_normal_lift,
    partition_indexes,
    probe_abnormal,
    spanning_family_rank,
    spanning_tree,
)
from resonantqoc.system import LevelSystem
from resonantqoc.verification import smooth_series


def test_clean_windows_of_the_ladder_rotation(real_pair_a):
    N = real_pair_a.grid.N
    assert clean_windows(real_pair_a.trajectory) == [(1, N - 1)]


def test_partition_of_the_ladder_rotation(real_pair_a):
    traj = real_pair_a.trajectory
    window = clean_windows(traj)[0]
    partition = partition_indexes(traj, window, real_pair_a.control.edges)
    assert partition.I == (2, 3)
    assert partition.J == (0, 1)
    assert partition.classes == [(0, 1)]
    np.testing.assert_allclose(partition.radii, [1.0])
    assert partition.manifold_dimension == 1
    assert partition.to_dict()["classes"] == [[1, 2]]
    assert distribution_rank(partition, traj.states[200], real_pair_a.control.edges) == (1, 1)


def test_mixed_window(real_pair_a):
    with pytest.raises(MixedWindow):
        partition_indexes(real_pair_a.trajectory, (0, real_pair_a.grid.N), real_pair_a.control.edges)


def test_class_norm_drift():
    grid = TimeGrid(1.0, 2)
    states = np.array([[0.6, 0.8, 0.1], [0.6, 0.7, 0.3], [0.6, 0.6, 0.5]])
    # levels 1 and 2 form a class through their edge; its norm changes while level 3 fills up
    traj = StateTrajectory(grid, states, "real")
    with pytest.raises(ClassNormDrift):
        partition_indexes(traj, (0, 2), [(0, 1)])


def test_find_clean_window(real_pair_a):
    N = real_pair_a.grid.N
    assert find_clean_window(real_pair_a.trajectory, 0.0) == (1, N - 1)
    assert find_clean_window(real_pair_a.trajectory, 0.7) == (1, N - 1)


def test_find_clean_window_ties_go_to_the_earlier_window():
    grid = TimeGrid(4.0, 4)
    states = np.array([[1.0, 0.0], [1.0, 0.0], [0.6, 0.8], [0.0, 1.0], [0.0, 1.0]])
    traj = StateTrajectory(grid, states, "real")
    assert clean_windows(traj) == [(0, 1), (3, 4)]
    assert find_clean_window(traj, 2.0) == (0, 1)


def test_no_clean_window():
    states = np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]])
    traj = StateTrajectory(TimeGrid(1.0, 2), states, "real")
    with pytest.raises(NoCleanWindow):
        find_clean_window(traj, 0.5)


def test_spanning_tree():
    assert spanning_tree([0, 1, 2], [(1, 2), (0, 1), (0, 2)]) == [(0, 1), (0, 2)]
    with pytest.raises(NotConnected):
        spanning_tree([0, 2], [(0, 1), (1, 2)])


def test_rank_needs_a_consistent_state(real_pair_a):
    traj = real_pair_a.trajectory
    partition = partition_indexes(traj, clean_windows(traj)[0], real_pair_a.control.edges)
    with pytest.raises(InconsistentState):
        distribution_rank(partition, np.array([0.5, 0.5, 0.5, 0.5]), real_pair_a.control.edges)


def test_spanning_families_have_full_rank(rng):
    sys = LevelSystem.build([0.0, 1.0, 2.0, 3.0], [(0, 1), (1, 2), (2, 3), (0, 3)])
    grid = TimeGrid(1.0, 100)
    U = np.column_stack([smooth_series(rng, grid, 2.0, complex_valued=False) for _ in sys.edges])
    rho0 = rng.standard_normal(4)
    traj = propagate_real(ControlGrid(grid, "U", 4, tuple(sys.edges), U), rho0 / np.linalg.norm(rho0))
    for window in clean_windows(traj):
        partition = partition_indexes(traj, window, sys.edges)
        rho = traj.states[window[0]]
        families = spanning_family_rank(partition, rho, sys.edges)
        assert all(rank == size for rank, size in families.values())
        assert distribution_rank(partition, rho, sys.edges) == (partition.manifold_dimension,) * 2


def test_rotation_is_not_strictly_abnormal(real_pair_a):
    reports = classify_extremal(real_pair_a, EnergyCost())
    assert len(reports) == 1
    report = reports[0]
    assert (report.rank, report.dimension) == (1, 1)
    assert report.verdict == const.NOT_STRICTLY_ABNORMAL
    assert not report.bound_active
    assert report.abnormal_probe == pytest.approx(1.0)
    assert not report.abnormal_candidate
    assert report.lift_fit_residual < 1e-8
    assert report.lift_verified
    assert report.to_dict()["verdict"] == const.NOT_STRICTLY_ABNORMAL
    assert report.to_dict()["abnormal_candidate"] is False


def test_fitted_lift_gives_the_energy_switching(real_pair_a):
    traj = real_pair_a.trajectory
    partition = partition_indexes(traj, clean_windows(traj)[0], real_pair_a.control.edges)
    P, residual = fit_normal_lift(real_pair_a, partition, EnergyCost(), real_pair_a.system)
    assert P.shape == (partition.window[1] - partition.window[0] + 1, 4)
    assert residual < 1e-8
    np.testing.assert_allclose(P[:, 2:], 0.0, atol=1e-12)
    _, flagged = probe_abnormal(real_pair_a, partition)
    assert not flagged


def test_bounded_windows_are_inconclusive(real_pair_a, ladder_pairs):
    bounded = AdmissiblePair(real_pair_a.trajectory, real_pair_a.control, ladder_pairs[0].system)
    assert all(r.verdict == const.INCONCLUSIVE and r.bound_active for r in classify_extremal(bounded, EnergyCost()))
    reports = classify_extremal(real_pair_a, TimeMaxCost())
    assert all(r.verdict == const.INCONCLUSIVE for r in reports)


def test_idle_state_is_vacuously_full_rank():
    grid = TimeGrid(1.0, 10)
    control = ControlGrid.zeros(grid, 2, [(0, 1)], "U")
    pair = AdmissiblePair(propagate_real(control, [1.0, 0.0]), control, LevelSystem.build([0.0, 1.0], [(0, 1)]))
    reports = classify_extremal(pair, EnergyCost())
    assert [r.verdict for r in reports] == [const.VACUOUSLY_FULL_RANK]
    assert reports[0].partition.window == (0, 10)


def test_flagged_windows_are_reported_as_abnormal_candidates(real_pair_a, monkeypatch):
    monkeypatch.setattr(extremals, "probe_abnormal", lambda pair, partition: (1e-9, True))
    reports = classify_extremal(real_pair_a, EnergyCost())
    assert len(reports) == 1
    assert reports[0].abnormal_candidate
    assert reports[0].abnormal_probe == 1e-9
    assert reports[0].to_dict()["abnormal_candidate"] is True
