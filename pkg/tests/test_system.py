import math

import numpy as np
import pytest

from resonantqoc.errors import DimensionExceeded, InvalidState, InvalidSystem
from resonantqoc.system import (
    BoundarySpec,
    LevelSystem,
    connected_components,
    control_count_report,
    is_controllable,
    is_transitive,
    lie_rank_oracle,
    require_valid,
    validate_system,
)
from resonantqoc.utility.data_utils import load_system


def test_fixture_system_is_one_based_on_disk(fixture_path):
    sys = load_system(fixture_path("ladder3.json"))
    assert sys.n == 3
    assert sys.edges == [(0, 1), (1, 2)]
    assert math.isinf(sys.bound(1, 0))
    assert sys.is_isotropic()
    assert validate_system(sys).ok


@pytest.mark.parametrize(
    "sys, word",
    [
        (LevelSystem.build([0.0, 1.0], [(0, 0)]), "self-loop"),
        (LevelSystem.build([0.0, 1.0], [(0, 1), (1, 0)]), "duplicate edge"),
        (LevelSystem.build([0.0, 1.0], [(0, 1)], mu=0.0), "non-positive coupling"),
        (LevelSystem.build([0.0, 1.0], [(0, 1)], bound=-1.0), "non-positive bound"),
        (LevelSystem.build([0.0, 1.0], [(0, 2)]), "index out of range"),
        (LevelSystem.build([0.0], []), "level count"),
        (LevelSystem(n=3, energies=(0.0, 1.0)), "energies"),
    ],
)
def test_validation_names_the_broken_invariant(sys, word):
    report = validate_system(sys)
    assert not report.ok
    assert any(line.startswith(word) for line in report.violations)
    with pytest.raises(InvalidSystem):
        require_valid(sys)


def test_components_and_controllability():
    sys = LevelSystem.build([0.0, 1.0, 2.0, 3.0], [(0, 1), (2, 3)])
    assert connected_components(sys) == [frozenset({0, 1}), frozenset({2, 3})]
    assert not is_controllable(sys)
    assert is_controllable(LevelSystem.build([0.0, 1.0, 2.0, 3.0], [(0, 1), (1, 2), (2, 3)]))


def test_control_count_report():
    report = control_count_report(LevelSystem.build([0.0, 1.0, 2.0], [(0, 1)]))
    assert report == {"edges": 1, "required_at_least": 2, "sufficient_count": False}


@pytest.mark.parametrize(
    "energies, edges, dimension",
    [
        ([0.0, 1.0], [(0, 1)], 3),
        ([0.0, 1.0, 2.5], [(0, 1), (1, 2)], 8),
        ([0.0, 1.0, 2.5], [(0, 1)], 3),
        ([0.0, 1.0, 2.5], [], 0),
    ],
)
def test_lie_rank(energies, edges, dimension):
    assert lie_rank_oracle(LevelSystem.build(energies, edges)) == dimension


@pytest.mark.parametrize(
    "edges",
    [[(0, 1), (1, 2)], [(0, 2), (1, 2)], [(0, 1), (0, 2), (1, 2)], [(0, 1)], [(1, 2)], []],
)
def test_transitivity_agrees_with_connectivity(edges):
    sys = LevelSystem.build([0.0, 0.4, 1.3], edges)
    assert is_transitive(sys) == is_controllable(sys)


def test_lie_rank_refuses_large_systems():
    sys = LevelSystem.build(list(range(7)), [(j, j + 1) for j in range(6)])
    with pytest.raises(DimensionExceeded):
        lie_rank_oracle(sys)


def test_boundary_from_config_is_one_based():
    spec = BoundarySpec.from_config({"kind": "moduli-set", "constraints": [{"levels": [1, 3], "population": 0.5}]})
    assert spec.constraints == (((0, 2), 0.5),)
    assert BoundarySpec.from_config({"kind": "eigenstate", "index": 2}).index == 1


def test_eigenstate_constraint_rows_are_linear():
    rows = BoundarySpec.eigenstate(1).constraint_rows(3)
    assert rows == [("linear", (0,), 0.0), ("linear", (2,), 0.0)]


def test_moduli_point_rows_drop_one_quadratic():
    rows = BoundarySpec.point([0.5, 0.5, 0.0]).constraint_rows(3)
    assert rows == [("linear", (2,), 0.0), ("quadratic", (0,), 0.5)]


def test_moduli_point_must_sum_to_one():
    with pytest.raises(InvalidState):
        BoundarySpec.point([0.5, 0.4]).validate(2)
    with pytest.raises(InvalidState):
        BoundarySpec.eigenstate(3).validate(3)


def test_contains_uses_moduli_only():
    spec = BoundarySpec.point([0.5, 0.5])
    assert spec.contains(np.array([1.0, 1j]) / np.sqrt(2))
    assert not spec.contains(np.array([1.0, 0.0]))


def test_tangent_directions_of_a_point_are_empty():
    rho = np.array([0.0, 1.0, 0.0])
    assert BoundarySpec.eigenstate(1).tangent_directions(rho).shape[0] == 0
    free = BoundarySpec(kind="moduli-set", constraints=(((0, 1), 1.0),))
    directions = free.tangent_directions(rho)
    assert directions.shape == (1, 3)
    np.testing.assert_allclose(np.abs(directions[0]), [1.0, 0.0, 0.0], atol=1e-12)
