import numpy as np
import pytest

from resonantqoc.costs import (
    COST_REGISTRY,
    AreaCost,
    EnergyCost,
    LengthCost,
    TimeMaxCost,
    constant_speed_residual,
    evaluate_all,
    in_constraint_set,
    load_cost,
)
from resonantqoc.dynamics import ControlGrid, TimeGrid
from resonantqoc.errors import ConfigError, MissingWeight, WrongKind
from resonantqoc.system import LevelSystem


@pytest.fixture
def two_edge_control():
    grid = TimeGrid(2.0, 10)
    return ControlGrid.constant(grid, 3, {(0, 1): 0.6, (1, 2): -0.8j}, "H")


@pytest.fixture
def ladder():
    return LevelSystem.build([0.0, 1.0, 2.0], [(0, 1), (1, 2)])


def test_registry_names():
    assert sorted(COST_REGISTRY) == ["area", "energy", "length", "time-max"]


def test_values_of_a_constant_control(two_edge_control, ladder):
    values = evaluate_all(two_edge_control, ladder)
    assert values["energy"] == pytest.approx(2.0 * (0.36 + 0.64))
    assert values["length"] == pytest.approx(2.0 * 1.0)
    assert values["area"] == pytest.approx(2.0 * 1.4)
    assert values["time-max"] == pytest.approx(2.0 * 0.8)


def test_weights_override_the_system(two_edge_control, ladder):
    cost = load_cost({"kind": "energy", "weights": {"2,1": 2.0}})
    assert cost.weight_vector([(0, 1), (1, 2)], ladder).tolist() == [2.0, 1.0]
    assert cost.evaluate(two_edge_control, ladder) == pytest.approx(2.0 * (0.09 + 0.64))


def test_missing_weight(two_edge_control):
    with pytest.raises(MissingWeight):
        EnergyCost().evaluate(two_edge_control)


@pytest.mark.parametrize(
    "config",
    [
        {"kind": "volume"},
        {"kind": "energy", "final_time": "free"},
        {"kind": "area", "final_time": "sometimes"},
        {"kind": "length", "weights": {"1,2": -1.0}},
        {"kind": "length", "weights": {"1-2": 1.0}},
    ],
)
def test_bad_cost_specs(config):
    with pytest.raises(ConfigError):
        load_cost(config)


def test_reparametrization_invariant_costs_accept_free_time():
    for kind in ("length", "area", "time-max"):
        assert load_cost({"kind": kind, "final_time": "free"}).final_time == "free"


def test_to_config_writes_the_kind():
    config = LengthCost(weights={"1,2": 0.5}).to_config()
    assert config["kind"] == "length"
    assert load_cost(config).weights == {(0, 1): 0.5}


@pytest.mark.parametrize(
    "cost, inside",
    [(EnergyCost(), True), (LengthCost(), True), (AreaCost(), False), (TimeMaxCost(), True)],
)
def test_constraint_sets(two_edge_control, ladder, cost, inside):
    # scaled moduli (0.6, 0.8): on the unit sphere, outside the cross-polytope, inside the box
    assert in_constraint_set(cost, two_edge_control, 0, ladder) == inside


def test_constant_speed_residual(two_edge_control, ladder):
    assert constant_speed_residual(EnergyCost(), two_edge_control, ladder) == pytest.approx(0.0, abs=1e-12)
    values = two_edge_control.values.copy()
    values[0] *= 2.0
    assert constant_speed_residual(EnergyCost(), two_edge_control.with_values(values), ladder) > 0.5
    with pytest.raises(WrongKind):
        constant_speed_residual(AreaCost(), two_edge_control, ladder)


def test_length_solves_through_energy():
    surrogate = LengthCost(weights={"1,2": 3.0}).surrogate()
    assert isinstance(surrogate, EnergyCost)
    assert surrogate.weights == {(0, 1): 3.0}


@pytest.mark.parametrize("cost", [EnergyCost(), AreaCost()])
def test_smooth_gradients(cost, rng):
    U = rng.standard_normal((6, 2))
    mu = np.array([1.0, 2.0])
    dt, h = 0.1, 1e-6
    options = {"delta": 1e-2} if isinstance(cost, AreaCost) else {}
    _, gradient = cost.smooth_objective(U, mu, dt, **options)
    for i, e in [(0, 0), (3, 1), (5, 0)]:
        shifted = []
        for sign in (1.0, -1.0):
            V = U.copy()
            V[i, e] += sign * h
            shifted.append(cost.smooth_objective(V, mu, dt, **options)[0])
        assert gradient[i, e] == pytest.approx((shifted[0] - shifted[1]) / (2 * h), rel=1e-5)


def test_area_smoothing_schedule():
    schedule = list(AreaCost.smoothing_schedule())
    assert schedule[0] == 1e-2
    assert schedule[-1] == 1e-8
    assert all(a > b for a, b in zip(schedule, schedule[1:]))


def test_time_max_is_not_minimized_directly():
    with pytest.raises(NotImplementedError):
        TimeMaxCost().smooth_objective(np.zeros((2, 1)), np.ones(1), 0.5)


def _random_control(rng, grid, n=3, edges=((0, 1), (1, 2))):
    values = rng.standard_normal((grid.N, len(edges))) + 1j * rng.standard_normal((grid.N, len(edges)))
    return ControlGrid(grid, "H", n, edges, values)


def test_costs_increase_with_a_single_modulus(ladder, rng):
    control = _random_control(rng, TimeGrid(1.0, 8))
    before = evaluate_all(control, ladder)
    for i, e in [(0, 0), (3, 1), (7, 0)]:
        values = control.values.copy()
        values[i, e] *= 1.5
        after = evaluate_all(control.with_values(values), ladder)
        for kind in ("energy", "length", "area"):
            assert after[kind] > before[kind]
        assert after["time-max"] >= before["time-max"]


def test_length_is_bounded_by_energy(two_edge_control, ladder, rng):
    control = _random_control(rng, TimeGrid(2.0, 20))
    values = evaluate_all(control, ladder)
    assert values["length"] ** 2 < 2.0 * values["energy"]
    # equality at constant speed
    values = evaluate_all(two_edge_control, ladder)
    assert values["length"] ** 2 == pytest.approx(2.0 * values["energy"], rel=1e-10)


@pytest.mark.parametrize("kind", ["length", "area", "time-max"])
def test_reparametrization_invariance(kind, ladder, rng):
    control = _random_control(rng, TimeGrid(2.0, 12))
    reference = evaluate_all(control, ladder)[kind]
    s = 2.5
    faster = ControlGrid(TimeGrid(2.0 / s, 12), "H", 3, control.edges, s * control.values)
    assert evaluate_all(faster, ladder)[kind] == pytest.approx(reference, rel=1e-10)
    refined = ControlGrid(TimeGrid(2.0, 24), "H", 3, control.edges, np.repeat(control.values, 2, axis=0))
    assert evaluate_all(refined, ladder)[kind] == pytest.approx(reference, rel=1e-10)


def test_energy_is_not_reparametrization_invariant(ladder, rng):
    control = _random_control(rng, TimeGrid(2.0, 12))
    faster = ControlGrid(TimeGrid(0.8, 12), "H", 3, control.edges, 2.5 * control.values)
    assert evaluate_all(faster, ladder)["energy"] == pytest.approx(2.5 * evaluate_all(control, ladder)["energy"])
