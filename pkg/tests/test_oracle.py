import numpy as np
import pytest

from swingstop import engine, oracle
from swingstop.drivers import inf_kappa, sup_kappa, zero_driver
from swingstop.engine import MultiStopConfig
from swingstop.errors import CapacityError, PreconditionError
from swingstop.lattice import TimeGrid, build_lattice
from swingstop.oracle import (
    build_path_tree,
    closed_form_deterministic,
    drift_shift_value,
    enumerate_multiple_stopping,
)
from swingstop.rewards import RewardSpec, evaluate_reward


def tiny_lattice(steps):
    return build_lattice(TimeGrid(0.04 * steps, steps), x0=1.0, b=0.1, sigma=0.4)


def table_surface(lat, table):
    return evaluate_reward(RewardSpec(kind="table", table=table), lat)


# ----------------------------------------------------------- path tree

def test_path_tree_node_count_and_mapping():
    lat = tiny_lattice(3)
    rng = np.random.default_rng(2)
    table = [rng.uniform(0.0, 1.0, size=n + 1) for n in range(4)]
    surf = table_surface(lat, table)
    tree = build_path_tree(surf, lat)
    assert tree.node_count == 15
    for n in range(4):
        for path in range(2 ** n):
            ups = bin(path).count("1")
            assert tree.payoffs[n][path] == surf.slices[n][ups]


def test_path_tree_depth_capacity():
    lat = tiny_lattice(6)
    surf = table_surface(lat, [np.zeros(n + 1) for n in range(7)])
    with pytest.raises(CapacityError):
        build_path_tree(surf, lat)


# ----------------------------------------------------------- enumeration

def test_rule_counts_follow_recursion():
    # single right: 1, 2, 5, 26, 677 rules at depths 0..4
    expected = {0: 1, 1: 2, 2: 5, 3: 26, 4: 677}
    for depth, count in expected.items():
        if depth == 0:
            continue
        lat = tiny_lattice(depth)
        surf = table_surface(lat, [np.zeros(n + 1) for n in range(depth + 1)])
        tree = build_path_tree(surf, lat)
        res = enumerate_multiple_stopping(zero_driver(), tree, 1, 1)
        assert res.policy_count == count


def test_depth2_hand_enumeration():
    lat = tiny_lattice(2)
    table = [np.array([0.0]), np.array([0.0, 2.0]), np.array([1.0, 1.0, 1.0])]
    surf = table_surface(lat, table)
    tree = build_path_tree(surf, lat)
    res = enumerate_multiple_stopping(zero_driver(), tree, 1, 1)
    assert res.policy_count == 5
    assert res.max_value == 1.5


def test_zero_reward_enumeration():
    lat = tiny_lattice(3)
    surf = table_surface(lat, [np.zeros(n + 1) for n in range(4)])
    tree = build_path_tree(surf, lat)
    res = enumerate_multiple_stopping(sup_kappa(0.5), tree, 2, 1)
    assert res.max_value == 0.0


def test_enumeration_rights_capacity():
    lat = tiny_lattice(2)
    surf = table_surface(lat, [np.zeros(n + 1) for n in range(3)])
    tree = build_path_tree(surf, lat)
    with pytest.raises(CapacityError):
        enumerate_multiple_stopping(zero_driver(), tree, 3, 0)


def test_engine_matches_enumeration_batch():
    rng = np.random.default_rng(123)
    drivers = [zero_driver(), sup_kappa(0.5), inf_kappa(0.5)]
    for depth in (2, 3, 4):
        lat = tiny_lattice(depth)
        table = [rng.uniform(0.0, 2.0, size=n + 1) for n in range(depth + 1)]
        surf = table_surface(lat, table)
        tree = build_path_tree(surf, lat)
        for d in drivers:
            for ds in (0, 1, 2):
                for L in (1, 2):
                    if (L - 1) * ds > depth:
                        continue
                    stack = engine.solve_multiple_direct(d, lat, surf, MultiStopConfig(L, ds))
                    res = enumerate_multiple_stopping(d, tree, L, ds)
                    assert stack.value_at_zero() == pytest.approx(res.max_value, abs=1e-13)


def test_argmax_times_respect_separation():
    rng = np.random.default_rng(9)
    lat = tiny_lattice(4)
    table = [rng.uniform(0.0, 2.0, size=n + 1) for n in range(5)]
    surf = table_surface(lat, table)
    tree = build_path_tree(surf, lat)
    res = enumerate_multiple_stopping(inf_kappa(0.5), tree, 2, 2)
    assert len(res.argmax_times) == 16
    for times in res.argmax_times.values():
        for t1, t2 in zip(times, times[1:]):
            assert t2 - t1 >= 2


# ----------------------------------------------------------- drift shift

def test_up_probability_hand_value():
    lat = build_lattice(TimeGrid(0.04, 1), x0=1.0, b=0.0, sigma=0.3)
    surf = evaluate_reward(RewardSpec(kind="call", strike=0.5), lat)
    res = drift_shift_value(lat, surf, 0.5, 1, 0)
    assert res.up_probability == pytest.approx(0.45, abs=1e-15)


def test_kappa_zero_reduces_to_classical():
    lat = build_lattice(TimeGrid(1.0, 32), x0=1.0, b=0.05, sigma=0.3)
    surf = evaluate_reward(RewardSpec(kind="call", strike=1.0), lat)
    res = drift_shift_value(lat, surf, 0.0, 2, 4)
    assert res.up_probability == 0.5
    stack = engine.solve_multiple_direct(zero_driver(), lat, surf, MultiStopConfig(2, 4))
    for j in (1, 2):
        for n in range(33):
            assert np.allclose(stack.values[j][n], res.values[j][n], rtol=0, atol=1e-13)


def test_increasing_call_nodewise_equality():
    kappa = 0.5
    lat = build_lattice(TimeGrid(1.0, 128), x0=100.0, b=0.05, sigma=0.2)
    surf = evaluate_reward(RewardSpec(kind="call", strike=100.0), lat)
    stack = engine.solve_multiple_direct(inf_kappa(kappa), lat, surf, MultiStopConfig(2, 4))
    res = drift_shift_value(lat, surf, kappa, 2, 4)
    assert res.monotone_ok
    for j in (1, 2):
        for n in range(129):
            gap = np.abs(stack.values[j][n] - res.values[j][n]) / (1.0 + np.abs(stack.values[j][n]))
            assert float(gap.max()) <= 1e-13


def test_decreasing_put_mirrored_shift():
    kappa = 0.5
    lat = build_lattice(TimeGrid(1.0, 128), x0=100.0, b=0.05, sigma=0.2)
    surf = evaluate_reward(RewardSpec(kind="put", strike=110.0), lat)
    res = drift_shift_value(lat, surf, kappa, 2, 4)
    assert res.up_probability > 0.5
    stack = engine.solve_multiple_direct(inf_kappa(kappa), lat, surf, MultiStopConfig(2, 4))
    for j in (1, 2):
        for n in range(129):
            gap = np.abs(stack.values[j][n] - res.values[j][n]) / (1.0 + np.abs(stack.values[j][n]))
            assert float(gap.max()) <= 1e-13


def test_non_monotone_reward_rejected():
    rng = np.random.default_rng(4)
    lat = tiny_lattice(4)
    table = [rng.uniform(0.0, 2.0, size=n + 1) for n in range(5)]
    surf = table_surface(lat, table)
    with pytest.raises(PreconditionError):
        drift_shift_value(lat, surf, 0.5, 1, 0)


# ----------------------------------------------------------- closed form

def test_closed_form_hand_values():
    grid = TimeGrid(2.0, 2)
    lat = build_lattice(grid, x0=1.0, b=0.0, sigma=0.3)
    surf = table_surface(lat, [np.array([0.0]), np.array([1.0, 1.0]), np.array([2.0] * 3)])
    assert closed_form_deterministic(surf, grid, 2, 2) == 2.0
    assert closed_form_deterministic(surf, grid, 2, 1) == 2.0  # single right: stop at T
    const = table_surface(lat, [np.full(n + 1, 1.5) for n in range(3)])
    assert closed_form_deterministic(const, grid, 1, 2) == 3.0  # two usable rights


def test_closed_form_delta_zero_uses_all_rights():
    grid = TimeGrid(1.0, 4)
    lat = build_lattice(grid, x0=1.0, b=0.0, sigma=0.3)
    const = table_surface(lat, [np.full(n + 1, 2.0) for n in range(5)])
    assert closed_form_deterministic(const, grid, 0, 3) == 6.0


def test_closed_form_rejects_stochastic_or_decreasing():
    grid = TimeGrid(1.0, 2)
    lat = build_lattice(grid, x0=1.0, b=0.0, sigma=0.3)
    stoch = table_surface(lat, [np.array([1.0]), np.array([1.0, 2.0]), np.array([3.0] * 3)])
    with pytest.raises(PreconditionError):
        closed_form_deterministic(stoch, grid, 1, 1)
    dec = table_surface(lat, [np.array([2.0]), np.array([1.0, 1.0]), np.array([0.0] * 3)])
    with pytest.raises(PreconditionError):
        closed_form_deterministic(dec, grid, 1, 1)
