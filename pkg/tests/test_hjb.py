import math

import numpy as np
import pytest

from swingstop import engine, hjb, oracle
from swingstop.drivers import inf_kappa
from swingstop.engine import MultiStopConfig
from swingstop.errors import ConfigError, CoverageError, DomainError
from swingstop.lattice import TimeGrid, build_lattice
from swingstop.rewards import RewardSpec, evaluate_reward


def make_grid(x0=100.0, sigma=0.2, horizon=1.0, nodes=120, steps=120, width=1.8):
    return hjb.build_pde_grid(
        x0 * math.exp(-width), x0 * math.exp(width), nodes, steps, horizon, x0
    )


def lattice_values(kappa, kind="call", strike=100.0, steps=512, n_rights=2, delta=0.25,
                   x0=100.0, b=0.05, sigma=0.2, horizon=1.0):
    grid = TimeGrid(horizon, steps)
    lat = build_lattice(grid, x0, b, sigma)
    reward = evaluate_reward(RewardSpec(kind=kind, strike=strike, terminal_zero=True), lat)
    ds = int(round(delta / grid.dt))
    stack = engine.solve_multiple_auxiliary(
        inf_kappa(kappa), lat, reward, MultiStopConfig(n_rights, ds)
    )
    return [stack.value_at_zero(j) for j in range(1, n_rights + 1)]


def test_grid_validation():
    with pytest.raises(DomainError):
        hjb.build_pde_grid(10.0, 1000.0, 40, 120, 1.0, 100.0)
    with pytest.raises(DomainError):
        hjb.build_pde_grid(10.0, 1000.0, 120, 40, 1.0, 100.0)
    with pytest.raises(DomainError):
        hjb.build_pde_grid(200.0, 1000.0, 120, 120, 1.0, 100.0)  # x0 outside


def test_zero_obstacle_zero_solution():
    grid = make_grid()
    obstacle = np.zeros((len(grid.t), len(grid.x)))
    sol = hjb.solve_vi_level(grid, 0.05, 0.2, 0.5, obstacle)
    assert np.all(sol.values == 0.0)


def test_nonzero_terminal_row_rejected():
    grid = make_grid()
    obstacle = np.ones((len(grid.t), len(grid.x)))
    with pytest.raises(DomainError):
        hjb.solve_vi_level(grid, 0.05, 0.2, 0.5, obstacle)


def test_values_dominate_obstacle_and_monotone():
    grid = make_grid()
    obstacle = np.zeros((len(grid.t), len(grid.x)))
    obstacle[:-1] = np.maximum(grid.x - 100.0, 0.0)
    sol = hjb.solve_vi_level(grid, 0.05, 0.2, 0.5, obstacle)
    assert np.all(sol.values >= obstacle - 1e-12)
    assert np.all(np.diff(sol.values, axis=1) >= -1e-9)
    assert sol.complementarity_residual <= 1e-6


def test_single_level_matches_lattice_zero_kappa():
    grid = make_grid()
    chain = hjb.solve_obstacle_chain(
        grid, 0.05, 0.2, 0.0, lambda t, x: np.maximum(x - 100.0, 0.0), 0.25, 1
    )
    lattice = lattice_values(0.0, n_rights=1)[0]
    gap = abs(chain.value_at(1, 0, 100.0) - lattice) / (1.0 + lattice)
    assert gap <= 1e-2


def test_single_level_matches_lattice_half_kappa():
    grid = make_grid()
    chain = hjb.solve_obstacle_chain(
        grid, 0.05, 0.2, 0.5, lambda t, x: np.maximum(x - 100.0, 0.0), 0.25, 1
    )
    lattice = lattice_values(0.5, n_rights=1)[0]
    gap = abs(chain.value_at(1, 0, 100.0) - lattice) / (1.0 + lattice)
    assert gap <= 1e-2


def test_chain_levels_nondecreasing():
    grid = make_grid()
    chain = hjb.solve_obstacle_chain(
        grid, 0.05, 0.2, 0.5, lambda t, x: np.maximum(x - 100.0, 0.0), 0.25, 2
    )
    assert np.all(chain.values[1] >= chain.values[0] - 1e-10)
    assert np.all(chain.obstacles[1] >= chain.obstacles[0] - 1e-12)


def test_next_obstacle_zero_previous_value():
    grid = make_grid()
    base = np.zeros((len(grid.t), len(grid.x)))
    base[:-1] = np.maximum(grid.x - 100.0, 0.0)
    out = hjb.build_next_obstacle(np.zeros_like(base), base, grid, 0.05, 0.2, 0.5, 0.25, 32)
    assert np.array_equal(out, base)


def test_next_obstacle_constant_previous_value():
    grid = make_grid()
    base = np.zeros((len(grid.t), len(grid.x)))
    vprev = np.full((len(grid.t), len(grid.x)), 3.0)
    out = hjb.build_next_obstacle(vprev, base, grid, 0.05, 0.2, 0.5, 0.25, 32)
    ahead = int(round(0.25 / grid.dt))
    live = len(grid.t) - 1 - ahead
    assert np.allclose(out[:live + 1], 3.0, rtol=0, atol=1e-12)
    assert np.all(out[live + 1:] == 0.0)


def test_next_obstacle_linear_previous_value_lognormal_mean():
    # previous value v(t, x) = x: the continuation is the shifted forward x*e^{(b-ks)d}
    grid = make_grid(width=2.5)
    base = np.zeros((len(grid.t), len(grid.x)))
    vprev = np.tile(grid.x, (len(grid.t), 1))
    b, sigma, kappa, delta = 0.05, 0.2, 0.5, 0.25
    out = hjb.build_next_obstacle(vprev, base, grid, b, sigma, kappa, delta, 64)
    expected = grid.x * math.exp((b - kappa * sigma) * delta)
    mid = len(grid.x) // 2
    sel = slice(mid - 10, mid + 10)
    assert np.allclose(out[0][sel], expected[sel], rtol=1e-6)


def test_next_obstacle_misaligned_delta():
    grid = make_grid(steps=97)
    base = np.zeros((len(grid.t), len(grid.x)))
    with pytest.raises(ConfigError):
        hjb.build_next_obstacle(np.zeros_like(base), base, grid, 0.05, 0.2, 0.5, 0.25, 16)


def test_next_obstacle_coverage_error_on_narrow_grid():
    grid = hjb.build_pde_grid(95.0, 105.0, 60, 60, 1.0, 100.0)
    base = np.zeros((len(grid.t), len(grid.x)))
    vprev = np.tile(grid.x, (len(grid.t), 1))
    with pytest.raises(CoverageError):
        hjb.build_next_obstacle(vprev, base, grid, 0.05, 0.2, 0.5, 0.5, 64)


def test_printed_variant_differs_when_kappa_positive():
    grid = make_grid(width=2.5)
    base = np.zeros((len(grid.t), len(grid.x)))
    vprev = np.tile(grid.x, (len(grid.t), 1))
    direct = hjb.build_next_obstacle(vprev, base, grid, 0.05, 0.2, 0.5, 0.25, 32)
    printed = hjb.build_next_obstacle(
        vprev, base, grid, 0.05, 0.2, 0.5, 0.25, 32, variant="paper_printed"
    )
    assert np.array_equal(direct[0], printed[0])  # t = 0: scaling is exp(0)
    assert not np.allclose(direct[40], printed[40])


def test_compare_pde_lattice_two_levels():
    grid = make_grid()
    chain = hjb.solve_obstacle_chain(
        grid, 0.05, 0.2, 0.5, lambda t, x: np.maximum(x - 100.0, 0.0), 0.25, 2
    )
    gaps = hjb.compare_pde_lattice(chain, lattice_values(0.5), 100.0)
    assert all(g.within_tolerance for g in gaps)


def test_flat_payoff_consistent_with_closed_form():
    # f(t, x) = c before the horizon: the PDE chain and the deterministic
    # closed form must both produce c per usable right
    c, horizon, delta = 2.0, 1.0, 0.25
    grid = make_grid()
    chain = hjb.solve_obstacle_chain(
        grid, 0.05, 0.2, 0.5, lambda t, x: np.full_like(x, c), delta, 2
    )
    tg = TimeGrid(horizon, 16)
    lat = build_lattice(tg, 100.0, 0.05, 0.2)
    table = [np.full(n + 1, c) for n in range(16)] + [np.zeros(17)]
    reward = evaluate_reward(RewardSpec(kind="table", table=table), lat)
    target = oracle.closed_form_deterministic(reward, tg, 4, 2)
    assert target == 2.0 * c
    assert chain.value_at(1, 0, 100.0) == pytest.approx(c, rel=1e-9)
    assert chain.value_at(2, 0, 100.0) == pytest.approx(target, rel=1e-6)
