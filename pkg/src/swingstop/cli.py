"""Command-line front end: config in, CSV reports out.

Commands: price, boundary, converge, oracle, verify, pde-compare.
Exit codes: 0 success, 2 config error, 3 assertion failure, 4 solver
error.  Identical configs produce byte-identical output files.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import engine, hjb, oracle
from .config import RunConfig, fmt17, parse_config
from .drivers import Driver, make_driver
from .errors import (
    CapacityError,
    ConfigError,
    ConstraintError,
    CoverageError,
    DomainError,
    PreconditionError,
    ShapeError,
    SolverError,
    StabilityError,
    SwingStopError,
    ValidationError,
)
from .lattice import Lattice, TimeGrid, build_lattice
from .rewards import RewardSpec, RewardSurface, evaluate_reward, load_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERT = 3
EXIT_SOLVER = 4


def _load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None


def _build_driver(cfg: RunConfig) -> Driver:
    return make_driver(cfg.driver_kind, kappa=cfg.kappa, a=cfg.a, epsilon=cfg.epsilon)


def _build_lattice(cfg: RunConfig) -> Lattice:
    return build_lattice(TimeGrid(cfg.horizon, cfg.steps), cfg.x0, cfg.b, cfg.sigma)


def _build_reward(cfg: RunConfig, lat: Lattice) -> RewardSurface:
    if cfg.payoff_kind == "table":
        table = load_table(cfg.table_path, cfg.steps)
        spec = RewardSpec(kind="table", table=table, terminal_zero=cfg.terminal_zero)
    else:
        spec = RewardSpec(kind=cfg.payoff_kind, strike=cfg.strike,
                          terminal_zero=cfg.terminal_zero)
    return evaluate_reward(spec, lat)


def _write_csv(path: str, header: str, rows: list[str]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def _solve_stack(cfg: RunConfig):
    d = _build_driver(cfg)
    lat = _build_lattice(cfg)
    reward = _build_reward(cfg, lat)
    mcfg = engine.MultiStopConfig(cfg.n_rights, cfg.delta_steps)
    stack = engine.solve_multiple_auxiliary(d, lat, reward, mcfg)
    return d, lat, reward, mcfg, stack


def cmd_price(cfg: RunConfig, out_dir: str) -> int:
    _, _, _, _, stack = _solve_stack(cfg)
    rows = [f"{j},{fmt17(stack.value_at_zero(j))}" for j in range(1, cfg.n_rights + 1)]
    _write_csv(os.path.join(out_dir, "price.csv"), "j,value_at_0", rows)
    print(f"price: wrote {cfg.n_rights} rows to {os.path.join(out_dir, 'price.csv')}")
    return EXIT_OK


def cmd_boundary(cfg: RunConfig, out_dir: str) -> int:
    _, lat, _, _, stack = _solve_stack(cfg)
    regions = engine.extract_policy(stack)
    rows = []
    for j in range(1, cfg.n_rights + 1):
        for n in range(cfg.steps + 1):
            hit = np.flatnonzero(regions[j][n])
            if hit.size:
                k = int(hit[0])
                state = float(lat.states(n)[k])
                rows.append(f"{j},{n},{fmt17(lat.grid.time(n))},{fmt17(state)}")
    _write_csv(
        os.path.join(out_dir, "boundary.csv"),
        "j,step,time,state_at_lowest_stop_node",
        rows,
    )
    print(f"boundary: wrote {len(rows)} rows to {os.path.join(out_dir, 'boundary.csv')}")
    return EXIT_OK


def cmd_converge(cfg: RunConfig, out_dir: str, n_min: int, n_max: int) -> int:
    d = _build_driver(cfg)

    def reward_factory(lat: Lattice) -> RewardSurface:
        return _build_reward(cfg, lat)

    if cfg.payoff_kind == "table":
        raise ConfigError("convergence studies need a payoff that re-evaluates at any grid")
    rows_data = engine.convergence_study(
        d,
        x0=cfg.x0,
        b=cfg.b,
        sigma=cfg.sigma,
        horizon=cfg.horizon,
        reward_factory=reward_factory,
        n_rights=cfg.n_rights,
        delta=cfg.delta,
        n_min=n_min,
        n_max=n_max,
    )
    rows = []
    for r in rows_data:
        diff = "" if r.abs_diff_prev is None else fmt17(r.abs_diff_prev)
        rows.append(f"{r.exponent},{r.steps},{fmt17(r.value)},{diff}")
    _write_csv(os.path.join(out_dir, "convergence.csv"), "n,steps,value,abs_diff_prev", rows)
    print(f"converge: wrote {len(rows)} rows to {os.path.join(out_dir, 'convergence.csv')}")
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, out_dir: str) -> int:
    d, lat, reward, mcfg, aux = _solve_stack(cfg)
    direct = engine.solve_multiple_direct(d, lat, reward, mcfg)
    rows = [
        f"engine_direct,{fmt17(direct.value_at_zero())}",
        f"engine_auxiliary,{fmt17(aux.value_at_zero())}",
    ]
    ran_independent = False
    if cfg.steps <= oracle.MAX_DEPTH and cfg.n_rights <= oracle.MAX_RIGHTS:
        tree = oracle.build_path_tree(reward, lat)
        enum = oracle.enumerate_multiple_stopping(d, tree, cfg.n_rights, cfg.delta_steps)
        rows.append(f"enumeration,{fmt17(enum.max_value)}")
        ran_independent = True
    if cfg.driver_kind == "inf_kappa" and (
        reward.is_monotone("increasing") or reward.is_monotone("decreasing")
    ):
        shift = oracle.drift_shift_value(lat, reward, cfg.kappa, cfg.n_rights, cfg.delta_steps)
        rows.append(f"drift_shift,{fmt17(shift.value_at_zero(cfg.n_rights))}")
        ran_independent = True
    deterministic = all(np.all(s == s[0]) for s in reward.slices)
    nondecreasing = deterministic and all(
        float(reward.slices[n][0]) <= float(reward.slices[n + 1][0]) for n in range(cfg.steps)
    )
    if deterministic and nondecreasing and d.is_superlinear:
        cf = oracle.closed_form_deterministic(reward, lat.grid, cfg.delta_steps, cfg.n_rights)
        rows.append(f"closed_form,{fmt17(cf)}")
        ran_independent = True
    if not ran_independent:
        print("oracle: no independent method applies to this instance", file=sys.stderr)
    _write_csv(os.path.join(out_dir, "oracle.csv"), "method,value", rows)
    print(f"oracle: wrote {len(rows)} rows to {os.path.join(out_dir, 'oracle.csv')}")
    return EXIT_OK


def cmd_verify(out_dir: str, threads: int | None) -> int:
    from . import acceptance

    results = acceptance.run_all(threads=threads)
    failures = []
    for r in results:
        print(r.line())
        if not r.passed:
            failures.append(r)
    if failures:
        for r in failures:
            print(f"FAIL,{r.number},{r.name},{r.detail}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def cmd_pde_compare(cfg: RunConfig, out_dir: str, surface_out: str | None) -> int:
    if cfg.driver_kind not in ("zero", "inf_kappa"):
        raise ConfigError("pde-compare supports driver.kind zero or inf_kappa")
    kappa = cfg.kappa if cfg.driver_kind == "inf_kappa" else 0.0
    d = make_driver("inf_kappa", kappa=kappa)
    lat = _build_lattice(cfg)
    # continuous-time convention on both sides
    reward_cfg = dataclasses.replace(cfg, terminal_zero=True)
    reward = _build_reward(reward_cfg, lat)
    mcfg = engine.MultiStopConfig(cfg.n_rights, cfg.delta_steps)
    stack = engine.solve_multiple_auxiliary(d, lat, reward, mcfg)
    lattice_values = [stack.value_at_zero(j) for j in range(1, cfg.n_rights + 1)]

    xmin, xmax = cfg.pde_xmin, cfg.pde_xmax
    if xmin <= 0.0 or xmax <= 0.0:
        width = (
            7.0 * cfg.sigma * np.sqrt(cfg.horizon)
            + (abs(cfg.b) + kappa * cfg.sigma) * cfg.horizon
            + 4.0 * cfg.sigma * np.sqrt(max(cfg.delta, cfg.dt))
        )
        xmin = cfg.x0 * float(np.exp(-width))
        xmax = cfg.x0 * float(np.exp(width))
    grid = hjb.build_pde_grid(
        xmin, xmax, cfg.pde_space_nodes, cfg.pde_time_steps, cfg.horizon, cfg.x0
    )

    if cfg.payoff_kind == "call":
        payoff = lambda t, x: np.maximum(x - cfg.strike, 0.0)
    elif cfg.payoff_kind == "put":
        payoff = lambda t, x: np.maximum(cfg.strike - x, 0.0)
    elif cfg.payoff_kind == "linear":
        payoff = lambda t, x: x.copy()
    else:
        raise ConfigError("pde-compare supports payoff.kind call, put or linear")

    chain = hjb.solve_obstacle_chain(
        grid,
        cfg.b,
        cfg.sigma,
        kappa,
        payoff,
        cfg.delta,
        cfg.n_rights,
        quad_order=cfg.pde_quadrature_order,
        variant=cfg.pde_obstacle_variant,
    )
    gaps = hjb.compare_pde_lattice(chain, lattice_values, cfg.x0)
    rows = [
        f"{g.level},{fmt17(g.pde_value)},{fmt17(g.lattice_value)},{fmt17(g.relative_gap)}"
        for g in gaps
    ]
    _write_csv(
        os.path.join(out_dir, "pde_compare.csv"),
        "i,pde_value,lattice_value,rel_gap",
        rows,
    )
    if surface_out:
        srows = []
        for i, grid_vals in enumerate(chain.values, start=1):
            for m, t in enumerate(grid.t):
                for xi, x in enumerate(grid.x):
                    srows.append(f"{i},{fmt17(float(t))},{fmt17(float(x))},{fmt17(float(grid_vals[m, xi]))}")
        _write_csv(surface_out, "i,t,x,v", srows)
    print(
        "pde-compare: "
        + "; ".join(f"level {g.level} gap {g.relative_gap:.3e}" for g in gaps)
    )
    bad = [g for g in gaps if not g.within_tolerance]
    if bad:
        for g in bad:
            print(f"FAIL,pde_gap,level={g.level},rel_gap={g.relative_gap}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def _threads_from_env() -> int:
    raw = os.environ.get("SWINGSTOP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SWINGSTOP_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="swingstop",
        description="Multiple-exercise stopping under nonlinear expectations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("price", "boundary", "oracle", "pde-compare"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None, help="output directory (default: run.out)")
        if name == "pde-compare":
            p.add_argument("--surface-out", default=None, help="also dump 'i,t,x,v' rows here")
    p = sub.add_parser("converge")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--n-min", type=int, default=4)
    p.add_argument("--n-max", type=int, default=9)
    p = sub.add_parser("verify")
    p.add_argument("--config", default=None, help="ignored; the suite is self-contained")
    p.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    try:
        if args.command == "verify":
            return cmd_verify(args.out or "out", _threads_from_env())
        cfg = _load_config(args.config)
        out_dir = args.out or cfg.out
        if args.command == "price":
            return cmd_price(cfg, out_dir)
        if args.command == "boundary":
            return cmd_boundary(cfg, out_dir)
        if args.command == "converge":
            return cmd_converge(cfg, out_dir, args.n_min, args.n_max)
        if args.command == "oracle":
            return cmd_oracle(cfg, out_dir)
        if args.command == "pde-compare":
            return cmd_pde_compare(cfg, out_dir, args.surface_out)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, DomainError, ConstraintError, CapacityError, PreconditionError,
            ShapeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, AssertionError) as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (SolverError, StabilityError, CoverageError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
