"""Multiple-stopping solver with nested policies and structural checks.

The problem: maximise the nonlinear conditional evaluation of a sum of
rewards collected at up to L stopping times, any two consecutive ones
separated by at least `delta_steps` grid steps.  Two formulations are
implemented and must agree:

* direct  -- nested recursion on per-right value surfaces,
             V_j(n) = max{ X(n) + E_n[V_{j-1}(n + delta)], E_n[V_j(n+1)] };
* auxiliary -- each right is reduced to a single-stopping problem with
             the augmented reward X_j(n) = X(n) + E_n[V_{j-1}(n + delta)].

Beyond the horizon every slice reads as zero, so the same recursion
covers delta = 0 (terminal slice accumulates j*X(N)) and delta >= 1
(terminal slice equals X(N)).  Stop regions use the earliest-stopping
convention with a relative tie tolerance; policies compose into
refraction-separated stopping vectors and can be re-priced by an
independent state-augmented evaluator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .drivers import Driver
from .errors import (
    ConfigError,
    ConstraintError,
    PreconditionError,
    ShapeError,
)
from .lattice import Lattice, TimeGrid, build_lattice, check_stability, rollback_slice
from .rewards import RewardSpec, RewardSurface, evaluate_reward

TIE_SCALE = 1e-12

Surface = list  # one np.ndarray per step, index n = 0..N


def _tie_tol(continuation: np.ndarray) -> np.ndarray:
    # earliest-stopping convention under floating arithmetic
    return TIE_SCALE * (1.0 + np.abs(continuation))


@dataclass(frozen=True)
class MultiStopConfig:
    """Number of exercise rights and the refraction period in grid steps."""

    n_rights: int
    delta_steps: int

    def __post_init__(self) -> None:
        if self.n_rights < 1:
            raise ConstraintError(f"need at least one right, got {self.n_rights}")
        if self.delta_steps < 0:
            raise ConstraintError(f"delta_steps must be >= 0, got {self.delta_steps}")

    def delta_calendar(self, grid: TimeGrid) -> float:
        return self.delta_steps * grid.dt

    def validate_against(self, grid: TimeGrid) -> None:
        if (self.n_rights - 1) * self.delta_steps > grid.steps:
            raise ConstraintError(
                f"(L-1)*delta = {(self.n_rights - 1) * self.delta_steps} steps exceeds "
                f"the horizon of {grid.steps} steps"
            )


@dataclass
class SnellResult:
    """Single-stopping envelope: values, one-step continuations, stop region."""

    values: Surface
    continuations: Surface
    stop_region: Surface  # boolean per node

    def value_at_zero(self) -> float:
        return float(self.values[0][0])


@dataclass
class ValueStack:
    """Per-right surfaces produced by either solve method.

    values[j] is the value surface with j rights left (values[0] is the
    zero surface); aux_rewards[j] the augmented reward; continuations[j]
    the one-step continuation of values[j].  Stop regions are filled by
    `extract_policy`.
    """

    method: str
    driver: Driver
    lat: Lattice
    reward: RewardSurface
    cfg: MultiStopConfig
    values: list[Surface]
    aux_rewards: list[Surface | None]
    continuations: list[Surface | None]
    stop_regions: list[Surface | None] | None = None

    def value_at_zero(self, j: int | None = None) -> float:
        if j is None:
            j = self.cfg.n_rights
        return float(self.values[j][0][0])

    def validate(self, slack: float = 1e-12) -> None:
        """Dominance chain and terminal condition (delta >= 1) sanity."""
        N = self.lat.grid.steps
        for j in range(1, self.cfg.n_rights + 1):
            if self.cfg.delta_steps >= 1:
                if not np.array_equal(self.values[j][N], self.reward.slices[N]):
                    raise AssertionError(f"terminal slice of V_{j} != X(N)")
            for n in range(N + 1):
                tol = slack * (1.0 + np.abs(self.values[j][n]))
                if np.any(self.values[j][n] < self.values[j - 1][n] - tol):
                    raise AssertionError(f"V_{j} < V_{j - 1} at step {n}")
                if np.any(self.values[j][n] < self.aux_rewards[j][n] - tol):
                    raise AssertionError(f"V_{j} < X^({j}) at step {n}")
                if j >= 2:
                    if np.any(self.aux_rewards[j][n] < self.aux_rewards[j - 1][n] - tol):
                        raise AssertionError(f"X^({j}) < X^({j - 1}) at step {n}")


@dataclass(frozen=True)
class StoppingVector:
    """Exercise steps tau_1 <= ... <= tau_L; entries > steps mean unexercised."""

    times: tuple[int, ...]
    steps: int
    delta_steps: int

    def __post_init__(self) -> None:
        prev = None
        for t in self.times:
            if prev is not None and t - prev < self.delta_steps:
                raise ConstraintError(f"stopping vector violates separation: {self.times}")
            prev = t

    @property
    def exercised(self) -> tuple[bool, ...]:
        return tuple(t <= self.steps for t in self.times)


def _zero_surface(N: int) -> Surface:
    return [np.zeros(n + 1) for n in range(N + 1)]


def _delta_rollback(d: Driver, lat: Lattice, surface: Surface, n: int, delta_steps: int) -> np.ndarray:
    """E_n of surface slice at n + delta, zero when that falls past the horizon."""
    target = n + delta_steps
    if target > lat.grid.steps:
        return np.zeros(n + 1)
    cur = surface[target]
    for m in range(target - 1, n - 1, -1):
        cur = rollback_slice(d, lat, m, cur)
    return cur


def _snell_slices(d: Driver, lat: Lattice, obstacle: Surface) -> SnellResult:
    N = lat.grid.steps
    values: Surface = [None] * (N + 1)
    conts: Surface = [None] * (N + 1)
    region: Surface = [None] * (N + 1)
    conts[N] = np.zeros(N + 1)
    values[N] = np.asarray(obstacle[N], dtype=float)
    region[N] = obstacle[N] >= conts[N] - _tie_tol(conts[N])
    for n in range(N - 1, -1, -1):
        conts[n] = rollback_slice(d, lat, n, values[n + 1])
        values[n] = np.maximum(obstacle[n], conts[n])
        region[n] = obstacle[n] >= conts[n] - _tie_tol(conts[n])
    return SnellResult(values=values, continuations=conts, stop_region=region)


def snell_envelope(d: Driver, lat: Lattice, reward: RewardSurface) -> SnellResult:
    """Smallest dominating supermartingale surface for a single right."""
    if reward.steps != lat.grid.steps:
        raise ShapeError(
            f"reward covers {reward.steps} steps but lattice has {lat.grid.steps}"
        )
    check_stability(d, lat.grid.dt)
    return _snell_slices(d, lat, list(reward.slices))


def solve_multiple_direct(
    d: Driver, lat: Lattice, reward: RewardSurface, cfg: MultiStopConfig
) -> ValueStack:
    """Nested backward recursion over rights.

    The continuation of the (j-1)-right surface after the refraction
    period is a delta-fold rollback of its step-(n + delta) slice, taken
    as zero past the horizon.
    """
    cfg.validate_against(lat.grid)
    check_stability(d, lat.grid.dt)
    N = lat.grid.steps
    values: list[Surface] = [_zero_surface(N)]
    aux: list[Surface | None] = [None]
    conts: list[Surface | None] = [None]
    for j in range(1, cfg.n_rights + 1):
        prev = values[j - 1]
        vj: Surface = [None] * (N + 1)
        xj: Surface = [None] * (N + 1)
        cj: Surface = [None] * (N + 1)
        cj[N] = np.zeros(N + 1)
        xj[N] = reward.slices[N] + _delta_rollback(d, lat, prev, N, cfg.delta_steps)
        vj[N] = xj[N]
        for n in range(N - 1, -1, -1):
            cj[n] = rollback_slice(d, lat, n, vj[n + 1])
            xj[n] = reward.slices[n] + _delta_rollback(d, lat, prev, n, cfg.delta_steps)
            vj[n] = np.maximum(xj[n], cj[n])
        values.append(vj)
        aux.append(xj)
        conts.append(cj)
    return ValueStack("direct", d, lat, reward, cfg, values, aux, conts)


def solve_multiple_auxiliary(
    d: Driver, lat: Lattice, reward: RewardSurface, cfg: MultiStopConfig
) -> ValueStack:
    """Reduction to a chain of single-stopping problems.

    Builds the j-exercise reward (original reward plus the rolled-back
    value of j-1 remaining rights after the refraction period), then
    takes its single-stopping envelope; stop regions are where the
    envelope meets the augmented reward.
    """
    cfg.validate_against(lat.grid)
    check_stability(d, lat.grid.dt)
    N = lat.grid.steps
    values: list[Surface] = [_zero_surface(N)]
    aux: list[Surface | None] = [None]
    conts: list[Surface | None] = [None]
    for j in range(1, cfg.n_rights + 1):
        prev = values[j - 1]
        xj = [
            reward.slices[n] + _delta_rollback(d, lat, prev, n, cfg.delta_steps)
            for n in range(N + 1)
        ]
        res = _snell_slices(d, lat, xj)
        values.append(res.values)
        aux.append(xj)
        conts.append(res.continuations)
    return ValueStack("auxiliary", d, lat, reward, cfg, values, aux, conts)


def extract_policy(stack: ValueStack, verify: bool = True) -> list[Surface | None]:
    """Earliest-stop regions per remaining-rights count.

    Region j holds where the augmented reward is at least the one-step
    continuation (up to the tie tolerance).  With `verify`, the same
    regions are recomputed from the value surfaces alone (reward plus
    refraction-lagged rollback against the one-step continuation) and
    must match node-for-node.
    """
    N = stack.lat.grid.steps
    regions: list[Surface | None] = [None]
    for j in range(1, stack.cfg.n_rights + 1):
        rj = [
            stack.aux_rewards[j][n] >= stack.continuations[j][n] - _tie_tol(stack.continuations[j][n])
            for n in range(N + 1)
        ]
        regions.append(rj)
    if verify:
        d, lat, cfg = stack.driver, stack.lat, stack.cfg
        for j in range(1, cfg.n_rights + 1):
            for n in range(N + 1):
                lagged = _delta_rollback(d, lat, stack.values[j - 1], n, cfg.delta_steps)
                if n < N:
                    cont = rollback_slice(d, lat, n, stack.values[j][n + 1])
                else:
                    cont = np.zeros(N + 1)
                alt = (stack.reward.slices[n] + lagged) >= cont - _tie_tol(cont)
                if not np.array_equal(alt, regions[j][n]):
                    raise AssertionError(
                        f"stop-region characterisations disagree at right {j}, step {n}"
                    )
    stack.stop_regions = regions
    return regions


def _path_node_indices(path: Sequence[int], N: int) -> np.ndarray:
    p = np.asarray(path, dtype=int)
    if p.shape != (N,):
        raise ShapeError(f"path must have length {N}, got {p.shape}")
    if np.any((p != 0) & (p != 1)):
        raise ShapeError("path entries must be 0 (down) or 1 (up)")
    return np.concatenate([[0], np.cumsum(p)])


def compose_stopping_times(stack: ValueStack, path: Sequence[int]) -> StoppingVector:
    """Walk a path, exercising at the first entry into each nested region.

    The d-th time is the first step at or after tau_{d-1} + delta whose
    node lies in the region for L-d+1 remaining rights; if that start
    already lies past the horizon the time is recorded as
    tau_{d-1} + delta (unexercised, worth zero by the zero extension).
    """
    if stack.stop_regions is None:
        extract_policy(stack)
    N = stack.lat.grid.steps
    L, ds = stack.cfg.n_rights, stack.cfg.delta_steps
    ks = _path_node_indices(path, N)
    times: list[int] = []
    start = 0
    for dth in range(1, L + 1):
        remaining = L - dth + 1
        if start > N:
            t = start
        else:
            region = stack.stop_regions[remaining]
            t = None
            for n in range(start, N + 1):
                if region[n][ks[n]]:
                    t = n
                    break
            if t is None:
                raise AssertionError("terminal step must always be in the stop region")
        times.append(t)
        start = t + ds
    return StoppingVector(times=tuple(times), steps=N, delta_steps=ds)


def evaluate_policy(
    d: Driver,
    lat: Lattice,
    reward: RewardSurface,
    regions: list[Surface | None],
    cfg: MultiStopConfig,
) -> float:
    """Price a region policy by backward induction with augmented state.

    The state carries (rights remaining, steps since last exercise
    capped at delta); at eligible nodes inside the region for the
    current rights count the policy exercises, otherwise it continues.
    No maximisation happens here, so the result is an independent check
    that the extracted policy actually attains the solver value.
    """
    cfg.validate_against(lat.grid)
    check_stability(d, lat.grid.dt)
    N = lat.grid.steps
    L, ds = cfg.n_rights, cfg.delta_steps
    W = ds  # age W means eligible; with ds == 0 every node is eligible
    nxt = np.zeros((L + 1, W + 1, N + 2))
    for n in range(N, -1, -1):
        cur = np.empty((L + 1, W + 1, n + 1))
        X = reward.slices[n]
        for r in range(L + 1):
            for w in range(W + 1):
                if n == N:
                    cur[r, w] = 0.0
                else:
                    wn = min(w + 1, W)
                    cur[r, w] = rollback_slice(d, lat, n, nxt[r, wn])
        for r in range(1, L + 1):
            stop = np.asarray(regions[r][n], dtype=bool)
            if stop.any():
                # age 0 at the same node: ineligible until delta steps pass
                # (with delta == 0 it is the already-final eligible state)
                after = cur[r - 1, 0]
                cur[r, W] = np.where(stop, X + after, cur[r, W])
        nxt = cur
    return float(nxt[L, W, 0])


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    max_violation: float
    detail: str


@dataclass
class StructuralReport:
    checks: dict[str, CheckOutcome]
    diagnostics: dict[str, object]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks.values())


def _reward_is_deterministic(reward: RewardSurface) -> bool:
    return all(np.all(s == s[0]) for s in reward.slices)


def _reward_deterministic_values(reward: RewardSurface) -> np.ndarray:
    return np.array([float(s[0]) for s in reward.slices])


def check_structural_properties(
    d: Driver,
    lat: Lattice,
    reward: RewardSurface,
    cfg: MultiStopConfig,
    *,
    checks: Sequence[str] | None = None,
    n_paths: int = 500,
    seed: int = 2024,
    slack: float = 1e-12,
) -> StructuralReport:
    """Run the structural inequalities admissible for this driver/reward.

    'sublinear_bound':      V_j <= V_1 + E[V_{j-1}(.+delta)] node-wise, and
                            composed times never later than single-right
                            restart times, path-wise (sublinear drivers).
    'delta_zero_scaling':   with delta = 0, L rights are worth exactly L
                            single rights and all composed times coincide
                            (sublinear drivers).
    'superlinear_closed_form': deterministic nondecreasing rewards stop on
                            the right-aligned schedule; the value is the
                            summed tail rewards (superlinear drivers).
    Requesting a check whose gate does not hold raises ConfigError.
    Always reported: marginal values per right and the soft count of
    exercised rights (at least L - floor(L/2) expected when the reward
    is strictly positive before the horizon; not asserted).
    """
    deterministic = _reward_is_deterministic(reward)
    nondecreasing = deterministic and bool(
        np.all(np.diff(_reward_deterministic_values(reward)) >= 0.0)
    )
    gates = {
        "sublinear_bound": d.is_sublinear,
        "delta_zero_scaling": d.is_sublinear and cfg.delta_steps == 0,
        "superlinear_closed_form": d.is_superlinear and nondecreasing,
    }
    if checks is None:
        requested = [name for name, ok in gates.items() if ok]
    else:
        for name in checks:
            if name not in gates:
                raise ConfigError(f"unknown structural check {name!r}")
            if not gates[name]:
                raise ConfigError(
                    f"check {name!r} requires different driver flags or reward shape"
                )
        requested = list(checks)

    stack = solve_multiple_auxiliary(d, lat, reward, cfg)
    extract_policy(stack, verify=False)
    N, L, ds = lat.grid.steps, cfg.n_rights, cfg.delta_steps
    rng = np.random.default_rng(seed)
    paths = rng.integers(0, 2, size=(n_paths, N))

    outcomes: dict[str, CheckOutcome] = {}

    if "sublinear_bound" in requested:
        worst = 0.0
        for j in range(2, L + 1):
            for n in range(N + 1):
                lagged = stack.aux_rewards[j][n] - reward.slices[n]
                gap = stack.values[j][n] - (stack.values[1][n] + lagged)
                worst = max(worst, float(gap.max()) if gap.size else 0.0)
        path_bad = 0
        for p in paths:
            ks = _path_node_indices(p, N)
            tau = compose_stopping_times(stack, p).times
            r1 = stack.stop_regions[1]
            for i in range(1, L + 1):
                start = 0 if i == 1 else tau[i - 2] + ds
                if start > N:
                    zeta = start
                else:
                    zeta = next(n for n in range(start, N + 1) if r1[n][ks[n]])
                if tau[i - 1] > zeta:
                    path_bad += 1
        tol = slack * (1.0 + abs(stack.value_at_zero()))
        outcomes["sublinear_bound"] = CheckOutcome(
            "sublinear_bound",
            worst <= tol and path_bad == 0,
            worst,
            f"max node gap {worst:.3e}; late-time paths {path_bad}/{n_paths}",
        )

    if "delta_zero_scaling" in requested:
        single = snell_envelope(d, lat, reward)
        gap = abs(stack.value_at_zero() - L * single.value_at_zero())
        tol = slack * (1.0 + abs(stack.value_at_zero()))
        mismatch = 0
        for p in paths:
            t = compose_stopping_times(stack, p).times
            if len(set(t)) != 1:
                mismatch += 1
        outcomes["delta_zero_scaling"] = CheckOutcome(
            "delta_zero_scaling",
            gap <= tol and mismatch == 0,
            gap,
            f"|Z_L - L*V| = {gap:.3e}; non-coincident paths {mismatch}/{n_paths}",
        )

    if "superlinear_closed_form" in requested:
        from .oracle import closed_form_deterministic

        target = closed_form_deterministic(reward, lat.grid, ds, L)
        gap = abs(stack.value_at_zero() - target)
        tol = 1e-13 * (1.0 + abs(target))
        outcomes["superlinear_closed_form"] = CheckOutcome(
            "superlinear_closed_form",
            gap <= tol,
            gap,
            f"|Z_L - closed form| = {gap:.3e}",
        )

    marginals = [
        stack.value_at_zero(j) - stack.value_at_zero(j - 1) for j in range(1, L + 1)
    ]
    strictly_positive = all(float(s.min()) > 0.0 for s in reward.slices[:-1])
    exercised_counts = []
    for p in paths[: min(n_paths, 200)]:
        t = compose_stopping_times(stack, p)
        exercised_counts.append(sum(t.exercised))
    floor_needed = L - L // 2
    diagnostics = {
        "marginal_values": marginals,
        "min_exercised": min(exercised_counts) if exercised_counts else None,
        "sacrifice_floor": floor_needed,
        "sacrifice_floor_met": (
            min(exercised_counts) >= floor_needed if exercised_counts else None
        ),
        "reward_strictly_positive_before_horizon": strictly_positive,
    }
    return StructuralReport(checks=outcomes, diagnostics=diagnostics)


@dataclass
class ConvergenceRow:
    exponent: int
    steps: int
    value: float
    abs_diff_prev: float | None


def convergence_study(
    d: Driver,
    *,
    x0: float,
    b: float,
    sigma: float,
    horizon: float,
    reward_factory: Callable[[Lattice], RewardSurface],
    n_rights: int,
    delta: float,
    n_min: int,
    n_max: int,
) -> list[ConvergenceRow]:
    """Value at time zero across dyadic grid refinements 2^n_min .. 2^n_max.

    The refraction period is calendar time and must land on an integer
    number of steps at every level; misalignment is an error rather than
    silent rounding.  Differences between consecutive levels are
    reported, not asserted monotone.
    """
    if n_min > n_max:
        raise ConfigError(f"need n_min <= n_max, got [{n_min}, {n_max}]")
    rows: list[ConvergenceRow] = []
    prev = None
    for n in range(n_min, n_max + 1):
        steps = 2 ** n
        grid = TimeGrid(horizon=horizon, steps=steps)
        ds_real = delta / grid.dt
        ds = int(round(ds_real))
        if abs(ds * grid.dt - delta) > 1e-12 * max(1.0, horizon):
            raise ConfigError(
                f"refraction {delta} does not align with 2^{n} steps over horizon {horizon}"
            )
        check_stability(d, grid.dt)
        lat = build_lattice(grid, x0, b, sigma)
        reward = reward_factory(lat)
        stack = solve_multiple_direct(d, lat, reward, MultiStopConfig(n_rights, ds))
        value = stack.value_at_zero()
        rows.append(
            ConvergenceRow(n, steps, value, None if prev is None else abs(value - prev))
        )
        prev = value
    return rows
