"""Independent ground truth for the lattice engine.

Three routes that never touch the engine's recursion:

* exhaustive enumeration of adapted stopping rules on a tiny
  non-recombining path tree (the combinatorial definition of the value);
* the distorted-probability equivalent of the worst-case evaluation for
  monotone payoffs (classical dynamic programming under shifted one-step
  probabilities, no generator anywhere);
* the closed form for deterministic nondecreasing rewards under a
  superadditive evaluation (right-aligned exercise schedule).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .drivers import Driver
from .engine import MultiStopConfig
from .errors import CapacityError, PreconditionError, ShapeError
from .lattice import Lattice, TimeGrid, check_stability
from .rewards import RewardSurface

MAX_DEPTH = 5
MAX_RIGHTS = 2
MAX_POLICIES = 3_000_000


@dataclass(frozen=True)
class PathTree:
    """Full binary tree of depth D; level n holds 2^n nodes keyed by path bits.

    Payoffs are copied from the recombining surface through the path-sum
    mapping (node value depends on the number of up moves only), so the
    tree prices exactly the same object as the lattice.
    """

    depth: int
    dt: float
    payoffs: tuple[np.ndarray, ...]  # payoffs[n][path_bits], size 2^n

    @property
    def node_count(self) -> int:
        return 2 ** (self.depth + 1) - 1


def build_path_tree(reward: RewardSurface, lat: Lattice) -> PathTree:
    depth = reward.steps
    if depth > MAX_DEPTH:
        raise CapacityError(f"path tree depth {depth} exceeds bound {MAX_DEPTH}")
    if reward.steps != lat.grid.steps:
        raise ShapeError("reward and lattice disagree on the number of steps")
    levels = []
    for n in range(depth + 1):
        paths = np.arange(2 ** n)
        ups = np.array([bin(p).count("1") for p in paths])
        levels.append(reward.slices[n][ups])
    return PathTree(depth=depth, dt=lat.grid.dt, payoffs=tuple(levels))


@dataclass
class EnumerationResult:
    max_value: float
    argmax_times: dict[int, tuple[int, ...]]  # leaf path bits -> exercise steps
    policy_count: int


def _policy_count(depth: int, L: int, ds: int) -> int:
    """Number of adapted, horizon-respecting policies (rules stop by the leaf)."""
    cap = max(ds, 0)

    memo: dict[tuple[int, int, int], int] = {}

    def count(n: int, r: int, w: int) -> int:
        if r == 0:
            return 1
        if n == depth:
            return 1
        key = (n, r, w)
        if key in memo:
            return memo[key]
        total = 0
        for m in _allowed_exercises(r, w, cap, leaf=False):
            w2 = min(w + 1, cap) if m == 0 else min(1, cap)
            c = count(n + 1, r - m, w2)
            total += c * c
        memo[key] = total
        return total

    return count(0, L, cap)


def _allowed_exercises(r: int, w: int, cap: int, leaf: bool) -> Sequence[int]:
    eligible = w >= cap
    if leaf:
        if not eligible or r == 0:
            return (0,)
        return (r,) if cap == 0 else (1,)
    if not eligible or r == 0:
        return (0,)
    if cap == 0:
        return tuple(range(r + 1))
    return (0, 1)


def enumerate_multiple_stopping(
    d: Driver, tree: PathTree, n_rights: int, delta_steps: int
) -> EnumerationResult:
    """Evaluate every admissible stopping policy and take the maximum.

    Rules always stop at the leaf when still eligible; rights whose
    window falls past the horizon stay unexercised and contribute zero.
    Each policy's value is the backward rollback of its stopped payoff
    stream; identical subtrees share value arrays, which changes nothing
    about which policies exist or what each one is worth.
    """
    if tree.depth > MAX_DEPTH or n_rights > MAX_RIGHTS:
        raise CapacityError(
            f"enumeration bounded to depth {MAX_DEPTH} and {MAX_RIGHTS} rights, "
            f"got depth {tree.depth}, rights {n_rights}"
        )
    total = _policy_count(tree.depth, n_rights, delta_steps)
    if total > MAX_POLICIES:
        raise CapacityError(
            f"{total} adapted policies exceed the enumeration budget {MAX_POLICIES}"
        )
    check_stability(d, tree.dt)

    depth, dt = tree.depth, tree.dt
    sq = math.sqrt(dt)
    cap = max(delta_steps, 0)
    # ups-count payoff lookup; identical (step, ups) subtrees share results
    memo: dict[tuple[int, int, int, int], tuple[np.ndarray, list[tuple[int, int, int]]]] = {}

    def values(n: int, ups: int, r: int, w: int):
        key = (n, ups, r, w)
        if key in memo:
            return memo[key]
        x = float(tree.payoffs[n][_first_path(n, ups)])
        if r == 0:
            out = (np.zeros(1), [(0, 1, 1)])
        elif n == depth:
            (m,) = _allowed_exercises(r, w, cap, leaf=True)
            out = (np.array([m * x]), [(m, 1, 1)])
        else:
            t = n * dt
            chunks = []
            blocks = []
            for m in _allowed_exercises(r, w, cap, leaf=False):
                w2 = min(w + 1, cap) if m == 0 else min(1, cap)
                vu, _ = values(n + 1, ups + 1, r - m, w2)
                vd, _ = values(n + 1, ups, r - m, w2)
                a = vu[:, None]
                bb = vd[None, :]
                z = (a - bb) / (2.0 * sq)
                y = (a + bb) / 2.0 + d.fn(t, z) * dt
                chunks.append(m * x + y.ravel())
                blocks.append((m, len(vu), len(vd)))
            out = (np.concatenate(chunks), blocks)
        memo[key] = out
        return out

    def _first_path(n: int, ups: int) -> int:
        return (1 << ups) - 1  # any path with `ups` set bits

    root_vals, _ = values(0, 0, n_rights, cap)
    best = int(np.argmax(root_vals))
    max_value = float(root_vals[best])

    # reconstruct the argmax decision tree, then its per-leaf stopping vector
    decisions: dict[tuple[int, int], int] = {}

    def trace(n: int, path: int, ups: int, r: int, w: int, idx: int) -> None:
        _, blocks = values(n, ups, r, w)
        off = 0
        for m, lu, ld in blocks:
            size = lu * ld
            if idx < off + size:
                decisions[(n, path)] = m
                if n < depth and r - m >= 0 and not (r == 0) and lu * ld >= 1 and n != depth:
                    w2 = min(w + 1, cap) if m == 0 else min(1, cap)
                    local = idx - off
                    iu, idn = divmod(local, ld)
                    trace(n + 1, path | (1 << n), ups + 1, r - m, w2, iu)
                    trace(n + 1, path, ups, r - m, w2, idn)
                return
            off += size
        raise AssertionError("argmax index outside enumerated blocks")

    trace(0, 0, 0, n_rights, cap, best)

    argmax_times: dict[int, tuple[int, ...]] = {}
    for leaf in range(2 ** depth):
        times: list[int] = []
        for n in range(depth + 1):
            prefix = leaf & ((1 << n) - 1)
            m = decisions.get((n, prefix), 0)
            times.extend([n] * m)
        argmax_times[leaf] = tuple(times)

    return EnumerationResult(
        max_value=max_value, argmax_times=argmax_times, policy_count=int(len(root_vals))
    )


@dataclass
class DriftShiftResult:
    """Classical multiple stopping under the shifted one-step probability."""

    up_probability: float
    values: list[list[np.ndarray]]  # values[j][n]
    monotone_ok: bool
    failed_steps: list[tuple[int, int]]  # (right, step) where a slice lost monotonicity

    def value_at_zero(self, j: int) -> float:
        return float(self.values[j][0][0])


def _detect_direction(reward: RewardSurface) -> str:
    inc = reward.is_monotone("increasing")
    dec = reward.is_monotone("decreasing")
    if inc:
        return "increasing"
    if dec:
        return "decreasing"
    raise PreconditionError("drift-shift oracle requires a state-monotone reward")


def drift_shift_value(
    lat: Lattice,
    reward: RewardSurface,
    kappa: float,
    n_rights: int,
    delta_steps: int,
) -> DriftShiftResult:
    """Price the worst-case problem as a classical one under a tilted walk.

    For nondecreasing payoffs the adverse drift pushes down: the up-move
    weight is p = (1 - kappa*sqrt(dt))/2; for nonincreasing payoffs the
    mirror weight (1 + kappa*sqrt(dt))/2 applies.  The identification is
    exact only while every intermediate slice stays monotone in the
    state, which is verified as the recursion runs and reported.
    """
    cfg = MultiStopConfig(n_rights, delta_steps)
    cfg.validate_against(lat.grid)
    sq = math.sqrt(lat.grid.dt)
    if kappa * sq >= 1.0:
        raise PreconditionError(f"kappa*sqrt(dt) = {kappa * sq} >= 1")
    direction = _detect_direction(reward)
    p = (1.0 - kappa * sq) / 2.0 if direction == "increasing" else (1.0 + kappa * sq) / 2.0
    q = 1.0 - p
    N = lat.grid.steps
    sign = 1.0 if direction == "increasing" else -1.0

    failed: list[tuple[int, int]] = []

    def is_mono(s: np.ndarray) -> bool:
        return bool(np.all(sign * np.diff(s) >= 0.0)) if s.size > 1 else True

    def pavg(nxt: np.ndarray) -> np.ndarray:
        return p * nxt[1:] + q * nxt[:-1]

    def lagged(prev: list[np.ndarray], n: int) -> np.ndarray:
        target = n + delta_steps
        if target > N:
            return np.zeros(n + 1)
        cur = prev[target]
        for _ in range(delta_steps):
            cur = pavg(cur)
        return cur

    values: list[list[np.ndarray]] = [[np.zeros(n + 1) for n in range(N + 1)]]
    for j in range(1, n_rights + 1):
        prev = values[j - 1]
        vj: list[np.ndarray] = [None] * (N + 1)
        vj[N] = reward.slices[N] + lagged(prev, N)
        if not is_mono(vj[N]):
            failed.append((j, N))
        for n in range(N - 1, -1, -1):
            cont = pavg(vj[n + 1])
            vj[n] = np.maximum(reward.slices[n] + lagged(prev, n), cont)
            if not is_mono(vj[n]):
                failed.append((j, n))
        values.append(vj)

    return DriftShiftResult(
        up_probability=p, values=values, monotone_ok=not failed, failed_steps=failed
    )


def closed_form_deterministic(
    reward: RewardSurface,
    grid: TimeGrid,
    delta_steps: int,
    n_rights: int,
    start_step: int = 0,
) -> float:
    """Right-aligned schedule value for deterministic nondecreasing rewards.

    With d usable rights (d = L when delta = 0, else capped by how many
    refraction periods fit before the horizon) the value is the sum of
    the rewards at steps N, N - delta, ..., N - (d-1)*delta, accumulated
    innermost-first to mirror the backward recursion's nesting.
    """
    N = grid.steps
    det = [float(s[0]) for s in reward.slices]
    for n, s in enumerate(reward.slices):
        if np.any(s != s[0]):
            raise PreconditionError(f"reward is not deterministic at step {n}")
    if any(det[i] > det[i + 1] for i in range(len(det) - 1)):
        raise PreconditionError("closed form requires a nondecreasing deterministic reward")
    if delta_steps == 0:
        d_use = n_rights
    else:
        d_use = min(n_rights, (N - start_step) // delta_steps + 1)
    acc = 0.0
    for i in range(d_use):
        acc = det[N - i * delta_steps] + acc
    return acc
