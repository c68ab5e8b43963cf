"""Payoff surfaces on the lattice, with zero extension beyond the horizon."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, ShapeError, ValidationError
from .lattice import Lattice

KINDS = ("call", "put", "linear", "table")


@dataclass(frozen=True)
class RewardSpec:
    """Declarative payoff description.

    kind 'call'/'put' use `strike`; 'linear' pays the state itself;
    'table' takes explicit per-node values (one array per step).  With
    `terminal_zero` the final slice is forced to zero (the convention
    for continuous-time flavoured runs).  `monotone_in_state` is an
    optional claim ('increasing'/'decreasing') validated against the
    produced surface.
    """

    kind: str
    strike: float = 0.0
    table: Sequence[np.ndarray] | None = None
    terminal_zero: bool = False
    monotone_in_state: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"unknown payoff kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("call", "put") and self.strike < 0.0:
            raise DomainError(f"strike must be >= 0, got {self.strike}")
        if self.monotone_in_state not in (None, "increasing", "decreasing", "none"):
            raise DomainError(f"bad monotone_in_state {self.monotone_in_state!r}")


@dataclass(frozen=True)
class RewardSurface:
    """Per-node payoff values X(n, k); any step beyond `steps` reads as 0."""

    steps: int
    slices: tuple[np.ndarray, ...]

    def slice(self, n: int) -> np.ndarray:
        if n > self.steps:
            return np.zeros(n + 1)
        return self.slices[n]

    def value(self, n: int, k: int) -> float:
        if n > self.steps:
            return 0.0
        return float(self.slices[n][k])

    def is_monotone(self, direction: str) -> bool:
        for s in self.slices:
            d = np.diff(s)
            if direction == "increasing" and np.any(d < 0.0):
                return False
            if direction == "decreasing" and np.any(d > 0.0):
                return False
        return True


def _payoff_slice(spec: RewardSpec, states: np.ndarray) -> np.ndarray:
    if spec.kind == "call":
        return np.maximum(states - spec.strike, 0.0)
    if spec.kind == "put":
        return np.maximum(spec.strike - states, 0.0)
    if spec.kind == "linear":
        return states.copy()
    raise DomainError(f"no closed-form payoff for kind {spec.kind!r}")


def evaluate_reward(spec: RewardSpec, lat: Lattice) -> RewardSurface:
    """Evaluate the payoff at every lattice node.

    Values must come out nonnegative (table entries are checked); a
    declared monotonicity flag is validated along k at every step and a
    violation raises ValidationError naming the witness node.
    """
    N = lat.grid.steps
    slices: list[np.ndarray] = []
    if spec.kind == "table":
        if spec.table is None:
            raise DomainError("table payoff requires explicit values")
        if len(spec.table) != N + 1:
            raise ShapeError(f"table must cover steps 0..{N}, got {len(spec.table)} slices")
        for n in range(N + 1):
            row = np.asarray(spec.table[n], dtype=float)
            if row.shape != (n + 1,):
                raise ShapeError(f"table slice at step {n} must have length {n + 1}")
            if np.any(~np.isfinite(row)):
                raise DomainError(f"non-finite table entry at step {n}")
            if np.any(row < 0.0):
                k = int(np.argwhere(row < 0.0)[0])
                raise DomainError(f"negative reward {row[k]} at node ({n}, {k})")
            slices.append(row.copy())
    else:
        for n in range(N + 1):
            slices.append(_payoff_slice(spec, lat.states(n)))

    if spec.terminal_zero:
        slices[N] = np.zeros(N + 1)

    if spec.monotone_in_state in ("increasing", "decreasing"):
        sign = 1.0 if spec.monotone_in_state == "increasing" else -1.0
        for n, row in enumerate(slices):
            bad = np.argwhere(sign * np.diff(row) < 0.0)
            if bad.size:
                k = int(bad[0])
                raise ValidationError(
                    f"payoff declared {spec.monotone_in_state} in state but "
                    f"slice {n} decreases between k={k} and k={k + 1}"
                )

    return RewardSurface(steps=N, slices=tuple(slices))


def surface_from_table(values: Sequence[np.ndarray], *, terminal_zero: bool = False) -> RewardSpec:
    """Convenience wrapper for in-memory table payoffs."""
    return RewardSpec(kind="table", table=tuple(np.asarray(v, dtype=float) for v in values),
                      terminal_zero=terminal_zero)


def load_table(path: str, steps: int) -> list[np.ndarray]:
    """Read a text table of rows "n k value" covering every node once."""
    rows: dict[tuple[int, int], float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DomainError(f"{path}:{lineno}: expected 'n k value', got {raw!r}")
            n, k, v = int(parts[0]), int(parts[1]), float(parts[2])
            if not (0 <= n <= steps) or not (0 <= k <= n):
                raise DomainError(f"{path}:{lineno}: node ({n},{k}) outside the lattice")
            if (n, k) in rows:
                raise DomainError(f"{path}:{lineno}: duplicate node ({n},{k})")
            rows[(n, k)] = v
    table = []
    for n in range(steps + 1):
        row = np.empty(n + 1)
        for k in range(n + 1):
            if (n, k) not in rows:
                raise ShapeError(f"{path}: missing value for node ({n},{k})")
            row[k] = rows[(n, k)]
        table.append(row)
    return table
