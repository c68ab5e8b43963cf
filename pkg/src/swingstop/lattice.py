"""Recombining binary lattice carrying a geometric Brownian state.

The walk takes increments +/-sqrt(dt); node (n, k) has k up-moves out
of n, Brownian level W = (2k - n)*sqrt(dt) and state
S = x0*exp((b - sigma^2/2)*t_n + sigma*W).  One-step rollback of a
value slice implements the conditional nonlinear expectation induced
by a driver:

    z = (y_up - y_down) / (2*sqrt(dt))
    y = (y_up + y_down) / 2 + g(t, z)*dt

which is monotone in (y_up, y_down) whenever kappa*sqrt(dt) < 1; that
stability condition is enforced as a hard precondition.  Evaluation
order within a slice is fixed (ascending k) so runs are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .drivers import Driver
from .errors import DomainError, OrderingError, ShapeError, StabilityError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform calendar grid: `steps` intervals of length dt = horizon/steps."""

    horizon: float
    steps: int

    def __post_init__(self) -> None:
        if not (self.horizon > 0.0) or not math.isfinite(self.horizon):
            raise DomainError(f"horizon must be positive and finite, got {self.horizon}")
        if self.steps < 1:
            raise DomainError(f"steps must be >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def time(self, n: int) -> float:
        return n * self.dt


@dataclass(frozen=True)
class Lattice:
    """Immutable lattice: walk geometry plus the exponential state map."""

    grid: TimeGrid
    x0: float
    b: float
    sigma: float

    @cached_property
    def sqrt_dt(self) -> float:
        return math.sqrt(self.grid.dt)

    def brownian(self, n: int) -> np.ndarray:
        """W at step n for k = 0..n."""
        k = np.arange(n + 1, dtype=float)
        return (2.0 * k - n) * self.sqrt_dt

    def states(self, n: int) -> np.ndarray:
        """State values S(n, k), k = 0..n, by the exact exponential formula."""
        t = self.grid.time(n)
        drift = (self.b - 0.5 * self.sigma * self.sigma) * t
        return self.x0 * np.exp(drift + self.sigma * self.brownian(n))


def build_lattice(grid: TimeGrid, x0: float, b: float, sigma: float) -> Lattice:
    """Validate model parameters and assemble the lattice."""
    if not (x0 > 0.0) or not math.isfinite(x0):
        raise DomainError(f"x0 must be positive and finite, got {x0}")
    if not (sigma > 0.0) or not math.isfinite(sigma):
        raise DomainError(f"sigma must be positive and finite, got {sigma}")
    if not math.isfinite(b):
        raise DomainError(f"b must be finite, got {b}")
    return Lattice(grid=grid, x0=x0, b=b, sigma=sigma)


def check_stability(d: Driver, dt: float) -> None:
    """Enforce kappa*sqrt(dt) < 1 (one-step comparison/monotonicity)."""
    if d.kappa * math.sqrt(dt) >= 1.0:
        raise StabilityError(
            f"driver {d.name!r}: kappa*sqrt(dt) = {d.kappa * math.sqrt(dt)} >= 1; "
            "refine the grid or lower kappa"
        )


def g_step(d: Driver, t: float, dt: float, y_up: float, y_down: float) -> tuple[float, float]:
    """One backward step of the scheme; returns (y, z).

    Constant slices are fixed points (g(t,0) = 0), and under the
    stability condition the map is nondecreasing in both children.
    """
    if not (math.isfinite(y_up) and math.isfinite(y_down)):
        raise DomainError(f"g_step children must be finite, got ({y_up}, {y_down})")
    check_stability(d, dt)
    sq = math.sqrt(dt)
    z = (y_up - y_down) / (2.0 * sq)
    y = (y_up + y_down) / 2.0 + d.fn(t, z) * dt
    return float(y), float(z)


def rollback_slice(d: Driver, lat: Lattice, n: int, slice_next: np.ndarray) -> np.ndarray:
    """Roll a value slice from step n+1 back to step n.

    Vectorised over k; node k's children are (n+1, k+1) up and (n+1, k)
    down.  Bitwise identical to applying `g_step` node by node.
    """
    slice_next = np.asarray(slice_next, dtype=float)
    if slice_next.shape != (n + 2,):
        raise ShapeError(
            f"slice at step {n + 1} must have length {n + 2}, got {slice_next.shape}"
        )
    check_stability(d, lat.grid.dt)
    dt = lat.grid.dt
    t = lat.grid.time(n)
    up = slice_next[1:]
    down = slice_next[:-1]
    z = (up - down) / (2.0 * lat.sqrt_dt)
    return (up + down) / 2.0 + d.fn(t, z) * dt


def conditional_g_expectation(
    d: Driver, lat: Lattice, m: int, values_m: np.ndarray, n: int
) -> np.ndarray:
    """Iterated rollback of a step-m slice down to step n <= m."""
    if n > m:
        raise OrderingError(f"target step {n} must not exceed source step {m}")
    if m > lat.grid.steps:
        raise ShapeError(f"source step {m} beyond grid horizon {lat.grid.steps}")
    cur = np.asarray(values_m, dtype=float)
    if cur.shape != (m + 1,):
        raise ShapeError(f"slice at step {m} must have length {m + 1}, got {cur.shape}")
    for step in range(m - 1, n - 1, -1):
        cur = rollback_slice(d, lat, step, cur)
    return cur
