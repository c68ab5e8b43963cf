"""Generator functions g(t, z) for nonlinear conditional evaluations.

A driver is the single real-valued function that bends the conditional
expectation away from the linear one: g == 0 recovers the classical
expectation, g = +kappa*|z| the sublinear upper evaluation, and
g = -kappa*|z| the worst-case (drift-ambiguity) lower evaluation.
Structural flags on a driver are metadata used to gate theorem checks;
`verify_driver_properties` audits them against a sample grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, ValidationError


@dataclass(frozen=True)
class Driver:
    """A generator g(t, z), Lipschitz in z with constant `kappa`.

    `fn` must be vectorised in z (numpy arrays in, arrays out) and must
    satisfy g(t, 0) = 0.  Instances are immutable and safe to share
    across workers.
    """

    name: str
    kappa: float
    fn: Callable[[float, np.ndarray], np.ndarray]
    is_zero: bool = False
    is_concave: bool = False
    is_sublinear: bool = False     # subadditive and positively homogeneous
    is_superlinear: bool = False   # superadditive and positively homogeneous

    def __post_init__(self) -> None:
        if not math.isfinite(self.kappa) or self.kappa < 0.0:
            raise DomainError(f"driver {self.name!r}: kappa must be finite and >= 0")
        if self.is_sublinear and self.is_superlinear and not self.is_zero:
            raise ValidationError(
                f"driver {self.name!r}: sublinear and superlinear flags are "
                "mutually exclusive unless the driver is identically zero"
            )

    def __call__(self, t: float, z):
        return self.fn(t, z)


def zero_driver() -> Driver:
    """g == 0; the evaluation degenerates to the classical expectation."""
    return Driver(
        name="zero",
        kappa=0.0,
        fn=lambda t, z: 0.0 * z,
        is_zero=True,
        is_concave=True,
        is_sublinear=True,
        is_superlinear=True,
    )


def linear_driver(a: float, kappa: float | None = None) -> Driver:
    """g(t, z) = a*z.  Linear, hence concave; |a| must not exceed kappa.

    Neither one-sided flag is set: a linear generator is both sub- and
    superadditive, and the flags deliberately mark strict one-sided use.
    """
    if kappa is None:
        kappa = abs(a)
    if abs(a) > kappa:
        raise DomainError(f"linear driver requires |a| <= kappa, got a={a}, kappa={kappa}")
    return Driver(name=f"linear(a={a!r})", kappa=kappa, fn=lambda t, z: a * z, is_concave=True)


def sup_kappa(kappa: float) -> Driver:
    """g(t, z) = +kappa*|z|; sublinear, dominates every driver with this bound."""
    return Driver(
        name=f"sup_kappa({kappa!r})",
        kappa=kappa,
        fn=lambda t, z: kappa * np.abs(z),
        is_sublinear=True,
    )


def inf_kappa(kappa: float) -> Driver:
    """g(t, z) = -kappa*|z|; the worst-case evaluation over drifts in [-kappa, kappa]."""
    return Driver(
        name=f"inf_kappa({kappa!r})",
        kappa=kappa,
        fn=lambda t, z: -kappa * np.abs(z),
        is_concave=True,
        is_superlinear=True,
    )


def smooth_inf(kappa: float, epsilon: float) -> Driver:
    """g(t, z) = -kappa*(sqrt(z^2 + eps^2) - eps); concave, not homogeneous."""
    if not (epsilon > 0.0) or not math.isfinite(epsilon):
        raise DomainError(f"smooth_inf requires epsilon > 0, got {epsilon}")
    return Driver(
        name=f"smooth_inf({kappa!r},{epsilon!r})",
        kappa=kappa,
        fn=lambda t, z: -kappa * (np.sqrt(z * z + epsilon * epsilon) - epsilon),
        is_concave=True,
    )


BUILTIN_KINDS = ("zero", "linear", "sup_kappa", "inf_kappa", "smooth_inf")


def make_driver(kind: str, *, kappa: float = 0.5, a: float = 0.0, epsilon: float = 0.1) -> Driver:
    """Build one of the named drivers from config-level parameters."""
    if kind == "zero":
        return zero_driver()
    if kind == "linear":
        return linear_driver(a, kappa=max(kappa, abs(a)))
    if kind == "sup_kappa":
        return sup_kappa(kappa)
    if kind == "inf_kappa":
        return inf_kappa(kappa)
    if kind == "smooth_inf":
        return smooth_inf(kappa, epsilon)
    raise DomainError(f"unknown driver kind {kind!r}; expected one of {BUILTIN_KINDS}")


def eval_driver(d: Driver, t: float, z: float) -> float:
    """Evaluate g(t, z) for scalar inputs.

    Raises DomainError on non-finite z (or t); the result is finite for
    every Lipschitz driver with g(t, 0) = 0.
    """
    if not math.isfinite(z):
        raise DomainError(f"driver input z must be finite, got {z}")
    if not math.isfinite(t):
        raise DomainError(f"driver input t must be finite, got {t}")
    return float(d.fn(t, z))


@dataclass(frozen=True)
class SampleGrid:
    """Sampling plan for auditing a driver's declared properties.

    Properties are checked on the cross product of `t_values` with all
    ordered pairs from `z_values`, and homogeneity/concavity also sweep
    `lambdas`.  A small roundoff floor avoids counting pure float noise
    as a violation.
    """

    t_values: np.ndarray
    z_values: np.ndarray
    lambdas: np.ndarray
    roundoff: float = 1e-12

    @staticmethod
    def default(horizon: float = 1.0, z_scale: float = 5.0, n: int = 41, seed: int = 7) -> "SampleGrid":
        rng = np.random.default_rng(seed)
        zs = np.concatenate([
            np.linspace(-z_scale, z_scale, n),
            rng.uniform(-z_scale, z_scale, size=n),
            np.array([0.0]),
        ])
        return SampleGrid(
            t_values=np.linspace(0.0, horizon, 5),
            z_values=zs,
            lambdas=np.array([0.0, 0.25, 0.5, 0.75, 1.0, 2.0]),
        )


@dataclass
class DriverPropertyReport:
    driver: str
    n_samples: int
    max_lipschitz_ratio: float
    max_abs_at_zero: float
    concavity_violations: int
    subadditivity_violations: int
    superadditivity_violations: int
    homogeneity_violations: int
    zero_violations: int


def verify_driver_properties(d: Driver, grid: SampleGrid | None = None) -> DriverPropertyReport:
    """Audit a driver against its invariants and declared flags by sampling.

    Returns the observation report; raises ValidationError (naming a
    witness) when a declared flag or the Lipschitz/zero axioms are
    contradicted on the grid.
    """
    if grid is None:
        grid = SampleGrid.default()
    z = np.asarray(grid.z_values, dtype=float)
    zi = z[:, None]
    zj = z[None, :]
    floor = grid.roundoff

    max_ratio = 0.0
    max_at_zero = 0.0
    conc = subadd = superadd = homog = zero_viol = 0
    witness: dict[str, tuple] = {}

    for t in grid.t_values:
        g = np.asarray(d.fn(t, z), dtype=float)
        g0 = abs(float(d.fn(t, 0.0)))
        max_at_zero = max(max_at_zero, g0)
        if g0 > floor and "zero" not in witness:
            zero_viol += 1
            witness["zero"] = (t,)

        diff = np.abs(g[:, None] - g[None, :])
        dz = np.abs(zi - zj)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dz > 0, diff / dz, 0.0)
        r = float(ratio.max())
        if r > max_ratio:
            max_ratio = r

        gsum = np.asarray(d.fn(t, zi + zj), dtype=float)
        tol = floor * (1.0 + np.abs(g[:, None]) + np.abs(g[None, :]))
        sub_bad = gsum > g[:, None] + g[None, :] + tol
        sup_bad = gsum < g[:, None] + g[None, :] - tol
        subadd += int(sub_bad.sum())
        superadd += int(sup_bad.sum())
        if sub_bad.any() and "subadd" not in witness:
            a, b = np.argwhere(sub_bad)[0]
            witness["subadd"] = (t, z[a], z[b])
        if sup_bad.any() and "superadd" not in witness:
            a, b = np.argwhere(sup_bad)[0]
            witness["superadd"] = (t, z[a], z[b])

        for lam in grid.lambdas:
            if lam <= 1.0:
                gmix = np.asarray(d.fn(t, lam * zi + (1.0 - lam) * zj), dtype=float)
                c_bad = gmix < lam * g[:, None] + (1.0 - lam) * g[None, :] - tol
                conc += int(c_bad.sum())
                if c_bad.any() and "concave" not in witness:
                    a, b = np.argwhere(c_bad)[0]
                    witness["concave"] = (t, z[a], z[b], lam)
            gl = np.asarray(d.fn(t, lam * z), dtype=float)
            h_bad = np.abs(gl - lam * g) > floor * (1.0 + np.abs(lam * g))
            homog += int(h_bad.sum())
            if h_bad.any() and "homog" not in witness:
                witness["homog"] = (t, z[int(np.argwhere(h_bad)[0])], lam)

    report = DriverPropertyReport(
        driver=d.name,
        n_samples=len(grid.t_values) * len(z) * len(z),
        max_lipschitz_ratio=max_ratio,
        max_abs_at_zero=max_at_zero,
        concavity_violations=conc,
        subadditivity_violations=subadd,
        superadditivity_violations=superadd,
        homogeneity_violations=homog,
        zero_violations=zero_viol,
    )

    if zero_viol:
        raise ValidationError(f"{d.name}: g(t, 0) != 0 at t={witness['zero'][0]}")
    if max_ratio > d.kappa * (1.0 + 1e-9) + floor:
        raise ValidationError(
            f"{d.name}: observed Lipschitz ratio {max_ratio} exceeds declared kappa={d.kappa}"
        )
    if d.is_zero and max_at_zero > 0.0:
        raise ValidationError(f"{d.name}: declared zero but g(t,0)={max_at_zero}")
    if d.is_concave and conc:
        raise ValidationError(f"{d.name}: declared concave, counterexample {witness['concave']}")
    if d.is_sublinear and (subadd or homog):
        w = witness.get("subadd") or witness.get("homog")
        raise ValidationError(f"{d.name}: declared sublinear, counterexample {w}")
    if d.is_superlinear and (superadd or homog):
        w = witness.get("superadd") or witness.get("homog")
        raise ValidationError(f"{d.name}: declared superlinear, counterexample {w}")
    return report
