import math

import numpy as np
import pytest

from swingstop.drivers import (
    SampleGrid,
    eval_driver,
    inf_kappa,
    linear_driver,
    make_driver,
    smooth_inf,
    sup_kappa,
    verify_driver_properties,
    zero_driver,
)
from swingstop.errors import DomainError, ValidationError


def test_inf_kappa_value():
    d = inf_kappa(0.5)
    assert eval_driver(d, 0.3, 2.5) == -1.25


def test_sup_kappa_value():
    d = sup_kappa(0.5)
    assert eval_driver(d, 0.0, -3.0) == 1.5


@pytest.mark.parametrize("kind", ["zero", "sup_kappa", "inf_kappa", "smooth_inf"])
def test_zero_at_zero(kind):
    d = make_driver(kind, kappa=0.7, epsilon=0.2)
    for t in (0.0, 0.5, 1.0):
        assert eval_driver(d, t, 0.0) == 0.0


def test_linear_at_zero():
    assert eval_driver(linear_driver(0.3), 0.2, 0.0) == 0.0


def test_non_finite_z_rejected():
    d = zero_driver()
    with pytest.raises(DomainError):
        eval_driver(d, 0.0, float("nan"))
    with pytest.raises(DomainError):
        eval_driver(d, 0.0, float("inf"))


def test_lipschitz_bound_sampled():
    rng = np.random.default_rng(42)
    for d in (sup_kappa(0.5), inf_kappa(0.5), smooth_inf(0.5, 0.1), linear_driver(0.4)):
        t = rng.uniform(0.0, 1.0, size=10_000)
        z = rng.uniform(-10.0, 10.0, size=10_000)
        g = np.array([eval_driver(d, ti, zi) for ti, zi in zip(t, z)])
        assert np.all(np.abs(g) <= d.kappa * np.abs(z) + 1e-15)


def test_sup_kappa_dominates_same_bound():
    rng = np.random.default_rng(7)
    dom = sup_kappa(0.5)
    for d in (inf_kappa(0.5), smooth_inf(0.5, 0.3), linear_driver(0.5)):
        z = rng.uniform(-8.0, 8.0, size=2_000)
        assert np.all(np.asarray(d.fn(0.1, z)) <= np.asarray(dom.fn(0.1, z)) + 1e-15)


def test_verify_inf_kappa_report():
    rep = verify_driver_properties(inf_kappa(0.5))
    assert rep.max_lipschitz_ratio <= 0.5 + 1e-12
    assert rep.superadditivity_violations == 0
    assert rep.concavity_violations == 0


def test_verify_zero_driver_clean():
    rep = verify_driver_properties(zero_driver())
    assert rep.max_abs_at_zero == 0.0
    assert rep.concavity_violations == 0
    assert rep.subadditivity_violations == 0
    assert rep.superadditivity_violations == 0
    assert rep.homogeneity_violations == 0


def test_misdeclared_superlinear_flag_caught():
    # +kappa*|z| is subadditive; opposite-sign arguments witness the failure
    bad = sup_kappa(1.0)
    object.__setattr__(bad, "is_sublinear", False)
    object.__setattr__(bad, "is_superlinear", True)
    with pytest.raises(ValidationError):
        verify_driver_properties(bad)


def test_flags_mutually_exclusive_unless_zero():
    from swingstop.drivers import Driver

    with pytest.raises(ValidationError):
        Driver(name="bad", kappa=1.0, fn=lambda t, z: 0.0 * z,
               is_sublinear=True, is_superlinear=True)


def test_negative_kappa_rejected():
    from swingstop.drivers import Driver

    with pytest.raises(DomainError):
        Driver(name="bad", kappa=-1.0, fn=lambda t, z: 0.0 * z)


def test_smooth_inf_bounded_by_kappa_abs():
    d = smooth_inf(0.5, 0.2)
    z = np.linspace(-20, 20, 4001)
    g = np.asarray(d.fn(0.0, z))
    assert np.all(np.abs(g) <= 0.5 * np.abs(z) + 1e-15)


def test_custom_sample_grid():
    grid = SampleGrid.default(horizon=2.0, z_scale=3.0, n=21, seed=1)
    rep = verify_driver_properties(sup_kappa(0.25), grid)
    assert rep.subadditivity_violations == 0
    assert rep.homogeneity_violations == 0
