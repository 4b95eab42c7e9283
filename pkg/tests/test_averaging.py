import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid

from conftest import random_field
from nftk.averaging import (OneFormField, VectorFieldSample, differential, flat,
                            hamiltonian_vector_field, interior, is_periodic_torus, orbit_average,
                            sharp, vertical_average, vertical_average_oneform,
                            vertical_average_vector)
from nftk.errors import PreconditionError
from nftk.integrable_core import IntegrableHamiltonian
from nftk.torus_fourier import ActionBox, SpectralField, evaluate_field, grid_max

TWO_PI = 2 * math.pi
BOX = ActionBox([-1.0, -1.0], [1.0, 1.0], [9, 9])
WIDE = ActionBox([-2.0, -2.0], [2.0, 2.0], [9, 9])


def field(func, cutoff=2, box=BOX):
    return SpectralField.from_function(box, cutoff, lambda xi, x: func(xi, x) + 0 * xi[0] + 0 * x[0])


def max_diff(f, g):
    return float(np.max(np.abs(f.pad(max(f.cutoff, g.cutoff)).coeffs - g.pad(max(f.cutoff, g.cutoff)).coeffs)))


# --------------------------------------------------------------------------
# vertical averages


def test_vertical_average_examples():
    assert vertical_average(field(lambda xi, x: np.cos(TWO_PI * x[0]))).max_abs() < 1e-16
    g = field(lambda xi, x: xi[0] ** 2 - xi[1])
    assert max_diff(vertical_average(g), g) == 0.0
    # oracle: scipy quad of cos^2(2 pi t) over [0, 1] is 0.5
    c2 = vertical_average(field(lambda xi, x: np.cos(TWO_PI * x[0]) ** 2))
    assert np.allclose(c2.coefficient([0, 0]), 0.5, atol=1e-15)
    assert c2.oscillating_max() == 0.0


def test_vertical_average_oneform_examples():
    s = field(lambda xi, x: np.sin(TWO_PI * x[0]))
    z = SpectralField.zeros(BOX, 2)
    alpha = OneFormField((s, z), (z, z))
    assert vertical_average_oneform(alpha).max_abs() < 1e-16
    # c dx_1 + dg(xi) with g = xi_1 xi_2
    g = field(lambda xi, x: xi[0] * xi[1], cutoff=0)
    dg = differential(g)
    three = field(lambda xi, x: 3.0, cutoff=0)
    beta = OneFormField(dg.a, (dg.b[0] + three, dg.b[1]))
    back = vertical_average_oneform(beta)
    assert all(max_diff(p, q) == 0.0 for p, q in zip(back.components(), beta.components()))


def test_vertical_average_vector_example():
    z = SpectralField.zeros(BOX, 2)
    v1 = field(lambda xi, x: np.cos(TWO_PI * x[1]) ** 2)
    u2 = field(lambda xi, x: xi[0], cutoff=0)
    X = VectorFieldSample((z, u2), (v1, z))
    Y = vertical_average_vector(X)
    assert np.allclose(Y.v[0].coefficient([0, 0]), 0.5, atol=1e-15)
    assert Y.v[0].oscillating_max() == 0.0
    assert max_diff(Y.u[1], u2) == 0.0


@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_idempotent_and_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    f = random_field(rng, BOX, 2)
    g = random_field(rng, BOX, 2)
    vf = vertical_average(f)
    assert max_diff(vertical_average(vf), vf) <= 1e-14
    lhs = vertical_average(a * f + b * g)
    rhs = a * vf + b * vertical_average(g)
    assert max_diff(lhs, rhs) <= 1e-14 * max(1.0, f.max_abs() + g.max_abs()) * (1 + abs(a) + abs(b))


@given(seed=st.integers(0, 2**32 - 1))
def test_average_commutes_with_differential(seed):
    rng = np.random.default_rng(seed)
    f = random_field(rng, BOX, 2)
    avg_df = vertical_average_oneform(differential(f))
    d_avg = differential(vertical_average(f))
    for p in avg_df.b:
        assert p.max_abs() <= 1e-12
    for p, q in zip(avg_df.a, d_avg.a):
        assert max_diff(p, q) <= 1e-12 * max(1.0, q.max_abs())


@given(seed=st.integers(0, 2**32 - 1))
def test_contraction_with_invariant_field(seed):
    rng = np.random.default_rng(seed)
    X = VectorFieldSample(tuple(random_field(rng, BOX, 0) for _ in range(2)),
                          tuple(random_field(rng, BOX, 0) for _ in range(2)))
    alpha = OneFormField(tuple(random_field(rng, BOX, 2) for _ in range(2)),
                         tuple(random_field(rng, BOX, 2) for _ in range(2)))
    lhs = vertical_average(interior(X, alpha))
    rhs = interior(X, vertical_average_oneform(alpha))
    assert max_diff(lhs, rhs) <= 1e-12 * max(1.0, lhs.max_abs())


def test_flat_sharp_are_inverse(rng):
    X = VectorFieldSample(tuple(random_field(rng, BOX, 1) for _ in range(2)),
                          tuple(random_field(rng, BOX, 1) for _ in range(2)))
    Y = sharp(flat(X))
    assert all(max_diff(p, q) == 0.0 for p, q in zip(X.components(), Y.components()))


def test_hamiltonian_field_of_angle_function():
    A = field(lambda xi, x: xi[1] * np.sin(TWO_PI * x[0]), cutoff=1)
    X = hamiltonian_vector_field(A)
    # X_A = (-dA/dx, dA/dxi)
    pts = np.array([[0.2, -0.3]]), np.array([[0.1, 0.7]])
    assert evaluate_field(X.u[0], *pts) == pytest.approx(-TWO_PI * -0.3 * math.cos(TWO_PI * 0.1), abs=1e-12)
    assert evaluate_field(X.v[1], *pts) == pytest.approx(math.sin(TWO_PI * 0.1), abs=1e-12)
    assert X.u[1].max_abs() < 1e-15 and X.v[0].max_abs() < 1e-12


# --------------------------------------------------------------------------
# periodic tori


def test_periodic_tori_examples():
    F = IntegrableHamiltonian.quadratic(WIDE, np.eye(2))
    t = is_periodic_torus(F, [1.0, 1.0], 8)
    assert t.period == pytest.approx(1.0) and t.m == (1, 1)
    t = is_periodic_torus(F, [0.5, 0.75], 8)
    assert t.period == pytest.approx(4.0) and t.m == (2, 3)
    assert is_periodic_torus(F, [1.0, math.sqrt(2.0)], 8) is None


def test_orbit_average_examples():
    F = IntegrableHamiltonian.quadratic(WIDE, np.eye(2))
    t = is_periodic_torus(F, [1.0, 1.0], 8)
    a = orbit_average(field(lambda xi, x: np.cos(TWO_PI * x[0]), box=WIDE), F, t, 8)
    assert a.constant and np.max(np.abs(a.values)) < 1e-14
    f = field(lambda xi, x: np.cos(TWO_PI * (x[0] - x[1])), box=WIDE)
    a = orbit_average(f, F, t, 8)
    assert not a.constant
    g = np.arange(8) / 8
    x1, x2 = np.meshgrid(g, g, indexing="ij")
    assert np.max(np.abs(a.values - np.cos(TWO_PI * (x1 - x2)))) < 1e-14
    c = field(lambda xi, x: xi[0] + 2 * xi[1], cutoff=1, box=WIDE)
    a = orbit_average(c, F, t, 4)
    assert a.constant and np.allclose(a.values, 3.0, atol=1e-14)


def test_orbit_average_checks_periodicity():
    from nftk.averaging import PeriodicTorus
    F = IntegrableHamiltonian.quadratic(WIDE, np.eye(2))
    with pytest.raises(PreconditionError):
        orbit_average(field(lambda xi, x: np.cos(TWO_PI * x[0]), box=WIDE), F,
                      PeriodicTorus((0.5, 0.5), 1.0, (1, 1)), 4)


def direct_time_average(f, F, torus, x0, steps=10_000):
    om = F.gradient(np.asarray(torus.xi_b))
    t = np.linspace(0.0, torus.period, steps + 1)
    x = x0[None, :] + t[:, None] * om[None, :]
    vals = evaluate_field(f, np.tile(torus.xi_b, (t.size, 1)), np.mod(x, 1.0))
    return trapezoid(vals, t) / torus.period


def test_orbit_average_matches_time_quadrature(rng):
    F = IntegrableHamiltonian.quadratic(WIDE, np.eye(2))
    t = is_periodic_torus(F, [0.5, 0.25], 8)
    f = random_field(rng, WIDE, 3)
    a = orbit_average(f, F, t, 4)
    g = np.arange(4) / 4
    for i, j in [(0, 0), (1, 3), (2, 1)]:
        ref = direct_time_average(f, F, t, np.array([g[i], g[j]]))
        assert a.values[i, j] == pytest.approx(ref, abs=1e-8)


def test_grid_max_of_vertical_average_is_bounded(rng):
    f = random_field(rng, BOX, 2)
    assert grid_max(vertical_average(f)) <= grid_max(f) + 1e-12
