import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nftk.torus_fourier import ActionBox, SpectralField

settings.register_profile(
    "nftk", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("nftk")


def hermitian(coeffs, dim):
    """Project raw complex coefficients onto c(-k) = conj(c(k))."""
    flipped = coeffs[(Ellipsis,) + (slice(None, None, -1),) * dim]
    return 0.5 * (coeffs + np.conj(flipped))


def random_field(rng, box, cutoff, x_independent=False, polynomial_degree=None):
    """Random band-limited field.

    With ``polynomial_degree`` the xi-profiles are random polynomials of that
    degree, otherwise independent random values at every node.
    """
    d = box.dim
    kshape = (2 * cutoff + 1,) * d
    if polynomial_degree is None:
        raw = rng.normal(size=box.grid_points + kshape) + 1j * rng.normal(size=box.grid_points + kshape)
    else:
        mesh = box.mesh()
        raw = np.zeros(box.grid_points + kshape, dtype=complex)
        for p in np.ndindex(*(polynomial_degree + 1,) * d):
            if sum(p) > polynomial_degree:
                continue
            mono = np.prod([mesh[..., j] ** p[j] for j in range(d)], axis=0)
            c = rng.normal(size=kshape) + 1j * rng.normal(size=kshape)
            raw += mono[(Ellipsis,) + (None,) * d] * c
    if x_independent:
        keep = np.zeros(kshape, dtype=bool)
        keep[(cutoff,) * d] = True
        raw = np.where(keep, raw, 0)
    return SpectralField(box, cutoff, hermitian(raw, d))


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


@pytest.fixture
def box1():
    return ActionBox([-1.0], [1.0], [64])


@pytest.fixture
def box2():
    return ActionBox([-1.0, -1.0], [1.0, 1.0], [17, 17])


def random_nonresonant(rng, box, cutoff, F0=None, smooth=False, fill=0.5):
    """Band-limited H1 whose k-th coefficient is Omega_k(xi) p_k(xi).

    Omega_k = k . grad F0 (default F0 = |xi|^2/2), so every coefficient
    vanishes on its resonance set.  ``p_k`` is a quadratic polynomial, or
    with ``smooth`` a polynomial plus a random cosine in xi, damped by
    2^-|k|.  Each mode is present with probability ``fill``.
    """
    mesh = box.mesh()
    grad = mesh if F0 is None else F0.mesh_gradient(box).reshape(mesh.shape)
    modes = {}
    for k in np.ndindex(*(2 * cutoff + 1,) * box.dim):
        k = tuple(v - cutoff for v in k)
        if not any(k) or k < tuple(-v for v in k) or rng.random() >= fill:
            continue
        om = sum(kj * grad[..., j] for j, kj in enumerate(k))
        c = rng.normal(size=4) + 1j * rng.normal(size=4)
        p = c[0] + c[1] * mesh[..., 0] + c[2] * mesh[..., -1] ** 2
        if smooth:
            a = rng.normal(size=box.dim)
            p = p + c[3] * np.cos(sum(a[j] * mesh[..., j] for j in range(box.dim)) + rng.uniform(0, 6.3))
            p = p * 2.0 ** -max(abs(v) for v in k)
        modes[k] = om * p
    modes[(0,) * box.dim] = 1.0 + mesh[..., 0] ** 2
    return SpectralField.from_modes(box, cutoff, modes)
