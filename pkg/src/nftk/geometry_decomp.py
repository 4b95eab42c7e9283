"""Closed 1-forms, exact primitives and the split of symplectic fields.

A symplectic field X splits uniquely as X = X_A + <X> where X_A is
Hamiltonian with <A> = 0 and <X> is the (x-independent) torus average.
The primitive A is recovered spectrally from the dx-components of the
zero-average part of omega(X); the dxi-components serve as a path-integral
cross-check from the lower corner of the box.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .averaging import (VectorFieldSample, flat, sharp,
                        vertical_average_oneform, vertical_average_vector)
from .errors import NonClosedInputError, NonSymplecticInputError, PreconditionError
from .torus_fourier import TWO_PI, SpectralField, evaluate_field, grid_max, interpolate_grid

CLOSED_TOL = 1e-8
MEAN_TOL = 1e-10
CONSISTENCY_TOL = 1e-8
#: Relative mismatch allowed between the spectral primitive and the
#: Simpson path integral of the dxi-components, on top of the estimated
#: quadrature error.
PATH_TOL = 1e-6


def exterior_derivative(alpha):
    """Components of d(alpha) as a dict of SpectralFields.

    Keys are ``("xixi", i, j)`` for dxi_i ^ dxi_j (i < j), ``("xx", i, j)``
    for dx_i ^ dx_j (i < j) and ``("xix", i, j)`` for dxi_i ^ dx_j.
    """
    d = alpha.dim
    out = {}
    for i in range(d):
        for j in range(i + 1, d):
            out[("xixi", i, j)] = alpha.a[j].dxi(i) - alpha.a[i].dxi(j)
            out[("xx", i, j)] = alpha.b[j].dx(i) - alpha.b[i].dx(j)
        for j in range(d):
            out[("xix", i, j)] = alpha.b[j].dxi(i) - alpha.a[i].dx(j)
    return out


def closedness_check(alpha):
    """Max-norm of d(alpha) over the grid (d/dx exact, d/dxi by finite differences)."""
    return max(grid_max(c) for c in exterior_derivative(alpha).values())


def _require_closed(alpha, tol, exc=NonClosedInputError):
    err = closedness_check(alpha)
    scale = max(1.0, alpha.max_abs())
    if err > tol * scale:
        raise exc(f"1-form is not closed: max|d alpha| = {err:.3e}")
    return err


def cycle_integrals(alpha, xi_b, tol_closed=CLOSED_TOL):
    """Integrals of alpha over the coordinate circles of the torus at ``xi_b``.

    The value for circle j is the mean of b_j(xi_b, .).  It is checked
    against direct trapezoid quadrature of alpha along the circle through
    x = 0, which agrees for closed forms.
    """
    _require_closed(alpha, tol_closed)
    xi_b = np.atleast_1d(np.asarray(xi_b, dtype=float))
    d = alpha.dim
    zero = np.zeros(d, dtype=int)
    avg = vertical_average_oneform(alpha)
    vals = np.array([float(np.real(interpolate_grid(avg.b[j].coefficient(zero), alpha.box, xi_b)[0]))
                     for j in range(d)])
    m = 2 * alpha.cutoff + 2
    t = np.arange(m) / m
    for j in range(d):
        x = np.zeros((m, d))
        x[:, j] = t
        direct = float(np.mean(evaluate_field(alpha.b[j], np.tile(xi_b, (m, 1)), x)))
        scale = max(1.0, abs(vals[j]))
        if abs(direct - vals[j]) > 1e-12 * scale:
            raise NonClosedInputError(
                f"cycle {j}: average {vals[j]!r} differs from direct integral {direct!r}")
    return vals


def _spectral_primitive(alpha, consistency_tol):
    """f with df = alpha from the dx-components; k = 0 set to zero."""
    d = alpha.dim
    lat = alpha.b[0].lattice
    kshape = alpha.b[0].coeffs.shape
    flat_shape = alpha.b[0].flat_coeffs().shape
    best = np.argmax(np.abs(lat), axis=1)
    f = np.zeros(flat_shape, dtype=complex)
    cands = []
    for j in range(d):
        kj = lat[:, j].astype(float)
        ok = kj != 0
        cand = np.zeros(flat_shape, dtype=complex)
        cand[..., ok] = alpha.b[j].flat_coeffs()[..., ok] / (1j * TWO_PI * kj[ok])
        cands.append((ok, cand))
        sel = ok & (best == j)
        f[..., sel] = cand[..., sel]
    scale = max(1.0, float(np.max(np.abs(f), initial=0.0)))
    for ok, cand in cands:
        diff = float(np.max(np.abs(cand[..., ok] - f[..., ok]), initial=0.0))
        if diff > consistency_tol * scale:
            raise NonClosedInputError(f"primitive depends on the angle used (mismatch {diff:.3e})")
    return SpectralField(alpha.box, alpha.cutoff, f.reshape(kshape))


def _path_integral(alpha, f, stride=1):
    """Reconstruct f from its value at the lower corner and the dxi-components.

    Integrates along a staircase path (axis 0 first) with composite Simpson
    on every ``stride``-th grid node.
    """
    d = alpha.dim
    box = alpha.box
    sub = (slice(None, None, stride),) * d
    base = (0,) * d
    recon = np.broadcast_to(f.coeffs[base], f.coeffs[sub].shape).copy()
    for j in range(d):
        # line along axis j with coordinates < j free and coordinates > j at lo
        sl = tuple(slice(None) if i <= j else slice(0, 1) for i in range(d))
        line = alpha.a[j].coeffs[sub][sl]
        h = box.spacing[j] * stride
        integ = (cumulative_simpson(line.real, dx=h, axis=j, initial=0)
                 + 1j * cumulative_simpson(line.imag, dx=h, axis=j, initial=0))
        recon = recon + integ
    return recon


def path_discrepancy(alpha, f):
    """Max mismatch of the Simpson path integral and a quadrature-error estimate.

    The estimate is the gap between the fine-grid integral and the one on
    every other node, which bounds the fine-grid Simpson error for smooth
    profiles.  Non-closed input leaves a discrepancy that does not shrink.
    """
    fine = _path_integral(alpha, f)
    diff = float(np.max(np.abs(fine - f.coeffs), initial=0.0))
    if min(alpha.box.grid_points) < 5:
        return diff, 0.0
    coarse = _path_integral(alpha, f, stride=2)
    sub = (slice(None, None, 2),) * alpha.dim
    est = float(np.max(np.abs(fine[sub] - coarse), initial=0.0))
    return diff, est


def exact_primitive(alpha, tol_closed=CLOSED_TOL, tol_mean=MEAN_TOL,
                    consistency_tol=CONSISTENCY_TOL, path_tol=PATH_TOL):
    """Primitive f with df = alpha and <f> = 0 of a closed, zero-average 1-form.

    Raises
    ------
    NonClosedInputError
        alpha is not closed, or reconstructions disagree.
    PreconditionError
        The torus average of alpha does not vanish.
    """
    _require_closed(alpha, tol_closed)
    zero = np.zeros(alpha.dim, dtype=int)
    mean = max(float(np.max(np.abs(c.coefficient(zero)))) for c in alpha.components())
    if mean > tol_mean:
        raise PreconditionError(f"torus average of the 1-form is nonzero ({mean:.3e})")
    f = _spectral_primitive(alpha, consistency_tol)
    diff, est = path_discrepancy(alpha, f)
    scale = max(1.0, f.max_abs())
    if diff > path_tol * scale + est:
        raise NonClosedInputError(f"path integral disagrees with spectral primitive ({diff:.3e})")
    return f


@dataclass
class DecompositionResult:
    """X = X1 + X2 with X1 = X_A, <A> = 0, and X2 = <X> x-independent."""

    hamiltonian_part: VectorFieldSample
    primitive: SpectralField
    lift_part: VectorFieldSample

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        self.primitive.save(os.path.join(directory, "A.field"))
        for name, X in (("X1", self.hamiltonian_part), ("X2", self.lift_part)):
            for j, c in enumerate(X.u):
                c.save(os.path.join(directory, f"{name}_u{j + 1}.field"))
            for j, c in enumerate(X.v):
                c.save(os.path.join(directory, f"{name}_v{j + 1}.field"))


def decompose_symplectic_field(X, tol_closed=CLOSED_TOL):
    """Split a symplectic field into its Hamiltonian part and its torus average."""
    alpha = flat(X)
    _require_closed(alpha, tol_closed, NonSymplecticInputError)
    alpha2 = vertical_average_oneform(alpha)
    alpha1 = alpha - alpha2
    try:
        A = exact_primitive(alpha1, tol_closed=tol_closed)
    except NonClosedInputError as exc:
        raise NonSymplecticInputError(str(exc)) from exc
    # X1 = omega^{-1}(dA) with dA = alpha1 exactly
    return DecompositionResult(sharp(alpha1), A, sharp(alpha2))


@dataclass
class FlowFamilyDecomposition:
    """Per-epsilon base generator (x-independent) and Hamiltonian generator."""

    epsilons: list
    base_generators: list
    hamiltonian_generators: list


def decompose_flow_family(samples, tol_closed=CLOSED_TOL):
    """First-order split of the generators of a family of symplectomorphisms.

    ``samples`` is a list of ``(epsilon, X_epsilon)``.  The conjugation of
    the Hamiltonian part by the fiber-preserving flow is truncated to the
    identity, so G_epsilon is the primitive of the zero-average part of
    omega(X_epsilon) at the sample.
    """
    eps, ys, gs = [], [], []
    for e, X in samples:
        res = decompose_symplectic_field(X, tol_closed)
        eps.append(float(e))
        ys.append(vertical_average_vector(res.lift_part))
        gs.append(res.primitive)
    return FlowFamilyDecomposition(eps, ys, gs)
