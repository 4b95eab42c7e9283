"""Torus averages of functions, 1-forms and vector fields.

In the flat chart the torus action is x -> x + t, so the vertical average
of any component is its k = 0 Fourier coefficient.  Orbit averages along
the linear flow x -> x + t Omega(xi_b) on a periodic torus keep exactly the
modes with k . Omega(xi_b) = 0.

Sign conventions: omega = sum_j dxi_j ^ dx_j and a vector field
X = u . d/dxi + v . d/dx is paired with the 1-form ``v . dxi - u . dx``;
the inverse map sends ``a . dxi + b . dx`` to ``(u, v) = (-b, a)``, so
the Hamiltonian field of A is ``(-dA/dx, dA/dxi)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, PreconditionError
from .torus_fourier import TWO_PI, SpectralField, angle_grid

PERIOD_TOL = 1e-10


def _common(fields):
    fields = list(fields)
    box = fields[0].box
    if any(f.box != box for f in fields):
        raise DimensionError("components live on different boxes")
    n = max(f.cutoff for f in fields)
    return tuple(f.pad(n) for f in fields)


@dataclass(frozen=True)
class OneFormField:
    """alpha = sum_j a_j dxi_j + b_j dx_j with SpectralField components."""

    a: tuple
    b: tuple

    def __post_init__(self):
        if len(self.a) != len(self.b) or len(self.a) != self.a[0].dim:
            raise DimensionError("a 1-form needs dim dxi-components and dim dx-components")
        comps = _common(tuple(self.a) + tuple(self.b))
        d = len(self.a)
        object.__setattr__(self, "a", comps[:d])
        object.__setattr__(self, "b", comps[d:])

    @property
    def dim(self):
        return len(self.a)

    @property
    def box(self):
        return self.a[0].box

    @property
    def cutoff(self):
        return self.a[0].cutoff

    def components(self):
        return self.a + self.b

    def map(self, fn):
        return OneFormField(tuple(fn(c) for c in self.a), tuple(fn(c) for c in self.b))

    def __add__(self, other):
        return OneFormField(tuple(p + q for p, q in zip(self.a, other.a)),
                            tuple(p + q for p, q in zip(self.b, other.b)))

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, s):
        return self.map(lambda c: c * float(s))

    __rmul__ = __mul__

    def max_abs(self):
        return max(c.max_abs() for c in self.components())


@dataclass(frozen=True)
class VectorFieldSample:
    """X = sum_j u_j d/dxi_j + v_j d/dx_j with SpectralField components."""

    u: tuple
    v: tuple

    def __post_init__(self):
        if len(self.u) != len(self.v) or len(self.u) != self.u[0].dim:
            raise DimensionError("a vector field needs dim d/dxi-components and dim d/dx-components")
        comps = _common(tuple(self.u) + tuple(self.v))
        d = len(self.u)
        object.__setattr__(self, "u", comps[:d])
        object.__setattr__(self, "v", comps[d:])

    @property
    def dim(self):
        return len(self.u)

    @property
    def box(self):
        return self.u[0].box

    @property
    def cutoff(self):
        return self.u[0].cutoff

    def components(self):
        return self.u + self.v

    def map(self, fn):
        return VectorFieldSample(tuple(fn(c) for c in self.u), tuple(fn(c) for c in self.v))

    def __add__(self, other):
        return VectorFieldSample(tuple(p + q for p, q in zip(self.u, other.u)),
                                 tuple(p + q for p, q in zip(self.v, other.v)))

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, s):
        return self.map(lambda c: c * float(s))

    __rmul__ = __mul__

    def max_abs(self):
        return max(c.max_abs() for c in self.components())

    def is_x_independent(self, tol=0.0):
        return all(c.is_x_independent(tol) for c in self.components())

    @classmethod
    def zeros(cls, box, cutoff):
        z = SpectralField.zeros(box, cutoff)
        return cls((z,) * box.dim, (z,) * box.dim)


def flat(X):
    """1-form omega(X) = v . dxi - u . dx."""
    return OneFormField(tuple(X.v), tuple(-c for c in X.u))


def sharp(alpha):
    """Vector field omega^{-1}(alpha) = (-b, a)."""
    return VectorFieldSample(tuple(-c for c in alpha.b), tuple(alpha.a))


def differential(f, order=None):
    """df with exact d/dx and finite-difference d/dxi components."""
    kw = {} if order is None else {"order": order}
    d = f.dim
    return OneFormField(tuple(f.dxi(j, **kw) for j in range(d)), tuple(f.dx(j) for j in range(d)))


def hamiltonian_vector_field(A, order=None):
    """X_A = (-dA/dx, dA/dxi)."""
    return sharp(differential(A, order=order))


def interior(X, alpha):
    """Contraction X _| alpha = sum_j u_j a_j + v_j b_j."""
    total = None
    for p, q in zip(X.u + X.v, alpha.a + alpha.b):
        term = p * q
        total = term if total is None else total + term
    return total


# --------------------------------------------------------------------------
# vertical averages


def vertical_average(f):
    """Torus average: keep only the k = 0 coefficient (same cutoff)."""
    c = np.zeros_like(f.coeffs)
    zero = f.mode_index(np.zeros(f.dim, dtype=int))
    c[zero] = f.coeffs[zero]
    return f.replace(c, validate=False)


def vertical_average_oneform(alpha):
    return alpha.map(vertical_average)


def vertical_average_vector(X):
    return X.map(vertical_average)


# --------------------------------------------------------------------------
# periodic tori and orbit averages


@dataclass(frozen=True)
class PeriodicTorus:
    """Torus {xi = xi_b} on which T . Omega(xi_b) = m is an integer vector."""

    xi_b: tuple
    period: float
    m: tuple

    def check(self, F0, tol=PERIOD_TOL):
        om = np.asarray(F0.gradient(np.asarray(self.xi_b)))
        err = float(np.max(np.abs(om * self.period - np.asarray(self.m))))
        if err > tol:
            raise PreconditionError(f"torus at {self.xi_b} is not {self.period}-periodic (defect {err:.3e})")
        return om


def is_periodic_torus(F0, xi_b, q_max, tol=PERIOD_TOL):
    """Smallest period T <= q_max with T . Omega(xi_b) in Z^d, or None.

    A torus with Omega(xi_b) = 0 is reported with T = 1 and m = 0.
    """
    xi_b = np.atleast_1d(np.asarray(xi_b, dtype=float))
    om = np.asarray(F0.gradient(xi_b), dtype=float)
    if np.all(np.abs(om) <= tol):
        return PeriodicTorus(tuple(map(float, xi_b)), 1.0, (0,) * F0.dim)
    j0 = int(np.argmax(np.abs(om)))
    base = abs(om[j0])
    n_max = int(np.floor(q_max * base + tol))
    for n in range(1, n_max + 1):
        T = n / base
        if T > q_max + tol:
            break
        m = np.rint(T * om)
        if np.max(np.abs(T * om - m)) <= tol:
            return PeriodicTorus(tuple(map(float, xi_b)), float(T), tuple(int(v) for v in m))
    return None


@dataclass
class OrbitAverage:
    """Orbit average sampled on the angle grid of a torus."""

    values: np.ndarray
    constant: bool
    coefficients: np.ndarray
    lattice: np.ndarray


def orbit_average(f, F0, torus, x_samples, tol=1e-10):
    """Time average of f along the flow of F0 on a periodic torus.

    The average (1/T) int_0^T f(xi_b, x + t Omega) dt keeps exactly the
    modes with k . m = 0; it is returned on ``x_samples`` angle nodes per
    dimension together with a flag telling whether only k = 0 survives.
    """
    torus.check(F0)
    lat = f.lattice
    c = f.interpolate(np.asarray(torus.xi_b)).reshape(-1)
    keep = (lat @ np.asarray(torus.m, dtype=int)) == 0
    cbar = np.where(keep, c, 0.0)
    nonzero = np.any(lat != 0, axis=1)
    scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
    constant = bool(np.max(np.abs(cbar[nonzero]), initial=0.0) <= tol * scale)
    grids = angle_grid(x_samples, f.dim)
    pts = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, f.dim)
    vals = np.real(np.exp(1j * TWO_PI * (pts @ lat.T)) @ cbar)
    shape = tuple(g.size for g in grids)
    return OrbitAverage(vals.reshape(shape), constant, cbar, lat)
