"""Spectral representation of real functions on T^d x B.

Angles live on T^d = R^d / Z^d with Fourier basis exp(2 pi i k.x) and the
phase origin fixed at x0 = 0.  Actions live on a box B sampled by a uniform
tensor grid; between grid nodes the Fourier coefficients are interpolated
by local Lagrange polynomials.

A field is stored as a complex array of shape ``(*grid_points, *(2N+1,)*d)``:
the first d axes index the action grid, the last d axes index the lattice
vector k with offset N, so ``coeffs[..., N + k_1, ..., N + k_d]`` is the
coefficient of k.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, SymmetryError

TWO_PI = 2.0 * np.pi

#: Degree of the local Lagrange interpolant used between action nodes.
INTERP_ORDER = 5
#: Degree of the polynomial underlying the finite-difference d/dxi stencils.
FD_ORDER = 6
#: Fitted decay rates below this value are flagged as slow.
SLOW_DECAY_RATE = 0.2

_FORMAT_TAG = "nftk-spectral-field v1"


@dataclass(frozen=True)
class ActionBox:
    """Axis-aligned box of actions with a uniform tensor grid.

    Parameters
    ----------
    lo, hi : sequence of float
        Lower and upper bounds, one per action.
    grid_points : int or sequence of int
        Number of nodes per action (endpoints included).
    """

    lo: tuple
    hi: tuple
    grid_points: tuple

    def __init__(self, lo, hi, grid_points):
        lo = tuple(float(v) for v in np.atleast_1d(lo))
        hi = tuple(float(v) for v in np.atleast_1d(hi))
        if len(lo) != len(hi) or len(lo) == 0:
            raise DimensionError("lo and hi must be non-empty and of equal length")
        gp = np.atleast_1d(grid_points).astype(int)
        if gp.size == 1:
            gp = np.repeat(gp, len(lo))
        if gp.size != len(lo):
            raise DimensionError("grid_points must have one entry per action")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("require lo[j] < hi[j] for every action")
        if np.any(gp < 2):
            raise ValueError("require at least 2 grid points per action")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "grid_points", tuple(int(v) for v in gp))

    @classmethod
    def cube(cls, dim, lo, hi, n):
        return cls([lo] * dim, [hi] * dim, [n] * dim)

    @property
    def dim(self):
        return len(self.lo)

    @property
    def spacing(self):
        return tuple((b - a) / (n - 1) for a, b, n in zip(self.lo, self.hi, self.grid_points))

    def nodes(self, j):
        return np.linspace(self.lo[j], self.hi[j], self.grid_points[j])

    def mesh(self):
        """Grid nodes as an array of shape ``(*grid_points, dim)``."""
        axes = np.meshgrid(*[self.nodes(j) for j in range(self.dim)], indexing="ij")
        return np.stack(axes, axis=-1)

    def contains(self, xi, tol=1e-12):
        xi = np.asarray(xi, dtype=float)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        slack = tol * (hi - lo)
        return np.all((xi >= lo - slack) & (xi <= hi + slack), axis=-1)

    def check_inside(self, xi, what="action"):
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.dim:
            raise DimensionError(f"{what} has {xi.shape[-1]} components, box has dim {self.dim}")
        inside = self.contains(xi)
        if not np.all(inside):
            bad = xi.reshape(-1, self.dim)[~np.asarray(inside).reshape(-1)][0]
            raise DomainError(f"{what} {tuple(bad)} outside box {self.lo}..{self.hi}")

    def sub_box(self, fraction):
        """Centered box shrunk to ``fraction`` of the side lengths, same grid."""
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        c = 0.5 * (lo + hi)
        r = 0.5 * fraction * (hi - lo)
        return ActionBox(c - r, c + r, self.grid_points)


def lattice_vectors(dim, cutoff):
    """All k with |k|_inf <= cutoff, in storage (C) order, shape (K, dim)."""
    rng = range(-cutoff, cutoff + 1)
    return np.array(list(itertools.product(rng, repeat=dim)), dtype=int).reshape(-1, dim)


def angle_grid(angle_points, dim):
    """Uniform angle nodes j/M per dimension; ``angle_points`` int or per-dim."""
    m = np.atleast_1d(angle_points).astype(int)
    if m.size == 1:
        m = np.repeat(m, dim)
    return [np.arange(mj) / mj for mj in m]


def tensor_grid(box, angle_points):
    """Broadcastable (xi, x) coordinate tuples on ``box`` x angle grid.

    Each returned tuple has ``dim`` arrays broadcastable to
    ``(*box.grid_points, *angle_points)``, so ``func(xi, x)`` can be
    written with ``xi[0]``, ``x[1]`` and so on.
    """
    d = box.dim
    ang = angle_grid(angle_points, d)
    shape_len = 2 * d
    xi = []
    x = []
    for j in range(d):
        s = [1] * shape_len
        s[j] = box.grid_points[j]
        xi.append(box.nodes(j).reshape(s))
        s = [1] * shape_len
        s[d + j] = ang[j].size
        x.append(ang[j].reshape(s))
    return tuple(xi), tuple(x)


# --------------------------------------------------------------------------
# Lagrange stencils on uniform grids


def _lagrange_basis(t, p):
    """Values and first derivatives of the degree-p Lagrange basis on nodes 0..p.

    ``t`` has shape (P,); returns two arrays of shape (P, p+1).
    """
    t = np.asarray(t, dtype=float)
    nodes = np.arange(p + 1)
    vals = np.ones((t.size, p + 1))
    ders = np.zeros((t.size, p + 1))
    for j in range(p + 1):
        others = nodes[nodes != j]
        denom = np.prod(j - others)
        factors = t[:, None] - others[None, :]
        vals[:, j] = np.prod(factors, axis=1) / denom
        # sum over i of prod_{m != i} factors[:, m], via prefix and suffix products
        ones = np.ones((t.size, 1))
        prefix = np.cumprod(np.hstack([ones, factors[:, :-1]]), axis=1)
        suffix = np.cumprod(np.hstack([ones, factors[:, :0:-1]]), axis=1)[:, ::-1]
        ders[:, j] = np.sum(prefix * suffix, axis=1) / denom
    return vals, ders


def _stencil(s, n, order):
    """Stencil start indices and weights for fractional node coordinates ``s``."""
    p = min(order, n - 1)
    i0 = np.clip(np.floor(s).astype(int) - (p - 1) // 2, 0, n - 1 - p)
    vals, ders = _lagrange_basis(s - i0, p)
    return i0, vals, ders


def fd_derivative(values, axis, h, order=FD_ORDER):
    """First derivative along a uniformly sampled axis by Lagrange stencils.

    Centered where possible, one-sided near the ends; exact for
    polynomials of degree <= ``order``.
    """
    values = np.asarray(values)
    n = values.shape[axis]
    s = np.arange(n, dtype=float)
    i0, _, ders = _stencil(s, n, order)
    moved = np.moveaxis(values, axis, 0)
    out = np.zeros_like(moved)
    for j in range(ders.shape[1]):
        w = ders[:, j].reshape((n,) + (1,) * (moved.ndim - 1))
        out = out + w * moved[i0 + j]
    return np.moveaxis(out / h, 0, axis)


def interpolate_grid(values, box, xi, order=INTERP_ORDER, gradient=False):
    """Interpolate node data ``values`` (shape (*grid_points, *tail)) at ``xi``.

    Returns shape ``(P, *tail)``; with ``gradient=True`` also returns the
    xi-gradient of the interpolant with shape ``(P, dim, *tail)``.
    """
    d = box.dim
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    box.check_inside(xi)
    values = np.asarray(values)
    tail = values.shape[d:]
    lo = np.asarray(box.lo)
    h = np.asarray(box.spacing)
    s = (xi - lo) / h
    stencils = [_stencil(s[:, j], box.grid_points[j], order) for j in range(d)]
    npts = xi.shape[0]
    out = np.zeros((npts,) + tail, dtype=values.dtype if values.dtype.kind == "c" else float)
    grad = np.zeros((npts, d) + tail, dtype=out.dtype) if gradient else None
    expand = (slice(None),) + (None,) * len(tail)
    ranges = [range(st[1].shape[1]) for st in stencils]
    for combo in itertools.product(*ranges):
        idx = tuple(stencils[j][0] + combo[j] for j in range(d))
        block = values[idx]
        w = np.ones(npts)
        for j in range(d):
            w = w * stencils[j][1][:, combo[j]]
        out += w[expand] * block
        if gradient:
            for g in range(d):
                wg = np.ones(npts)
                for j in range(d):
                    table = stencils[j][2] if j == g else stencils[j][1]
                    wg = wg * table[:, combo[j]]
                grad[:, g] += (wg / h[g])[expand] * block
    if gradient:
        return out, grad
    return out


# --------------------------------------------------------------------------
# Spectral field


class SpectralField:
    """Fourier coefficients of a real function on T^d x B.

    Parameters
    ----------
    box : ActionBox
        Action box and grid.
    cutoff : int
        Fourier cutoff N; modes with |k|_inf <= N are stored.
    coeffs : array_like
        Complex array of shape ``(*box.grid_points, *(2N+1,)*dim)``.
    validate : bool
        Check shape, finiteness and Hermitian symmetry (default True).
    """

    __slots__ = ("box", "cutoff", "coeffs")

    def __init__(self, box, cutoff, coeffs, validate=True):
        cutoff = int(cutoff)
        if cutoff < 0:
            raise ValueError("cutoff must be non-negative")
        coeffs = np.array(coeffs, dtype=complex)
        expected = tuple(box.grid_points) + (2 * cutoff + 1,) * box.dim
        if coeffs.shape != expected:
            raise DimensionError(f"coefficient array has shape {coeffs.shape}, expected {expected}")
        coeffs.setflags(write=False)
        self.box = box
        self.cutoff = cutoff
        self.coeffs = coeffs
        if validate:
            if not np.all(np.isfinite(coeffs)):
                raise ValueError("coefficients must be finite")
            self.check_hermitian()

    # construction helpers -------------------------------------------------

    @classmethod
    def zeros(cls, box, cutoff):
        shape = tuple(box.grid_points) + (2 * cutoff + 1,) * box.dim
        return cls(box, cutoff, np.zeros(shape, dtype=complex), validate=False)

    @classmethod
    def from_modes(cls, box, cutoff, modes):
        """Build from ``{k: profile}`` where profile is a scalar, an array on the
        grid, or a callable of the mesh (shape (*grid, dim)) returning one.

        The conjugate mode -k is filled automatically when absent.
        """
        c = np.zeros(tuple(box.grid_points) + (2 * cutoff + 1,) * box.dim, dtype=complex)
        mesh = box.mesh()
        given = {}
        for k, prof in modes.items():
            k = tuple(int(v) for v in np.atleast_1d(k))
            if callable(prof):
                prof = prof(mesh)
            given[k] = np.broadcast_to(np.asarray(prof, dtype=complex), tuple(box.grid_points))
        for k, prof in given.items():
            if max(abs(v) for v in k) > cutoff:
                raise DimensionError(f"mode {k} exceeds cutoff {cutoff}")
            c[(Ellipsis,) + tuple(cutoff + v for v in k)] += prof
            mk = tuple(-v for v in k)
            if mk not in given:
                c[(Ellipsis,) + tuple(cutoff + v for v in mk)] += np.conj(prof)
        return cls(box, cutoff, c)

    @classmethod
    def from_function(cls, box, cutoff, func, angle_points=None):
        """Sample ``func(xi, x)`` on the tensor grid and transform."""
        if angle_points is None:
            angle_points = 2 * cutoff + 2
        xi, x = tensor_grid(box, angle_points)
        shape = tuple(box.grid_points) + tuple(np.broadcast_to(angle_points, (box.dim,)))
        samples = np.broadcast_to(np.asarray(func(xi, x), dtype=float), shape)
        return forward_transform(samples, box, cutoff)

    @classmethod
    def from_profile(cls, box, profile):
        """x-independent field with k=0 coefficient ``profile`` (callable of mesh or array)."""
        return cls.from_modes(box, 0, {(0,) * box.dim: profile})

    def replace(self, coeffs, validate=True):
        return SpectralField(self.box, self.cutoff, coeffs, validate=validate)

    # structure -------------------------------------------------------------

    @property
    def dim(self):
        return self.box.dim

    @property
    def kaxes(self):
        d = self.dim
        return tuple(range(d, 2 * d))

    @property
    def lattice(self):
        return lattice_vectors(self.dim, self.cutoff)

    def mode_index(self, k):
        k = np.atleast_1d(k).astype(int)
        if k.size != self.dim:
            raise DimensionError(f"mode {tuple(k)} has wrong dimension")
        if np.max(np.abs(k)) > self.cutoff:
            raise DimensionError(f"mode {tuple(k)} exceeds cutoff {self.cutoff}")
        return (Ellipsis,) + tuple(int(self.cutoff + v) for v in k)

    def coefficient(self, k):
        """Coefficient profile of mode k on the action grid."""
        return self.coeffs[self.mode_index(k)]

    def flat_coeffs(self):
        """Coefficients reshaped to ``(*grid_points, K)`` in lattice order."""
        return self.coeffs.reshape(tuple(self.box.grid_points) + (-1,))

    def hermitian_defect(self):
        flipped = np.conj(np.flip(self.coeffs, axis=self.kaxes))
        return float(np.max(np.abs(self.coeffs - flipped), initial=0.0))

    def check_hermitian(self, rtol=1e-12):
        scale = max(1.0, self.max_abs())
        defect = self.hermitian_defect()
        if defect > rtol * scale:
            raise SymmetryError(f"Hermitian symmetry broken by {defect:.3e}")

    def max_abs(self):
        return float(np.max(np.abs(self.coeffs), initial=0.0))

    def oscillating_max(self):
        """Largest |coefficient| over k != 0."""
        c = self.coeffs.copy()
        c[self.mode_index(np.zeros(self.dim, dtype=int))] = 0
        return float(np.max(np.abs(c), initial=0.0))

    def is_x_independent(self, tol=0.0):
        return self.oscillating_max() <= tol

    def pad(self, cutoff):
        """Same field with a larger (or equal) cutoff."""
        if cutoff < self.cutoff:
            raise ValueError("pad only increases the cutoff; use truncate")
        if cutoff == self.cutoff:
            return self
        d = self.dim
        new = np.zeros(tuple(self.box.grid_points) + (2 * cutoff + 1,) * d, dtype=complex)
        off = cutoff - self.cutoff
        sl = (Ellipsis,) + (slice(off, off + 2 * self.cutoff + 1),) * d
        new[sl] = self.coeffs
        return SpectralField(self.box, cutoff, new, validate=False)

    def truncate(self, cutoff):
        if cutoff >= self.cutoff:
            return self.pad(cutoff)
        off = self.cutoff - cutoff
        sl = (Ellipsis,) + (slice(off, off + 2 * cutoff + 1),) * self.dim
        return SpectralField(self.box, cutoff, self.coeffs[sl], validate=False)

    # arithmetic -------------------------------------------------------------

    def _aligned(self, other):
        if other.box != self.box:
            raise DimensionError("fields live on different boxes")
        n = max(self.cutoff, other.cutoff)
        return self.pad(n), other.pad(n), n

    def __add__(self, other):
        if isinstance(other, SpectralField):
            a, b, n = self._aligned(other)
            return SpectralField(self.box, n, a.coeffs + b.coeffs, validate=False)
        c = self.coeffs.copy()
        c[self.mode_index(np.zeros(self.dim, dtype=int))] += float(other)
        return self.replace(c, validate=False)

    __radd__ = __add__

    def __neg__(self):
        return self.replace(-self.coeffs, validate=False)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, SpectralField):
            return multiply(self, other)
        return self.replace(self.coeffs * float(other), validate=False)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.replace(self.coeffs / float(scalar), validate=False)

    # calculus ---------------------------------------------------------------

    def dx(self, j):
        """Exact spectral derivative along angle j."""
        k = np.arange(-self.cutoff, self.cutoff + 1)
        shape = [1] * self.coeffs.ndim
        shape[self.dim + j] = k.size
        factor = (1j * TWO_PI * k).reshape(shape)
        return self.replace(self.coeffs * factor, validate=False)

    def dxi(self, j, order=FD_ORDER):
        """Derivative along action j by finite differences on the grid."""
        c = fd_derivative(self.coeffs, axis=j, h=self.box.spacing[j], order=order)
        return self.replace(c, validate=False)

    def interpolate(self, xi, gradient=False, order=INTERP_ORDER):
        """Coefficients at arbitrary actions, shape (P, *(2N+1,)*dim)."""
        return interpolate_grid(self.coeffs, self.box, xi, order=order, gradient=gradient)

    def __call__(self, xi, x):
        return evaluate_field(self, xi, x)

    def __repr__(self):
        return (f"SpectralField(dim={self.dim}, grid={self.box.grid_points}, "
                f"cutoff={self.cutoff}, max|c|={self.max_abs():.3g})")

    # serialization ---------------------------------------------------------

    def dumps(self):
        """Text form: header (dim, box, grid_points, cutoff) then nonzero rows
        ``xi-index... k... re im``; omitted rows are exactly zero."""
        d = self.dim
        lines = [
            _FORMAT_TAG,
            f"dim {d}",
            "lo " + " ".join(format(v, ".17g") for v in self.box.lo),
            "hi " + " ".join(format(v, ".17g") for v in self.box.hi),
            "grid_points " + " ".join(str(v) for v in self.box.grid_points),
            f"cutoff {self.cutoff}",
        ]
        nz = np.argwhere(self.coeffs != 0)
        lines.append(f"rows {len(nz)}")
        for idx in nz:
            v = self.coeffs[tuple(idx)]
            gi = " ".join(str(i) for i in idx[:d])
            kk = " ".join(str(i - self.cutoff) for i in idx[d:])
            lines.append(f"{gi} {kk} {format(v.real, '.17g')} {format(v.imag, '.17g')}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text):
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines or lines[0] != _FORMAT_TAG:
            raise ValueError(f"not a spectral field document (expected '{_FORMAT_TAG}')")
        header = {}
        pos = 1
        for key in ("dim", "lo", "hi", "grid_points", "cutoff", "rows"):
            parts = lines[pos].split()
            if parts[0] != key:
                raise ValueError(f"expected header '{key}', found '{parts[0]}'")
            header[key] = parts[1:]
            pos += 1
        d = int(header["dim"][0])
        box = ActionBox([float(v) for v in header["lo"]], [float(v) for v in header["hi"]],
                        [int(v) for v in header["grid_points"]])
        if box.dim != d:
            raise DimensionError("header dim does not match box")
        n = int(header["cutoff"][0])
        nrows = int(header["rows"][0])
        c = np.zeros(tuple(box.grid_points) + (2 * n + 1,) * d, dtype=complex)
        body = lines[pos:]
        if len(body) != nrows:
            raise ValueError(f"expected {nrows} rows, found {len(body)}")
        for ln in body:
            parts = ln.split()
            if len(parts) != 2 * d + 2:
                raise ValueError(f"malformed row: {ln!r}")
            gi = tuple(int(v) for v in parts[:d])
            kk = tuple(int(v) + n for v in parts[d:2 * d])
            c[gi + kk] = complex(float(parts[-2]), float(parts[-1]))
        return cls(box, n, c)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def _mode_positions(cutoff, m):
    return np.arange(-cutoff, cutoff + 1) % m


def forward_transform(samples, box, cutoff):
    """Fourier coefficients of real samples on (action grid) x (angle grid).

    ``samples`` has shape ``(*box.grid_points, M_1, ..., M_d)`` with angle
    nodes j/M_i and every M_i >= 2N+2.  The result is exact to roundoff for
    inputs band-limited within the cutoff.
    """
    samples = np.asarray(samples, dtype=float)
    d = box.dim
    if samples.ndim != 2 * d or samples.shape[:d] != tuple(box.grid_points):
        raise DimensionError(
            f"samples have shape {samples.shape}; expected {tuple(box.grid_points)} + angle grid")
    ms = samples.shape[d:]
    if any(m < 2 * cutoff + 2 for m in ms):
        raise DimensionError(f"angle grid {ms} too coarse for cutoff {cutoff} (need >= {2 * cutoff + 2})")
    axes = tuple(range(d, 2 * d))
    spectrum = np.fft.fftn(samples, axes=axes) / float(np.prod(ms))
    for j, m in enumerate(ms):
        spectrum = np.take(spectrum, _mode_positions(cutoff, m), axis=d + j)
    spectrum = 0.5 * (spectrum + np.conj(np.flip(spectrum, axis=axes)))
    return SpectralField(box, cutoff, spectrum)


def inverse_transform(field, angle_points=None):
    """Real samples of ``field`` on its action grid times a uniform angle grid."""
    field.check_hermitian()
    d = field.dim
    n = field.cutoff
    if angle_points is None:
        angle_points = 2 * n + 2
    ms = tuple(int(v) for v in np.broadcast_to(angle_points, (d,)))
    if any(m < 2 * n + 1 for m in ms):
        raise DimensionError(f"angle grid {ms} cannot hold cutoff {n}")
    full = np.zeros(tuple(field.box.grid_points) + ms, dtype=complex)
    idx = np.ix_(*[_mode_positions(n, m) for m in ms])
    full[(Ellipsis,) + idx] = field.coeffs
    axes = tuple(range(d, 2 * d))
    vals = np.fft.ifftn(full, axes=axes) * float(np.prod(ms))
    return vals.real.copy()


def _as_points(a, dim):
    a = np.asarray(a, dtype=float)
    single = a.ndim == 0 or (a.ndim == 1 and a.size == dim)
    a = a.reshape(-1, dim) if a.ndim <= 1 else a
    if a.shape[-1] != dim:
        raise DimensionError(f"points must have {dim} components")
    return a, single


def evaluate_field(field, xi, x):
    """Value of ``field`` at actions ``xi`` and angles ``x``.

    Both arguments are shape (dim,) or (P, dim); returns a float or an
    array of shape (P,).
    """
    d = field.dim
    xi, single = _as_points(xi, d)
    x, single_x = _as_points(x, d)
    xi, x = np.broadcast_arrays(xi, x)
    coeffs = field.interpolate(xi).reshape(xi.shape[0], -1)
    phase = np.exp(1j * TWO_PI * (x @ field.lattice.T))
    out = np.real(np.sum(coeffs * phase, axis=1))
    if single and single_x:
        return float(out[0])
    return out


def evaluate_with_gradient(field, xi, x):
    """Value, d/dxi and d/dx of ``field`` at points; gradients shape (P, dim)."""
    d = field.dim
    xi, _ = _as_points(xi, d)
    x, _ = _as_points(x, d)
    xi, x = np.broadcast_arrays(xi, x)
    npts = xi.shape[0]
    c, gc = field.interpolate(xi, gradient=True)
    c = c.reshape(npts, -1)
    gc = gc.reshape(npts, d, -1)
    lat = field.lattice
    phase = np.exp(1j * TWO_PI * (x @ lat.T))
    val = np.real(np.sum(c * phase, axis=1))
    dxi = np.real(np.einsum("pdk,pk->pd", gc, phase))
    dx = np.real(np.einsum("pk,kd->pd", c * phase, 1j * TWO_PI * lat))
    return val, dxi, dx


def multiply(f, g):
    """Exact product of two band-limited fields (cutoff N_f + N_g)."""
    if f.box != g.box:
        raise DimensionError("fields live on different boxes")
    if f.cutoff == 0 or g.cutoff == 0:
        a, b = (f, g) if g.cutoff == 0 else (g, f)
        prof = b.coefficient(np.zeros(b.dim, dtype=int))
        prof = prof.reshape(prof.shape + (1,) * a.dim)
        return a.replace(a.coeffs * prof, validate=False)
    n = f.cutoff + g.cutoff
    m = 2 * n + 2
    vals = inverse_transform(f, m) * inverse_transform(g, m)
    return forward_transform(vals, f.box, n)


@dataclass
class DecayReport:
    """Per-shell maxima of |f(., k)| and fitted exponential decay rate.

    ``rate`` is minus the slope of log(max) against the shell index over the
    nonzero shells s >= 1; it is +inf when fewer than two such shells carry
    energy (band-limited or all-zero field).
    """

    shell_max: np.ndarray
    rate: float
    slow_decay: bool
    fitted_shells: list = field(default_factory=list)


def decay_report(f, rel_floor=1e-14):
    n = f.cutoff
    shells = np.max(np.abs(f.lattice), axis=1)
    mags = np.abs(f.flat_coeffs()).reshape(-1, shells.size).max(axis=0)
    shell_max = np.array([mags[shells == s].max() for s in range(n + 1)])
    top = shell_max.max(initial=0.0)
    if top == 0.0:
        return DecayReport(shell_max, float("inf"), False, [])
    use = [s for s in range(1, n + 1) if shell_max[s] > rel_floor * top]
    if len(use) < 2:
        return DecayReport(shell_max, float("inf"), False, use)
    slope = np.polyfit(np.array(use, dtype=float), np.log(shell_max[use]), 1)[0]
    rate = float(-slope)
    return DecayReport(shell_max, rate, rate < SLOW_DECAY_RATE, use)


def grid_max(f, angle_points=None):
    """Max |f| over the action grid times a uniform angle grid."""
    if angle_points is None:
        angle_points = max(2 * f.cutoff + 2, 4)
    return float(np.max(np.abs(inverse_transform(f, angle_points)), initial=0.0))
