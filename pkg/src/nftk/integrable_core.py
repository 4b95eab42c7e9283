"""Integrable part F0(xi): frequencies, divisors and resonance sets.

The divisor of a lattice vector k is ``Omega_k(xi) = k . grad F0(xi)`` and
its resonance set is ``Sigma_k = {Omega_k = 0}``.  F0 is a polynomial in the
actions (total degree <= 6) so gradients and Hessians are exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CertificationError, DimensionError, InvalidModeError

MAX_DEGREE = 6
#: Default tolerance below which |Omega_k| counts as resonant.
TOL_RES = 1e-8
#: Divisor accuracy targeted when refining bracketed roots.
ROOT_TOL = 1e-12
#: Fraction of the grid allowed inside Sigma_k by the "empty interior" proxy.
RUSSMANN_FRACTION = 0.10


class IntegrableHamiltonian:
    """Polynomial F0(xi) = sum_p c_p xi^p on an action box.

    Parameters
    ----------
    coeffs : dict
        Maps a multi-index (tuple of ``dim`` non-negative ints) to its
        real coefficient.
    box : ActionBox
        Domain of the actions.
    """

    def __init__(self, coeffs, box):
        d = box.dim
        powers = []
        values = []
        for p, c in coeffs.items():
            p = tuple(int(v) for v in np.atleast_1d(p))
            if len(p) != d:
                raise DimensionError(f"multi-index {p} has wrong length for dim {d}")
            if any(v < 0 for v in p):
                raise ValueError(f"negative power in {p}")
            if sum(p) > MAX_DEGREE:
                raise ValueError(f"term {p} exceeds total degree {MAX_DEGREE}")
            c = float(c)
            if not math.isfinite(c):
                raise ValueError("coefficients must be finite")
            powers.append(p)
            values.append(c)
        self.box = box
        self.powers = np.array(powers, dtype=int).reshape(-1, d)
        self.values = np.array(values, dtype=float)

    @classmethod
    def quadratic(cls, box, matrix=None, linear=None, constant=0.0):
        """F0 = xi.A.xi / 2 + b.xi + c (identity A by default)."""
        d = box.dim
        a = np.eye(d) if matrix is None else np.asarray(matrix, dtype=float)
        b = np.zeros(d) if linear is None else np.asarray(linear, dtype=float)
        terms = {}
        for i in range(d):
            for j in range(i, d):
                p = [0] * d
                p[i] += 1
                p[j] += 1
                terms[tuple(p)] = a[i, i] / 2 if i == j else a[i, j]
            p = [0] * d
            p[i] = 1
            terms[tuple(p)] = b[i]
        terms[(0,) * d] = constant
        return cls(terms, box)

    @property
    def dim(self):
        return self.box.dim

    def to_terms(self):
        return [{"power": list(map(int, p)), "coeff": float(c)} for p, c in zip(self.powers, self.values)]

    def _points(self, xi, check):
        xi = np.asarray(xi, dtype=float)
        single = xi.ndim == 0 or (xi.ndim == 1 and xi.size == self.dim)
        xi = xi.reshape(-1, self.dim) if xi.ndim <= 1 else xi
        if check:
            self.box.check_inside(xi)
        return xi, single

    @staticmethod
    def _monomials(xi, powers):
        # powers < 0 only occur with a zero coefficient after differentiation
        safe = np.clip(powers, 0, MAX_DEGREE)
        top = int(safe.max(initial=0))
        table = np.ones((top + 1,) + xi.shape)
        for e in range(1, top + 1):
            table[e] = table[e - 1] * xi
        out = np.ones((xi.shape[0], powers.shape[0]))
        for j in range(xi.shape[1]):
            out *= table[safe[:, j], :, j].T
        return out

    def _derived(self, *axes):
        key = tuple(sorted(axes))
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            p = self.powers.copy()
            c = self.values.copy()
            for j in key:
                c = c * p[:, j]
                p[:, j] -= 1
            keep = c != 0
            cache[key] = (p[keep], c[keep])
        return cache[key]

    def _eval(self, xi, axes):
        p, c = self._derived(*axes)
        if c.size == 0:
            return np.zeros(xi.shape[0])
        if not p.any():
            return np.full(xi.shape[0], float(c.sum()))
        return self._monomials(xi, p) @ c

    def value(self, xi, check=True):
        xi, single = self._points(xi, check)
        out = self._eval(xi, ())
        return float(out[0]) if single else out

    def gradient(self, xi, check=True):
        xi, single = self._points(xi, check)
        out = np.stack([self._eval(xi, (j,)) for j in range(self.dim)], axis=1)
        return out[0] if single else out

    def hessian(self, xi, check=True):
        xi, single = self._points(xi, check)
        d = self.dim
        out = np.zeros((xi.shape[0], d, d))
        for i in range(d):
            for j in range(i, d):
                out[:, i, j] = self._eval(xi, (i, j))
                out[:, j, i] = out[:, i, j]
        return out[0] if single else out

    def mesh_gradient(self, box):
        """grad F0 on the nodes of ``box``, shape (n_nodes, dim); cached."""
        cache = self.__dict__.setdefault("_mesh", {})
        if box not in cache:
            cache[box] = self.gradient(box.mesh().reshape(-1, self.dim))
        return cache[box]

    def __call__(self, xi):
        return self.value(xi)

    def __repr__(self):
        return f"IntegrableHamiltonian(dim={self.dim}, terms={len(self.values)})"


def frequency_vector(F0, xi):
    """grad F0 at ``xi``; shape (dim,) or (P, dim)."""
    return F0.gradient(xi)


def _as_k(F0, k):
    k = np.atleast_1d(np.asarray(k)).astype(int)
    if k.size != F0.dim:
        raise DimensionError(f"lattice vector {tuple(k)} has wrong dimension")
    return k


def omega_k(F0, k, xi):
    """Divisor k . grad F0(xi)."""
    k = _as_k(F0, k)
    return F0.gradient(xi) @ k.astype(float)


def omega_k_gradient(F0, k, xi, check=True):
    """grad Omega_k = Hess F0 . k."""
    k = _as_k(F0, k)
    return F0.hessian(xi, check=check) @ k.astype(float)


def nonzero_modes(dim, k_max, half=False):
    """Nonzero k with |k|_inf <= k_max; ``half`` keeps one of each pair +-k."""
    out = []
    for k in itertools.product(range(-k_max, k_max + 1), repeat=dim):
        if not any(k):
            continue
        if half:
            first = next(v for v in k if v != 0)
            if first < 0:
                continue
        out.append(k)
    return np.array(out, dtype=int).reshape(-1, dim)


@dataclass
class ResonanceSample:
    """A point of Sigma_k found on the grid.

    ``refined`` marks roots bracketed by a sign change along grad Omega_k
    and bisected; ``tangential`` marks zeros without a sign change, which
    are only polished by Gauss-Newton steps.
    """

    xi: tuple
    omega_abs: float
    grad_norm: float
    refined: bool
    tangential: bool

    def to_dict(self):
        return {"xi": list(self.xi), "omega_abs": self.omega_abs, "grad_norm": self.grad_norm,
                "refined": self.refined, "tangential": self.tangential}


def _candidate_nodes(om):
    """Boolean mask of grid nodes worth refining for a root of ``om``."""
    a = np.abs(om)
    cand = np.zeros(om.shape, dtype=bool)
    locmin = np.ones(om.shape, dtype=bool)
    for ax in range(om.ndim):
        lo = [slice(None)] * om.ndim
        hi = [slice(None)] * om.ndim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        change = om[lo] * om[hi] < 0
        left_smaller = a[lo] <= a[hi]
        cand[lo] |= change & left_smaller
        cand[hi] |= change & ~left_smaller
        locmin[lo] &= a[lo] <= a[hi]
        locmin[hi] &= a[hi] <= a[lo]
    return cand | locmin


def _bisect_line(F0, k, pa, pb, iters=80):
    """Vectorized bisection of Omega_k on segments [pa, pb] with a sign change."""
    fa = F0.gradient(pa, check=False) @ k
    for _ in range(iters):
        if np.max(np.abs(pb - pa), initial=0.0) < 1e-15:
            break
        mid = 0.5 * (pa + pb)
        fm = F0.gradient(mid, check=False) @ k
        left = fa * fm <= 0
        pb = np.where(left[:, None], mid, pb)
        pa = np.where(left[:, None], pa, mid)
        fa = np.where(left, fa, fm)
    return 0.5 * (pa + pb)


def locate_resonance_set(F0, k, tol_res=TOL_RES, box=None, max_iter=100):
    """Sample Sigma_k on the grid of ``box`` (default: the box of F0).

    Candidate nodes are those next to a sign change of Omega_k and the
    discrete local minima of |Omega_k|.  Each candidate is moved onto the
    zero set by Gauss-Newton steps; if Omega_k changes sign across the
    point along grad Omega_k the root is re-bracketed and bisected to
    |Omega_k| <= 1e-12, otherwise it is kept as a tangential zero.  Only
    points with |Omega_k| <= tol_res are returned, deduplicated.
    """
    k = _as_k(F0, k)
    if not np.any(k):
        raise InvalidModeError("resonance set of k = 0 is the whole box")
    box = F0.box if box is None else box
    kf = k.astype(float)
    mesh = box.mesh()
    d = box.dim
    om = (F0.mesh_gradient(box) @ kf).reshape(box.grid_points)
    cand = _candidate_nodes(om)
    pts = mesh[cand].reshape(-1, d)
    if pts.size == 0:
        return []
    h = np.asarray(box.spacing)
    cap = 2.0 * np.linalg.norm(h)
    xi = pts.copy()
    active = np.ones(len(xi), dtype=bool)
    for _ in range(max_iter):
        if not np.any(active):
            break
        sub = xi[active]
        f = F0.gradient(sub, check=False) @ kf
        g = F0.hessian(sub, check=False) @ kf
        gn = np.sum(g * g, axis=1)
        done = (np.abs(f) <= 1e-15) | (gn == 0)
        step = np.where(gn[:, None] > 0, (f / np.where(gn > 0, gn, 1.0))[:, None] * g, 0.0)
        length = np.linalg.norm(step, axis=1)
        scale = np.where(length > cap, cap / np.where(length > 0, length, 1.0), 1.0)
        step = step * scale[:, None]
        sub = sub - np.where(done[:, None], 0.0, step)
        xi[active] = sub
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    inside = box.contains(xi)
    xi = xi[inside]
    if len(xi) == 0:
        return []
    f = F0.gradient(xi, check=False) @ kf
    g = F0.hessian(xi, check=False) @ kf
    gnorm = np.linalg.norm(g, axis=1)
    delta = 0.5 * float(np.min(h))
    u = np.where(gnorm[:, None] > 0, g / np.where(gnorm > 0, gnorm, 1.0)[:, None], 0.0)
    pa = xi - delta * u
    pb = xi + delta * u
    fa = F0.gradient(pa, check=False) @ kf
    fb = F0.gradient(pb, check=False) @ kf
    bracket = (gnorm > 0) & (fa * fb < 0)
    refined = xi.copy()
    if np.any(bracket):
        refined[bracket] = _bisect_line(F0, kf, pa[bracket], pb[bracket])
        # keep the polished point if bisection left the box or did worse
        fr = F0.gradient(refined[bracket], check=False) @ kf
        worse = (np.abs(fr) > np.abs(f[bracket])) | ~box.contains(refined[bracket])
        sel = np.flatnonzero(bracket)[worse]
        refined[sel] = xi[sel]
    f = F0.gradient(refined, check=False) @ kf
    g = F0.hessian(refined, check=False) @ kf
    gnorm = np.linalg.norm(g, axis=1)
    keep = np.abs(f) <= tol_res
    refined, f, gnorm, bracket = refined[keep], f[keep], gnorm[keep], bracket[keep]
    if len(refined) == 0:
        return []
    keys = np.round(refined / 1e-9).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    first = np.sort(first)
    order = np.lexsort(refined[first].T[::-1])
    out = []
    for i in first[order]:
        out.append(ResonanceSample(
            xi=tuple(float(v) for v in refined[i]),
            omega_abs=float(abs(f[i])),
            grad_norm=float(gnorm[i]),
            refined=bool(bracket[i]),
            tangential=not bool(bracket[i]),
        ))
    return out


@dataclass
class ModeResonance:
    """Resonance data for one lattice vector."""

    k: tuple
    samples: list
    resonant_fraction: float
    weak_nondegenerate: bool
    russmann_ok: bool

    def to_dict(self):
        return {"k": list(self.k), "resonant_fraction": self.resonant_fraction,
                "weak_nondegenerate": self.weak_nondegenerate, "russmann_ok": self.russmann_ok,
                "samples": [s.to_dict() for s in self.samples]}


@dataclass
class SmallDivisorCertificate:
    """Constants with |Omega_u| < T  =>  |grad Omega_u| > C on sampled unit u."""

    T: float
    C: float
    observed_min_gradient: float
    worst_direction: tuple
    worst_point: tuple
    directions: int
    sampling_gap: float

    def to_dict(self):
        return {"T": self.T, "C": self.C, "observed_min_gradient": self.observed_min_gradient,
                "worst_direction": list(self.worst_direction), "worst_point": list(self.worst_point),
                "directions": self.directions, "sampling_gap": self.sampling_gap}


@dataclass
class ResonanceReport:
    """Nondegeneracy verdicts and per-mode resonance tables.

    ``weak_nondegenerate`` holds when every located zero of every divisor
    is transversal with |grad Omega_k| above the floor; ``russmann_proxy``
    is a measure heuristic for the empty-interior condition, not a proof.
    """

    modes: list
    weak_nondegenerate: bool
    russmann_proxy: bool
    C_nd: float
    tol_res: float
    k_max: int
    failure: Optional[dict] = None
    constants: Optional[SmallDivisorCertificate] = None

    def mode(self, k):
        k = tuple(int(v) for v in k)
        for m in self.modes:
            if m.k == k or m.k == tuple(-v for v in k):
                return m
        raise KeyError(k)

    def to_dict(self):
        return {
            "weak_nondegenerate": self.weak_nondegenerate,
            "russmann_proxy": self.russmann_proxy,
            "russmann_note": "measure proxy: resonant grid fraction below 10% for every k",
            "C_nd": _finite_or_none(self.C_nd),
            "tol_res": self.tol_res,
            "k_max": self.k_max,
            "failure": self.failure,
            "constants": None if self.constants is None else self.constants.to_dict(),
            "modes": [m.to_dict() for m in self.modes],
        }


def _finite_or_none(v):
    return float(v) if math.isfinite(v) else None


def nondegeneracy_report(F0, k_max, tol_res=TOL_RES, grad_floor=1e-6):
    """Weak-nondegeneracy and Russmann-proxy verdicts for 0 < |k|_inf <= k_max.

    Only one of each pair +-k is examined since Sigma_k = Sigma_-k.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    grads = F0.mesh_gradient(F0.box)
    modes = []
    weak = True
    russ = True
    c_nd = math.inf
    failure = None
    for k in nonzero_modes(F0.dim, k_max, half=True):
        kn = float(np.linalg.norm(k))
        samples = locate_resonance_set(F0, k, tol_res)
        frac = float(np.mean(np.abs(grads @ k) <= tol_res))
        ok = True
        for s in samples:
            c_nd = min(c_nd, s.grad_norm / kn)
            if s.tangential or s.grad_norm <= grad_floor * kn:
                if ok and failure is None:
                    failure = {"k": [int(v) for v in k], "xi": list(s.xi), "grad_norm": s.grad_norm,
                               "tangential": s.tangential}
                ok = False
        r_ok = frac < RUSSMANN_FRACTION
        weak &= ok
        russ &= r_ok
        modes.append(ModeResonance(tuple(int(v) for v in k), samples, frac, ok, r_ok))
    return ResonanceReport(modes, weak, russ, c_nd, tol_res, k_max, failure)


def sphere_directions(dim, n):
    """Unit directions covering S^{dim-1} up to sign (u and -u give the same test)."""
    if dim == 1:
        return np.ones((1, 1))
    th = np.pi * np.arange(n) / n
    if dim == 2:
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if dim == 3:
        ph = np.pi * (np.arange(n) + 0.5) / n
        t, p = np.meshgrid(th, ph, indexing="ij")
        u = np.stack([np.sin(p) * np.cos(t), np.sin(p) * np.sin(t), np.cos(p)], axis=-1)
        return u.reshape(-1, 3)
    raise ValueError("direction sampling implemented for dim <= 3")


def _direction_table(F0, K, k_max, n_dir, report):
    d = F0.dim
    dirs = [sphere_directions(d, n_dir)]
    if d > 1:
        lat = nonzero_modes(d, k_max, half=True).astype(float)
        dirs.append(lat / np.linalg.norm(lat, axis=1, keepdims=True))
    dirs = np.vstack(dirs)
    pts = K.mesh().reshape(-1, d)
    g = F0.gradient(pts)
    hess = F0.hessian(pts)
    # both quantities are 1-homogeneous in u; dividing by the computed |u|
    # keeps rounding in the direction table out of the certificate
    nrm = np.linalg.norm(dirs, axis=1)
    om = np.abs(g @ dirs.T) / nrm
    dom = np.linalg.norm(np.einsum("pij,uj->pui", hess, dirs), axis=2) / nrm
    point_of = np.repeat(np.arange(len(pts)), len(dirs)).reshape(om.shape)
    dir_of = np.tile(np.arange(len(dirs)), (len(pts), 1))
    om, dom = om.ravel(), dom.ravel()
    pt_list = [pts[point_of.ravel()]]
    dir_list = [dirs[dir_of.ravel()]]
    om_list, dom_list = [om], [dom]
    # located zeros of the lattice divisors, normalized by |k|
    if report is not None:
        for m in report.modes:
            kk = np.array(m.k, dtype=float)
            kn = np.linalg.norm(kk)
            for s in m.samples:
                if K.contains(np.array(s.xi)):
                    pt_list.append(np.array([s.xi]))
                    dir_list.append((kk / kn)[None, :])
                    om_list.append(np.array([s.omega_abs / kn]))
                    dom_list.append(np.array([s.grad_norm / kn]))
    return (np.concatenate(om_list), np.concatenate(dom_list),
            np.vstack(pt_list), np.vstack(dir_list), len(dirs))


def certify_small_divisors(F0, K, T, C, k_max=8, direction_samples=64):
    """True when |Omega_u| < T implies |grad Omega_u| > C at every sample."""
    n_dir = max(direction_samples, 64)
    om, dom, _, _, _ = _direction_table(F0, K, k_max, n_dir, None)
    band = om < T
    return bool(np.all(dom[band] > C))


def small_divisor_constants(F0, K=None, k_max=8, direction_samples=64, T=0.5, safety=0.9,
                            tol_res=TOL_RES, c_floor=1e-8, max_halvings=20, report=None):
    """Find (T, C) with |Omega_u| < T => |grad Omega_u| > C on sampled directions.

    Starting from ``T`` the threshold is halved until the smallest gradient
    inside the band exceeds ``c_floor``; the returned C is ``safety`` times
    that observed minimum.  By homogeneity in k the certificate gives
    |Omega_k| < T|k| => |grad Omega_k| > C|k| on the sampled directions.

    Raises
    ------
    CertificationError
        When F0 fails weak nondegeneracy up to ``k_max`` or no threshold
        yields a positive gradient bound.
    """
    K = F0.box if K is None else K
    F0.box.check_inside(np.array(K.lo))
    F0.box.check_inside(np.array(K.hi))
    if report is None:
        report = nondegeneracy_report(F0, k_max, tol_res)
    if not report.weak_nondegenerate:
        fail = report.failure or {}
        kk = np.array(fail.get("k", [1] * F0.dim), dtype=float)
        raise CertificationError(
            f"F0 is not weakly nondegenerate (k={fail.get('k')}, xi={fail.get('xi')})",
            worst_direction=tuple(map(float, kk / np.linalg.norm(kk))), worst_point=tuple(fail.get("xi", ())))
    n_dir = max(direction_samples, 64)
    om, dom, pts, dirs, ndirs = _direction_table(F0, K, k_max, n_dir, report)
    t_try = float(T)
    worst = None
    for _ in range(max_halvings + 1):
        band = om < t_try
        if not np.any(band):
            c_obs = float(np.min(dom))
            i = int(np.argmin(dom))
        else:
            idx = np.flatnonzero(band)
            i = int(idx[np.argmin(dom[idx])])
            c_obs = float(dom[i])
        worst = (tuple(map(float, dirs[i])), tuple(map(float, pts[i])), c_obs)
        if c_obs > c_floor:
            gap = _sampling_gap(F0, K, k_max, n_dir, t_try, c_obs)
            return SmallDivisorCertificate(t_try, safety * c_obs, c_obs, worst[0], worst[1], ndirs, gap)
        t_try *= 0.5
    raise CertificationError(
        f"no (T, C) certificate: min |grad Omega_u| = {worst[2]:.3e} at direction {worst[0]}",
        worst_direction=worst[0], worst_point=worst[1])


def _sampling_gap(F0, K, k_max, n_dir, T, c_full):
    """Change of the band minimum when the sphere sampling is halved."""
    if F0.dim == 1:
        return 0.0
    om, dom, _, _, _ = _direction_table(F0, K, k_max, max(n_dir // 2, 2), None)
    band = om < T
    c_half = float(np.min(dom[band])) if np.any(band) else float(np.min(dom))
    return abs(c_half - c_full)


def resonance_report_text(report):
    """Human-readable per-k tables."""
    lines = [f"weak_nondegenerate: {report.weak_nondegenerate}",
             f"russmann_proxy: {report.russmann_proxy} (measure proxy)",
             f"C_nd: {report.C_nd!r}",
             f"tol_res: {report.tol_res!r}"]
    if report.constants is not None:
        lines.append(f"T: {report.constants.T!r}  C: {report.constants.C!r}")
    for m in report.modes:
        lines.append(f"k = {m.k}  fraction = {m.resonant_fraction:.4f}  weak_nd = {m.weak_nondegenerate}")
        for s in m.samples:
            lines.append("    xi = (" + ", ".join(format(v, ".17g") for v in s.xi) + ")"
                         f"  |Omega| = {s.omega_abs:.3e}  |dOmega| = {s.grad_norm:.6g}"
                         f"  {'refined' if s.refined else 'tangential'}")
    return "\n".join(lines) + "\n"
