"""Nonresonance tests and the first-order homological equation.

With the bracket {F, G} = sum_j dF/dxi_j dG/dx_j - dF/dx_j dG/dxi_j the
first-order condition {H0, G0} = I1 - H1 reads, mode by mode,

    2 pi i Omega_k(xi) G0(xi, k) = I1(xi, k) - H1(xi, k),

so I1 is the k = 0 part of H1, G0(., 0) = 0, and for k != 0
G0 = -H1 / (2 pi i Omega_k).  Near the resonance set the quotient is
evaluated through the integral form of the Taylor remainder along the
flow of X_k = grad Omega_k / |grad Omega_k|^2, which only needs H1 to
vanish on Sigma_k.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .averaging import orbit_average, vertical_average
from .errors import (DegeneracyError, DimensionError, DomainError, PreconditionError,
                     ResonanceError, SmallDivisorError)
from .integrable_core import (TOL_RES, locate_resonance_set, nondegeneracy_report, nonzero_modes,
                              small_divisor_constants)
from .torus_fourier import TWO_PI, SpectralField, decay_report, grid_max, interpolate_grid

#: Relative size of a resonant coefficient that still counts as zero.
DELTA_RES_REL = 1e-9
#: A quotient larger than this multiple of max|H1| is a small-divisor failure.
BLOWUP_FACTOR = 1e8
GAUSS_NODES = 8
FLOW_STEPS = 16
#: Modes whose coefficient never exceeds this fraction of max|H1| are
#: treated as transform roundoff and left at zero.
NOISE_FLOOR = 64 * np.finfo(float).eps


@dataclass
class Violation:
    k: tuple
    xi: tuple
    magnitude: float

    def to_dict(self):
        return {"k": list(self.k), "xi": list(self.xi), "magnitude": self.magnitude}


@dataclass
class NonresonanceVerdict:
    """Outcome of the coefficient test on the resonance sets."""

    passed: bool
    violations: list
    delta_res: float
    tol_res: float

    def to_dict(self):
        return {"passed": self.passed, "delta_res": self.delta_res, "tol_res": self.tol_res,
                "violations": [v.to_dict() for v in self.violations]}


def _check_compatible(H1, F0):
    if H1.dim != F0.dim:
        raise DimensionError("H1 and F0 have different dimensions")
    F0.box.check_inside(np.array(H1.box.lo), "H1 box corner")
    F0.box.check_inside(np.array(H1.box.hi), "H1 box corner")


def _samples_by_mode(F0, k_max, tol_res, box, report=None):
    """Resonance samples for every nonzero k (shared between k and -k)."""
    out = {}
    for k in nonzero_modes(F0.dim, k_max, half=True):
        key = tuple(int(v) for v in k)
        if report is not None and box == F0.box:
            samples = report.mode(key).samples
        else:
            samples = locate_resonance_set(F0, k, tol_res, box=box)
        out[key] = samples
        out[tuple(-v for v in key)] = samples
    return out


def nonresonance_test(H1, F0, k_max, tol_res=TOL_RES, delta_res=None, report=None):
    """Check that H1(., k) vanishes on Sigma_k for every 0 < |k|_inf <= k_max.

    ``delta_res`` defaults to 1e-9 max|H1|; a coefficient above it at a
    resonance sample is recorded as a violation.
    """
    if H1.cutoff < k_max:
        raise PreconditionError(f"H1 cutoff {H1.cutoff} below k_max {k_max}")
    _check_compatible(H1, F0)
    if delta_res is None:
        delta_res = DELTA_RES_REL * H1.max_abs()
    samples = _samples_by_mode(F0, k_max, tol_res, H1.box, report)
    violations = []
    for k in nonzero_modes(F0.dim, k_max):
        key = tuple(int(v) for v in k)
        pts = samples[key]
        if not pts:
            continue
        xi = np.array([s.xi for s in pts])
        vals = np.abs(interpolate_grid(H1.coefficient(k), H1.box, xi))
        for s, v in zip(pts, vals):
            if v > delta_res:
                violations.append(Violation(key, s.xi, float(v)))
    return NonresonanceVerdict(not violations, violations, float(delta_res), float(tol_res))


@dataclass
class CriterionResult:
    passed: bool
    constant: list


def orbit_average_criterion(H1, F0, tori, x_samples=None):
    """True when the orbit average of H1 is constant on every given torus."""
    if x_samples is None:
        x_samples = 2 * H1.cutoff + 2
    flags = [orbit_average(H1, F0, t, x_samples).constant for t in tori]
    return CriterionResult(all(flags), flags)


# --------------------------------------------------------------------------
# near-resonance quotient


def _transport_field(F0, k, xi, c_min, active=None):
    g = F0.hessian(xi, check=False) @ k
    gn2 = np.sum(g * g, axis=1)
    test = gn2 if active is None else np.where(active, gn2, np.inf)
    if c_min is not None and np.any(test < (0.5 * c_min) ** 2):
        i = int(np.argmin(test))
        raise DegeneracyError(
            f"|grad Omega_k| = {math.sqrt(gn2[i]):.3e} < C/2 at xi={tuple(xi[i])}, k={tuple(k)}")
    if np.any(test == 0):
        raise DegeneracyError(f"grad Omega_k vanishes near Sigma_k for k={tuple(k)}")
    return g / np.where(gn2 == 0, 1.0, gn2)[:, None]


def near_resonance_quotient(profile, F0, k, xi, box=None, C=None, order=None, on_exit="raise"):
    """Quotient -H(xi) / (2 pi i Omega_k(xi)) for |Omega_k(xi)| small.

    ``profile`` is the complex coefficient H(., k) on the nodes of ``box``
    (default: the box of F0).  The value is

        i / (2 pi) * int_0^1 X_k(H)(phi^{(u-1) Omega_k(xi)}(xi)) du,

    with X_k = grad Omega_k / |grad Omega_k|^2, 8-point Gauss-Legendre in u
    and 16 classical Runge-Kutta steps for each flow segment.  The
    identity requires H to vanish on Sigma_k.

    With ``on_exit="nan"`` points whose flow leaves the box get NaN
    instead of raising.

    Raises
    ------
    DomainError
        If a flow segment leaves the box (``on_exit="raise"``).
    DegeneracyError
        If |grad Omega_k| drops below C/2 along the way.
    """
    box = F0.box if box is None else box
    kf = np.atleast_1d(np.asarray(k, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    box.check_inside(xi)
    npts = xi.shape[0]
    om0 = F0.gradient(xi, check=False) @ kf
    u, w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    u = 0.5 * (u + 1.0)
    w = 0.5 * w
    t_end = ((u[None, :] - 1.0) * om0[:, None]).reshape(-1)
    y = np.repeat(xi, GAUSS_NODES, axis=0)
    h = (t_end / FLOW_STEPS)[:, None]
    escaped = np.zeros(y.shape[0], dtype=bool)
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)

    def rhs(p):
        inside = np.atleast_1d(box.contains(p))
        if not np.all(inside):
            if on_exit == "raise":
                bad = p[~inside][0]
                raise DomainError(f"transport flow left the box at {tuple(map(float, bad))} "
                                  f"(k={tuple(int(v) for v in kf)})")
            escaped[~inside] = True
            p = np.clip(p, lo, hi)
        return _transport_field(F0, kf, p, C, active=~escaped)

    for _ in range(FLOW_STEPS):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    xk = rhs(y)
    y = np.clip(y, lo, hi)
    kw = {} if order is None else {"order": order}
    _, grad = interpolate_grid(np.asarray(profile, dtype=complex), box, y, gradient=True, **kw)
    integrand = np.sum(grad * xk, axis=1).reshape(npts, GAUSS_NODES)
    out = 1j / TWO_PI * (integrand @ w)
    out[np.any(escaped.reshape(npts, GAUSS_NODES), axis=1)] = np.nan
    return out


# --------------------------------------------------------------------------
# solver


@dataclass
class SolveDiagnostics:
    tol_div: float
    T: Optional[float]
    C: Optional[float]
    min_divisor: float
    residual: float
    method_counts: dict
    unsolved_max: float
    g0_decay_rate: float
    g0_slow_decay: bool
    uniformity_certified: bool = False
    near_mask: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self):
        out = asdict(self)
        out.pop("near_mask")
        out["method_counts"] = {",".join(map(str, k)): v for k, v in self.method_counts.items()}
        for key in ("min_divisor", "g0_decay_rate"):
            if not math.isfinite(out[key]):
                out[key] = None
        return out


@dataclass
class HomologicalSolution:
    """Generator G0 (zero torus average) and integrable part I1 = <H1>."""

    G0: SpectralField
    I1: SpectralField
    diagnostics: SolveDiagnostics

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        self.G0.save(os.path.join(directory, "G0.field"))
        self.I1.save(os.path.join(directory, "I1.field"))
        with open(os.path.join(directory, "diagnostics.json"), "w", encoding="utf-8") as fh:
            json.dump(self.diagnostics.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory):
        G0 = SpectralField.load(os.path.join(directory, "G0.field"))
        I1 = SpectralField.load(os.path.join(directory, "I1.field"))
        with open(os.path.join(directory, "diagnostics.json"), encoding="utf-8") as fh:
            raw = json.load(fh)
        raw["method_counts"] = {tuple(int(v) for v in k.split(",")): c
                                for k, c in raw["method_counts"].items()}
        for key in ("min_divisor", "g0_decay_rate"):
            if raw[key] is None:
                raw[key] = math.inf
        return cls(G0, I1, SolveDiagnostics(**raw))

    def scaled(self, factor):
        """Same solution with G0 multiplied by ``factor``."""
        return HomologicalSolution(self.G0 * factor, self.I1, self.diagnostics)


def bracket_with_integrable(F0, G):
    """{H0, G} = sum_j dF0/dxi_j dG/dx_j, computed mode by mode on G's grid."""
    om = F0.mesh_gradient(G.box) @ G.lattice.T.astype(float)
    c = 1j * TWO_PI * om.reshape(G.flat_coeffs().shape) * G.flat_coeffs()
    return G.replace(c.reshape(G.coeffs.shape), validate=False)


def residual_field(sol, H1, F0):
    return bracket_with_integrable(F0, sol.G0) - sol.I1 + H1


def residual_of_solution(sol, H1, F0):
    """Grid max-norm of {H0, G0} - I1 + H1."""
    return grid_max(residual_field(sol, H1, F0))


def _solve_mode(H1, F0, k, tol_div, C, mesh, blowup, tol_res, noise):
    prof = H1.coefficient(k)
    om = (F0.mesh_gradient(H1.box) @ k.astype(float)).reshape(prof.shape)
    g = np.zeros(prof.shape, dtype=complex)
    small = np.abs(om) < tol_div
    near = small.copy()
    if np.max(np.abs(prof)) <= noise:
        return g, None, math.inf
    far = ~small
    g[far] = -prof[far] / (1j * TWO_PI * om[far])
    if np.any(small):
        q = near_resonance_quotient(prof, F0, k, mesh[small], box=H1.box, C=C, on_exit="nan")
        lost = np.isnan(q)
        if np.any(lost):
            # transport path leaves the box: divide directly where the divisor allows it
            om_s = om[small]
            bad = lost & (np.abs(om_s) < tol_res)
            if np.any(bad):
                p = mesh[small][np.argmax(bad)]
                raise DomainError(f"transport flow from xi={tuple(map(float, p))} "
                                  f"leaves the box for k={tuple(int(v) for v in k)}")
            q[lost] = -prof[small][lost] / (1j * TWO_PI * om_s[lost])
            near[small] = ~lost
        g[small] = q
    big = np.abs(g) > blowup
    if np.any(big):
        i = np.argwhere(big)[0]
        raise SmallDivisorError(k, mesh[tuple(i)], np.abs(g[tuple(i)]))
    min_div = float(np.min(np.abs(om[~near]), initial=math.inf))
    return g, near, min_div


def solve_first_order(H1, F0, k_max, tol_res=TOL_RES, delta_res=None, tol_div=None,
                      report=None, workers=None):
    """Solve {H0, G0} = I1 - H1 for 0 < |k|_inf <= k_max.

    Parameters
    ----------
    H1 : SpectralField
        Perturbation; its grid is the solution grid.
    F0 : IntegrableHamiltonian
        Integrable part; must be weakly nondegenerate when H1 oscillates.
    k_max : int
        Largest |k|_inf solved for.
    tol_res, delta_res : float
        Resonance tolerances passed to :func:`nonresonance_test`.
    tol_div : float, optional
        Divisor below which the near-resonance quotient is used; default
        max(tol_res, T/2) with T from :func:`small_divisor_constants`.
    workers : int, optional
        Thread count for the per-mode loop (assembly order is fixed).

    Raises
    ------
    ResonanceError
        H1 fails the nonresonance test; the verdict is attached.
    CertificationError, DegeneracyError, SmallDivisorError
        The divisors cannot be controlled.
    """
    _check_compatible(H1, F0)
    if report is None and H1.box == F0.box:
        report = nondegeneracy_report(F0, k_max, tol_res)
    verdict = nonresonance_test(H1, F0, k_max, tol_res, delta_res, report=report)
    if not verdict.passed:
        raise ResonanceError(verdict)
    n = H1.cutoff
    d = H1.dim
    lat = H1.lattice
    shells = np.max(np.abs(lat), axis=1)
    flat = np.abs(H1.flat_coeffs())
    unsolved = float(np.max(flat[..., shells > k_max], initial=0.0))
    I1 = vertical_average(H1)
    G = np.zeros_like(H1.coeffs)
    near_mask = np.zeros(H1.coeffs.shape, dtype=bool)
    T = C = None
    counts = {}
    min_div = math.inf
    oscillating = H1.oscillating_max() > 0
    if oscillating:
        cert = small_divisor_constants(F0, H1.box, k_max, tol_res=tol_res, report=report)
        T, C = cert.T, cert.C
        if tol_div is None:
            tol_div = max(tol_res, 0.5 * T)
        mesh = H1.box.mesh()
        blowup = BLOWUP_FACTOR * H1.max_abs()
        modes = [k for k in nonzero_modes(d, min(k_max, n), half=True)]

        noise = NOISE_FLOOR * H1.max_abs()

        def work(k):
            return _solve_mode(H1, F0, k, tol_div, C, mesh, blowup, tol_res, noise)

        if workers and workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(work, modes))
        else:
            results = [work(k) for k in modes]
        for k, (g, near, md) in zip(modes, results):
            idx = (Ellipsis,) + tuple(n + int(v) for v in k)
            midx = (Ellipsis,) + tuple(n - int(v) for v in k)
            G[idx] = g
            G[midx] = np.conj(g)
            key = tuple(int(v) for v in k)
            if near is None:
                counts[key] = {"direct": 0, "near": 0, "zero": int(g.size)}
            else:
                near_mask[idx] = near
                near_mask[midx] = near
                counts[key] = {"direct": int(np.sum(~near)), "near": int(np.sum(near)), "zero": 0}
            counts[tuple(-v for v in key)] = counts[key]
            min_div = min(min_div, md)
    elif tol_div is None:
        tol_div = tol_res
    G0 = SpectralField(H1.box, n, G)
    rep = decay_report(G0)
    diag = SolveDiagnostics(
        tol_div=float(tol_div), T=T, C=C, min_divisor=min_div, residual=math.nan,
        method_counts=counts, unsolved_max=unsolved, g0_decay_rate=rep.rate,
        g0_slow_decay=rep.slow_decay, near_mask=near_mask)
    sol = HomologicalSolution(G0, I1, diag)
    diag.residual = residual_of_solution(sol, H1, F0)
    return sol
