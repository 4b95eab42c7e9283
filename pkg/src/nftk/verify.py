"""Hamiltonian flows of spectral generators and the eps^2 scaling check."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import linregress, qmc
from scipy.stats import t as student_t

from .errors import DomainError, PreconditionError, StiffnessError
from .torus_fourier import TWO_PI, evaluate_field, evaluate_with_gradient

FLOW_TOL = 1e-12
SLOPE_BAND = (1.85, 2.15)
FLAT_RESIDUAL = 1e-13
RESIDUAL_PRECONDITION = 1e-8
INTERIOR_FRACTION = 0.8


def angle_derivative_bound(G):
    """Upper bound on max |dG/dx_j| per j from the coefficient moduli."""
    flat = np.abs(G.flat_coeffs())
    lat = np.abs(G.lattice).astype(float)
    per_node = flat @ lat * TWO_PI
    axes = tuple(range(per_node.ndim - 1))
    return np.max(per_node, axis=axes) if axes else per_node


def _check_margin(G, eps, xi):
    bound = abs(eps) * angle_derivative_bound(G)
    lo = np.asarray(G.box.lo) + bound
    hi = np.asarray(G.box.hi) - bound
    bad = np.any((xi < lo - 1e-12) | (xi > hi + 1e-12), axis=1)
    if np.any(bad):
        p = xi[np.argmax(bad)]
        raise DomainError(f"point {p.tolist()} is within eps*max|dG/dx| of the box boundary")


def hamiltonian_flow(G, eps, xi, x, wrap=True, rtol=FLOW_TOL, atol=FLOW_TOL, check_margin=True):
    """Time-eps flow of x' = dG/dxi, xi' = -dG/dx.

    Parameters
    ----------
    G : SpectralField
        Generator.
    eps : float
        Flow time.
    xi, x : array_like, shape (P, dim)
        Initial actions and angles.
    wrap : bool
        Reduce the final angles mod 1.

    Returns
    -------
    xi_out, x_out : ndarray, shape (P, dim)

    Raises
    ------
    DomainError
        A point starts too close to the boundary or leaves the box.
    StiffnessError
        The integrator fails to advance.
    """
    d = G.dim
    xi = np.array(xi, dtype=float).reshape(-1, d)
    x = np.array(x, dtype=float).reshape(-1, d)
    if xi.shape != x.shape:
        raise DomainError("actions and angles must have the same number of points")
    G.box.check_inside(xi, "flow start")
    if check_margin:
        _check_margin(G, eps, xi)
    if eps == 0 or G.max_abs() == 0:
        out_x = np.mod(x, 1.0) if wrap else x.copy()
        return xi.copy(), out_x
    npts = xi.shape[0]

    def rhs(_t, y):
        y = y.reshape(2, npts, d)
        p, q = y[0], y[1]
        if not np.all(G.box.contains(p)):
            raise DomainError(f"flow of eps={eps!r} left the action box")
        _, g_xi, g_x = evaluate_with_gradient(G, p, q)
        return np.concatenate([-g_x.ravel(), g_xi.ravel()])

    y0 = np.concatenate([xi.ravel(), x.ravel()])
    res = solve_ivp(rhs, (0.0, float(eps)), y0, method="DOP853", rtol=rtol, atol=atol)
    if res.status != 0:
        raise StiffnessError(f"flow integration failed at eps={eps!r}: {res.message}")
    y = res.y[:, -1].reshape(2, npts, d)
    out_x = np.mod(y[1], 1.0) if wrap else y[1]
    return y[0], out_x


def halton_points(box, n=200, fraction=INTERIOR_FRACTION):
    """Unscrambled Halton points in the central ``fraction`` of the box times T^d.

    The origin of the sequence is skipped.
    """
    d = box.dim
    gen = qmc.Halton(2 * d, scramble=False)
    gen.fast_forward(1)
    u = gen.random(n)
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    margin = 0.5 * (1.0 - fraction)
    xi = lo + (margin + fraction * u[:, :d]) * (hi - lo)
    return xi, u[:, d:]


@dataclass
class ScalingReport:
    """Residuals R(eps) and the fitted log-log slope."""

    epsilons: list
    residuals: list
    slope: float
    intercept: float
    slope_band: tuple
    flat: bool
    verdict: str

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self):
        def num(v):
            return None if v is None or not math.isfinite(v) else float(v)
        return {
            "epsilons": [float(e) for e in self.epsilons],
            "residuals": [float(r) for r in self.residuals],
            "slope": num(self.slope),
            "intercept": num(self.intercept),
            "slope_band": [num(v) for v in self.slope_band],
            "flat": self.flat,
            "verdict": self.verdict,
        }

    def csv(self):
        lines = ["epsilon,residual"]
        lines += [f"{e:.17g},{r:.17g}" for e, r in zip(self.epsilons, self.residuals)]
        return "\n".join(lines) + "\n"


def fit_slope(epsilons, residuals, band=SLOPE_BAND, flat_tol=FLAT_RESIDUAL):
    """Least-squares slope of log R against log eps with a 95% band."""
    eps = np.asarray(epsilons, dtype=float)
    res = np.asarray(residuals, dtype=float)
    if np.all(res <= flat_tol):
        return math.nan, math.nan, (math.nan, math.nan), True, "pass"
    logr = np.log(np.maximum(res, np.finfo(float).tiny))
    fit = linregress(np.log(eps), logr)
    n = eps.size
    if n > 2:
        half = float(student_t.ppf(0.975, n - 2) * fit.stderr)
    else:
        half = math.nan
    slope = float(fit.slope)
    verdict = "pass" if band[0] <= slope <= band[1] else "fail"
    return slope, float(fit.intercept), (slope - half, slope + half), False, verdict


def scaling_residual(F0, H1, sol, eps, xi, x):
    """max_m |F0(xi) + eps H1 - (F0 + eps <H1>)(phi^eps(m))|."""
    p, q = hamiltonian_flow(sol.G0, eps, xi, x)
    before = F0.value(xi) + eps * evaluate_field(H1, xi, x)
    after = F0.value(p) + eps * evaluate_field(sol.I1, p, q)
    return float(np.max(np.abs(before - after)))


def scaling_test(F0, H1, sol, epsilon_list, test_points=None, workers=None,
                 band=SLOPE_BAND, check_residual=True):
    """Check that the first-order normal form holds up to O(eps^2).

    Parameters
    ----------
    F0 : IntegrableHamiltonian
    H1 : SpectralField
    sol : HomologicalSolution
        Its G0 generates the conjugating flow.
    epsilon_list : sequence of float
    test_points : tuple of arrays, optional
        ``(xi, x)``; defaults to :func:`halton_points` on the box of G0.
    workers : int, optional
        Threads used across the eps samples.

    Raises
    ------
    PreconditionError
        The solution residual exceeds 1e-8 relative to max|H1|.
    """
    if check_residual:
        scale = max(1.0, H1.max_abs())
        if not sol.diagnostics.residual <= RESIDUAL_PRECONDITION * scale:
            raise PreconditionError(
                f"homological residual {sol.diagnostics.residual:.3e} exceeds {RESIDUAL_PRECONDITION}")
    if test_points is None:
        test_points = halton_points(sol.G0.box)
    xi, x = (np.asarray(a, dtype=float) for a in test_points)
    eps = [float(e) for e in epsilon_list]

    def one(e):
        try:
            return scaling_residual(F0, H1, sol, e, xi, x)
        except (DomainError, StiffnessError) as exc:
            raise type(exc)(f"eps={e!r}: {exc}") from exc

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            res = list(pool.map(one, eps))
    else:
        res = [one(e) for e in eps]
    slope, intercept, sband, flat, verdict = fit_slope(eps, res, band)
    return ScalingReport(eps, res, slope, intercept, sband, flat, verdict)
