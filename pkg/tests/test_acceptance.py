"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines
alongside the pytest output.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import trapezoid

from conftest import random_field, random_nonresonant
from nftk.averaging import (OneFormField, VectorFieldSample, differential, flat,
                            hamiltonian_vector_field, interior, is_periodic_torus, orbit_average,
                            vertical_average, vertical_average_oneform)
from nftk.cli import EXIT_REJECTED, main
from nftk.errors import CertificationError
from nftk.geometry_decomp import cycle_integrals, decompose_symplectic_field
from nftk.homological import (HomologicalSolution, near_resonance_quotient, nonresonance_test,
                              orbit_average_criterion, residual_of_solution, solve_first_order)
from nftk.integrable_core import (IntegrableHamiltonian, certify_small_divisors,
                                  small_divisor_constants)
from nftk.torus_fourier import ActionBox, SpectralField, evaluate_field, grid_max
from nftk.verify import scaling_test

TWO_PI = 2 * math.pi
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def announce(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
    return emit


def half_square(box):
    return IntegrableHamiltonian.quadratic(box, np.eye(box.dim))


def field(box, cutoff, func):
    return SpectralField.from_function(box, cutoff, lambda xi, x: func(xi, x) + 0 * xi[0] + 0 * x[0])


def coeff_diff(f, g):
    n = max(f.cutoff, g.cutoff)
    return float(np.max(np.abs(f.pad(n).coeffs - g.pad(n).coeffs)))


# --------------------------------------------------------------------------
# 1. homological residual


@pytest.mark.parametrize("dim", [1, 2])
def test_criterion_1_homological_residual(announce, dim):
    rng = np.random.default_rng(1000 + dim)
    box = ActionBox([-1.0] * dim, [1.0] * dim, [64] * dim)
    F0 = half_square(box)
    H1 = random_nonresonant(rng, box, 8, smooth=True, fill=0.5 if dim == 2 else 1.0)
    t0 = time.perf_counter()
    sol = solve_first_order(H1, F0, 8)
    res = residual_of_solution(sol, H1, F0)
    elapsed = time.perf_counter() - t0
    rel = res / H1.max_abs()
    ok = rel <= 1e-8 and elapsed <= 10.0
    announce(1, f"homological residual d={dim}", ok, f"relative residual {rel:.2e}, {elapsed:.2f} s")
    assert rel <= 1e-8
    assert elapsed <= 10.0


# --------------------------------------------------------------------------
# 2. eps^2 scaling


def test_criterion_2_scaling(announce):
    box = ActionBox([-1.0], [1.0], [64])
    F0 = half_square(box)
    H1 = field(box, 1, lambda xi, x: xi[0] * np.cos(TWO_PI * x[0]))
    eps = list(np.logspace(-1, -3, 5))
    sol = solve_first_order(H1, F0, 1)
    good = scaling_test(F0, H1, sol, eps)
    bad = scaling_test(F0, H1, HomologicalSolution(2.0 * sol.G0, sol.I1, sol.diagnostics), eps)
    ok = 1.85 <= good.slope <= 2.15 and 0.85 <= bad.slope <= 1.15
    announce(2, "eps^2 scaling", ok, f"slope {good.slope:.4f}, corrupted-generator slope {bad.slope:.4f}")
    assert 1.85 <= good.slope <= 2.15
    assert 0.85 <= bad.slope <= 1.15


# --------------------------------------------------------------------------
# 3. resonance rejection


def test_criterion_3_resonance_rejection(announce, tmp_path):
    box = ActionBox([-1.0], [1.0], [64])
    H1 = field(box, 1, lambda xi, x: np.cos(TWO_PI * x[0]))
    v = nonresonance_test(H1, half_square(box), 1)
    ks = sorted(w.k for w in v.violations)
    xi_err = max(abs(w.xi[0]) for w in v.violations)
    mag_err = max(abs(w.magnitude - 0.5) for w in v.violations)
    code = main(["solve", "--config", str(CONFIGS / "pendulum_like.toml"), "--out", str(tmp_path)])
    ok = (not v.passed and ks == [(-1,), (1,)] and xi_err <= 1e-10 and mag_err <= 1e-12
          and code == EXIT_REJECTED)
    announce(3, "resonance rejection", ok,
             f"modes {ks}, |xi*| {xi_err:.1e}, |H1_k - 0.5| {mag_err:.1e}, exit code {code}")
    assert not v.passed and ks == [(-1,), (1,)]
    assert xi_err <= 1e-10 and mag_err <= 1e-12
    assert code == EXIT_REJECTED


# --------------------------------------------------------------------------
# 4. averaging algebra


def test_criterion_4_averaging_algebra(announce):
    rng = np.random.default_rng(4)
    box = ActionBox([-1.0, -1.0], [1.0, 1.0], [9, 9])
    worst = {"idempotence": 0.0, "linearity": 0.0, "commutation": 0.0, "contraction": 0.0}
    for _ in range(50):
        f = random_field(rng, box, 3)
        g = random_field(rng, box, 3)
        a, b = rng.uniform(-2, 2, 2)
        vf, vg = vertical_average(f), vertical_average(g)
        worst["idempotence"] = max(worst["idempotence"], coeff_diff(vertical_average(vf), vf))
        worst["linearity"] = max(worst["linearity"],
                                 coeff_diff(vertical_average(a * f + b * g), a * vf + b * vg))
        avg_df = vertical_average_oneform(differential(f))
        d_avg = differential(vf)
        err = max(max(coeff_diff(p, q) for p, q in zip(avg_df.a, d_avg.a)),
                  max(p.max_abs() for p in avg_df.b))
        worst["commutation"] = max(worst["commutation"], err)
        X = VectorFieldSample(tuple(random_field(rng, box, 0) for _ in range(2)),
                              tuple(random_field(rng, box, 0) for _ in range(2)))
        alpha = OneFormField(tuple(random_field(rng, box, 3) for _ in range(2)),
                             tuple(random_field(rng, box, 3) for _ in range(2)))
        err = coeff_diff(vertical_average(interior(X, alpha)), interior(X, vertical_average_oneform(alpha)))
        worst["contraction"] = max(worst["contraction"], err)
    ok = (worst["idempotence"] <= 1e-14 and worst["linearity"] <= 1e-14
          and worst["commutation"] <= 1e-12 and worst["contraction"] <= 1e-12)
    announce(4, "averaging algebra", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert worst["idempotence"] <= 1e-14 and worst["linearity"] <= 1e-14
    assert worst["commutation"] <= 1e-12
    assert worst["contraction"] <= 1e-12


# --------------------------------------------------------------------------
# 5. orbit averages and the orbit-average criterion


def random_quadratic(rng, box):
    q = rng.normal(size=(2, 2)) * 0.3
    A = np.diag(rng.uniform(0.8, 1.5, 2)) + 0.5 * (q + q.T) * 0.3
    return IntegrableHamiltonian.quadratic(box, A, rng.normal(size=2) * 0.1)


def torus_with_frequency(F0, omega, q_max=8):
    """Periodic torus whose frequency is ``omega``, or None outside the box."""
    A = F0.hessian(np.zeros(2))
    xi = np.linalg.solve(A, np.asarray(omega) - F0.gradient(np.zeros(2)))
    if not np.all(F0.box.contains(xi[None, :])):
        return None
    return is_periodic_torus(F0, xi, q_max)


def direct_time_average(f, F0, torus, x0, steps=10_000):
    om = F0.gradient(np.asarray(torus.xi_b))
    t = np.linspace(0.0, torus.period, steps + 1)
    x = x0[None, :] + t[:, None] * om[None, :]
    vals = evaluate_field(f, np.tile(torus.xi_b, (t.size, 1)), np.mod(x, 1.0))
    return trapezoid(vals, t) / torus.period


def resonant_tori(F0, cutoff):
    """Periodic tori on Sigma_k for the primitive modes |k|_inf <= cutoff."""
    tori = []
    for k1 in range(0, cutoff + 1):
        for k2 in range(-cutoff, cutoff + 1):
            if (k1, k2) <= (0, 0) or math.gcd(k1, abs(k2)) != 1:
                continue
            for s in (1, -1, 2):
                t = torus_with_frequency(F0, np.array([-k2, k1]) * s / 4.0)
                if t is not None:
                    tori.append(t)
    return tori


def test_criterion_5_orbit_average_equivalence(announce):
    rng = np.random.default_rng(5)
    box = ActionBox([-1.5, -1.5], [1.5, 1.5], [11, 11])
    F0 = half_square(box)
    worst, n_tori = 0.0, 0
    while n_tori < 20:
        q = int(rng.integers(1, 9))
        omega = rng.integers(-q, q + 1, 2) / q
        t = torus_with_frequency(F0, omega)
        if t is None:
            continue
        n_tori += 1
        f = random_field(rng, box, 3, polynomial_degree=2)
        avg = orbit_average(f, F0, t, 4)
        g = np.arange(4) / 4
        for i, j in [(0, 0), (1, 2), (3, 1)]:
            ref = direct_time_average(f, F0, t, np.array([g[i], g[j]]))
            worst = max(worst, abs(avg.values[i, j] - ref))
    agree = 0
    for case in range(20):
        F = random_quadratic(rng, box)
        H1 = random_nonresonant(rng, box, 2, F0=F)
        if case % 2:
            k0 = [(1, 0), (0, 1), (1, -1), (1, 1)][case // 2 % 4]
            H1 = H1 + field(box, 2, lambda xi, x, k0=k0: 0.5 * np.cos(TWO_PI * (k0[0] * x[0] + k0[1] * x[1])))
        verdict = nonresonance_test(H1, F, 2).passed
        orbit = orbit_average_criterion(H1, F, resonant_tori(F, 2), x_samples=8).passed
        agree += verdict == orbit and verdict == (case % 2 == 0)
    ok = worst <= 1e-8 and agree == 20
    announce(5, "orbit averages", ok, f"quadrature gap {worst:.1e} on {n_tori} tori, verdicts agree {agree}/20")
    assert worst <= 1e-8
    assert agree == 20


# --------------------------------------------------------------------------
# 6. decomposition round-trip


def random_symplectic(rng, box, cutoff):
    A = random_field(rng, box, cutoff, polynomial_degree=3)
    A = A - vertical_average(A)
    d = box.dim
    mesh = box.mesh()
    c = rng.normal(size=(3, d))
    phi = sum(c[0, j] * mesh[..., j] ** 3 + c[1, j] * mesh[..., j] * mesh[..., -1] for j in range(d))
    phi = SpectralField.from_profile(box, phi.astype(complex))
    one = SpectralField.from_profile(box, np.ones(box.grid_points, dtype=complex))
    lift = VectorFieldSample(tuple(one * float(v) for v in c[2]), tuple(phi.dxi(j) for j in range(d)))
    return A, lift, hamiltonian_vector_field(A) + lift


def test_criterion_6_decomposition(announce):
    rng = np.random.default_rng(6)
    worst_comp, worst_cycle, worst_d = 0.0, 0.0, 0.0
    for case in range(20):
        box = (ActionBox([-1.0], [1.0], [17]) if case % 2
               else ActionBox([-1.0, -1.0], [1.0, 1.0], [13, 13]))
        A, lift, X = random_symplectic(rng, box, 3)
        res = decompose_symplectic_field(X)
        XA = hamiltonian_vector_field(A)
        comps = [grid_max(p - q) for p, q in zip(res.hamiltonian_part.components(), XA.components())]
        comps += [grid_max(p - q) for p, q in zip(res.lift_part.components(), lift.components())]
        comps.append(grid_max(res.primitive - A))
        worst_comp = max(worst_comp, max(comps))
        alpha1 = flat(res.hamiltonian_part)
        xi_b = rng.uniform(-0.9, 0.9, box.dim)
        worst_cycle = max(worst_cycle, float(np.max(np.abs(cycle_integrals(alpha1, xi_b)))))
        worst_cycle = max(worst_cycle, float(np.max(np.abs(cycle_integrals(differential(A), xi_b)))))
        dA = differential(res.primitive)
        worst_d = max(worst_d, max(grid_max(p - q) for p, q in zip(dA.components(), alpha1.components())))
    ok = worst_comp <= 1e-10 and worst_cycle <= 1e-12 and worst_d <= 1e-8
    announce(6, "decomposition round-trip", ok,
             f"component error {worst_comp:.1e}, cycle integrals {worst_cycle:.1e}, dA - alpha {worst_d:.1e}")
    assert worst_comp <= 1e-10
    assert worst_cycle <= 1e-12
    assert worst_d <= 1e-8


# --------------------------------------------------------------------------
# 7. small-divisor certificate


def test_criterion_7_certificates(announce):
    times, accepted = [], []
    for dim in (1, 2):
        box = ActionBox([-1.0] * dim, [1.0] * dim, [64] * dim)
        t0 = time.perf_counter()
        cert = small_divisor_constants(half_square(box))
        ok = cert.T >= 0.5 and cert.C >= 0.9 and certify_small_divisors(half_square(box), box, 0.5, 0.9)
        times.append(time.perf_counter() - t0)
        accepted.append(ok)
    box = ActionBox([-1.0], [1.0], [64])
    t0 = time.perf_counter()
    try:
        small_divisor_constants(IntegrableHamiltonian({(3,): 1.0 / 3.0}, box))
        cubic_fails = False
    except CertificationError:
        cubic_fails = True
    cubic_fails = cubic_fails and not certify_small_divisors(
        IntegrableHamiltonian({(3,): 1.0 / 3.0}, box), box, 0.5, 0.9)
    times.append(time.perf_counter() - t0)
    ok = all(accepted) and cubic_fails and max(times) <= 5.0
    announce(7, "small-divisor certificate", ok,
             f"quadratic d=1,2 accepted {accepted}, cubic rejected {cubic_fails}, "
             f"times {', '.join(f'{t:.2f}' for t in times)} s")
    assert all(accepted)
    assert cubic_fails
    assert max(times) <= 5.0


# --------------------------------------------------------------------------
# 8. near-resonance quotient


def test_criterion_8_near_resonance(announce):
    box = ActionBox([-0.25], [0.25], [65])
    F0 = half_square(box)
    H1 = field(box, 1, lambda xi, x: np.sin(TWO_PI * xi[0]) * np.cos(TWO_PI * x[0]))
    prof = H1.coefficient([1])
    # limit of -(sin(2 pi xi)/2) / (2 pi i xi) as xi -> 0 is i/2
    q0 = near_resonance_quotient(prof, F0, [1], [[0.0]])[0]
    limit_err = abs(q0 - 0.5j)
    wide = solve_first_order(H1, F0, 1, tol_div=0.1)
    narrow = solve_first_order(H1, F0, 1, tol_div=0.05)
    nodes = box.nodes(0)
    band = (np.abs(nodes) >= 0.05) & (np.abs(nodes) < 0.1)
    gap = float(np.max(np.abs(wide.G0.coefficient([1])[band] - narrow.G0.coefficient([1])[band])))
    ok = limit_err <= 1e-6 and gap <= 1e-6 and band.sum() > 0
    announce(8, "near-resonance quotient", ok,
             f"|G(0) - i/2| {limit_err:.1e}, branch gap {gap:.1e} on {int(band.sum())} overlap nodes")
    assert limit_err <= 1e-6
    assert band.sum() > 0
    assert gap <= 1e-6
