"""Acceptance suite: ten numbered criteria, each at its stated tolerance and time budget.

Every test prints one ``ACCEPTANCE <n> PASS|FAIL`` line; the lines are
collected again in the terminal summary. Run standalone with
``python3 tests/test_acceptance.py``.
"""

import math
import time

import mpmath as mp
import numpy as np
import pytest

from ncve import biorthogonal as bio
from ncve import delay as dl
from ncve import loi
from ncve import parabolic as par
from ncve.modal_core import ModalSystem
from ncve.moment_gramian import (
    energy_sweep,
    gauss_legendre_terminal_state,
    min_energy,
    null_control,
    null_steering_problem,
)

RESULTS = {}

SIX_MODE = ([0.4, 0.15, -0.3, -1.0, -2.5, -4.0], [1.0, 0.8, 1.2, 0.7, 1.0, 0.9])


def report(n, ok, detail):
    line = f"ACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def critical_system(mu1=1.0):
    return par.to_modal(par.ParabolicSystem([mu1, 0.0, 0.0, 0.5], [1.0, 1.0], 8))[0]


def test_c01_biorthogonality_residual():
    t0 = time.perf_counter()
    worst = 0.0
    for T in (2.0, 4.0, 8.0):
        bf = bio.min_norm_biorthogonal(bio.parabolic_family(0.5, 8, T))
        worst = max(worst, bf.max_residual)
    dt = time.perf_counter() - t0
    ok = worst < 1e-8 and dt < 1.0
    assert report(1, ok, f"max |int Psi_m Phi_n - delta| = {worst:.2e} (< 1e-8), {dt:.2f} s (< 1 s)")


def test_c02_periodic_extension():
    t0 = time.perf_counter()
    unit = bio.min_norm_biorthogonal(bio.parabolic_family(0.5, 8, 1.0))
    psi = unit.members[0]
    with mp.workdps(unit.dps):
        # unit-cell norm by quadrature, independent of the closed-form inner product
        f = lambda t: mp.fsum(c * mp.exp(-l * t) for c, l in zip(psi.coeffs, psi.exponents))
        cell_sq = mp.quad(lambda t: f(t) ** 2, [0, 0.5, 1])
    norm_err = ortho = 0.0
    for N in (4, 16, 64):
        pe = bio.periodic_extension(psi, N, unit.family)
        norm_err = max(norm_err, abs(pe.norm_sq() - N * float(cell_sq)) / (N * float(cell_sq)))
        ortho = max(ortho, max(abs(float(pe.moment(lam))) for lam in unit.family.exponents[1:]))
    dt = time.perf_counter() - t0
    ok = norm_err < 1e-12 and ortho < 1e-8 and dt < 1.0
    assert report(2, ok, f"norm identity rel err {norm_err:.1e} (< 1e-12), orthogonality {ortho:.1e} "
                         f"(< 1e-8), {dt:.2f} s (< 1 s)")


def test_c03_energy_decay_critical():
    t0 = time.perf_counter()
    sys = critical_system()
    y0 = np.zeros(len(sys))
    y0[0] = 1.0  # the k=1 mode of the first branch has eigenvalue 0
    Ns = np.array([4.0, 8.0, 16.0, 32.0, 64.0])
    rep = energy_sweep(sys, y0, Ns)
    dt = time.perf_counter() - t0
    norm_slope, energy_slope = rep.norm_slope, rep.fitted_slope
    # diagnostics: tail slope and a shifted power-law fit Z ~ a / (N - C)
    tail = 0.5 * math.log(rep.energies[-1] / rep.energies[-2]) / math.log(2.0)
    inv = 1.0 / rep.energies
    a_inv, b_inv = np.polyfit(Ns, inv, 1)
    shift = -b_inv / a_inv
    ok = -0.65 <= norm_slope <= -0.35 and -1.3 <= energy_slope <= -0.7 and dt < 10.0
    report(3, ok, f"norm slope {norm_slope:.3f} (want [-0.65, -0.35]), energy slope {energy_slope:.3f}, "
                  f"{dt:.2f} s | tail norm slope N=32->64 {tail:.3f}; Z ~ {1 / a_inv:.3f}/(N - {shift:.2f})")
    assert ok


def test_c04_energy_decay_noncritical():
    t0 = time.perf_counter()
    sys = critical_system()
    y0 = np.ones(len(sys))
    y0[0] = 0.0
    Ts = [8.0, 16.0, 32.0, 64.0]
    Z = [min_energy(sys, y0, T).energy for T in Ts]
    ratios = [b / a for a, b in zip(Z, Z[1:])]
    dt = time.perf_counter() - t0
    ok = max(ratios) < 0.1 and dt < 10.0
    assert report(4, ok, "Z_2T/Z_T = " + ", ".join(f"{r:.1e}" for r in ratios) + f" (< 0.1), {dt:.2f} s (< 10 s)")


def _mp_pinv_energy(mu, d, T, dps=50):
    """``conj(d)^T G^+ d`` with the pseudoinverse built from an mpmath SVD."""
    with mp.workdps(dps):
        n = len(mu)
        G = mp.matrix(n, n)
        for i in range(n):
            for j in range(n):
                s = mp.mpc(mu[i]) + mp.conj(mp.mpc(mu[j]))
                G[i, j] = mp.mpf(T) if s == 0 else -mp.expm1(-s * T) / s
        U, S, V = mp.svd_c(G)
        cutoff = max(S) * mp.mpf(10) ** (-(dps - 10))
        dd = mp.matrix([mp.mpc(x) for x in d])
        w = U.H * dd
        for k in range(n):
            w[k] = w[k] / S[k] if S[k] > cutoff else 0
        c = V.H * w
        return float(mp.re((dd.H * c)[0]))


def test_c05_gramian_moment_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst_e = worst_y = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 7))
        lam = -5.0 * rng.random(n) + 2j * rng.normal(size=n)
        b = rng.normal(size=n) + 1j * rng.normal(size=n)
        sys = ModalSystem.from_arrays(lam, b)
        y0 = rng.normal(size=n) + 1j * rng.normal(size=n)
        T = float(rng.uniform(0.5, 4.0))
        p = null_steering_problem(sys, y0, T)
        ref = _mp_pinv_energy(p.exponents, p.targets, T)
        worst_e = max(worst_e, abs(min_energy(sys, y0, T).energy - ref) / ref)
        yT = gauss_legendre_terminal_state(sys, y0, null_control(sys, y0, T))
        worst_y = max(worst_y, np.linalg.norm(yT) / np.linalg.norm(y0))
    dt = time.perf_counter() - t0
    ok = worst_e < 1e-10 and worst_y < 1e-7 and dt < 5.0
    assert report(5, ok, f"energy rel err {worst_e:.1e} (< 1e-10), terminal |y(T)|/|y0| {worst_y:.1e} "
                         f"(< 1e-7), {dt:.2f} s (< 5 s)")


def test_c06_loi_holds():
    t0 = time.perf_counter()
    sys = ModalSystem.from_arrays(*SIX_MODE)
    P = loi.build_P(sys, 64.0)
    rep = loi.loi_monte_carlo(P, sys, trials=100, seed=1)
    dt = time.perf_counter() - t0
    ok = rep.passed and dt < 30.0
    assert report(6, ok, f"min LOI expression {rep.worst_violation:.2e} >= -{rep.tolerance:.1e} "
                         f"over 100 trajectories, {dt:.2f} s (< 30 s)")


def test_c07_ncve_iff_P_vanishes():
    t0 = time.perf_counter()
    sys = critical_system()
    ratio = loi.build_P(sys, 64.0).norm() / loi.build_P(sys, 1.0).norm()
    unstable = critical_system(1.5)
    i = int(np.argmax(unstable.eigenvalues.real))
    e = np.zeros(len(unstable))
    e[i] = 1.0
    v32 = loi.build_P(unstable, 32.0).value(e)
    v64 = loi.build_P(unstable, 64.0).value(e)
    change = abs(v64 - v32) / abs(v32)
    dt = time.perf_counter() - t0
    ok = ratio < 1e-2 and change < 0.05 and v64 > 0 and dt < 30.0
    assert report(7, ok, f"|P64|/|P1| = {ratio:.1e} (< 1e-2); unstable <e,Pe> {v32:.6g} -> {v64:.6g} "
                         f"(change {change:.1e} < 5%), {dt:.2f} s (< 30 s)")


def test_c08_parabolic_verdict_table():
    t0 = time.perf_counter()
    table = [((1.0, 0.5, 1.0), True, None), ((1.5, 0.0, 1.0), False, "spectral"),
             ((1.0, 0.5, 0.0), False, "controllability"), ((4.0, 1.0, 1.0), False, "resonance")]
    got = []
    for (m1, m2, beta), want, reason in table:
        v = par.ncve_verdict(par.ParabolicSystem([m1, 0.0, 0.0, m2], [1.0, beta], 8))
        got.append(v.ncve == want and (reason is None or reason in v.failed))
    dt = time.perf_counter() - t0
    ok = all(got) and dt < 1.0
    assert report(8, ok, f"{sum(got)}/4 verdicts match, {dt * 1e3:.1f} ms (< 1 s)")


def test_c09_delay_verdicts():
    t0 = time.perf_counter()
    stable = dl.ncve_verdict_delay(dl.scalar_delay_system(2.0, 1.0, 1.0))
    sys = dl.scalar_delay_system(0.0, -2.0, 1.0)
    unstable = dl.ncve_verdict_delay(sys)
    rhp = [complex(re, im) for re, im in unstable.details["unstable_roots"]]
    residual = max(abs(dl.char_det(sys, z)) for z in rhp) if rhp else math.inf
    conj_ok = True
    for s in (dl.scalar_delay_system(2.0, 1.0, 1.0), sys, dl.scalar_delay_system(0.5, 2.0, 1.0)):
        roots = [r.lam for r in dl.find_roots(s, dl.RootSearchRegion(-3.0, 4.0, -30.0, 30.0)).roots]
        conj_ok &= all(min(abs(w - z.conjugate()) for w in roots) < 1e-9 for z in roots)
    dt = time.perf_counter() - t0
    ok = stable.ncve and not unstable.ncve and rhp and residual < 1e-9 and conj_ok and dt < 5.0
    assert report(9, ok, f"(2,1) NCVE={stable.ncve}, (0,-2) NCVE={unstable.ncve} with root "
                         f"{rhp[0].real:.7f} |Delta|={residual:.1e} (< 1e-9), conjugate-closed={conj_ok}, "
                         f"{dt:.2f} s (< 5 s)")


def test_c10_quadratic_form_laws():
    t0 = time.perf_counter()
    sys = ModalSystem.from_arrays(*SIX_MODE)
    q = loi.energy_quadratic_consistency(sys, trials=50, T=64.0, seed=3)
    P = loi.build_P(sys, 64.0)
    schwarz = loi.schwarz_check(P, pairs=50, seed=3)
    dt = time.perf_counter() - t0
    ok = q["homogeneity_rel"] < 1e-8 and q["parallelogram_rel"] < 1e-7 and schwarz <= 1e-9 and dt < 10.0
    assert report(10, ok, f"homogeneity {q['homogeneity_rel']:.1e} (< 1e-8), parallelogram "
                          f"{q['parallelogram_rel']:.1e} (< 1e-7), Schwarz slack {schwarz:.1e} (<= 1e-9), "
                          f"{dt:.2f} s (< 10 s)")


if __name__ == "__main__":
    import sys as _sys

    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_c")):
        try:
            fn()
        except AssertionError:
            failed += 1
    _sys.exit(1 if failed else 0)
