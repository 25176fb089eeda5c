"""Minimal-energy null controls against state-space and quadrature oracles."""

import math

import mpmath as mp
import numpy as np
import pytest
import scipy.integrate as si
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from ncve.errors import Infeasible, NotDiagonalizable, UncontrollableMode
from ncve.modal_core import JordanChain, ModalSystem
from ncve.moment_gramian import (
    ControlSignal,
    MinEnergySolver,
    MomentProblem,
    energy_sweep,
    gauss_legendre_terminal_state,
    gram_matrix,
    min_energy,
    null_control,
    regularized_equivalence_check,
    solve_moment_min_norm,
)


def van_loan_energy(lam, b, y0, T):
    """``x^H W_T^{-1} x`` with ``x = e^{AT} y0`` and the Gramian from one matrix exponential."""
    A = np.diag(lam)
    Bm = np.asarray(b, dtype=complex)[:, None]
    n = len(lam)
    M = np.zeros((2 * n, 2 * n), dtype=complex)
    M[:n, :n] = -A
    M[:n, n:] = Bm @ Bm.conj().T
    M[n:, n:] = A.conj().T
    F = sla.expm(M * T)
    W = F[n:, n:].conj().T @ F[:n, n:]
    x = sla.expm(A * T) @ np.asarray(y0, dtype=complex)
    return float((x.conj() @ np.linalg.solve(W, x)).real)


def mp_energy(mu, d, T, dps=60):
    with mp.workdps(dps):
        n = len(mu)
        G = mp.matrix(n, n)
        for i in range(n):
            for j in range(n):
                s = mp.mpc(mu[i]) + mp.conj(mp.mpc(mu[j]))
                G[i, j] = T if s == 0 else -mp.expm1(-s * T) / s
        dd = mp.matrix([mp.mpc(x) for x in d])
        c = mp.lu_solve(G, dd)
        return float(mp.re((dd.H * c)[0]))


def test_energy_matches_van_loan_gramian():
    lam = np.array([0.3, -0.5 + 1j, -0.5 - 1j, -2.0])
    b = np.array([1.0, 0.5, 0.5, 2.0])
    y0 = np.array([1.0, 0.2j, -0.2j, 0.5])
    for T in (0.7, 1.5, 3.0):
        got = min_energy(ModalSystem.from_arrays(lam, b), y0, T).energy
        assert got == pytest.approx(van_loan_energy(lam, b, y0, T), rel=1e-8)


def test_energy_matches_mpmath_moment_solution(rng):
    for _ in range(10):
        n = int(rng.integers(1, 7))
        lam = -5 * rng.random(n) + 2j * rng.normal(size=n)
        b = rng.normal(size=n) + 1j * rng.normal(size=n)
        y0 = rng.normal(size=n) + 1j * rng.normal(size=n)
        T = float(rng.uniform(0.5, 4))
        d = -np.exp(lam * T) * y0 / b
        got = min_energy(ModalSystem.from_arrays(lam, b), y0, T).energy
        assert got == pytest.approx(mp_energy(-lam, d, T), rel=1e-10)


def test_null_control_reaches_rest():
    sys = ModalSystem.from_arrays([0.5, -1 + 3j, -1 - 3j, -4], [1, 1, 1, 0.5])
    y0 = np.array([1.0, 0.5 + 0.5j, 0.5 - 0.5j, -2])
    u = null_control(sys, y0, 3.0)
    yT = gauss_legendre_terminal_state(sys, y0, u)
    assert np.linalg.norm(yT) < 1e-9 * np.linalg.norm(y0)


def test_gram_entries_match_quadrature():
    mu = np.array([0.0, 1.5 - 2j, 3.0])
    G = gram_matrix(mu, 2.0, precision="double")
    for i in range(3):
        for j in range(3):
            re = si.quad(lambda s: (np.exp(-mu[i] * s) * np.conj(np.exp(-mu[j] * s))).real, 0, 2)[0]
            im = si.quad(lambda s: (np.exp(-mu[i] * s) * np.conj(np.exp(-mu[j] * s))).imag, 0, 2)[0]
            assert abs(G.entries[i, j] - complex(re, im)) < 1e-12
    assert G.hermitian_defect() < 1e-15


def test_control_norm_matches_quadrature():
    u = ControlSignal([0.4 + 2j, -0.3, 1.0 - 1j], [1.0, 0.5j, -0.3], 3.0)
    for sig in (u, u.time_reversed()):
        for upto in (1.0, 3.0):
            ref = si.quad(lambda t: abs(sig(t)) ** 2, 0, upto, limit=200)[0]
            assert sig.norm_sq(upto) == pytest.approx(ref, rel=1e-10)


def test_response_and_moments_match_quadrature():
    u = ControlSignal([0.4 + 2j, -0.3], [1.0, 0.5j], 2.0)
    lam = np.array([-1.0 + 0.5j, 0.7])
    for sig in (u, u.time_reversed()):
        t = 1.3
        got = sig.response(lam, t)
        for k, l in enumerate(lam):
            ref = si.quad_vec(lambda s: np.exp(l * (t - s)) * sig(s), 0, t)[0]
            assert abs(got[k] - ref) < 1e-10
        m = sig.moments(lam)
        for k, l in enumerate(lam):
            ref = si.quad_vec(lambda s: np.exp(-l * s) * sig(s), 0, 2.0)[0]
            assert abs(m[k] - ref) < 1e-10


def test_energy_equals_control_norm():
    sys = ModalSystem.from_arrays([-0.2, -1.0, -3.0], [1, 2, 1])
    sol = min_energy(sys, [1, 1, 1], 2.0)
    assert sol.control.norm_sq() == pytest.approx(sol.energy, rel=1e-9)
    control, energy = sol
    assert energy == sol.energy


def test_regularized_route_agrees():
    sys = ModalSystem.from_arrays([0.2, -1.0, -2.5, -6.0], [1, 0.5, 1, 2])
    for omega in (None, 8.0):
        rep = regularized_equivalence_check(sys, [1, -1, 0.5, 2], 2.0, omega)
        assert rep["relative_discrepancy"] < 1e-9


def test_precision_paths_agree_on_mild_problem():
    sys = ModalSystem.from_arrays([-0.5, -1.5], [1, 1])
    a = MinEnergySolver(sys, 1.0, precision="double").energy([1, 1])
    b = MinEnergySolver(sys, 1.0, precision=40).energy([1, 1])
    assert a == pytest.approx(b, rel=1e-12)


def test_matrix_form_matches_energy(rng):
    sys = ModalSystem.from_arrays([0.3, -1 + 1j, -2], [1, 1j, 0.5])
    solver = MinEnergySolver(sys, 2.0)
    M = solver.matrix()
    for _ in range(5):
        y = rng.normal(size=3) + 1j * rng.normal(size=3)
        assert (y.conj() @ M @ y).real == pytest.approx(solver.energy(y), rel=1e-9)


def test_rank_deficient_consistent_targets():
    # duplicate exponent with consistent targets: the pseudoinverse still solves it
    p = MomentProblem.__new__(MomentProblem)
    object.__setattr__(p, "exponents", np.array([1.0, 1.0 + 1e-15]))
    object.__setattr__(p, "horizon", 1.0)
    object.__setattr__(p, "targets", np.array([1.0, 1.0]))
    sol = solve_moment_min_norm(p, precision="double")
    assert sol.rank == 1
    assert sol.residual < 1e-6


def test_inconsistent_targets_are_infeasible():
    p = MomentProblem.__new__(MomentProblem)
    object.__setattr__(p, "exponents", np.array([1.0, 1.0 + 1e-15]))
    object.__setattr__(p, "horizon", 1.0)
    object.__setattr__(p, "targets", np.array([1.0, -1.0]))
    with pytest.raises(Infeasible):
        solve_moment_min_norm(p, precision="double")


def test_duplicate_exponents_rejected():
    with pytest.raises(ValueError):
        MomentProblem(np.array([1.0, 1.0]), 1.0, np.array([1.0, 1.0]))


def test_uncontrollable_excited_mode():
    sys = ModalSystem.from_arrays([-1, -2], [1, 0])
    with pytest.raises(UncontrollableMode):
        min_energy(sys, [1, 1], 1.0)
    assert min_energy(sys, [1, 0], 1.0).energy > 0


def test_jordan_blocks_rejected():
    sys = ModalSystem.from_arrays([-1], [1], jordan_blocks=(JordanChain(-2, 2),))
    with pytest.raises(NotDiagonalizable):
        min_energy(sys, [1, 0, 0], 1.0)


def test_sweep_reports_fits():
    sys = ModalSystem.from_arrays([-0.5, -1.0], [1, 1])
    rep = energy_sweep(sys, [1, 1], [1, 2, 4, 8])
    assert rep.feasible.all()
    assert np.all(np.diff(rep.energies) < 0)
    assert rep.exp_rate < 0
    rows = list(rep.csv_rows())
    assert rows[0] == ("T", "energy", "norm", "residual") and len(rows) == 5
    with pytest.raises(ValueError):
        energy_sweep(sys, [1, 1], [2, 1])


def test_time_reversal_involution():
    u = ControlSignal([1 + 1j, -0.5], [1, 2], 2.0)
    t = np.linspace(0, 2, 7)
    assert np.allclose(u.time_reversed()(t), u(2.0 - t))
    assert np.allclose(u.time_reversed().time_reversed()(t), u(t))


def test_times_exponential():
    u = ControlSignal([1 + 1j, -0.5], [1, 2], 2.0)
    t = np.linspace(0, 2, 7)
    for sig in (u, u.time_reversed()):
        assert np.allclose(sig.times_exponential(0.7)(t), np.exp(0.7 * t) * sig(t))


lam_strategy = st.lists(st.floats(-4, 0.5), min_size=1, max_size=4, unique=True)


@given(lam=lam_strategy, T=st.floats(0.5, 4), alpha=st.complex_numbers(min_magnitude=0.1, max_magnitude=10))
@settings(max_examples=40, deadline=None)
def test_energy_is_quadratic(lam, T, alpha):
    if min(abs(a - b) for a in lam for b in lam if a is not b) < 0.05 if len(lam) > 1 else False:
        return
    sys = ModalSystem.from_arrays(lam, np.ones(len(lam)))
    solver = MinEnergySolver(sys, T)
    y = np.linspace(1, 2, len(lam))
    assert solver.energy(alpha * y) == pytest.approx(abs(alpha) ** 2 * solver.energy(y), rel=1e-9)


@given(lam=lam_strategy, T=st.floats(0.5, 4))
@settings(max_examples=40, deadline=None)
def test_energy_nonincreasing_in_horizon(lam, T):
    if len(lam) > 1 and min(abs(a - b) for i, a in enumerate(lam) for b in lam[i + 1:]) < 0.05:
        return
    sys = ModalSystem.from_arrays(lam, np.ones(len(lam)))
    y = np.ones(len(lam))
    z1 = min_energy(sys, y, T).energy
    z2 = min_energy(sys, y, 1.5 * T).energy
    assert z2 <= z1 * (1 + 1e-9)
