import numpy as np
import pytest
import scipy.linalg as sla

from ncve import loi
from ncve.modal_core import ModalSystem
from ncve.moment_gramian import ControlSignal


@pytest.fixture(scope="module")
def P64():
    sys = ModalSystem.from_arrays([0.4, 0.15, -0.3, -1.0, -2.5, -4.0], [1.0, 0.8, 1.2, 0.7, 1.0, 0.9])
    return sys, loi.build_P(sys, 64.0)


def test_P_matches_lyapunov_oracle(P64):
    """Long-horizon P is the inverse Gramian of the anti-stable part, zero elsewhere."""
    sys, P = P64
    lam, b = sys.eigenvalues[:2], sys.control_coeffs[:2]
    W = sla.solve_continuous_lyapunov(-np.diag(lam), -np.outer(b, b.conj()))
    ref = np.zeros((6, 6), dtype=complex)
    ref[:2, :2] = np.linalg.inv(W)
    assert np.allclose(P.matrix, ref, atol=1e-6 * np.abs(ref).max())


def test_P_structure(P64):
    _, P = P64
    assert P.hermitian_defect < 1e-8
    assert P.diagonal_consistency < 1e-8 * P.norm()
    assert P.is_psd


def test_polarization_basis_independent(P64):
    sys, P = P64
    rng = np.random.default_rng(4)
    E = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    Q = loi.build_P(sys, 64.0, basis=list(E.T))
    assert np.allclose(Q.matrix, P.matrix, atol=1e-8 * P.norm())


def test_polarization_identity():
    M = np.array([[2.0, 1 - 1j], [1 + 1j, 3.0]])
    I = lambda y: float((np.conj(y) @ M @ y).real)
    x, xi = np.array([1.0, 2j]), np.array([0.5, -1.0])
    assert loi.polarization(I, x, xi) == pytest.approx(np.conj(xi) @ M @ x)


def test_time_shift_invariance():
    sys = ModalSystem.from_arrays([0.2, -0.5, -1.5], [1, 1, 0.5])
    P0 = loi.build_P(sys, 8.0)
    P3 = loi.build_P(sys, 8.0, start_time=3.0)
    assert np.allclose(P3.matrix, P0.matrix, rtol=1e-8, atol=1e-10 * P0.norm())


def test_loi_holds_on_random_trajectories(P64):
    sys, P = P64
    rep = loi.loi_monte_carlo(P, sys, trials=40, seed=2)
    assert rep.passed and rep.extra["violations"] == 0


def test_random_P_violates(P64):
    sys, _ = P64
    rng = np.random.default_rng(0)
    X = rng.normal(size=(6, 6))
    bad = loi.QuadraticForm(X + X.T, 64.0, 6)
    assert not loi.loi_monte_carlo(bad, sys, trials=40, seed=2).passed


def test_trajectory_is_variation_of_constants():
    sys = ModalSystem.from_arrays([0.3, -1 + 1j], [1, 2])
    u = ControlSignal([0.5j], [1.0], 2.0)
    y0 = np.array([1.0, -1j])
    t = 1.7
    from scipy.integrate import solve_ivp
    f = lambda s, y: sys.eigenvalues * y + sys.control_coeffs * u(s)
    ref = solve_ivp(f, (0, t), y0.astype(complex), rtol=1e-12, atol=1e-14).y[:, -1]
    assert np.allclose(loi.trajectory(sys, y0, u, t), ref, rtol=1e-9)


def test_quadratic_laws(P64):
    sys, P = P64
    q = loi.energy_quadratic_consistency(sys, trials=20, T=8.0, seed=1)
    assert q["homogeneity_ok"] and q["parallelogram_ok"]
    assert max(q["minus_one"], q["imaginary_unit"], q["double"]) < 1e-9
    assert loi.schwarz_check(P, 50, 0) <= 1e-9


def test_P_decays_for_stable_system():
    sys = ModalSystem.from_arrays([-0.5, -1.0], [1, 1])
    assert loi.build_P(sys, 32.0).norm() < 1e-10 * loi.build_P(sys, 1.0).norm()


def test_proxy_horizon_stops():
    sys = ModalSystem.from_arrays([0.3, -1.0], [1, 1])
    out = loi.proxy_horizon(sys, [1, 1])
    assert out["converged"] and out["T"] <= 1024


def test_csv(tmp_path, P64):
    _, P = P64
    P.to_csv(tmp_path / "P.csv")
    assert len((tmp_path / "P.csv").read_text().splitlines()) == 37
