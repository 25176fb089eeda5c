"""Value-function quadratic form and the linear operator inequality.

``I(y0)``, the least energy needed to steer ``y0`` to rest, is approximated
by the finite-horizon energy ``Z_T(y0)``. Inner products are linear in the
first slot, ``<a, b> = b^H a``, so ``I(y) = <P y, y> = y^H P y`` and the
four-point polarization

    <x, P xi> = I((x+xi)/2) - I((x-xi)/2) + i [I((x+i xi)/2) - I((x-i xi)/2)]

yields ``<e_i, P e_j> = P[j, i]``.

The inequality checked along trajectories ``y' = A y + b u`` is

    <P y(t), y(t)> - <P y0, y0> + int_0^t |u|^2 >= 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, NonFiniteEntry
from .modal_core import ModalSystem, StateVector
from .moment_gramian import ControlSignal, MinEnergySolver, gram_matrix

LOI_TOL = 1e-9
PSD_TOL = 1e-9


def _vec(y) -> np.ndarray:
    return np.asarray(y.coeffs if isinstance(y, StateVector) else y, dtype=complex)


class ForwardWindowEnergy:
    """``Z_T`` computed on the window ``[tau, tau + T]`` in forward time.

    The constraint for mode ``n`` is
    ``int_tau^{tau+T} exp(-lambda_n s) u(s) ds = -exp(-lambda_n tau) y0_n / b_n``,
    whose Gram matrix is ``D G_0 D^H`` with ``D = diag(exp(-lambda_n tau))``.
    This is a numerically different path to the same energy as
    :class:`~ncve.moment_gramian.MinEnergySolver`; it is only practical when
    ``exp(|Re lambda| T)`` stays finite.
    """

    def __init__(self, sys: ModalSystem, T: float, start: float, precision="auto"):
        self.sys = sys
        lam = sys.eigenvalues
        self.b = sys.control_coeffs
        self.D = np.exp(-lam * start)
        self.G0 = gram_matrix(lam, T, precision=precision)
        # the equilibrated solve absorbs the diagonal D exactly
        self.factor = -self.D / self.b

    def energy(self, y) -> float:
        d = self.factor * _vec(y)
        # G_tau c = d  <=>  G_0 (D^H c) = D^{-1} d
        _, energy, _ = self.G0.solve(d / self.D)
        return energy


@dataclass(frozen=True)
class QuadraticForm:
    matrix: np.ndarray
    horizon_used: float
    basis_size: int
    hermitian_defect: float = 0.0
    diagonal_consistency: float = 0.0
    min_eigenvalue: float = 0.0

    def value(self, y) -> float:
        """``<P y, y>``."""
        v = _vec(y)
        return float((v.conj() @ self.matrix @ v).real)

    def pair(self, x, y) -> complex:
        """``<P x, y> = y^H P x``."""
        return complex(_vec(y).conj() @ self.matrix @ _vec(x))

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    @property
    def is_psd(self) -> bool:
        return self.min_eigenvalue >= -PSD_TOL

    def to_csv(self, path) -> None:
        n = self.matrix.shape[0]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "re", "im"])
            for i in range(n):
                for j in range(n):
                    z = self.matrix[i, j]
                    w.writerow([i, j, "%.17g" % z.real, "%.17g" % z.imag])


def polarization(I, x, xi) -> complex:
    """``<x, P xi>`` from four values of the quadratic functional ``I``."""
    x, xi = _vec(x), _vec(xi)
    return (I(0.5 * (x + xi)) - I(0.5 * (x - xi))
            + 1j * (I(0.5 * (x + 1j * xi)) - I(0.5 * (x - 1j * xi))))


def build_P(sys: ModalSystem, T_proxy: float, basis=None, start_time: float = 0.0,
            precision="auto") -> QuadraticForm:
    """Assemble ``P`` by polarization of ``Z_{T_proxy}``.

    ``basis`` (default: standard basis) must be a complete, linearly
    independent list of states; with basis matrix ``E`` the polarization
    values give ``E^H P E`` transposed, from which ``P`` is recovered.
    """
    n = len(sys)
    E = np.eye(n, dtype=complex) if basis is None else np.column_stack([_vec(b) for b in basis])
    if E.shape != (n, n):
        raise ValueError(f"basis must contain {n} states of length {n}")
    if start_time == 0.0:
        solver = MinEnergySolver(sys, T_proxy, precision=precision)
    else:
        solver = ForwardWindowEnergy(sys, T_proxy, start_time, precision)
    cache = {}

    def I(y):
        key = np.asarray(y, dtype=complex).tobytes()
        if key not in cache:
            cache[key] = solver.energy(y)
        return cache[key]

    V = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            V[i, j] = polarization(I, E[:, i], E[:, j])
    # V[i, j] = <E_i, P E_j> = E_j^H P E_i, i.e. V^T = E^H P E
    Einv = np.linalg.inv(E)
    raw = Einv.conj().T @ V.T @ Einv
    scale = max(np.abs(raw).max(), 1e-300)
    herm = float(np.abs(raw - raw.conj().T).max() / scale)
    P = 0.5 * (raw + raw.conj().T)
    diag = max(abs(float((E[:, i].conj() @ P @ E[:, i]).real) - I(E[:, i])) for i in range(n))
    min_eig = float(np.linalg.eigvalsh(P).min())
    return QuadraticForm(P, float(T_proxy), n, herm, diag, min_eig)


def trajectory(sys: ModalSystem, y0, u: ControlSignal, t: float) -> np.ndarray:
    """``y(t) = exp(A t) y0 + b int_0^t exp(A (t - s)) u(s) ds`` by variation of constants."""
    lam = sys.eigenvalues
    return np.exp(lam * t) * _vec(y0) + sys.control_coeffs * u.response(lam, t)


def geometric_times(T: float, n_points: int = 13) -> np.ndarray:
    """Geometric grid from ``T/64`` to ``T``."""
    return np.geomspace(T / 64.0, T, n_points)


@dataclass(frozen=True)
class LoiCheckReport:
    times: np.ndarray
    worst_violation: float
    trajectories: int
    tolerance: float
    passed: bool
    worst_time: float = math.nan
    worst_trial: int = -1
    values: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "trajectories": self.trajectories,
            "worst_violation": self.worst_violation,
            "worst_time": self.worst_time,
            "worst_trial": self.worst_trial,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "times": [float(t) for t in self.times],
            **self.extra,
        }


def loi_expression(P: QuadraticForm, sys: ModalSystem, y0, u: ControlSignal, times) -> np.ndarray:
    y0 = _vec(y0)
    base = P.value(y0)
    out = np.empty(len(times))
    for k, t in enumerate(times):
        yt = trajectory(sys, y0, u, t)
        out[k] = P.value(yt) - base + u.norm_sq(upto=t)
    return out


def loi_check(P: QuadraticForm, sys: ModalSystem, y0, u: ControlSignal, times=None) -> LoiCheckReport:
    """Minimum of the dissipation expression over ``times``."""
    times = geometric_times(u.horizon) if times is None else np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > u.horizon * (1 + 1e-12)):
        raise ValueError("sample times must lie in [0, horizon of u]")
    vals = loi_expression(P, sys, y0, u, times)
    k = int(np.argmin(vals))
    tol = LOI_TOL * (1.0 + P.norm() * float(np.linalg.norm(_vec(y0))) ** 2)
    return LoiCheckReport(times, float(vals[k]), 1, tol, bool(vals[k] >= -tol),
                          float(times[k]), 0, vals)


def random_state(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform-ish random complex vector in the unit ball."""
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v) * rng.uniform() ** (1.0 / (2 * n))


def random_control(rng: np.random.Generator, horizon: float, n_terms: int = 3,
                   rate: float = 1.0, freq: float = 3.0) -> ControlSignal:
    """Exponential sum with random exponents and coefficients in the unit ball."""
    lam = rng.uniform(-rate, rate, n_terms) + 1j * rng.uniform(-freq, freq, n_terms)
    return ControlSignal(lam, random_state(rng, n_terms), horizon)


def loi_monte_carlo(P: QuadraticForm, sys: ModalSystem, trials: int = 100, seed: int = 0,
                    horizon: float = 8.0, times=None) -> LoiCheckReport:
    """LOI over random initial states and random exponential-sum controls."""
    rng = np.random.default_rng(seed)
    times = geometric_times(horizon) if times is None else np.asarray(times, dtype=float)
    worst, worst_t, worst_k, worst_tol, ok = math.inf, math.nan, -1, 0.0, True
    violations = 0
    for k in range(trials):
        y0 = random_state(rng, len(sys))
        u = random_control(rng, horizon)
        rep = loi_check(P, sys, y0, u, times)
        if not rep.passed:
            violations += 1
            ok = False
        if rep.worst_violation < worst:
            worst, worst_t, worst_k, worst_tol = rep.worst_violation, rep.worst_time, k, rep.tolerance
    return LoiCheckReport(times, float(worst), trials, worst_tol, ok, worst_t, worst_k,
                          extra={"violations": violations, "seed": seed})


def energy_quadratic_consistency(sys: ModalSystem, trials: int = 50, T: float = 8.0,
                                 seed: int = 0, precision="auto") -> dict:
    """Homogeneity and parallelogram law of ``Z_T`` on random states.

    Reports worst relative errors and pass flags at ``1e-8`` (homogeneity)
    and ``1e-7`` (parallelogram).
    """
    rng = np.random.default_rng(seed)
    solver = MinEnergySolver(sys, T, precision=precision)
    I = solver.energy
    n = len(sys)
    hom = par = 0.0
    special = {}
    for _ in range(trials):
        y = random_state(rng, n)
        x = random_state(rng, n)
        alpha = complex(rng.normal(), rng.normal())
        Iy = I(y)
        if Iy > 0:
            hom = max(hom, abs(I(alpha * y) - abs(alpha) ** 2 * Iy) / Iy)
        lhs = I(x + y) + I(x - y)
        rhs = 2 * (I(x) + Iy)
        if rhs > 0:
            par = max(par, abs(lhs - rhs) / rhs)
    y = random_state(rng, n)
    Iy = I(y)
    special["minus_one"] = abs(I(-y) - Iy) / Iy if Iy > 0 else 0.0
    special["imaginary_unit"] = abs(I(1j * y) - Iy) / Iy if Iy > 0 else 0.0
    special["double"] = abs(I(2 * y) - 4 * Iy) / Iy if Iy > 0 else 0.0
    return {
        "trials": trials,
        "T": T,
        "homogeneity_rel": hom,
        "parallelogram_rel": par,
        "homogeneity_ok": hom <= 1e-8,
        "parallelogram_ok": par <= 1e-7,
        **special,
    }


def schwarz_check(P: QuadraticForm, pairs: int = 50, seed: int = 0) -> float:
    """Worst ``|<Py, x>| - sqrt(<Px, x> <Py, y>)`` over random pairs (should be <= 0)."""
    rng = np.random.default_rng(seed)
    n = P.matrix.shape[0]
    worst = -math.inf
    for _ in range(pairs):
        x, y = random_state(rng, n), random_state(rng, n)
        lhs = abs(P.pair(y, x))
        rhs = math.sqrt(max(P.value(x), 0.0) * max(P.value(y), 0.0))
        worst = max(worst, lhs - rhs)
    return worst


def proxy_horizon(sys: ModalSystem, y0, T0: float = 1.0, T_max: float = 1024.0,
                  precision="auto") -> dict:
    """Double ``T`` until ``Z_{2T}/Z_T > 0.99`` or ``Z_T < 1e-12``.

    Returns the horizon reached, its energy and whether a stopping rule fired.
    """
    T = float(T0)
    history = []
    try:
        z = MinEnergySolver(sys, T, precision=precision).energy(y0)
    except (Infeasible, NonFiniteEntry):
        z = math.inf
    history.append((T, z))
    while 2 * T <= T_max:
        if z < 1e-12:
            return {"T": T, "energy": z, "converged": True, "history": history}
        try:
            z2 = MinEnergySolver(sys, 2 * T, precision=precision).energy(y0)
        except (Infeasible, NonFiniteEntry):
            break
        history.append((2 * T, z2))
        if math.isfinite(z) and z > 0 and z2 / z > 0.99:
            return {"T": 2 * T, "energy": z2, "converged": True, "history": history}
        T, z = 2 * T, z2
    return {"T": T, "energy": z, "converged": False, "history": history}
