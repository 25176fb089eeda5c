"""Gram matrices of exponentials, minimal-norm moment solutions and
minimal steering energies.

Conventions
-----------
A moment problem asks for ``f`` in ``L^2(0, T)`` with

    int_0^T exp(-mu_n t) f(t) dt = d_n,        n = 1..N.

The minimal-norm solution lies in ``span{conj(exp(-mu_n t))}``; writing
``f = sum_m c_m conj(exp(-mu_m t))`` turns the constraints into ``G c = d``
with the Hermitian Gram matrix

    G[n, m] = int_0^T exp(-(mu_n + conj(mu_m)) t) dt,

and the squared norm of ``f`` is ``c^H G c = d^H c``.

Steering a modal system ``y_n' = lambda_n y_n + b_n u`` to rest at time ``T``
is the moment problem with ``mu_n = -lambda_n``, ``d_n = -exp(lambda_n T) y0_n / b_n``
for the time-reversed control ``f(t) = u(T - t)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from . import kernels
from .errors import Infeasible, NonFiniteEntry, NotDiagonalizable, UncontrollableMode
from .modal_core import ModalSystem, StateVector

log = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-12
DEFAULT_INFEASIBILITY_TOL = 1e-6
# above this equilibrated condition number, "auto" precision switches to mpmath
AUTO_EXACT_COND = 1e5


def _as_complex_vector(x) -> np.ndarray:
    v = np.array(x, dtype=complex).ravel()
    v.setflags(write=False)
    return v


def cross_integral(mu, nu, T):
    """``int_0^T exp(-mu (T - s) - nu s) ds`` evaluated without overflow.

    Works elementwise with numpy broadcasting.
    """
    mu, nu = np.broadcast_arrays(np.asarray(mu, dtype=complex), np.asarray(nu, dtype=complex))
    out = np.empty(mu.shape, dtype=complex)
    first = mu.real >= nu.real
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        a = mu[first] - nu[first]
        out[first] = np.exp(-nu[first] * T) * T * kernels.phi1(a * T)
        b = nu[~first] - mu[~first]
        out[~first] = np.exp(-mu[~first] * T) * T * kernels.phi1(b * T)
    return out


@dataclass(frozen=True)
class MomentProblem:
    exponents: np.ndarray
    horizon: float
    targets: np.ndarray

    def __post_init__(self):
        lam = _as_complex_vector(self.exponents)
        d = _as_complex_vector(self.targets)
        T = float(self.horizon)
        if not (T > 0 and math.isfinite(T)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if lam.shape != d.shape:
            raise ValueError("exponents and targets must have the same length")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(d))):
            raise ValueError("exponents and targets must be finite")
        diff = np.abs(lam[:, None] - lam[None, :]) + np.eye(len(lam))
        if np.any(diff <= 1e-14 * (1.0 + np.abs(lam))[:, None]):
            raise ValueError("exponents must be pairwise distinct")
        object.__setattr__(self, "exponents", lam)
        object.__setattr__(self, "targets", d)
        object.__setattr__(self, "horizon", T)

    def __len__(self):
        return self.exponents.shape[0]


class _ExactFactor:
    """Gram inverse held in mpmath for matrices beyond double precision."""

    def __init__(self, exponents: np.ndarray, T: float, dps: int):
        self.dps = dps
        with mp.workdps(dps):
            lam = [mp.mpc(complex(z)) for z in exponents]
            n = len(lam)
            Tm = mp.mpf(T)
            G = mp.matrix(n, n)
            for i in range(n):
                for j in range(n):
                    z = lam[i] + mp.conj(lam[j])
                    G[i, j] = Tm if z == 0 else -mp.expm1(-z * Tm) / z
            self.G = G
            self.Ginv = mp.inverse(G)

    def solve(self, d):
        with mp.workdps(self.dps):
            dm = mp.matrix([mp.mpc(complex(x)) for x in d])
            c = self.Ginv * dm
            energy = mp.re(sum(mp.conj(dm[i]) * c[i] for i in range(len(d))))
            dn = mp.norm(dm)
            residual = mp.norm(self.G * c - dm) / dn if dn != 0 else mp.mpf(0)
            return (np.array([complex(x) for x in c], dtype=complex),
                    float(max(energy, 0)), float(residual))

    def quadratic(self, F: np.ndarray) -> np.ndarray:
        """``F^H G^{-1} F`` accumulated in extended precision."""
        with mp.workdps(self.dps):
            Fm = mp.matrix([[mp.mpc(complex(x)) for x in row] for row in F])
            Q = Fm.H * self.Ginv * Fm
            return np.array([[complex(Q[i, j]) for j in range(Q.cols)] for i in range(Q.rows)])

    def pinv(self) -> np.ndarray:
        n = self.Ginv.rows
        return np.array([[complex(self.Ginv[i, j]) for j in range(n)] for i in range(n)])


@dataclass(frozen=True)
class GramMatrix:
    """Gram matrix plus the SVD of its diagonally equilibrated form.

    Rank decisions are made on ``S G S`` with ``S = diag(G_nn)^{-1/2}``, so
    that exponentials of very different size (unstable modes over long
    horizons) do not swamp each other. When ``exact`` is set, solves go
    through an mpmath inverse instead of the truncated SVD.
    """

    entries: np.ndarray
    exponents: np.ndarray
    horizon: float
    rank_tol: float
    scale: np.ndarray
    U: np.ndarray
    singular_values: np.ndarray
    Vh: np.ndarray
    exact: _ExactFactor | None = None

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def rank(self) -> int:
        if self.exact is not None:
            return self.size
        s = self.singular_values
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.count_nonzero(s >= self.rank_tol * s[0]))

    @property
    def condition(self) -> float:
        """Condition number of the equilibrated matrix (double-precision estimate)."""
        s = self.singular_values
        return float(s[0] / s[-1]) if s[-1] > 0 else math.inf

    def hermitian_defect(self) -> float:
        G = self.entries
        return float(np.abs(G - G.conj().T).max() / max(np.abs(G).max(), 1e-300))

    def solve(self, d):
        """Pseudoinverse solution of ``G c = d``; returns ``(c, energy, residual)``.

        ``energy = d^H c`` is accumulated as a sum of nonnegative terms.
        ``residual`` is ``||S (G c - d)|| / ||S d||`` with the equilibration
        scaling ``S`` (0 for ``d = 0``).
        """
        if self.exact is not None:
            return self.exact.solve(d)
        d = np.asarray(d, dtype=complex)
        k = self.rank
        sd = self.scale * d
        proj = self.U[:, :k].conj().T @ sd
        s = self.singular_values[:k]
        x = self.Vh[:k].conj().T @ (proj / s)
        c = self.scale * x
        energy = float(np.sum(np.abs(proj) ** 2 / s))
        # residual in the equilibrated norm, so tiny targets next to huge
        # rows are not swamped by rounding in those rows
        dn = np.linalg.norm(sd)
        residual = float(np.linalg.norm(self.scale * (self.entries @ c - d)) / dn) if dn > 0 else 0.0
        return c, energy, residual

    def pinv(self) -> np.ndarray:
        if self.exact is not None:
            return self.exact.pinv()
        k = self.rank
        inner = (self.Vh[:k].conj().T / self.singular_values[:k]) @ self.U[:, :k].conj().T
        return self.scale[:, None] * inner * self.scale[None, :]

    def quadratic(self, F: np.ndarray) -> np.ndarray:
        """``F^H G^+ F`` for a matrix of target columns."""
        if self.exact is not None:
            return self.exact.quadratic(F)
        return F.conj().T @ self.pinv() @ F


def _auto_dps(n: int) -> int:
    return 30 + 3 * n


def gram_matrix(exponents, T, rank_tol=DEFAULT_RANK_TOL, precision="auto") -> GramMatrix:
    """Closed-form ``G[n,m] = int_0^T exp(-(mu_n + conj(mu_m)) t) dt`` with its SVD.

    ``precision`` is ``"double"`` (truncated SVD at ``rank_tol``), an integer
    number of mpmath digits, or ``"auto"``: double unless the equilibrated
    condition number exceeds ``AUTO_EXACT_COND``.
    """
    lam = _as_complex_vector(exponents)
    T = float(T)
    if not T > 0:
        raise ValueError("horizon must be positive")
    G = kernels.gram_block(lam, lam, T)
    G = 0.5 * (G + G.conj().T)
    if not np.all(np.isfinite(G)):
        raise NonFiniteEntry(f"Gram entries overflow for horizon {T}")
    diag = G.diagonal().real
    if np.any(diag <= 0):
        raise NonFiniteEntry("Gram diagonal is not positive")
    scale = 1.0 / np.sqrt(diag)
    Gs = scale[:, None] * G * scale[None, :]
    U, s, Vh = np.linalg.svd(Gs)
    exact = None
    if precision == "auto":
        if s[-1] < s[0] / AUTO_EXACT_COND:
            exact = _ExactFactor(lam, T, _auto_dps(len(lam)))
    elif precision != "double":
        exact = _ExactFactor(lam, T, int(precision))
    G.setflags(write=False)
    return GramMatrix(G, lam, T, float(rank_tol), scale, U, s, Vh, exact)


@dataclass(frozen=True)
class ControlSignal:
    """``f(t) = sum_k c_k conj(exp(-lambda_k t))`` on ``[0, T]``.

    With ``reversed=True`` the signal is ``t -> f(T - t)``, which is how a
    time-reversed moment solution becomes the forward-time control ``u``.
    """

    exponents: np.ndarray
    coefficients: np.ndarray
    horizon: float
    reversed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "exponents", _as_complex_vector(self.exponents))
        object.__setattr__(self, "coefficients", _as_complex_vector(self.coefficients))
        object.__setattr__(self, "horizon", float(self.horizon))
        if self.exponents.shape != self.coefficients.shape:
            raise ValueError("exponents and coefficients must have the same length")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.reversed:
            # f(T - t) = sum c_k exp(-conj(l_k) (T - t)), evaluated per term
            nu = np.conj(self.exponents)
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                e = np.exp(-nu[None, :] * (self.horizon - t.ravel())[:, None])
            return (e @ self.coefficients).reshape(t.shape)
        return kernels.expsum_eval(self.exponents, self.coefficients, t)

    def time_reversed(self) -> "ControlSignal":
        return ControlSignal(self.exponents, self.coefficients, self.horizon, not self.reversed)

    def norm_sq(self, upto: float | None = None) -> float:
        """``int_0^upto |f|^2`` (default: the whole horizon)."""
        T = self.horizon if upto is None else float(upto)
        if T <= 0:
            return 0.0
        c = self.coefficients
        if self.reversed:
            # |f(T-t)|^2 over [0, upto] equals |f(s)|^2 over [T-upto, T]
            full = self._gram(self.horizon)
            head = self._gram(self.horizon - T) if T < self.horizon else np.zeros_like(full)
            G = full - head
        else:
            G = self._gram(T)
        return float(max((c.conj() @ G @ c).real, 0.0))

    def _gram(self, T):
        if T <= 0:
            n = len(self.exponents)
            return np.zeros((n, n), dtype=complex)
        # int_0^T conj(g_n) g_m with g_k = conj(exp(-l_k t)) is G[n, m]
        return kernels.gram_block(self.exponents, self.exponents, T)

    def moments(self, mu, upto: float | None = None) -> np.ndarray:
        """``int_0^upto exp(-mu_j t) g(t) dt`` for the represented signal ``g``."""
        mu = np.asarray(mu, dtype=complex).ravel()
        T = self.horizon if upto is None else float(upto)
        nu = np.conj(self.exponents)
        if not self.reversed:
            M = kernels.gram_block(mu, self.exponents, T)
            return M @ self.coefficients
        # int_0^t e^{-mu s} e^{-nu (T - s)} ds = e^{-nu (T - t)} int_0^t e^{-mu s - nu (t - s)} ds
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            pref = np.exp(-nu * (self.horizon - T))
        K = cross_integral(nu[None, :], mu[:, None], T) * pref[None, :]
        return K @ self.coefficients

    def response(self, lam, t: float) -> np.ndarray:
        """``int_0^t exp(lambda (t - s)) g(s) ds`` for each ``lambda`` (closed form)."""
        lam = np.asarray(lam, dtype=complex).ravel()
        t = float(t)
        nu = np.conj(self.exponents)
        if t <= 0:
            return np.zeros(lam.shape, dtype=complex)
        if not self.reversed:
            K = cross_integral(-lam[:, None], nu[None, :], t)
        else:
            # g(s) = sum c exp(-nu (T - s)); substitute r = t - s
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                pref = np.exp(-nu * (self.horizon - t))
            K = pref[None, :] * t * kernels.phi1((nu[None, :] - lam[:, None]) * t)
        return K @ self.coefficients

    def times_exponential(self, c: float) -> "ControlSignal":
        """The signal multiplied by ``exp(c t)`` (real ``c``)."""
        c = float(c)
        if not self.reversed:
            return ControlSignal(self.exponents - c, self.coefficients, self.horizon)
        coeff = self.coefficients * math.exp(c * self.horizon)
        return ControlSignal(self.exponents + c, coeff, self.horizon, True)

    def sample(self, n_points: int = 201) -> tuple:
        ts = np.linspace(0.0, self.horizon, n_points)
        return ts, self(ts)


@dataclass(frozen=True)
class MomentSolution:
    control: ControlSignal
    energy: float
    residual: float
    rank: int
    size: int

    def __iter__(self):
        # allows ``control, energy = solve_moment_min_norm(...)``
        yield self.control
        yield self.energy


def solve_moment_min_norm(p: MomentProblem, rank_tol=DEFAULT_RANK_TOL,
                          infeasibility_tol=DEFAULT_INFEASIBILITY_TOL,
                          gram: GramMatrix | None = None, precision="auto") -> MomentSolution:
    """Minimal-norm ``f`` satisfying the moments, via the equilibrated SVD pseudoinverse."""
    G = gram if gram is not None else gram_matrix(p.exponents, p.horizon, rank_tol, precision)
    c, energy, residual = G.solve(p.targets)
    if residual > infeasibility_tol:
        raise Infeasible(
            f"moment residual {residual:.3e} exceeds {infeasibility_tol:.1e} (rank {G.rank}/{G.size})",
            residual=residual,
        )
    return MomentSolution(ControlSignal(p.exponents, c, p.horizon), energy, residual, G.rank, G.size)


def _check_diagonal(sys: ModalSystem):
    if sys.jordan_blocks:
        raise NotDiagonalizable("energy computations need a diagonal modal system")


def _active_modes(sys: ModalSystem, y0) -> np.ndarray:
    """Indices of modes entering the moment problem (nonzero control coefficient)."""
    b = sys.control_coeffs
    y = np.asarray(y0.coeffs if isinstance(y0, StateVector) else y0, dtype=complex)
    if y.shape[0] != len(sys):
        raise ValueError(f"state has {y.shape[0]} coefficients, system has {len(sys)} modes")
    dead = b == 0
    if np.any(dead & (y != 0)):
        bad = [sys.modes[i].label or str(i) for i in np.flatnonzero(dead & (y != 0))]
        raise UncontrollableMode(f"modes {bad} have zero control coefficient but nonzero initial data")
    return np.flatnonzero(~dead)


def null_steering_problem(sys: ModalSystem, y0, T) -> MomentProblem:
    """Moment problem whose solution ``f`` gives the null control ``u(t) = f(T - t)``.

    Mode ``n`` contributes the exponent ``-lambda_n`` and the target
    ``-exp(lambda_n T) y0_n / b_n``. Modes with ``b_n = 0`` and ``y0_n = 0``
    never move and are left out.
    """
    _check_diagonal(sys)
    idx = _active_modes(sys, y0)
    y = np.asarray(y0.coeffs if isinstance(y0, StateVector) else y0, dtype=complex)[idx]
    lam = sys.eigenvalues[idx]
    b = sys.control_coeffs[idx]
    T = float(T)
    with np.errstate(over="raise"):
        try:
            d = -np.exp(lam * T) * y / b
        except FloatingPointError as exc:
            raise NonFiniteEntry(f"exp(lambda T) overflows at T={T}") from exc
    return MomentProblem(-lam, T, d)


class MinEnergySolver:
    """Minimal steering energy ``Z_T`` for one system and horizon.

    The Gram factorization depends only on the system and ``T``; it is
    computed once and reused for every initial state.
    """

    def __init__(self, sys: ModalSystem, T: float, rank_tol=DEFAULT_RANK_TOL,
                 infeasibility_tol=DEFAULT_INFEASIBILITY_TOL, precision="auto"):
        _check_diagonal(sys)
        self.sys = sys
        self.T = float(T)
        self.rank_tol = rank_tol
        self.infeasibility_tol = infeasibility_tol
        b = sys.control_coeffs
        self._idx = np.flatnonzero(b != 0)
        lam = sys.eigenvalues[self._idx]
        self._lam = lam
        with np.errstate(over="raise"):
            try:
                self._factor = -np.exp(lam * self.T) / b[self._idx]
            except FloatingPointError as exc:
                raise NonFiniteEntry(f"exp(lambda T) overflows at T={T}") from exc
        self.gram = gram_matrix(-lam, self.T, rank_tol, precision)

    def targets(self, y0) -> np.ndarray:
        _active_modes(self.sys, y0)
        y = np.asarray(y0.coeffs if isinstance(y0, StateVector) else y0, dtype=complex)
        return self._factor * y[self._idx]

    def solve(self, y0) -> MomentSolution:
        d = self.targets(y0)
        c, energy, residual = self.gram.solve(d)
        if residual > self.infeasibility_tol:
            raise Infeasible(f"target unreachable at T={self.T}: residual {residual:.3e}", residual=residual)
        return MomentSolution(ControlSignal(-self._lam, c, self.T), energy, residual,
                              self.gram.rank, self.gram.size)

    def energy(self, y0) -> float:
        return self.solve(y0).energy

    def matrix(self) -> np.ndarray:
        """Hermitian ``M`` with ``Z_T(y) = y^H M y`` (direct, not via polarization)."""
        n = len(self.sys)
        F = np.zeros((len(self._idx), n), dtype=complex)
        F[np.arange(len(self._idx)), self._idx] = self._factor
        M = self.gram.quadratic(F)
        return 0.5 * (M + M.conj().T)


def min_energy(sys: ModalSystem, y0, T, rank_tol=DEFAULT_RANK_TOL, precision="auto") -> MomentSolution:
    """Minimal-norm null control at horizon ``T``; ``control`` is in reversed time."""
    return MinEnergySolver(sys, T, rank_tol, precision=precision).solve(y0)


def null_control(sys: ModalSystem, y0, T, rank_tol=DEFAULT_RANK_TOL, precision="auto") -> ControlSignal:
    """Forward-time minimal-energy control ``u(t) = f(T - t)`` on ``[0, T]``."""
    return min_energy(sys, y0, T, rank_tol, precision).control.time_reversed()


def state_space_energy(sys: ModalSystem, y0, T, omega=None, rank_tol=DEFAULT_RANK_TOL,
                       precision="auto") -> dict:
    """Energy through ``Q_T = Lambda_T Lambda_T^*`` in regularized coordinates.

    Uses ``D_n = b_n / (omega - lambda_n)`` and the target
    ``z = -exp(A T) (omega - A)^{-1} y0``; the control is
    ``f = Lambda_T^* Q_T^+ z`` in reversed time.
    """
    _check_diagonal(sys)
    idx = _active_modes(sys, y0)
    y = np.asarray(y0.coeffs if isinstance(y0, StateVector) else y0, dtype=complex)[idx]
    lam = sys.eigenvalues[idx]
    omega = sys.omega if omega is None else complex(omega)
    D = sys.control_coeffs[idx] / (omega - lam)
    z = -np.exp(lam * T) * y / (omega - lam)
    gram = gram_matrix(-lam, float(T), rank_tol, precision)
    if gram.exact is not None:
        with mp.workdps(gram.exact.dps):
            Dm = [mp.mpc(complex(x)) for x in D]
            Gm = gram.exact.G
            n = len(Dm)
            Q = mp.matrix(n, n)
            for i in range(n):
                for j in range(n):
                    Q[i, j] = Dm[i] * Gm[i, j] * mp.conj(Dm[j])
            zm = mp.matrix([mp.mpc(complex(x)) for x in z])
            wm = mp.lu_solve(Q, zm)
            energy = float(mp.re(sum(mp.conj(wm[i]) * zm[i] for i in range(n))))
            zn = mp.norm(zm)
            residual = float(mp.norm(Q * wm - zm) / zn) if zn != 0 else 0.0
            w = np.array([complex(x) for x in wm])
    else:
        Q = D[:, None] * gram.entries * D.conj()[None, :]
        scale = 1.0 / np.sqrt(Q.diagonal().real)
        U, s, Vh = np.linalg.svd(scale[:, None] * Q * scale[None, :])
        k = int(np.count_nonzero(s >= rank_tol * s[0]))
        proj = U[:, :k].conj().T @ (scale * z)
        w = scale * (Vh[:k].conj().T @ (proj / s[:k]))
        energy = float(np.sum(np.abs(proj) ** 2 / s[:k]))
        zn = np.linalg.norm(scale * z)
        residual = float(np.linalg.norm(scale * (Q @ w - z)) / zn) if zn > 0 else 0.0
    control = ControlSignal(-lam, D.conj() * w, T)
    return {"energy": energy, "control": control, "residual": residual}


def regularized_equivalence_check(sys: ModalSystem, y0, T, omega=None,
                                  rank_tol=DEFAULT_RANK_TOL, precision="auto") -> dict:
    """Compare raw moment-route energy with the regularized ``Q_T`` route."""
    raw = min_energy(sys, y0, T, rank_tol, precision).energy
    reg = state_space_energy(sys, y0, T, omega, rank_tol, precision)["energy"]
    denom = max(abs(raw), abs(reg))
    return {
        "T": float(T),
        "omega": complex(sys.omega if omega is None else omega),
        "raw_energy": raw,
        "regularized_energy": reg,
        "relative_discrepancy": abs(raw - reg) / denom if denom > 0 else 0.0,
    }


@dataclass(frozen=True)
class EnergyReport:
    horizons: np.ndarray
    energies: np.ndarray
    norms: np.ndarray
    residuals: np.ndarray
    feasible: np.ndarray
    fitted_slope: float
    fit_residual: float
    norm_slope: float
    exp_rate: float
    exp_residual: float
    fit_intercept: float = 0.0
    errors: tuple = field(default=())

    def csv_rows(self):
        yield ("T", "energy", "norm", "residual")
        for T, e, n, r in zip(self.horizons, self.energies, self.norms, self.residuals):
            yield (T, e, n, r)

    def fit_summary(self) -> dict:
        return {
            "power_law_energy_slope": self.fitted_slope,
            "power_law_norm_slope": self.norm_slope,
            "power_law_intercept": self.fit_intercept,
            "power_law_residual": self.fit_residual,
            "exponential_rate": self.exp_rate,
            "exponential_residual": self.exp_residual,
            "infeasible_horizons": [float(T) for T, ok in zip(self.horizons, self.feasible) if not ok],
        }


def _linear_fit(x, y):
    if len(x) < 2:
        return math.nan, math.nan, math.nan
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))


def energy_sweep(sys: ModalSystem, y0, horizons, rank_tol=DEFAULT_RANK_TOL,
                 workers: int | None = None, precision="auto") -> EnergyReport:
    """``Z_T(y0)`` over increasing horizons with power-law and exponential fits.

    Horizons whose moment problem is infeasible are flagged (``feasible`` is
    False, energy NaN) rather than dropped.
    """
    Ts = np.asarray(horizons, dtype=float)
    if Ts.ndim != 1 or len(Ts) == 0 or np.any(Ts <= 0) or np.any(np.diff(Ts) <= 0):
        raise ValueError("horizons must be strictly increasing and positive")

    def one(T):
        try:
            s = min_energy(sys, y0, T, rank_tol, precision)
            return s.energy, s.residual, ""
        except (Infeasible, NonFiniteEntry) as exc:
            log.warning("horizon %g: %s", T, exc)
            return math.nan, getattr(exc, "residual", math.nan) or math.nan, f"T={T}: {exc}"

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, Ts))
    else:
        results = [one(T) for T in Ts]
    energies = np.array([r[0] for r in results])
    residuals = np.array([r[1] for r in results])
    feasible = np.isfinite(energies)
    norms = np.sqrt(energies)
    good = feasible & (energies > 0)
    logT, logZ = np.log(Ts[good]), np.log(energies[good])
    slope, intercept, res = _linear_fit(logT, logZ)
    rate, _, exp_res = _linear_fit(Ts[good], logZ)
    return EnergyReport(
        horizons=Ts,
        energies=energies,
        norms=norms,
        residuals=residuals,
        feasible=feasible,
        fitted_slope=slope,
        fit_residual=res,
        norm_slope=0.5 * slope if math.isfinite(slope) else math.nan,
        exp_rate=rate,
        exp_residual=exp_res,
        fit_intercept=intercept,
        errors=tuple(r[2] for r in results if r[2]),
    )


def gauss_legendre_terminal_state(sys: ModalSystem, y0, control: ControlSignal,
                                  nodes_per_unit: int = 64) -> np.ndarray:
    """Terminal state ``y(T)`` under the forward-time ``control`` by quadrature.

    Independent of the closed forms: integrates
    ``exp(lambda (T - s)) b u(s)`` with composite Gauss-Legendre rules.
    """
    y = np.asarray(y0.coeffs if isinstance(y0, StateVector) else y0, dtype=complex)
    T = control.horizon
    lam = sys.eigenvalues
    b = sys.control_coeffs
    x, w = np.polynomial.legendre.leggauss(nodes_per_unit)
    cells = max(1, int(math.ceil(T)))
    edges = np.linspace(0.0, T, cells + 1)
    acc = np.zeros(len(lam), dtype=complex)
    for a, bnd in zip(edges[:-1], edges[1:]):
        s = 0.5 * (bnd - a) * x + 0.5 * (bnd + a)
        ws = 0.5 * (bnd - a) * w
        u = control(s)
        acc += (np.exp(lam[:, None] * (T - s)[None, :]) * (u * ws)[None, :]).sum(axis=1)
    return np.exp(lam * T) * y + b * acc
