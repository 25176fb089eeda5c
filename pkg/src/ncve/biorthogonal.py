"""Biorthogonal families for real exponentials on ``[0, T]``.

For ``Phi_n(t) = exp(-lambda_n t)`` the minimal-norm biorthogonal family is
``Psi_m = sum_n (G^{-1})[n, m] Phi_n`` with ``G`` the Gram matrix of the
``Phi_n``. These Gram matrices are far too ill-conditioned for double
precision (condition numbers of 1e10 and beyond for eight members), so the
inverse and all member coefficients are kept in mpmath. Float views are
available for plotting and for passing members on as
:class:`~ncve.moment_gramian.ControlSignal` objects.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from .errors import IllConditioned, PreconditionViolated, SeriesDiverged
from .modal_core import ModalSystem, StateVector
from .moment_gramian import ControlSignal

BIORTHOGONALITY_TOL = 1e-8
UNIT_CELL_TOL = 1e-8


def default_dps(n: int) -> int:
    """Working digits for an ``n``-member family (Gram conditioning grows fast in ``n``)."""
    return 30 + 3 * n


def _segment_integral(s, a, b):
    """``int_a^b exp(-s t) dt`` in mpmath, stable for small and large ``s``."""
    L = b - a
    if L == 0:
        return mp.mpf(0)
    if s == 0:
        return L
    return mp.exp(-s * a) * (-mp.expm1(-s * L)) / s


@dataclass(frozen=True)
class ExponentialFamily:
    """``Phi_n(t) = exp(-lambda_n t)`` on ``[0, horizon]`` with strictly increasing ``lambda_n >= 0``.

    ``next_exponent`` is the first exponent the generating rule would add
    beyond the stored truncation; it feeds the series truncation estimate.
    """

    exponents: tuple
    horizon: float
    next_exponent: float | None = None

    def __post_init__(self):
        lam = tuple(float(x) for x in self.exponents)
        if not lam:
            raise ValueError("family needs at least one exponent")
        if any(not math.isfinite(x) or x < 0 for x in lam):
            raise ValueError("exponents must be finite and nonnegative")
        if any(b <= a for a, b in zip(lam, lam[1:])):
            raise ValueError("exponents must be strictly increasing")
        T = float(self.horizon)
        if not (T > 0 and math.isfinite(T)):
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "exponents", lam)
        object.__setattr__(self, "horizon", T)

    def __len__(self):
        return len(self.exponents)

    def with_horizon(self, T: float) -> "ExponentialFamily":
        return ExponentialFamily(self.exponents, T, self.next_exponent)

    def shifted(self, c: float) -> "ExponentialFamily":
        """Exponents ``lambda_n + c``, i.e. members multiplied by ``exp(-c t)``."""
        nxt = None if self.next_exponent is None else self.next_exponent + c
        return ExponentialFamily(tuple(x + c for x in self.exponents), self.horizon, nxt)


def interleaved_square_rule(shifts=(1.0, 0.5)):
    """Rule ``r -> (r^2 - s for s in shifts)``, producing ``r^2 - 1, r^2 - mu, ...``."""
    shifts = tuple(float(s) for s in shifts)

    def rule(r: int):
        return [r * r - s for s in shifts]

    return rule


def generate_family(rule, n_members: int, T: float) -> ExponentialFamily:
    """First ``n_members`` exponents produced by ``rule(1), rule(2), ...``, sorted."""
    vals = []
    r = 1
    while len(vals) < n_members + 1:
        vals.extend(rule(r))
        r += 1
    vals = sorted(vals)
    return ExponentialFamily(tuple(vals[:n_members]), T, vals[n_members])


def parabolic_family(mu: float, n_members: int, T: float) -> ExponentialFamily:
    """Negated eigenvalues of the diagonal critical parabolic system: ``r^2 - 1`` and ``r^2 - mu``."""
    return generate_family(interleaved_square_rule((1.0, mu)), n_members, T)


def summability_check(rule, n_terms: int = 4096) -> dict:
    """Check that the rule grows fast enough for ``sum 1/lambda_n`` to converge.

    Fits the growth exponent ``p`` in ``lambda_n ~ n^p`` over the second half
    of ``n_terms`` generated exponents; the reciprocal series converges iff
    ``p > 1``.
    """
    vals = []
    r = 1
    while len(vals) < n_terms:
        vals.extend(rule(r))
        r += 1
    lam = np.sort(np.asarray(vals[:n_terms], dtype=float))
    n = np.arange(1, n_terms + 1)
    half = slice(n_terms // 2, n_terms)
    pos = lam[half] > 0
    p = float(np.polyfit(np.log(n[half][pos]), np.log(lam[half][pos]), 1)[0])
    nz = lam[lam > 0]
    summable = p > 1.0 + 1e-3
    return {
        "growth_exponent": p,
        "summable": summable,
        "partial_sum": float(np.sum(1.0 / nz)),
        "tail_estimate": float(lam.size / lam[-1] / (p - 1.0)) if summable else math.inf,
    }


@dataclass(frozen=True)
class ExactExpSum:
    """``f(t) = sum_k c_k exp(-lambda_k t)`` on ``[0, horizon]`` with mpmath coefficients."""

    exponents: tuple
    coeffs: tuple
    horizon: float
    dps: int = 50

    def moment(self, gamma, a=0.0, b=None):
        """``int_a^b exp(-gamma t) f(t) dt`` (default: the whole horizon), as an mpmath number."""
        with mp.workdps(self.dps):
            a = mp.mpf(a)
            b = mp.mpf(self.horizon if b is None else b)
            g = mp.mpmathify(gamma)
            return mp.fsum(c * _segment_integral(g + lam, a, b)
                           for c, lam in zip(self.coeffs, self.exponents))

    def inner(self, other: "ExactExpSum"):
        """``int_0^T f(t) conj(g(t)) dt`` with the horizon of ``self``."""
        with mp.workdps(max(self.dps, other.dps)):
            T = mp.mpf(self.horizon)
            return mp.fsum(ci * mp.conj(cj) * _segment_integral(li + lj, 0, T)
                           for ci, li in zip(self.coeffs, self.exponents)
                           for cj, lj in zip(other.coeffs, other.exponents))

    def norm_sq(self) -> float:
        return float(mp.re(self.inner(self)))

    def norm(self) -> float:
        return math.sqrt(max(self.norm_sq(), 0.0))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with mp.workdps(self.dps):
            vals = [complex(mp.fsum(c * mp.exp(-lam * mp.mpf(float(s)))
                                    for c, lam in zip(self.coeffs, self.exponents)))
                    for s in t.ravel()]
        out = np.array(vals, dtype=complex).reshape(t.shape)
        return out.real if np.all(out.imag == 0) else out

    def scaled(self, alpha) -> "ExactExpSum":
        with mp.workdps(self.dps):
            a = mp.mpmathify(alpha)
            return ExactExpSum(self.exponents, tuple(a * c for c in self.coeffs), self.horizon, self.dps)

    def to_control_signal(self) -> ControlSignal:
        """Float view; coefficients may be large, so pointwise values lose digits."""
        lam = np.array([float(x) for x in self.exponents], dtype=complex)
        c = np.array([complex(x) for x in self.coeffs], dtype=complex)
        return ControlSignal(lam, c, self.horizon)


def _combine(terms, horizon, dps) -> ExactExpSum:
    """Sum of ``alpha * member`` pairs sharing one exponent list."""
    terms = list(terms)
    lam = terms[0][1].exponents
    with mp.workdps(dps):
        coeffs = [mp.mpf(0)] * len(lam)
        for alpha, member in terms:
            a = mp.mpmathify(alpha)
            coeffs = [acc + a * c for acc, c in zip(coeffs, member.coeffs)]
    return ExactExpSum(lam, tuple(coeffs), horizon, dps)


@dataclass(frozen=True)
class BiorthogonalFamily:
    family: ExponentialFamily
    members: tuple
    gram_cond: float
    residual: np.ndarray
    dps: int

    @property
    def max_residual(self) -> float:
        return float(np.abs(self.residual).max())

    def norms(self) -> np.ndarray:
        return np.array([m.norm() for m in self.members])

    def to_csv(self, path) -> None:
        n = len(self.members)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "exponent", "norm"] + [f"c{k}" for k in range(n)])
            for i, (lam, m) in enumerate(zip(self.family.exponents, self.members)):
                w.writerow([i + 1, _fmt(lam), _fmt(m.norm())] + [_fmt(float(c)) for c in m.coeffs])


def _fmt(x: float) -> str:
    return "%.17g" % x


def exact_gram(exponents, T, dps):
    with mp.workdps(dps):
        lam = [mp.mpf(x) for x in exponents]
        Tm = mp.mpf(T)
        n = len(lam)
        G = mp.matrix(n, n)
        for i in range(n):
            for j in range(n):
                G[i, j] = _segment_integral(lam[i] + lam[j], 0, Tm)
        return G


def min_norm_biorthogonal(fam: ExponentialFamily, dps: int | None = None,
                          rank_tol: float = 1e-12) -> BiorthogonalFamily:
    """Minimal-norm family ``Psi_m = sum_n (G^{-1})[n, m] Phi_n`` and its residual matrix.

    ``rank_tol`` is applied to the singular values of the equilibrated Gram
    matrix computed at ``dps`` digits.
    """
    n = len(fam)
    dps = dps or default_dps(n)
    with mp.workdps(dps):
        G = exact_gram(fam.exponents, fam.horizon, dps)
        s = [mp.sqrt(G[i, i]) for i in range(n)]
        Gs = mp.matrix(n, n)
        for i in range(n):
            for j in range(n):
                Gs[i, j] = G[i, j] / (s[i] * s[j])
        sv = mp.svd_r(Gs, compute_uv=False)
        smax, smin = max(sv), min(sv)
        rank = sum(1 for x in sv if x >= rank_tol * smax)
        if rank < n:
            raise IllConditioned(f"effective rank {rank} < {n} at relative threshold {rank_tol}")
        Ginv = mp.inverse(G)
        lam = tuple(mp.mpf(x) for x in fam.exponents)
        members = tuple(
            ExactExpSum(lam, tuple(Ginv[k, m] for k in range(n)), fam.horizon, dps)
            for m in range(n)
        )
        R = np.zeros((n, n))
        for m, psi in enumerate(members):
            for k in range(n):
                R[m, k] = float(psi.moment(lam[k]) - (1 if m == k else 0))
        cond = float(mp.norm(G, 1) * mp.norm(Ginv, 1))
    return BiorthogonalFamily(fam, members, cond, R, dps)


def norm_growth_slope(bf: BiorthogonalFamily, start: int = 1) -> float:
    """Slope of ``log ||Psi_n||`` against ``lambda_n`` over members ``start..end`` (0-based)."""
    lam = np.asarray(bf.family.exponents[start:])
    logs = np.log(bf.norms()[start:])
    return float(np.polyfit(lam, logs, 1)[0])


@dataclass(frozen=True)
class PiecewiseSignal:
    """``t -> unit_cell(t - m)`` on ``[m, m + 1)`` for ``m = 0..copies-1``."""

    unit_cell: ExactExpSum
    copies: int

    @property
    def horizon(self) -> float:
        return float(self.copies)

    def moment(self, gamma):
        """``int_0^N exp(-gamma t) f(t) dt = sum_m exp(-gamma m) * cell moment``."""
        cell = self.unit_cell
        with mp.workdps(cell.dps):
            g = mp.mpmathify(gamma)
            if g == 0:
                geo = mp.mpf(self.copies)
            else:
                geo = -mp.expm1(-g * self.copies) / (-mp.expm1(-g))
            return geo * cell.moment(g)

    def integral(self):
        return self.moment(0)

    def norm_sq(self) -> float:
        return self.copies * self.unit_cell.norm_sq()

    def inner_expsum(self, h: ExactExpSum):
        """``int_0^N f(t) conj(h(t)) dt`` for an exponential sum ``h`` on ``[0, N]``."""
        cell = self.unit_cell
        with mp.workdps(max(cell.dps, h.dps)):
            total = mp.mpf(0)
            for c, lam in zip(h.coeffs, h.exponents):
                geo = mp.mpf(self.copies) if lam == 0 else -mp.expm1(-lam * self.copies) / (-mp.expm1(-lam))
                total += mp.conj(c) * geo * cell.moment(lam)
            return total

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        m = np.clip(np.floor(t), 0, self.copies - 1)
        return self.unit_cell(t - m)

    def sample(self, n_points: int = 201):
        ts = np.linspace(0.0, self.horizon, n_points)
        return ts, self(ts)


def _unit_cell_defects(psi: ExactExpSum, exponents) -> tuple:
    with mp.workdps(psi.dps):
        mean = abs(psi.moment(0) - 1)
        ortho = max((abs(psi.moment(lam)) for lam in exponents[1:]), default=mp.mpf(0))
    return float(mean), float(ortho)


def periodic_extension(psi1_unit: ExactExpSum, N: int, fam: ExponentialFamily) -> PiecewiseSignal:
    """Repeat a unit-interval ``Psi_1`` ``N`` times.

    Orthogonality to ``Phi_n`` (``n > 1``) carries over cell by cell, since
    each cell contributes ``exp(-lambda_n m)`` times the unit-cell moment.
    """
    N = int(N)
    if N < 1:
        raise ValueError("N must be a positive integer")
    if fam.exponents[0] != 0.0:
        raise PreconditionViolated("periodic extension needs lambda_1 = 0 in the family")
    if abs(psi1_unit.horizon - 1.0) > 0:
        raise PreconditionViolated("unit cell must live on [0, 1]")
    mean, ortho = _unit_cell_defects(psi1_unit, fam.exponents)
    if mean > UNIT_CELL_TOL or ortho > UNIT_CELL_TOL:
        raise PreconditionViolated(
            f"unit cell fails biorthogonality: |int Psi - 1| = {mean:.2e}, max |int Psi Phi_n| = {ortho:.2e}"
        )
    return PiecewiseSignal(psi1_unit, N)


@dataclass(frozen=True)
class SeriesSolution:
    """Moment-series control ``f`` (reversed time: ``u(t) = f(T - t)``)."""

    horizon: float
    energy: float
    moment_residuals: np.ndarray
    targets: np.ndarray
    smooth_part: ExactExpSum | None
    periodic_part: PiecewiseSignal | None
    alpha: complex | None
    increment_norms: np.ndarray
    truncation_weight: float
    info: dict = field(default_factory=dict)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        if self.smooth_part is not None:
            out = out + self.smooth_part(t)
        if self.periodic_part is not None:
            out = out + self.alpha * self.periodic_part(t)
        return out

    def forward(self, t):
        """Forward-time control ``u(t) = f(T - t)``."""
        return self(self.horizon - np.asarray(t, dtype=float))

    def sample(self, n_points: int = 201):
        ts = np.linspace(0.0, self.horizon, n_points)
        return ts, self(ts)


def _match_modes(sys: ModalSystem, fam: ExponentialFamily, tol=1e-12):
    """Family index for each system mode (None when the family lacks that exponent)."""
    fam_lam = np.asarray(fam.exponents)
    out = []
    for lam in sys.eigenvalues:
        mu = -lam
        if abs(mu.imag) > tol:
            out.append(None)
            continue
        hit = np.flatnonzero(np.abs(fam_lam - mu.real) <= tol * (1 + abs(mu)))
        out.append(int(hit[0]) if hit.size else None)
    return out


def moment_series_solution(sys: ModalSystem, y0, T, fam: BiorthogonalFamily,
                           cauchy_tol: float = 1e-10) -> SeriesSolution:
    """Series solution ``f = sum_n d_n Psi_n`` of the null-steering moment problem.

    When the zero exponent is excited, ``Psi_1`` is replaced by the periodic
    extension of the unit-interval ``Psi_1`` and the split
    ``f = alpha * Psi_1^N + h^N`` is used, with ``alpha`` from
    ``d_1 - int h^N = N alpha``; ``T`` must then be an integer ``N``.

    Raises :class:`SeriesDiverged` when the last series increment is not
    below ``cauchy_tol`` relative to the partial sum.
    """
    y = np.asarray(y0.coeffs if isinstance(y0, StateVector) else y0, dtype=complex)
    if len(y) != len(sys):
        raise ValueError("state length does not match the system")
    T = float(T)
    if abs(fam.family.horizon - T) > 1e-12 * T:
        raise PreconditionViolated(f"family horizon {fam.family.horizon} differs from T={T}")
    lam = sys.eigenvalues
    b = sys.control_coeffs
    idx = _match_modes(sys, fam.family)
    n = len(fam.members)
    d = np.zeros(n, dtype=complex)
    for k, j in enumerate(idx):
        if b[k] == 0:
            if y[k] != 0:
                raise PreconditionViolated(f"mode {k} is excited but has zero control coefficient")
            continue
        if j is None:
            if y[k] != 0:
                raise PreconditionViolated(f"excited mode {k} (lambda={lam[k]}) is not in the family")
            continue
        d[j] = -np.exp(lam[k] * T) * y[k] / b[k]

    dps = fam.dps
    zero_excited = fam.family.exponents[0] == 0.0 and d[0] != 0
    start = 1 if zero_excited else 0
    incr = np.array([abs(d[j]) * fam.members[j].norm() for j in range(n)])
    active = [j for j in range(start, n) if d[j] != 0]
    smooth = _combine([(complex(d[j]), fam.members[j]) for j in active], T, dps) if active else None

    periodic, alpha = None, None
    if zero_excited:
        N = int(round(T))
        if abs(N - T) > 1e-12 or N < 1:
            raise PreconditionViolated("the periodic construction needs an integer horizon")
        unit = min_norm_biorthogonal(fam.family.with_horizon(1.0), dps)
        periodic = periodic_extension(unit.members[0], N, fam.family)
        with mp.workdps(dps):
            h_mean = smooth.moment(0) if smooth is not None else mp.mpf(0)
            alpha = complex((mp.mpc(complex(d[0])) - h_mean) / N)

    with mp.workdps(dps):
        res = np.zeros(n)
        for j, gamma in enumerate(fam.family.exponents):
            val = mp.mpf(0)
            if smooth is not None:
                val += smooth.moment(gamma)
            if periodic is not None:
                val += mp.mpc(alpha) * periodic.moment(gamma)
            res[j] = float(abs(val - mp.mpc(complex(d[j]))))
        energy = mp.mpf(0)
        if smooth is not None:
            energy += mp.re(smooth.inner(smooth))
        if periodic is not None:
            a = mp.mpc(alpha)
            energy += abs(a) ** 2 * periodic.norm_sq()
            if smooth is not None:
                energy += 2 * mp.re(a * periodic.inner_expsum(smooth))
        energy = float(energy)

    total = math.sqrt(max(energy, 0.0))
    nonzero = np.flatnonzero(incr)
    if nonzero.size and total > 0:
        last = incr[nonzero[-1]]
        if nonzero.size > 1 and last > cauchy_tol * total:
            raise SeriesDiverged(
                f"last series increment {last:.3e} exceeds {cauchy_tol:.0e} x partial-sum norm {total:.3e}"
            )
    nxt = fam.family.next_exponent
    weight = math.exp(-nxt * T) if nxt is not None else math.nan
    return SeriesSolution(
        horizon=T,
        energy=energy,
        moment_residuals=res,
        targets=d,
        smooth_part=smooth,
        periodic_part=periodic,
        alpha=alpha,
        increment_norms=incr,
        truncation_weight=weight,
        info={"periodic": bool(zero_excited), "members": n},
    )


def sampled_rows(signal, n_points: int = 201):
    """``(t, Re f, Im f)`` rows for plotting any signal with a ``sample`` method."""
    ts, vals = signal.sample(n_points)
    vals = np.asarray(vals, dtype=complex)
    return [(float(t), float(v.real), float(v.imag)) for t, v in zip(ts, vals)]
