"""Two coupled heat equations on ``[0, pi]`` with a common boundary control.

    y_t - y_xx = A0 y,     y(t, 0) = B0 u(t),     y(t, pi) = 0.

In the sine basis ``e_k(x) = sqrt(2/pi) sin(k x)`` the generator is
``-k^2 + A0`` on each Fourier level, so the spectrum is ``{mu_i - k^2}``
with ``mu_i`` the eigenvalues of ``A0``. After diagonalizing ``A0 = P diag(mu) P^{-1}``
the boundary control enters mode ``(k, i)`` with weight ``k (P^{-1} B0)_i``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NotDiagonalizable
from .modal_core import JordanChain, Mode, ModalSystem, StateVector

SINE_BASIS_NORMALIZATION = math.sqrt(2.0 / math.pi)
RANK_TOL = 1e-10
RESONANCE_TOL = 1e-9
# slack on Re(mu) <= 1 absorbing eigenvalue rounding
SPECTRAL_TOL = 1e-9

CITE_RANK = "Kalman-type rank condition: rank[B0, A0 B0] = 2"
CITE_RESONANCE = "non-resonance: mu1 - mu2 != j^2 - k^2 for j != k"
CITE_SPECTRAL = "spectral criterion: Re(mu_i) <= 1 for both eigenvalues of A0"
CITE_EQUIV = "null controllability plus the spectral criterion is equivalent to NCVE"


@dataclass(frozen=True)
class ParabolicSystem:
    A0: np.ndarray
    B0: np.ndarray
    max_mode: int = 12
    resonance_bound: int | None = None

    def __post_init__(self):
        A = np.array(self.A0, dtype=float).reshape(2, 2)
        B = np.array(self.B0, dtype=float).ravel()
        if B.shape != (2,):
            raise ValueError("B0 must have two entries")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("A0 and B0 must be finite")
        if int(self.max_mode) < 1:
            raise ValueError("max_mode must be at least 1")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A0", A)
        object.__setattr__(self, "B0", B)
        object.__setattr__(self, "max_mode", int(self.max_mode))

    @classmethod
    def from_dict(cls, doc: dict) -> "ParabolicSystem":
        if not isinstance(doc, dict):
            raise ConfigError("system: expected a mapping")
        try:
            A = [float(x) for x in doc["A0"]]
        except KeyError as exc:
            raise ConfigError("A0: missing") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"A0: {exc}") from exc
        if len(A) != 4:
            raise ConfigError("A0: expected 4 numbers (row-major 2x2)")
        try:
            B = [float(x) for x in doc["B0"]]
        except KeyError as exc:
            raise ConfigError("B0: missing") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"B0: {exc}") from exc
        if len(B) != 2:
            raise ConfigError("B0: expected 2 numbers")
        K = doc.get("K", 12)
        if not isinstance(K, int) or K < 1:
            raise ConfigError("K: expected a positive integer")
        if not all(math.isfinite(x) for x in A + B):
            raise ConfigError("A0/B0: entries must be finite")
        return cls(np.array(A).reshape(2, 2), np.array(B), K)

    def to_dict(self) -> dict:
        return {"A0": [float(x) for x in self.A0.ravel()], "B0": [float(x) for x in self.B0], "K": self.max_mode}


@dataclass(frozen=True)
class SpectrumReport:
    mu: tuple
    branch_eigenvalues: np.ndarray
    branch_index: tuple
    diagonalizable: bool
    transform: np.ndarray

    def as_dict(self) -> dict:
        return {
            "mu": [[z.real, z.imag] for z in self.mu],
            "diagonalizable": self.diagonalizable,
            "eigenvalues": [[z.real, z.imag] for z in self.branch_eigenvalues],
            "index": [list(ix) for ix in self.branch_index],
        }


def _eig2(A: np.ndarray):
    tr = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    half = 0.5 * tr
    root = cmath.sqrt(half * half - det)
    mu1, mu2 = half + root, half - root
    # real eigenvalues come out with a zero imaginary part
    if abs(mu1.imag) == 0.0:
        mu1, mu2 = complex(mu1.real), complex(mu2.real)
    return mu1, mu2


def _eigvec(A: np.ndarray, mu: complex) -> np.ndarray:
    a, b, c, d = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
    cand = [np.array([b, mu - a], dtype=complex), np.array([mu - d, c], dtype=complex)]
    v = max(cand, key=np.linalg.norm)
    n = np.linalg.norm(v)
    if n == 0:
        return None
    return v / n


def spectrum(sys: ParabolicSystem) -> SpectrumReport:
    """Eigenvalues ``mu_i`` of ``A0`` and the branches ``mu_i - k^2``, ``k = 1..K``."""
    A = sys.A0
    mu1, mu2 = _eig2(A)
    scale = 1.0 + np.abs(A).max()
    K = sys.max_mode
    if abs(mu1 - mu2) > 1e-10 * scale:
        v1, v2 = _eigvec(A, mu1), _eigvec(A, mu2)
        if v1 is None:
            v1 = np.array([1, 0], dtype=complex)
        if v2 is None:
            v2 = np.array([0, 1], dtype=complex)
        P = np.column_stack([v1, v2])
        diag = True
    else:
        mu = 0.5 * (mu1 + mu2)
        mu1 = mu2 = mu
        N = A - mu.real * np.eye(2)
        if np.abs(N).max() <= 1e-10 * scale:
            P = np.eye(2, dtype=complex)
            diag = True
        else:
            # Jordan basis: v1 = N v2 with v2 chosen so that N v2 != 0
            v2 = np.array([1.0, 0.0]) if np.linalg.norm(N[:, 0]) >= np.linalg.norm(N[:, 1]) else np.array([0.0, 1.0])
            v1 = N @ v2
            P = np.column_stack([v1, v2]).astype(complex)
            diag = False
    lam, idx = [], []
    for k in range(1, K + 1):
        for i, m in enumerate((mu1, mu2)):
            lam.append(m - k * k)
            idx.append((k, i + 1))
    return SpectrumReport((mu1, mu2), np.array(lam, dtype=complex), tuple(idx), diag, P)


@dataclass(frozen=True)
class ControllabilityResult:
    controllable: bool
    rank: int
    rank_ok: bool
    resonance_ok: bool
    resonance_pair: tuple | None
    detail: str


def find_resonance(diff: complex, bound: int, tol: float = RESONANCE_TOL):
    """A pair ``(j, k)``, ``j != k <= bound``, with ``j^2 - k^2 = diff``, or None."""
    if abs(diff.imag) > tol:
        return None
    r = diff.real
    for j in range(1, bound + 1):
        k2 = j * j - r
        if k2 < 0.5:
            continue
        k = int(round(math.sqrt(k2)))
        for kk in (k - 1, k, k + 1):
            if 1 <= kk <= bound and kk != j and abs(j * j - kk * kk - r) <= tol:
                return (j, kk)
    return None


def controllability_check(sys: ParabolicSystem) -> ControllabilityResult:
    """Rank of ``[B0, A0 B0]`` and absence of resonances between the two branches."""
    M = np.column_stack([sys.B0, sys.A0 @ sys.B0])
    s = np.linalg.svd(M, compute_uv=False)
    rank = 0 if s[0] == 0 else int(np.count_nonzero(s > RANK_TOL * s[0]))
    rank_ok = rank == 2
    mu1, mu2 = spectrum(sys).mu
    diff = mu1 - mu2
    bound = sys.resonance_bound or 10 * sys.max_mode
    bound = max(bound, int(math.ceil(abs(diff))) + 2)
    pair = find_resonance(diff, bound)
    resonance_ok = pair is None
    parts = []
    if not rank_ok:
        parts.append(f"rank[B0, A0 B0] = {rank} < 2")
    if not resonance_ok:
        parts.append(f"resonance: mu1 - mu2 = {diff.real:.12g} = {pair[0]}^2 - {pair[1]}^2")
    detail = "; ".join(parts) if parts else "rank 2 and no resonance"
    return ControllabilityResult(rank_ok and resonance_ok, rank, rank_ok, resonance_ok, pair, detail)


@dataclass(frozen=True)
class NcveVerdict:
    controllable: bool
    spectral_ok: bool
    ncve: bool
    spectral_bound: float
    reasons: tuple
    failed: tuple = ()
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "controllable": self.controllable,
            "spectral_ok": self.spectral_ok,
            "ncve": self.ncve,
            "spectral_bound": self.spectral_bound,
            "failed": list(self.failed),
            "reasons": list(self.reasons),
            "details": self.details,
        }


def ncve_verdict(sys: ParabolicSystem) -> NcveVerdict:
    """NCVE iff controllable and ``Re(mu_i) <= 1`` for both ``i`` (the boundary counts as NCVE)."""
    ctrl = controllability_check(sys)
    spec = spectrum(sys)
    re_max = max(m.real for m in spec.mu)
    spectral_ok = re_max <= 1.0 + SPECTRAL_TOL * (1.0 + abs(re_max))
    failed = []
    reasons = [CITE_RANK, CITE_RESONANCE, CITE_SPECTRAL, CITE_EQUIV]
    if not ctrl.rank_ok:
        failed.append("controllability")
    if not ctrl.resonance_ok:
        failed.append("resonance")
        if "controllability" not in failed:
            failed.insert(0, "controllability")
    if not spectral_ok:
        failed.append("spectral")
    return NcveVerdict(
        controllable=ctrl.controllable,
        spectral_ok=spectral_ok,
        ncve=ctrl.controllable and spectral_ok,
        spectral_bound=re_max - 1.0,
        reasons=tuple(reasons),
        failed=tuple(failed),
        details={
            "mu": [[m.real, m.imag] for m in spec.mu],
            "rank": ctrl.rank,
            "resonance_pair": list(ctrl.resonance_pair) if ctrl.resonance_pair else None,
            "controllability": ctrl.detail,
            "max_re_mu": re_max,
        },
    )


class SineCoefficientMapper:
    """Maps sine coefficients of the two initial components to modal coordinates.

    ``v[k-1], w[k-1]`` are the coefficients of ``y0_1, y0_2`` against
    ``e_k(x) = sqrt(2/pi) sin(k x)``.
    """

    basis_normalization = SINE_BASIS_NORMALIZATION

    def __init__(self, Pinv: np.ndarray, K: int):
        self.Pinv = Pinv
        self.K = K

    def __call__(self, v, w) -> StateVector:
        v = np.asarray(v, dtype=complex).ravel()
        w = np.asarray(w, dtype=complex).ravel()
        if v.shape != (self.K,) or w.shape != (self.K,):
            raise ValueError(f"expected {self.K} sine coefficients per component")
        z = self.Pinv @ np.vstack([v, w])
        return StateVector(z.T.ravel())


def to_modal(sys: ParabolicSystem, omega=None):
    """Diagonal modal truncation and the sine-coefficient mapper.

    Mode order is ``(k=1, i=1), (k=1, i=2), (k=2, i=1), ...``.
    """
    spec = spectrum(sys)
    if not spec.diagonalizable:
        raise NotDiagonalizable("A0 has a Jordan block; energies are only computed for diagonalizable A0")
    Pinv = np.linalg.inv(spec.transform)
    g = Pinv @ sys.B0.astype(complex)
    modes = []
    for lam, (k, i) in zip(spec.branch_eigenvalues, spec.branch_index):
        modes.append(Mode(lam, k * g[i - 1], f"k={k},i={i}"))
    return ModalSystem(tuple(modes), (), omega), SineCoefficientMapper(Pinv, sys.max_mode)


def jordan_chains(sys: ParabolicSystem) -> tuple:
    """One length-2 chain per Fourier level when ``A0`` is a Jordan block."""
    spec = spectrum(sys)
    if spec.diagonalizable:
        return ()
    mu = spec.mu[0]
    return tuple(JordanChain(mu - k * k, 2) for k in range(1, sys.max_mode + 1))


def operator_matrix(sys: ParabolicSystem) -> np.ndarray:
    """Truncated generator ``diag(-k^2) (x) I + I (x) A0`` on the sine basis."""
    K = sys.max_mode
    D = np.diag([-float(k * k) for k in range(1, K + 1)])
    return np.kron(D, np.eye(2)) + np.kron(np.eye(K), sys.A0)
