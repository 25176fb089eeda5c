"""Retarded systems ``x'(t) = sum_k A_k x(t - k tau) + B u(t)``.

The generator's eigenvalues are the zeros of the characteristic function

    Delta(lambda) = det(lambda I - sum_k A_k exp(-lambda k tau)).

Zeros are counted with the argument principle along rectangle boundaries
(the phase of ``Delta`` is tracked adaptively, which integrates
``Delta'/Delta`` exactly up to rounding), isolated by recursive bisection
and polished with Newton's method using the analytic derivative.

For ``Re(lambda) >= 0`` every zero obeys ``|lambda| <= sum_k ||A_k||_2``,
because ``|exp(-lambda k tau)| <= 1`` there. That bound makes the
right-half-plane search finite and the verdict certified.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BoundaryRoot, ConfigError, InconclusiveWindow, NonConvergent
from .parabolic import NcveVerdict

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
WINDING_TOL = 1e-6
ROOT_RESIDUAL_TOL = 1e-9
UNSTABLE_TOL = 1e-10
DEFAULT_LEFT_MARGIN = 0.25

CITE_ROOTS = "eigenvalues are the zeros of det(lambda I - sum_k A_k exp(-lambda k tau))"
CITE_RANK = "null controllable iff rank[lambda I - sum_k A_k exp(-lambda k tau), B] = n at every root"
CITE_SPECTRAL = "NCVE requires no characteristic root with Re(lambda) > 0"
CITE_EQUIV = "for these retarded systems null controllability plus the spectral condition is equivalent to NCVE"
CITE_BOUND = "certified bound: Re(lambda) >= 0 implies |lambda| <= sum_k ||A_k||_2"


@dataclass(frozen=True)
class DelaySystem:
    A_matrices: tuple
    B: np.ndarray
    tau: float

    def __post_init__(self):
        mats = [np.atleast_2d(np.array(A, dtype=float)) for A in self.A_matrices]
        if len(mats) < 2:
            raise ValueError("need A_0 and at least one delayed matrix A_1..A_M")
        n = mats[0].shape[0]
        if n < 1 or any(A.shape != (n, n) for A in mats):
            raise ValueError("A matrices must all be n x n")
        B = np.array(self.B, dtype=float)
        B = B.reshape(n, -1) if B.ndim < 2 else B
        if B.shape[0] != n or B.shape[1] < 1:
            raise ValueError("B must be n x m with m >= 1")
        tau = float(self.tau)
        if not (tau > 0 and math.isfinite(tau)):
            raise ValueError("tau must be positive")
        if not all(np.all(np.isfinite(A)) for A in mats) or not np.all(np.isfinite(B)):
            raise ValueError("entries must be finite")
        for A in mats:
            A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A_matrices", tuple(mats))
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "tau", tau)

    @property
    def n(self) -> int:
        return self.A_matrices[0].shape[0]

    @property
    def coefs(self) -> np.ndarray:
        return np.ascontiguousarray(np.stack(self.A_matrices).astype(complex))

    def root_bound(self) -> float:
        """``sum_k ||A_k||_2``: modulus bound for roots with nonnegative real part."""
        return float(sum(np.linalg.norm(A, 2) for A in self.A_matrices))

    @classmethod
    def from_dict(cls, doc: dict) -> "DelaySystem":
        if not isinstance(doc, dict):
            raise ConfigError("system: expected a mapping")
        try:
            n, m, M = int(doc["n"]), int(doc["m"]), int(doc["M"])
        except KeyError as exc:
            raise ConfigError(f"{exc.args[0]}: missing") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"n/m/M: {exc}") from exc
        if n < 1 or m < 1 or M < 1:
            raise ConfigError("n, m, M: must be >= 1")
        try:
            tau = float(doc["tau"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("tau: expected a positive number") from exc
        if not tau > 0:
            raise ConfigError("tau: expected a positive number")
        As = doc.get("A")
        if not isinstance(As, list) or len(As) != M + 1:
            raise ConfigError(f"A: expected a list of M+1 = {M + 1} row-major matrices")
        mats = []
        for k, A in enumerate(As):
            try:
                arr = np.array([float(x) for x in A]).reshape(n, n)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"A[{k}]: expected {n * n} numbers") from exc
            mats.append(arr)
        try:
            B = np.array([float(x) for x in doc["B"]]).reshape(n, m)
        except KeyError as exc:
            raise ConfigError("B: missing") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"B: expected {n * m} numbers") from exc
        return cls(tuple(mats), B, tau)


def scalar_delay_system(a: float, b: float, tau: float = 1.0, control: float = 1.0) -> DelaySystem:
    """``x' = -a x(t) - b x(t - tau) + control * u``."""
    return DelaySystem(([[-a]], [[-b]]), [[control]], tau)


@dataclass(frozen=True)
class RootSearchRegion:
    re_min: float
    re_max: float
    im_min: float
    im_max: float
    max_roots: int = 1000
    tol: float = 1e-13

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("region must have re_min < re_max and im_min < im_max")

    @property
    def corners(self):
        return (complex(self.re_min, self.im_min), complex(self.re_max, self.im_min),
                complex(self.re_max, self.im_max), complex(self.re_min, self.im_max))

    def contains(self, z: complex, pad: float = 0.0) -> bool:
        return (self.re_min - pad <= z.real <= self.re_max + pad
                and self.im_min - pad <= z.imag <= self.im_max + pad)

    def expanded(self, eps: float) -> "RootSearchRegion":
        return RootSearchRegion(self.re_min - eps, self.re_max + eps, self.im_min - eps,
                                self.im_max + eps, self.max_roots, self.tol)

    @property
    def diameter(self) -> float:
        return math.hypot(self.re_max - self.re_min, self.im_max - self.im_min)


@dataclass(frozen=True)
class CharacteristicRoot:
    lam: complex
    residual: float
    multiplicity: int = 1


def char_matrix(sys: DelaySystem, lam: complex) -> np.ndarray:
    lam = complex(lam)
    M = lam * np.eye(sys.n, dtype=complex)
    for k, A in enumerate(sys.A_matrices):
        M = M - A * np.exp(-lam * k * sys.tau)
    return M


def char_det(sys: DelaySystem, lam) -> complex:
    """``det(lambda I - sum_k A_k exp(-lambda k tau))`` by LU factorization."""
    out = kernels.char_det_batch(sys.coefs, sys.tau, np.asarray(lam, dtype=complex))
    return complex(out) if np.ndim(out) == 0 else out


def newton_ratio(sys: DelaySystem, lam: complex) -> complex:
    """``Delta / Delta'`` from ``Delta'/Delta = tr(M^{-1} M')``, ``M' = I + sum k tau A_k e^{-lambda k tau}``."""
    lam = complex(lam)
    M = char_matrix(sys, lam)
    dM = np.eye(sys.n, dtype=complex)
    for k, A in enumerate(sys.A_matrices):
        dM = dM + k * sys.tau * A * np.exp(-lam * k * sys.tau)
    tr = complex(np.trace(np.linalg.solve(M, dM)))
    return 1.0 / tr


def _winding_raw(sys, region: RootSearchRegion, coefs):
    total = 0.0
    c = region.corners
    for za, zb in zip(c, c[1:] + c[:1]):
        dphi, status = kernels.segment_arg_change(coefs, sys.tau, za, zb)
        if status != kernels.STATUS_OK:
            return None
        total += dphi
    w = total / (2 * math.pi)
    if abs(w - round(w)) > WINDING_TOL:
        return None
    return int(round(w))


def winding_count(sys: DelaySystem, region: RootSearchRegion) -> tuple:
    """Number of zeros inside ``region`` and the region actually used.

    If the boundary hits (or nearly hits) a zero the rectangle is enlarged
    by ``1e-6`` times its diameter and retried; a second failure raises
    :class:`BoundaryRoot`.
    """
    coefs = sys.coefs
    reg = region
    for attempt in range(3):
        w = _winding_raw(sys, reg, coefs)
        if w is not None:
            return w, reg
        if attempt == 2:
            break
        reg = region.expanded(1e-6 * (attempt + 1) * max(region.diameter, 1.0))
    raise BoundaryRoot(f"zero on the boundary of {region} persists after perturbation")


def _newton(sys, z0, mult=1, max_iter=80):
    z = complex(z0)
    n = sys.n
    for _ in range(max_iter):
        try:
            step = mult * newton_ratio(sys, z)
        except (np.linalg.LinAlgError, ZeroDivisionError):
            break
        if not np.isfinite(step):
            break
        z = z - step
        if abs(step) <= 1e-15 * (1.0 + abs(z)):
            break
    res = abs(char_det(sys, z))
    ok = np.isfinite(z) and res < ROOT_RESIDUAL_TOL * (1.0 + abs(z)) ** n
    return z, res, bool(ok)


def _split(cell: RootSearchRegion, frac: float):
    if cell.re_max - cell.re_min >= cell.im_max - cell.im_min:
        x = cell.re_min + frac * (cell.re_max - cell.re_min)
        return (RootSearchRegion(cell.re_min, x, cell.im_min, cell.im_max),
                RootSearchRegion(x, cell.re_max, cell.im_min, cell.im_max))
    y = cell.im_min + frac * (cell.im_max - cell.im_min)
    return (RootSearchRegion(cell.re_min, cell.re_max, cell.im_min, y),
            RootSearchRegion(cell.re_min, cell.re_max, y, cell.im_max))


@dataclass(frozen=True)
class RootSearchResult:
    roots: tuple
    count: int
    unresolved: tuple = ()
    region: RootSearchRegion | None = None

    def __iter__(self):
        return iter(self.roots)

    def __len__(self):
        return len(self.roots)


def find_roots(sys: DelaySystem, region: RootSearchRegion, strict: bool = False) -> RootSearchResult:
    """All characteristic roots in ``region`` (with multiplicity estimates).

    The total multiplicity of returned roots plus unresolved cells equals
    the winding count of the (possibly perturbed) region. With
    ``strict=True`` an unresolved cell raises :class:`NonConvergent`.
    """
    total, reg = winding_count(sys, region)
    if total > region.max_roots:
        raise ValueError(f"{total} roots exceed max_roots={region.max_roots}")
    roots, unresolved = [], []
    work = [(reg, total)]
    min_size = 1e-7 * max(1.0, reg.diameter)
    while work:
        cell, count = work.pop()
        if count == 0:
            continue
        size = max(cell.re_max - cell.re_min, cell.im_max - cell.im_min)
        center = complex(0.5 * (cell.re_min + cell.re_max), 0.5 * (cell.im_min + cell.im_max))
        if count == 1 or size < min_size:
            mult = count
            z, res, ok = _newton(sys, center, mult)
            # a root outside its own cell belongs to another cell; keep splitting
            pad = 0.25 * size if size < min_size else 1e-9 * size
            if ok and cell.contains(z, pad):
                roots.append(CharacteristicRoot(complex(z), float(res), mult))
                continue
            if count == 1 and size >= min_size:
                pass  # fall through to bisection: Newton left the cell
            else:
                unresolved.append((cell, count))
                continue
        for attempt, frac in enumerate((0.5, 0.5 + 1 / 7, 0.5 - 1 / 11, 0.5 + 1 / 13)):
            a, b = _split(cell, frac)
            wa = _winding_raw(sys, a, sys.coefs)
            wb = _winding_raw(sys, b, sys.coefs)
            if wa is not None and wb is not None and wa + wb == count:
                work.append((b, wb))
                work.append((a, wa))
                break
        else:
            # boundary keeps hitting a zero: treat the cell as one clustered root
            z, res, ok = _newton(sys, center, count)
            if ok and cell.contains(z, 0.25 * size):
                roots.append(CharacteristicRoot(complex(z), float(res), count))
            else:
                unresolved.append((cell, count))
    if unresolved and strict:
        raise NonConvergent(f"{len(unresolved)} cells could not be resolved")
    roots = _dedupe(roots)
    roots.sort(key=lambda r: (round(r.lam.real, 12), round(r.lam.imag, 12)))
    return RootSearchResult(tuple(roots), total, tuple(unresolved), reg)


def _dedupe(roots):
    """Merge roots found twice from neighbouring cells."""
    out = []
    for r in roots:
        for i, q in enumerate(out):
            if abs(q.lam - r.lam) <= 1e-9 * (1 + abs(r.lam)):
                if r.residual < q.residual:
                    out[i] = CharacteristicRoot(r.lam, r.residual, max(r.multiplicity, q.multiplicity))
                break
        else:
            out.append(r)
    return out


def rank_condition(sys: DelaySystem, lam: complex) -> bool:
    """``rank[Delta-matrix(lambda), B] == n`` with a relative singular-value threshold."""
    M = np.hstack([char_matrix(sys, lam), sys.B.astype(complex)])
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return False
    return int(np.count_nonzero(s > RANK_TOL * s[0])) == sys.n


def default_region(sys: DelaySystem, left_margin: float = DEFAULT_LEFT_MARGIN) -> RootSearchRegion:
    R = sys.root_bound() + 1.0
    return RootSearchRegion(-left_margin, R, -R, R)


def covers_bound(sys: DelaySystem, region: RootSearchRegion) -> bool:
    R = sys.root_bound()
    return region.re_min <= 0.0 and region.re_max > R and region.im_min < -R and region.im_max > R


def ncve_verdict_delay(sys: DelaySystem, region: RootSearchRegion | None = None) -> NcveVerdict:
    """NCVE iff no root has ``Re > 0`` and the rank condition holds at every root in the window."""
    region = region or default_region(sys)
    bound = sys.root_bound()
    if not covers_bound(sys, region):
        raise InconclusiveWindow(
            f"window {region.re_min, region.re_max, region.im_min, region.im_max} does not cover "
            f"the certified bound |lambda| <= {bound:.6g} for Re(lambda) >= 0"
        )
    found = find_roots(sys, region)
    unstable = [r for r in found.roots if r.lam.real > UNSTABLE_TOL]
    unresolved_rhp = [c for c, _ in found.unresolved if c.re_max > UNSTABLE_TOL]
    rank_fail = [r for r in found.roots if not rank_condition(sys, r.lam)]
    bound_violations = [r for r in found.roots if r.lam.real >= 0 and abs(r.lam) > bound * (1 + 1e-9) + 1e-12]
    spectral_ok = not unstable and not unresolved_rhp
    controllable = not rank_fail
    failed = []
    if rank_fail:
        failed.append("controllability")
    if not spectral_ok:
        failed.append("spectral")
    s_bound = max((r.lam.real for r in found.roots), default=-math.inf)
    return NcveVerdict(
        controllable=controllable,
        spectral_ok=spectral_ok,
        ncve=controllable and spectral_ok,
        spectral_bound=float(s_bound),
        reasons=(CITE_ROOTS, CITE_RANK, CITE_SPECTRAL, CITE_EQUIV, CITE_BOUND),
        failed=tuple(failed),
        details={
            "certified_bound": bound,
            "region": [region.re_min, region.re_max, region.im_min, region.im_max],
            "root_count": found.count,
            "roots": [[r.lam.real, r.lam.imag, r.residual, r.multiplicity] for r in found.roots],
            "unstable_roots": [[r.lam.real, r.lam.imag] for r in unstable],
            "rank_failures": [[r.lam.real, r.lam.imag] for r in rank_fail],
            "unresolved_cells": len(found.unresolved),
            "bound_violations": len(bound_violations),
        },
    )


def unstable_root_count(sys: DelaySystem, eta: float = 1e-7) -> int:
    """Number of roots with ``Re(lambda) > eta`` (winding count over the certified window)."""
    R = sys.root_bound() + 1.0
    count, _ = winding_count(sys, RootSearchRegion(eta, R, -R, R))
    return count


@dataclass(frozen=True)
class RasterResult:
    a_values: np.ndarray
    b_values: np.ndarray
    ncve: np.ndarray
    tau: float
    meta: dict = field(default_factory=dict)

    def rows(self):
        for i, a in enumerate(self.a_values):
            for j, b in enumerate(self.b_values):
                yield (float(a), float(b), int(self.ncve[i, j]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "b", "ncve"])
            for a, b, v in self.rows():
                w.writerow(["%.17g" % a, "%.17g" % b, v])


def stability_raster(a_values, b_values, tau: float = 1.0) -> RasterResult:
    """NCVE map of ``x' = -a x(t) - b x(t - tau) + u`` over an ``(a, b)`` grid.

    With a scalar nonzero control the rank condition always holds, so a cell
    is NCVE exactly when no root lies in ``Re(lambda) > 0``.
    """
    a_values = np.asarray(a_values, dtype=float)
    b_values = np.asarray(b_values, dtype=float)
    grid = np.zeros((len(a_values), len(b_values)), dtype=int)
    for i, a in enumerate(a_values):
        for j, b in enumerate(b_values):
            sys = scalar_delay_system(a, b, tau)
            grid[i, j] = int(unstable_root_count(sys) == 0)
    return RasterResult(a_values, b_values, grid, float(tau), {"backend": kernels.BACKEND})
