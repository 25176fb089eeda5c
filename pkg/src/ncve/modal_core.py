"""Spectrally truncated linear control systems.

A :class:`ModalSystem` is a finite list of decoupled modes

    y_n'(t) = lambda_n y_n(t) + b_n u(t),

optionally accompanied by Jordan chains ``A y_k = lambda y_k - y_{k-1}``.
All objects are immutable; operations return new instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Mode:
    eigenvalue: complex
    control_coeff: complex
    label: str = ""

    def __post_init__(self):
        for name in ("eigenvalue", "control_coeff"):
            v = complex(getattr(self, name))
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class JordanChain:
    """Chain ``y_0, ..., y_{L-1}`` with ``A y_k = lambda y_k - y_{k-1}``.

    ``chain_vectors`` are coordinate vectors in the chain's own block; the
    block matrix is ``lambda I - N`` with ``N`` the upper shift. When omitted,
    the standard basis is used.
    """

    eigenvalue: complex
    length: int
    chain_vectors: tuple = ()

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("chain length must be positive")
        object.__setattr__(self, "eigenvalue", complex(self.eigenvalue))
        if not self.chain_vectors:
            vecs = tuple(np.eye(self.length, dtype=complex)[k] for k in range(self.length))
        else:
            vecs = tuple(np.asarray(v, dtype=complex) for v in self.chain_vectors)
        if len(vecs) != self.length:
            raise ValueError("number of chain vectors must equal the chain length")
        for v in vecs:
            v.setflags(write=False)
        object.__setattr__(self, "chain_vectors", vecs)

    def block_matrix(self) -> np.ndarray:
        """The Jordan block ``lambda I - N`` on which the standard basis is a chain."""
        L = self.length
        return self.eigenvalue * np.eye(L, dtype=complex) - np.eye(L, k=1, dtype=complex)

    def chain_defect(self, matrix: np.ndarray | None = None) -> float:
        """Max norm of ``(A - lambda) y_k + y_{k-1}`` over the chain."""
        A = self.block_matrix() if matrix is None else np.asarray(matrix, dtype=complex)
        shifted = A - self.eigenvalue * np.eye(A.shape[0])
        worst = 0.0
        for k, y in enumerate(self.chain_vectors):
            prev = self.chain_vectors[k - 1] if k else np.zeros_like(y)
            worst = max(worst, float(np.linalg.norm(shifted @ y + prev)))
        return worst


@dataclass(frozen=True)
class StateVector:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __len__(self):
        return self.coeffs.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other):
        return StateVector(self.coeffs + _coeffs(other))

    def __sub__(self, other):
        return StateVector(self.coeffs - _coeffs(other))

    def __mul__(self, alpha):
        return StateVector(complex(alpha) * self.coeffs)

    __rmul__ = __mul__


def _coeffs(y) -> np.ndarray:
    return y.coeffs if isinstance(y, StateVector) else np.asarray(y, dtype=complex)


@dataclass(frozen=True)
class ModalSystem:
    modes: tuple
    jordan_blocks: tuple = ()
    omega: complex | None = field(default=None)

    def __post_init__(self):
        modes = tuple(self.modes)
        if len(modes) < 1:
            raise ValueError("a modal system needs at least one mode")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "jordan_blocks", tuple(self.jordan_blocks))
        eigs = [m.eigenvalue for m in modes] + [c.eigenvalue for c in self.jordan_blocks]
        if self.omega is None:
            omega = complex(max(e.real for e in eigs) + 1.0)
        else:
            omega = complex(self.omega)
        if any(abs(omega - e) == 0.0 for e in eigs):
            raise ValueError("omega must lie in the resolvent set (differ from every eigenvalue)")
        object.__setattr__(self, "omega", omega)

    @classmethod
    def from_arrays(cls, eigenvalues, control_coeffs, labels=None, omega=None, jordan_blocks=()):
        eigenvalues = np.asarray(eigenvalues, dtype=complex).ravel()
        control_coeffs = np.broadcast_to(np.asarray(control_coeffs, dtype=complex), eigenvalues.shape)
        labels = labels or [f"m{i}" for i in range(len(eigenvalues))]
        modes = tuple(Mode(e, b, lab) for e, b, lab in zip(eigenvalues, control_coeffs, labels))
        return cls(modes, tuple(jordan_blocks), omega)

    def __len__(self):
        return len(self.modes)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([m.eigenvalue for m in self.modes], dtype=complex)

    @property
    def control_coeffs(self) -> np.ndarray:
        return np.array([m.control_coeff for m in self.modes], dtype=complex)

    def state_matrix(self) -> np.ndarray:
        """Block-diagonal generator: diagonal modes followed by the Jordan blocks."""
        blocks = [np.diag(self.eigenvalues)] + [c.block_matrix() for c in self.jordan_blocks]
        n = sum(b.shape[0] for b in blocks)
        out = np.zeros((n, n), dtype=complex)
        i = 0
        for b in blocks:
            k = b.shape[0]
            out[i:i + k, i:i + k] = b
            i += k
        return out

    def state(self, coeffs) -> StateVector:
        y = StateVector(coeffs)
        if len(y) != len(self):
            raise ValueError(f"state has {len(y)} coefficients, system has {len(self)} modes")
        return y

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "modes": [
                {
                    "re": m.eigenvalue.real,
                    "im": m.eigenvalue.imag,
                    "coeff_re": m.control_coeff.real,
                    "coeff_im": m.control_coeff.imag,
                    "label": m.label,
                }
                for m in self.modes
            ],
            "omega": {"re": self.omega.real, "im": self.omega.imag},
            "jordan_blocks": [
                {
                    "re": c.eigenvalue.real,
                    "im": c.eigenvalue.imag,
                    "length": c.length,
                }
                for c in self.jordan_blocks
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModalSystem":
        if not isinstance(doc, dict):
            raise ConfigError("system: expected a mapping")
        raw_modes = doc.get("modes")
        if not raw_modes:
            raise ConfigError("modes: at least one mode is required")
        modes = []
        for i, m in enumerate(raw_modes):
            try:
                modes.append(
                    Mode(
                        complex(float(m["re"]), float(m.get("im", 0.0))),
                        complex(float(m["coeff_re"]), float(m.get("coeff_im", 0.0))),
                        str(m.get("label", f"m{i}")),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"modes[{i}]: {exc}") from exc
        omega = doc.get("omega")
        if isinstance(omega, dict):
            omega = complex(float(omega.get("re", 0.0)), float(omega.get("im", 0.0)))
        elif omega is not None:
            omega = complex(omega)
        chains = []
        for i, c in enumerate(doc.get("jordan_blocks") or []):
            try:
                chains.append(JordanChain(complex(float(c["re"]), float(c.get("im", 0.0))), int(c["length"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"jordan_blocks[{i}]: {exc}") from exc
        try:
            return cls(tuple(modes), tuple(chains), omega)
        except ValueError as exc:
            raise ConfigError(f"omega: {exc}") from exc


def spectral_bound(sys: ModalSystem) -> float:
    """Largest real part over all modes and Jordan chains."""
    eigs = [m.eigenvalue.real for m in sys.modes]
    eigs += [c.eigenvalue.real for c in sys.jordan_blocks]
    return float(max(eigs))


def spectral_shift(sys: ModalSystem, c: float) -> ModalSystem:
    """Replace every eigenvalue ``lambda`` by ``lambda - c``.

    Control coefficients are unchanged. If ``u`` steers ``y0`` to rest for the
    original system, then ``v(t) = exp(-c t) u(t)`` steers ``y0`` to rest for
    the shifted one (the state transforms as ``z(t) = exp(-c t) y(t)``); the
    map is inverted by multiplying with ``exp(c t)``. See
    :func:`ncve.moment_gramian.ControlSignal.times_exponential`.
    """
    c = float(c)
    modes = tuple(replace(m, eigenvalue=m.eigenvalue - c) for m in sys.modes)
    chains = tuple(
        JordanChain(ch.eigenvalue - c, ch.length, ch.chain_vectors) for ch in sys.jordan_blocks
    )
    return ModalSystem(modes, chains, sys.omega - c)


def semigroup_on_chain(chain: JordanChain, t: float) -> list:
    """``exp(A t) y_k`` for every chain vector, in closed form.

    ``exp(A t) y_k = exp(lambda t) * sum_{n=0}^{k} (-t)^n / n! * y_{k-n}``,
    i.e. the nilpotent part contributes coefficients ``(-1)^n / n!``.
    """
    if t < 0:
        raise ValueError("semigroup is only defined for t >= 0")
    scale = np.exp(chain.eigenvalue * t)
    out = []
    for k in range(chain.length):
        acc = np.zeros_like(chain.chain_vectors[0])
        for n in range(k + 1):
            acc = acc + ((-t) ** n / math.factorial(n)) * chain.chain_vectors[k - n]
        out.append(scale * acc)
    return out
