"""Truncated Fock-space algebra for the two vibrational modes and the qubit.

Mode operators are plain dense ``complex128`` arrays of shape ``(dim, dim)``.
The full Hilbert space is ordered ``qubit ⊗ mode_x ⊗ mode_y`` with the qubit
basis ``(e, g)``, so flat index ``q * dim_x * dim_y + nx * dim_y + ny``.

Truncation convention: creation and upward shifts send the top level(s) to
zero instead of raising.  The resulting non-unitary defect is observable
through :func:`leakage`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

QUBIT_E = 0
QUBIT_G = 1
SLOTS = ("qubit", "x", "y")

_QUBIT_VECTORS = {
    "e": np.array([1.0, 0.0], dtype=complex),
    "g": np.array([0.0, 1.0], dtype=complex),
    "plus": np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0),
}


@dataclass(frozen=True)
class TruncatedMode:
    """One vibrational mode kept to Fock levels ``|0>, ..., |dim-1>``."""

    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise InvalidArgumentError(f"mode dim must be an integer >= 2, got {self.dim!r}")


def _as_mode(mode) -> TruncatedMode:
    return mode if isinstance(mode, TruncatedMode) else TruncatedMode(int(mode))


def annihilation(mode) -> np.ndarray:
    """Lowering operator with ``a|n> = sqrt(n)|n-1>``."""
    d = _as_mode(mode).dim
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)


def creation(mode) -> np.ndarray:
    """Adjoint of :func:`annihilation`; ``a†|dim-1> = 0``."""
    return annihilation(mode).conj().T


def number(mode) -> np.ndarray:
    d = _as_mode(mode).dim
    return np.diag(np.arange(d, dtype=float)).astype(complex)


def identity(mode) -> np.ndarray:
    return np.eye(_as_mode(mode).dim, dtype=complex)


def shift_down(mode, k: int) -> np.ndarray:
    """Susskind-Glogower shift ``V^k``: ``|n> -> |n-k>`` for ``n >= k``, else 0."""
    d = _as_mode(mode).dim
    if k < 0 or k >= d:
        raise InvalidArgumentError(f"shift order k={k} must satisfy 0 <= k < dim={d}")
    return np.eye(d, k=k, dtype=complex)


def shift_up(mode, k: int) -> np.ndarray:
    """``V†^k``: ``|n> -> |n+k>``, zero past the truncation."""
    return shift_down(mode, k).conj().T


def projector_below(mode, k: int) -> np.ndarray:
    """Projector onto ``|0>, ..., |k-1>`` (the kernel of ``V^k``)."""
    d = _as_mode(mode).dim
    p = np.zeros((d, d), dtype=complex)
    idx = np.arange(min(k, d))
    p[idx, idx] = 1.0
    return p


def embed(op: np.ndarray, slot: str, dims: tuple[int, int]) -> np.ndarray:
    """Lift a single-factor operator to the full ``qubit ⊗ x ⊗ y`` space.

    Parameters
    ----------
    op : (n, n) array
        Operator on the factor named by ``slot``.
    slot : {"qubit", "x", "y"}
    dims : (dim_x, dim_y)
    """
    dx, dy = dims
    sizes = {"qubit": 2, "x": dx, "y": dy}
    if slot not in sizes:
        raise InvalidArgumentError(f"unknown slot {slot!r}; expected one of {SLOTS}")
    op = np.asarray(op, dtype=complex)
    if op.shape != (sizes[slot], sizes[slot]):
        raise InvalidArgumentError(
            f"operator shape {op.shape} does not match slot {slot!r} of size {sizes[slot]}"
        )
    factors = [np.eye(2, dtype=complex), np.eye(dx, dtype=complex), np.eye(dy, dtype=complex)]
    factors[SLOTS.index(slot)] = op
    return np.kron(np.kron(factors[0], factors[1]), factors[2])


def qubit_vector(label) -> np.ndarray:
    """Qubit amplitudes for ``"e"``, ``"g"``, ``"plus"`` or an explicit 2-vector."""
    if isinstance(label, str):
        try:
            return _QUBIT_VECTORS[label].copy()
        except KeyError:
            raise InvalidArgumentError(
                f"unknown qubit label {label!r}; expected e, g or plus"
            ) from None
    vec = np.asarray(label, dtype=complex).reshape(-1)
    if vec.shape != (2,):
        raise InvalidArgumentError("qubit vector must have two components")
    return vec


class HybridState:
    """Pure state on ``qubit ⊗ mode_x ⊗ mode_y``.

    The amplitude array is copied on construction and frozen.  Normalization
    is not enforced here because the pre-RWA integrator reports, rather than
    hides, its norm drift; use :attr:`norm` to check.
    """

    __slots__ = ("dim_x", "dim_y", "amplitudes")

    def __init__(self, amplitudes, dim_x: int, dim_y: int):
        TruncatedMode(dim_x), TruncatedMode(dim_y)
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2 * dim_x * dim_y:
            raise InvalidArgumentError(
                f"expected {2 * dim_x * dim_y} amplitudes for dims ({dim_x}, {dim_y}), got {amps.size}"
            )
        if not np.all(np.isfinite(amps)):
            raise InvalidArgumentError("state amplitudes must be finite")
        amps.flags.writeable = False
        object.__setattr__(self, "dim_x", int(dim_x))
        object.__setattr__(self, "dim_y", int(dim_y))
        object.__setattr__(self, "amplitudes", amps)

    def __setattr__(self, name, value):
        raise AttributeError("HybridState is immutable")

    @classmethod
    def basis(cls, qubit, nx: int, ny: int, dim_x: int, dim_y: int) -> "HybridState":
        """Product state ``|qubit>|nx>|ny>``."""
        if not (0 <= nx < dim_x and 0 <= ny < dim_y):
            raise InvalidArgumentError(f"Fock indices ({nx}, {ny}) outside dims ({dim_x}, {dim_y})")
        modes = np.zeros((dim_x, dim_y), dtype=complex)
        modes[nx, ny] = 1.0
        return cls.product(qubit, modes)

    @classmethod
    def product(cls, qubit, modes: np.ndarray) -> "HybridState":
        """``qubit ⊗ modes`` with ``modes`` a ``(dim_x, dim_y)`` amplitude matrix."""
        modes = np.asarray(modes, dtype=complex)
        if modes.ndim != 2:
            raise InvalidArgumentError("mode amplitudes must be a (dim_x, dim_y) matrix")
        q = qubit_vector(qubit)
        return cls(q[:, None, None] * modes[None], *modes.shape)

    @property
    def dims(self) -> tuple[int, int]:
        return (self.dim_x, self.dim_y)

    @property
    def tensor(self) -> np.ndarray:
        """Read-only view with shape ``(2, dim_x, dim_y)``."""
        return self.amplitudes.reshape(2, self.dim_x, self.dim_y)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def amplitude(self, qubit, nx: int, ny: int) -> complex:
        q = {"e": QUBIT_E, "g": QUBIT_G}.get(qubit, qubit)
        return complex(self.tensor[q, nx, ny])

    def replace(self, amplitudes) -> "HybridState":
        return HybridState(amplitudes, self.dim_x, self.dim_y)

    def __repr__(self):
        return f"HybridState(dims=({self.dim_x}, {self.dim_y}), norm={self.norm:.15g})"


def leakage(state: HybridState, band: int) -> float:
    """Population with either Fock index in the top ``band`` levels of its mode."""
    if band < 1 or band >= min(state.dims):
        raise InvalidArgumentError(f"band={band} must satisfy 1 <= band < min(dims)={min(state.dims)}")
    p = np.abs(state.tensor) ** 2
    dx, dy = state.dims
    inside = p[:, : dx - band, : dy - band].sum()
    return float(min(max(p.sum() - inside, 0.0), 1.0))
