"""Scalar machinery of the nonlinear sideband coupling.

The k-th sideband couples ``|e, n>`` to ``|g, n+k>`` with the number-dependent
coupling

    f(n) = exp(-eta**2 / 2) * (-i eta)**k * n! / (n+k)! * L_n^k(eta**2)

and angular rate ``omega * |f(n)| * sqrt((n+k)! / n!)``.  Factorial ratios are
accumulated as running products so nothing overflows for the small integers
used here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import DegenerateCouplingError, InvalidArgumentError

K_MAX_DEFAULT = 8
LAGUERRE_N_MAX = 200
EXACT_PHASE_TOL = 1e-3  # rad, lower-branch phase distance to an odd multiple of pi/2

# (-i)**k for k mod 4, kept exact
_MINUS_I_POWERS = (1.0 + 0j, -1j, -1.0 + 0j, 1j)


@dataclass(frozen=True)
class CouplingParams:
    """Lamb-Dicke parameter ``eta``, sideband order ``k`` and Rabi frequency ``omega``.

    ``omega = 0`` is allowed (it switches the drive off); flip times then raise
    :class:`DegenerateCouplingError`.
    """

    eta: float
    k: int
    omega: float = 1.0
    k_max: int = field(default=K_MAX_DEFAULT, compare=False, repr=False)

    def __post_init__(self):
        if not math.isfinite(self.eta) or self.eta < 0:
            raise InvalidArgumentError(f"eta must be finite and >= 0, got {self.eta!r}")
        if int(self.k) != self.k or not 0 <= self.k <= self.k_max:
            raise InvalidArgumentError(f"k must be an integer in [0, {self.k_max}], got {self.k!r}")
        if not math.isfinite(self.omega) or self.omega < 0:
            raise InvalidArgumentError(f"omega must be finite and >= 0, got {self.omega!r}")


@dataclass(frozen=True)
class BranchPair:
    """Two transitions driven by one pulse.

    The upper branch is ``|e, n_upper> -> |g, n_upper + k>``; the lower branch
    is ``|g, n_lower> -> |e, n_lower - k>``.
    """

    n_upper: int
    n_lower: int
    k: int

    def __post_init__(self):
        if self.n_upper < 0 or self.k < 0:
            raise InvalidArgumentError("Fock indices and k must be non-negative")
        if self.n_lower < self.k:
            raise InvalidArgumentError(
                f"n_lower={self.n_lower} < k={self.k}: the lower branch has no partner level"
            )


def laguerre_assoc(n: int, k: int, x: float) -> float:
    """Associated Laguerre polynomial ``L_n^k(x)`` by upward recurrence in ``n``."""
    if n < 0 or n > LAGUERRE_N_MAX:
        raise InvalidArgumentError(f"n={n} outside [0, {LAGUERRE_N_MAX}]")
    if n == 0:
        return 1.0
    prev, cur = 1.0, 1.0 + k - x
    for m in range(1, n):
        prev, cur = cur, ((2 * m + 1 + k - x) * cur - (m + k) * prev) / (m + 1)
    return cur


def factorial_ratio(n: int, k: int) -> float:
    """``n! / (n+k)!`` as a product of reciprocals."""
    r = 1.0
    for j in range(1, k + 1):
        r /= n + j
    return r


def sqrt_rising(n: int, k: int) -> float:
    """``sqrt((n+k)! / n!)``, the magnitude of ``<n|a^k|n+k>``."""
    p = 1.0
    for j in range(1, k + 1):
        p *= n + j
    return math.sqrt(p)


def coupling_f(n: int, params: CouplingParams) -> complex:
    eta, k = params.eta, params.k
    real_part = (
        math.exp(-0.5 * eta * eta)
        * eta**k
        * factorial_ratio(n, k)
        * laguerre_assoc(n, k, eta * eta)
    )
    return _MINUS_I_POWERS[k % 4] * real_part


def rabi_frequency(n: int, params: CouplingParams) -> float:
    """Angular rate of the ``|e, n> <-> |g, n+k>`` oscillation."""
    return params.omega * abs(coupling_f(n, params)) * sqrt_rising(n, params.k)


def pi_pulse_time(n: int, params: CouplingParams) -> float:
    """Time after which ``|e, n>`` has fully transferred to ``|g, n+k>``."""
    rate = rabi_frequency(n, params)
    if rate == 0.0:
        raise DegenerateCouplingError(
            f"zero coupling for n={n}, k={params.k}, eta={params.eta}, omega={params.omega}"
        )
    return 0.5 * math.pi / rate


@dataclass(frozen=True)
class CommensurabilityRow:
    eta: float
    rate_upper: float
    rate_lower: float
    ratio: Optional[float]  # rate_upper / rate_lower
    lower_phase: Optional[float]  # rad, accumulated at the upper branch's pi time
    predicted_fidelity: Optional[float]
    exact: bool
    degenerate: bool

    @property
    def infidelity(self) -> Optional[float]:
        return None if self.predicted_fidelity is None else 1.0 - self.predicted_fidelity


@dataclass(frozen=True)
class CommensurabilityReport:
    pair: BranchPair
    omega: float
    rows: tuple[CommensurabilityRow, ...]
    best_index: Optional[int]

    @property
    def best(self) -> Optional[CommensurabilityRow]:
        return None if self.best_index is None else self.rows[self.best_index]

    def any_reaches(self, threshold: float) -> bool:
        return any(r.predicted_fidelity is not None and r.predicted_fidelity >= threshold for r in self.rows)


def _odd_half_pi_distance(phase: float) -> float:
    half = 0.5 * math.pi
    j = round((phase - half) / math.pi)
    return abs(phase - (half + j * math.pi))


def commensurability_scan(pair: BranchPair, omega: float, eta_grid: Iterable[float]) -> CommensurabilityReport:
    """Quantify how well one shared pulse flips both branches of ``pair``.

    The pulse duration is the upper branch's pi time, so the upper branch flips
    exactly.  The lower branch accumulates ``rate_lower * t0`` and reaches the
    flipped level with probability ``sin(phase)**2``.  Grid points where either
    rate vanishes are kept in the report, marked degenerate, and never chosen
    as best.
    """
    etas = [float(e) for e in eta_grid]
    if not etas:
        raise InvalidArgumentError("eta grid is empty")
    for e in etas:
        if not 0.0 < e <= 1.0:
            raise InvalidArgumentError(f"grid eta={e} outside (0, 1]")

    rows = []
    best_index, best_fid = None, -1.0
    for i, eta in enumerate(etas):
        params = CouplingParams(eta, pair.k, omega)
        r_up = rabi_frequency(pair.n_upper, params)
        r_lo = rabi_frequency(pair.n_lower - pair.k, params)
        if r_up == 0.0 or r_lo == 0.0:
            rows.append(CommensurabilityRow(eta, r_up, r_lo, None, None, None, False, True))
            continue
        phase = r_lo * (0.5 * math.pi / r_up)
        fid = math.sin(phase) ** 2
        rows.append(
            CommensurabilityRow(
                eta, r_up, r_lo, r_up / r_lo, phase, fid,
                _odd_half_pi_distance(phase) <= EXACT_PHASE_TOL, False,
            )
        )
        if fid > best_fid:
            best_index, best_fid = i, fid
    return CommensurabilityReport(pair, float(omega), tuple(rows), best_index)


def eta_grid(start: float, stop: float, num: int) -> np.ndarray:
    """Evenly spaced grid, endpoints included."""
    if num < 1:
        raise InvalidArgumentError("grid needs at least one point")
    return np.linspace(start, stop, int(num))
