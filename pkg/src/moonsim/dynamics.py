"""Sideband Hamiltonians, propagators and the pre-RWA time-dependent oracle.

Everything here acts on ``qubit ⊗ (pulsed mode)`` and is the identity on the
spectator mode, so propagators are stored as four ``dim × dim`` blocks

    U = [[U_ee, U_eg],
         [U_ge, U_gg]]

on the pulsed mode.  The σ+ block of the effective Hamiltonian is
``Ω f(n̂) a^k``, which couples ``|e, n>`` to ``|g, n+k>``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import fock
from .coupling import CouplingParams, coupling_f, pi_pulse_time, sqrt_rising
from .errors import InvalidArgumentError, StiffnessError
from .fock import HybridState

MODELS = ("effective", "quadratic", "full_pre_rwa")
AXES = ("x", "y")
QUADRATIC_ETA_MAX = 0.1

# Interaction-picture phase attached to a†^n a^m in the pre-RWA oracle.  The
# printed exponent exp(i η (n-m+k)) has no time variable; the oracle uses
# exp(i ν (n-m) t) from the free trap evolution, with the laser detuning
# carried separately on σ+.
PRE_RWA_PHASE_CONVENTION = "exp(i*nu*(n-m)*t) * exp(-i*delta*t) on sigma_plus"


@dataclass(frozen=True)
class PulseSpec:
    """A square laser pulse on one axis.

    ``omega_eff`` is the bare coupling of the quadratic model (no f-factor);
    ``nu`` and ``delta`` are the trap frequency and detuning used only by the
    ``full_pre_rwa`` model, with ``delta`` defaulting to the k-th sideband
    resonance ``-k * nu`` (laser frequency = transition frequency + delta).
    """

    axis: str
    params: CouplingParams
    duration: float = 0.0
    model: str = "effective"
    omega_eff: Optional[float] = None
    nu: Optional[float] = None
    delta: Optional[float] = None

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidArgumentError(f"axis must be 'x' or 'y', got {self.axis!r}")
        if self.model not in MODELS:
            raise InvalidArgumentError(f"model must be one of {MODELS}, got {self.model!r}")
        if not math.isfinite(self.duration) or self.duration < 0:
            raise InvalidArgumentError(f"duration must be finite and >= 0, got {self.duration!r}")
        if self.model == "quadratic":
            if self.params.k != 2:
                raise InvalidArgumentError("quadratic model is the k=2 sideband; got k={}".format(self.params.k))
            if self.params.eta > QUADRATIC_ETA_MAX:
                warnings.warn(
                    f"quadratic model used with eta={self.params.eta} > {QUADRATIC_ETA_MAX}; "
                    "the bare a^2 coupling is only accurate for small eta",
                    stacklevel=3,
                )
        if self.model == "full_pre_rwa":
            if self.nu is None or not self.nu > 0:
                raise InvalidArgumentError("full_pre_rwa pulses need a trap frequency nu > 0")

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def resonant_delta(self) -> float:
        if self.delta is not None:
            return float(self.delta)
        return -self.params.k * float(self.nu)

    @property
    def coupling_omega_eff(self) -> float:
        return self.params.omega if self.omega_eff is None else float(self.omega_eff)


@dataclass(frozen=True)
class Propagator:
    """Block form of a pulse propagator; blocks act on the pulsed mode only."""

    axis: str
    dims: tuple[int, int]
    u_ee: np.ndarray
    u_eg: np.ndarray
    u_ge: np.ndarray
    u_gg: np.ndarray

    @classmethod
    def from_local(cls, local: np.ndarray, axis: str, dims) -> "Propagator":
        d = local.shape[0] // 2
        return cls(axis, tuple(dims), local[:d, :d], local[:d, d:], local[d:, :d], local[d:, d:])

    def local(self) -> np.ndarray:
        """Matrix on ``qubit ⊗ pulsed mode``."""
        return np.block([[self.u_ee, self.u_eg], [self.u_ge, self.u_gg]])

    def full(self) -> np.ndarray:
        return lift_local(self.local(), self.axis, self.dims)

    def apply(self, state: HybridState) -> HybridState:
        if state.dims != self.dims:
            raise InvalidArgumentError(f"state dims {state.dims} != propagator dims {self.dims}")
        return state.replace(apply_local(self.local(), self.axis, state.tensor))


def pulsed_dim(dims, axis: str) -> int:
    return dims[0] if axis == "x" else dims[1]


def apply_local(local: np.ndarray, axis: str, tensor: np.ndarray) -> np.ndarray:
    """Apply a ``qubit ⊗ pulsed-mode`` matrix to a ``(2, dx, dy)`` amplitude tensor."""
    _, dx, dy = tensor.shape
    if axis == "x":
        return (local @ tensor.reshape(2 * dx, dy)).reshape(2, dx, dy)
    moved = np.ascontiguousarray(tensor.transpose(0, 2, 1)).reshape(2 * dy, dx)
    return (local @ moved).reshape(2, dy, dx).transpose(0, 2, 1)


def lift_local(local: np.ndarray, axis: str, dims) -> np.ndarray:
    """Full-space matrix of a ``qubit ⊗ pulsed-mode`` operator."""
    dx, dy = dims
    d = pulsed_dim(dims, axis)
    if local.shape != (2 * d, 2 * d):
        raise InvalidArgumentError(f"local operator shape {local.shape} != {(2 * d, 2 * d)}")
    out = np.zeros((2 * dx * dy,) * 2, dtype=complex)
    for a in range(2):
        for b in range(2):
            block = local[a * d:(a + 1) * d, b * d:(b + 1) * d]
            qab = np.zeros((2, 2))
            qab[a, b] = 1.0
            if axis == "x":
                out += np.kron(np.kron(qab, block), np.eye(dy))
            else:
                out += np.kron(np.kron(qab, np.eye(dx)), block)
    return out


# --- couplings per level -------------------------------------------------------

def level_couplings(pulse: PulseSpec, dim: int, boundary: str = "exact") -> np.ndarray:
    """``c[n] = <e, n| H |g, n+k>`` for ``n = 0 .. dim-1``.

    With ``boundary="exact"`` the rate uses ``sqrt(a^k a†^k)`` of the truncated
    mode, which vanishes for ``n >= dim - k``; ``"closed_form"`` keeps
    ``sqrt((n+k)!/n!)`` for every level, as in the infinite basis.
    """
    if boundary not in ("exact", "closed_form"):
        raise InvalidArgumentError(f"unknown boundary treatment {boundary!r}")
    k = pulse.params.k
    if k >= dim:
        raise InvalidArgumentError(f"sideband order k={k} must be < dim={dim}")
    c = np.zeros(dim, dtype=complex)
    top = dim if boundary == "closed_form" else dim - k
    for n in range(top):
        if pulse.model == "quadratic":
            c[n] = pulse.coupling_omega_eff * sqrt_rising(n, 2)
        else:
            c[n] = pulse.params.omega * coupling_f(n, pulse.params) * sqrt_rising(n, k)
    return c


def _sigma_plus_block(pulse: PulseSpec, dim: int) -> np.ndarray:
    k = 2 if pulse.model == "quadratic" else pulse.params.k
    return level_couplings(pulse, dim)[:, None] * fock.shift_down(dim, k)


def h_local(pulse: PulseSpec, dim: int) -> np.ndarray:
    """Effective or quadratic Hamiltonian on ``qubit ⊗ pulsed mode``."""
    if pulse.model == "full_pre_rwa":
        raise InvalidArgumentError("the pre-RWA model is time dependent; use evolve_pre_rwa")
    c = _sigma_plus_block(pulse, dim)
    z = np.zeros_like(c)
    return np.block([[z, c], [c.conj().T, z]])


def h_effective(dims, params: CouplingParams, axis: str) -> np.ndarray:
    """``Ω f(n̂) a^k σ+ + h.c.`` on the full ``qubit ⊗ x ⊗ y`` space."""
    pulse = PulseSpec(axis, params)
    return lift_local(h_local(pulse, pulsed_dim(dims, axis)), axis, dims)


def h_quadratic(dims, omega_eff: float, axis: str) -> np.ndarray:
    """``Ω_eff (a² σ+ + a†² σ-)``; ``omega_eff`` may carry a sign."""
    d = pulsed_dim(dims, axis)
    if d < 3:
        raise InvalidArgumentError("quadratic model needs dim >= 3")
    pulse = PulseSpec(axis, CouplingParams(0.0, 2, 0.0), model="quadratic", omega_eff=omega_eff)
    return lift_local(h_local(pulse, d), axis, dims)


# --- propagators ---------------------------------------------------------------

def _blocks_from_angles(c: np.ndarray, angles: np.ndarray, k: int) -> np.ndarray:
    """Closed-form propagator given per-level couplings and rotation angles."""
    d = c.size
    mag = np.abs(c)
    phase = np.divide(c, mag, out=np.zeros_like(c), where=mag > 0)
    cos, sin = np.cos(angles), np.sin(angles)
    v = fock.shift_down(d, k)
    vd = v.conj().T
    u_ee = np.diag(cos).astype(complex)
    u_eg = -1j * (phase * sin)[:, None] * v
    u_ge = -1j * vd * (phase.conj() * sin)[None, :]
    # |g, n<k> lies in the kernel of V^k and of H: it is left untouched
    u_gg = vd @ np.diag(cos) @ v + fock.projector_below(d, k)
    return np.block([[u_ee, u_eg], [u_ge, u_gg]])


def _order(pulse: PulseSpec) -> int:
    return 2 if pulse.model == "quadratic" else pulse.params.k


def u_analytic(pulse: PulseSpec, t: float, dims, boundary: str = "exact") -> Propagator:
    """Closed-form sideband propagator.

    Per level ``n`` the angle is ``|c(n)| t`` and the off-diagonal blocks carry
    ``-i c(n)/|c(n)|``, which equals ``(-i)^(k+1)`` (resp. ``-(i)^(k+1)``) when
    the Laguerre factor is positive and picks up the sign otherwise.
    """
    if pulse.model == "full_pre_rwa":
        raise InvalidArgumentError("u_analytic needs the effective or quadratic model")
    d = pulsed_dim(dims, pulse.axis)
    c = level_couplings(pulse, d, boundary)
    local = _blocks_from_angles(c, np.abs(c) * t, _order(pulse))
    return Propagator.from_local(local, pulse.axis, dims)


def u_ideal_flip(pulse: PulseSpec, dims) -> Propagator:
    """Every coupled two-level sector receives its own exact pi rotation."""
    if pulse.model == "full_pre_rwa":
        raise InvalidArgumentError("ideal flips need the effective or quadratic model")
    d = pulsed_dim(dims, pulse.axis)
    c = level_couplings(pulse, d)
    angles = np.where(np.abs(c) > 0, 0.5 * math.pi, 0.0)
    return Propagator.from_local(_blocks_from_angles(c, angles, _order(pulse)), pulse.axis, dims)


def u_numeric(pulse: PulseSpec, t: float, dims) -> Propagator:
    """``exp(-i H t)`` by Hermitian eigendecomposition of the local Hamiltonian."""
    h = h_local(pulse, pulsed_dim(dims, pulse.axis))
    w, v = np.linalg.eigh(h)
    local = (v * np.exp(-1j * w * t)) @ v.conj().T
    return Propagator.from_local(local, pulse.axis, dims)


def evolve(pulse: PulseSpec, state: HybridState, t: Optional[float] = None, method: str = "analytic") -> HybridState:
    """Evolve ``state`` under ``pulse`` for ``t`` (default: the pulse duration)."""
    t = pulse.duration if t is None else t
    if pulse.model == "full_pre_rwa":
        return evolve_pre_rwa(pulse, state, t)
    if method == "analytic":
        return u_analytic(pulse, t, state.dims).apply(state)
    if method == "numeric":
        return u_numeric(pulse, t, state.dims).apply(state)
    raise InvalidArgumentError(f"unknown method {method!r}")


def excited_probability(state: HybridState) -> float:
    return float(np.sum(np.abs(state.tensor[fock.QUBIT_E]) ** 2))


# --- pre-RWA oracle --------------------------------------------------------------

def displacement_kick(dim: int, eta: float) -> np.ndarray:
    """``exp(-i η (a + a†))`` on the truncated mode, via eigendecomposition."""
    a = fock.annihilation(dim)
    w, v = np.linalg.eigh(eta * (a + a.conj().T))
    return (v * np.exp(-1j * w)) @ v.conj().T


class _PreRWAGenerator:
    """Time-dependent interaction-picture Hamiltonian of the driven ion.

    σ+ block: ``Ω exp(-i δ t) [exp(-i η (a + a†))]_{mn} exp(i ν (m-n) t)``.
    Writing ``δ = -p ν + ε`` with integer ``p``, the frame change
    ``W(t) = diag(exp(-i ε t/2), exp(i ε t/2))`` on (e, g) turns the generator
    into a ``2π/ν``-periodic one plus the static term ``-(ε/2) σz``.
    """

    def __init__(self, pulse: PulseSpec, dim: int):
        self.dim = dim
        self.omega = pulse.params.omega
        self.nu = float(pulse.nu)
        self.delta = pulse.resonant_delta
        self.p = int(round(-self.delta / self.nu))
        self.eps = self.delta + self.p * self.nu
        self.period = 2.0 * math.pi / self.nu
        self.kick = self.omega * displacement_kick(dim, pulse.params.eta)
        m = np.arange(dim)
        self.dm = (m[:, None] - m[None, :]).astype(float)

    def sigma_plus(self, t: float) -> np.ndarray:
        return self.kick * np.exp(1j * self.nu * (self.dm + self.p) * t)

    def rhs(self, t, y, ncols):
        d = self.dim
        u = y.reshape(2 * d, ncols)
        b = self.sigma_plus(t)
        out = np.empty_like(u)
        out[:d] = b @ u[d:] - (0.5 * self.eps) * u[:d]
        out[d:] = b.conj().T @ u[:d] + (0.5 * self.eps) * u[d:]
        return (-1j * out).ravel()

    def frame(self, t: float) -> np.ndarray:
        d = self.dim
        ph = np.exp(-0.5j * self.eps * t)
        return np.concatenate([np.full(d, ph), np.full(d, ph.conjugate())])

    def integrate(self, y0: np.ndarray, t_eval: np.ndarray, tol: float) -> np.ndarray:
        """Adaptive DOP853 from 0 to each ``t_eval``; returns columns at those times."""
        ncols = y0.shape[1]
        t_end = float(t_eval[-1])
        if t_end == 0.0:
            return np.repeat(y0[None], len(t_eval), axis=0)
        sol = solve_ivp(
            self.rhs, (0.0, t_end), y0.ravel(), method="DOP853",
            t_eval=t_eval, rtol=tol, atol=tol * 1e-2, args=(ncols,),
        )
        if sol.status != 0:
            raise StiffnessError(f"pre-RWA integration failed: {sol.message}")
        return sol.y.T.reshape(len(t_eval), 2 * self.dim, ncols)


def _check_tol(tol: float):
    if not 1e-12 <= tol <= 1e-6:
        raise InvalidArgumentError(f"tol={tol} outside [1e-12, 1e-6]")


def pre_rwa_propagators(pulse: PulseSpec, times: Sequence[float], dim: int, tol: float = 1e-10) -> np.ndarray:
    """Local ``qubit ⊗ pulsed-mode`` propagators ``U(t)`` at each requested time.

    One period of the (frame-shifted, periodic) generator is integrated with an
    adaptive embedded Runge-Kutta scheme; later times use
    ``U(nT + τ) = U(τ) U(T)^n``.  No renormalization is applied.
    """
    if pulse.model != "full_pre_rwa":
        raise InvalidArgumentError("pre-RWA propagation needs model='full_pre_rwa'")
    _check_tol(tol)
    if pulse.params.k >= dim:
        raise InvalidArgumentError(f"sideband order k={pulse.params.k} must be < dim={dim}")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise InvalidArgumentError("times must be finite and >= 0")
    gen = _PreRWAGenerator(pulse, dim)
    T = gen.period
    n_per = np.floor(times / T).astype(int)
    tau = times - n_per * T
    taus = np.unique(np.concatenate([tau, [T]]))
    eye = np.eye(2 * dim, dtype=complex)
    us = gen.integrate(eye, taus, tol)
    u_tau = {float(s): u for s, u in zip(taus, us)}
    u_period = u_tau[float(T)]

    out = np.empty((len(times), 2 * dim, 2 * dim), dtype=complex)
    power, power_n = eye, 0
    for i in np.argsort(n_per, kind="stable"):
        if n_per[i] > power_n:
            power = np.linalg.matrix_power(u_period, int(n_per[i] - power_n)) @ power
            power_n = int(n_per[i])
        out[i] = gen.frame(times[i])[:, None] * (u_tau[float(tau[i])] @ power)
    return out


def evolve_pre_rwa(pulse: PulseSpec, state: HybridState, t: float, tol: float = 1e-10, method: str = "floquet") -> HybridState:
    """Evolve under the full Lamb-Dicke-expanded interaction Hamiltonian.

    ``method="direct"`` integrates the state straight through without the
    periodic decomposition; it is slower for long times and kept as a
    cross-check.
    """
    d = pulsed_dim(state.dims, pulse.axis)
    if method == "floquet":
        u = pre_rwa_propagators(pulse, [t], d, tol)[0]
        return state.replace(apply_local(u, pulse.axis, state.tensor))
    if method != "direct":
        raise InvalidArgumentError(f"unknown method {method!r}")
    if pulse.model != "full_pre_rwa":
        raise InvalidArgumentError("pre-RWA propagation needs model='full_pre_rwa'")
    _check_tol(tol)
    gen = _PreRWAGenerator(pulse, d)
    tensor = state.tensor
    if pulse.axis == "y":
        tensor = tensor.transpose(0, 2, 1)
    y0 = np.ascontiguousarray(tensor).reshape(2 * d, -1)
    y = gen.integrate(y0, np.array([float(t)]), tol)[-1]
    y = gen.frame(t)[:, None] * y
    out = y.reshape(tensor.shape)
    if pulse.axis == "y":
        out = out.transpose(0, 2, 1)
    return state.replace(out)


@dataclass(frozen=True)
class ResonanceScanReport:
    deltas: tuple[float, ...]
    contrasts: tuple[float, ...]
    probe_time: float
    n_ref: int

    @property
    def peak_index(self) -> int:
        return int(np.argmax(self.contrasts))

    @property
    def peak_delta(self) -> float:
        return self.deltas[self.peak_index]


def resonance_scan(template: PulseSpec, delta_grid: Sequence[float], dim: int, n_ref: int = 0, tol: float = 1e-10) -> ResonanceScanReport:
    """Flip contrast ``1 - P_e`` after the effective pi time, across detunings.

    Starts from ``|e, n_ref>`` on the pulsed mode.  The probe time is the
    effective-model pi time of the template's sideband, so the contrast peaks
    where the configured detuning makes that sideband resonant.
    """
    if template.nu is None:
        raise InvalidArgumentError("resonance scan needs a template with nu")
    grid = [float(x) for x in delta_grid]
    if not grid:
        raise InvalidArgumentError("delta grid is empty")
    t_probe = pi_pulse_time(n_ref, template.params)
    contrasts = []
    for delta in grid:
        pulse = replace(template, model="full_pre_rwa", delta=delta)
        u = pre_rwa_propagators(pulse, [t_probe], dim, tol)[0]
        col = u[:, n_ref]
        contrasts.append(float(1.0 - np.sum(np.abs(col[:dim]) ** 2)))
    return ResonanceScanReport(tuple(grid), tuple(contrasts), t_probe, n_ref)
