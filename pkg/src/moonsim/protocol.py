"""Pulse-sequence engine for deterministic M00N-state preparation.

The default sequence (:func:`moon_protocol`) runs in four stages on a
``qubit ⊗ x ⊗ y`` register that starts in ``|e>|0>|0>``:

A. k=4 flips on x then y (with the qubit reset to ``|e>`` in between) give
   ``|g>|4>|4>``; the qubit is then set to ``(|e> + |g>)/sqrt(2)``.
B. A k=4 pulse on x flips both branches: ``|e,4> -> |g,8>``, ``|g,4> -> |e,0>``.
C. A k=4 pulse on y does the same on the other axis, followed by a carrier
   pi rotation that swaps the qubit labels of the two branches.
D. A k=2 pulse of the bare quadratic model on y adds two phonons to the
   ``|e>|0>|8>`` branch while ``|g>|8>|0>`` sits in the pulse's kernel.

The carrier rotation phase sets the relative phase of the final branches; the
default ``-pi/4`` yields ``(|8,0> + |0,10>)/sqrt(2)`` with a plus sign.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import dynamics
from .coupling import (
    BranchPair,
    CouplingParams,
    commensurability_scan,
    coupling_f,
    pi_pulse_time,
    sqrt_rising,
)
from .dynamics import PulseSpec, excited_probability, pulsed_dim
from .errors import DegenerateCouplingError, InvalidArgumentError
from .fock import QUBIT_E, QUBIT_G, HybridState, leakage, qubit_vector

RUN_MODES = ("ideal_per_branch", "shared_clock", "pre_rwa")
DEFAULT_CARRIER_PHI = -0.25 * math.pi


@dataclass(frozen=True)
class PiTime:
    """Symbolic duration: the pi time of the ``|e, n> -> |g, n+k>`` flip."""

    n: int


@dataclass(frozen=True)
class QuadraticFlipTime:
    """Symbolic duration ``t_g`` of the quadratic model starting from ``|e, n_start>``."""

    n_start: int


Duration = Union[float, PiTime, QuadraticFlipTime]


@dataclass(frozen=True)
class PulseStep:
    pulse: PulseSpec
    duration: Duration
    label: str = ""


@dataclass(frozen=True)
class CarrierRotation:
    theta: float
    phi: float = 0.0
    label: str = ""


@dataclass(frozen=True)
class SetQubit:
    """Idealized reset of the qubit factor; requires a product qubit ⊗ modes state."""

    qubit: str
    label: str = ""


ProtocolStep = Union[PulseStep, CarrierRotation, SetQubit]


@dataclass(frozen=True)
class Protocol:
    dims: tuple[int, int]
    initial: HybridState
    steps: tuple[ProtocolStep, ...]
    target: tuple[int, int] = (8, 10)
    guard: int = 4

    def __post_init__(self):
        if self.initial.dims != tuple(self.dims):
            raise InvalidArgumentError("initial state dims do not match protocol dims")
        validate(self)


def quadratic_omega_eff(params: CouplingParams, n_ref: int) -> float:
    """Bare coupling of the quadratic model emulating the k=2 effective one at ``n_ref``."""
    return params.omega * abs(coupling_f(n_ref, replace(params, k=2)))


def t_g_for_quadratic(n_start: int, omega_eff: float, dim: Optional[int] = None) -> float:
    """Pi time of ``|e, n> <-> |g, n+2>`` under ``Ω_eff (a² σ+ + h.c.)``."""
    if dim is not None and dim <= n_start + 2:
        raise InvalidArgumentError(f"dim={dim} must exceed n_start + 2 = {n_start + 2}")
    rate = abs(omega_eff) * sqrt_rising(n_start, 2)
    if rate == 0.0:
        raise DegenerateCouplingError("quadratic coupling is zero")
    return 0.5 * math.pi / rate


def resolve_duration(step: PulseStep) -> float:
    d = step.duration
    if isinstance(d, PiTime):
        return pi_pulse_time(d.n, step.pulse.params)
    if isinstance(d, QuadraticFlipTime):
        return t_g_for_quadratic(d.n_start, step.pulse.coupling_omega_eff)
    d = float(d)
    if not math.isfinite(d) or d < 0:
        raise InvalidArgumentError(f"pulse duration must be finite and >= 0, got {d}")
    return d


def _max_excitation(protocol: Protocol) -> dict:
    reach = {"x": 0, "y": 0}
    t = protocol.initial.tensor
    for axis, ax in (("x", 1), ("y", 2)):
        occupied = np.nonzero(np.abs(t).sum(axis=tuple(i for i in range(3) if i != ax)))[0]
        reach[axis] = int(occupied.max()) if occupied.size else 0
    reach["x"] = max(reach["x"], protocol.target[0])
    reach["y"] = max(reach["y"], protocol.target[1])
    for step in protocol.steps:
        if isinstance(step, PulseStep):
            d = step.duration
            k = dynamics._order(step.pulse)
            if isinstance(d, PiTime):
                reach[step.pulse.axis] = max(reach[step.pulse.axis], d.n + k)
            elif isinstance(d, QuadraticFlipTime):
                reach[step.pulse.axis] = max(reach[step.pulse.axis], d.n_start + 2)
    return reach


def validate(protocol: Protocol) -> None:
    """Check the truncation contract and that every symbolic duration resolves."""
    reach = _max_excitation(protocol)
    for axis, dim in zip("xy", protocol.dims):
        if reach[axis] + protocol.guard > dim - 1:
            raise InvalidArgumentError(
                f"mode {axis}: excitation {reach[axis]} plus guard {protocol.guard} does not fit dim {dim}"
            )
    for i, step in enumerate(protocol.steps):
        if isinstance(step, PulseStep):
            if dynamics._order(step.pulse) >= pulsed_dim(protocol.dims, step.pulse.axis):
                raise InvalidArgumentError(f"step {i}: sideband order exceeds mode dim")
            try:
                resolve_duration(step)
            except DegenerateCouplingError as exc:
                raise DegenerateCouplingError(f"step {i}: {exc}") from exc
        elif isinstance(step, SetQubit):
            qubit_vector(step.qubit)


# --- state-level operations --------------------------------------------------------

def moon_target(M: int, N: int, dims, guard: int = 0) -> HybridState:
    """``|g> (|M>_x|0>_y + |0>_x|N>_y) / sqrt(2)``."""
    dx, dy = dims
    if M < 0 or N < 0 or M >= dx - guard or N >= dy - guard:
        raise InvalidArgumentError(f"M={M}, N={N} out of range for dims {tuple(dims)} with guard {guard}")
    if M == 0 and N == 0:
        raise InvalidArgumentError("moon_target(0, 0) is degenerate: both terms are |0,0>")
    modes = np.zeros((dx, dy), dtype=complex)
    modes[M, 0] += 1.0 / math.sqrt(2.0)
    modes[0, N] += 1.0 / math.sqrt(2.0)
    return HybridState.product("g", modes)


def carrier_rotation(state: HybridState, theta: float, phi: float) -> HybridState:
    """Apply ``cos(θ/2) I - i sin(θ/2) (cos φ σx + sin φ σy)`` to the qubit."""
    c, s = math.cos(0.5 * theta), math.sin(0.5 * theta)
    # basis (e, g) with σ+ = |e><g|
    r = np.array(
        [[c, -1j * s * np.exp(-1j * phi)], [-1j * s * np.exp(1j * phi), c]],
        dtype=complex,
    )
    return state.replace(np.tensordot(r, state.tensor, axes=(1, 0)))


def set_qubit(state: HybridState, qubit, tol: float = 1e-9) -> tuple[HybridState, float]:
    """Replace the qubit factor of a product state.

    Returns the new state and the Schmidt weight discarded (zero for an exact
    product state).  States entangled beyond ``tol`` are rejected.
    """
    m = state.tensor.reshape(2, -1)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    total = float(np.sum(s**2))
    discarded = float(s[1] ** 2) / total if total > 0 else 0.0
    if discarded > tol:
        raise InvalidArgumentError(
            f"SetQubit needs a product state; qubit-mode Schmidt weight {discarded:.3g} > {tol:.3g}"
        )
    modes = (u[:, 0].conj() @ m) * math.sqrt(total / float(s[0] ** 2))
    return HybridState.product(qubit, modes.reshape(state.dims)), discarded


def fidelity(state: HybridState, target: HybridState) -> float:
    if state.dims != target.dims:
        raise InvalidArgumentError(f"dims {state.dims} != target dims {target.dims}")
    return float(abs(np.vdot(target.amplitudes, state.amplitudes)) ** 2)


def entanglement_entropy(state: HybridState, cut: str) -> float:
    """Base-2 von Neumann entropy of the subsystem ``cut`` against the rest."""
    axes = {"qubit": 0, "x": 1, "y": 2}
    if cut not in axes:
        raise InvalidArgumentError(f"cut must be one of {tuple(axes)}, got {cut!r}")
    t = np.moveaxis(state.tensor, axes[cut], 0)
    s = np.linalg.svd(t.reshape(t.shape[0], -1), compute_uv=False)
    p = s**2
    p = p[p > 0] / p.sum()
    return float(max(-np.sum(p * np.log2(p)), 0.0))


def branch_phases(state: HybridState, M: int, N: int) -> dict:
    """Phases of the two M00N components and their relative phase (``|0,N>`` vs ``|M,0>``)."""
    a = state.amplitude("g", M, 0)
    b = state.amplitude("g", 0, N)
    out = {
        "phase_M0": math.atan2(a.imag, a.real) if a != 0 else None,
        "phase_0N": math.atan2(b.imag, b.real) if b != 0 else None,
        "relative": None,
    }
    if a != 0 and b != 0:
        r = b / a
        out["relative"] = math.atan2(r.imag, r.real)
    return out


# --- running --------------------------------------------------------------------------

@dataclass(frozen=True)
class StepSummary:
    index: int
    kind: str
    label: str
    duration: Optional[float]
    norm: float
    excited_probability: float
    leakage: float
    kernel_drift: Optional[float] = None
    discarded_weight: Optional[float] = None


@dataclass(frozen=True)
class FidelityReport:
    mode: str
    target: tuple[int, int]
    fidelity: float
    branch_phases: dict
    leakage: float
    entropy_x_y: float
    final_state: HybridState
    steps: tuple[StepSummary, ...]
    states: Optional[tuple[HybridState, ...]] = field(default=None, repr=False)

    def kernel_drift(self, index: int) -> Optional[float]:
        return self.steps[index].kernel_drift


def _kernel_projection(pulse: PulseSpec, state: HybridState) -> np.ndarray:
    """Components ``|g, n<k>`` on the pulsed axis, which every sideband pulse leaves invariant."""
    k = dynamics._order(pulse)
    ax = 1 if pulse.axis == "x" else 2
    sl = [slice(None)] * 3
    sl[0] = QUBIT_G
    sl[ax] = slice(0, k)
    return state.tensor[tuple(sl)].copy()


def _pulse_propagate(pulse: PulseSpec, state: HybridState, duration: float, mode: str, nu, tol) -> HybridState:
    if mode == "ideal_per_branch":
        return dynamics.u_ideal_flip(pulse, state.dims).apply(state)
    if mode == "shared_clock":
        return dynamics.u_analytic(pulse, duration, state.dims).apply(state)
    if nu is None:
        raise InvalidArgumentError("pre_rwa mode needs a trap frequency nu")
    params = pulse.params
    if pulse.model == "quadratic":
        # drive the bare Rabi frequency that the quadratic coupling was derived from
        params = replace(params, k=2)
    full = replace(pulse, params=params, model="full_pre_rwa", nu=nu, delta=None, omega_eff=None)
    return dynamics.evolve_pre_rwa(full, state, duration, tol)


def run(
    protocol: Protocol,
    mode: str = "ideal_per_branch",
    target: Optional[HybridState] = None,
    nu: Optional[float] = None,
    tol: float = 1e-10,
    keep_states: bool = False,
) -> FidelityReport:
    """Apply the protocol's steps in order and score the final state.

    ``ideal_per_branch`` gives every coupled branch its own exact flip,
    ``shared_clock`` evolves each pulse for its single resolved duration, and
    ``pre_rwa`` replaces each sideband pulse by the full time-dependent
    interaction (requires ``nu``).
    """
    if mode not in RUN_MODES:
        raise InvalidArgumentError(f"run mode must be one of {RUN_MODES}, got {mode!r}")
    M, N = protocol.target
    if target is None:
        target = moon_target(M, N, protocol.dims)
    band = protocol.guard
    state = protocol.initial
    summaries, states = [], [state]
    for i, step in enumerate(protocol.steps):
        duration = kernel_drift = discarded = None
        if isinstance(step, PulseStep):
            duration = resolve_duration(step)
            before = _kernel_projection(step.pulse, state)
            state = _pulse_propagate(step.pulse, state, duration, mode, nu, tol)
            kernel_drift = float(np.max(np.abs(_kernel_projection(step.pulse, state) - before), initial=0.0))
            kind = "pulse"
        elif isinstance(step, CarrierRotation):
            state = carrier_rotation(state, step.theta, step.phi)
            kind = "rotation"
        elif isinstance(step, SetQubit):
            state, discarded = set_qubit(state, step.qubit, tol=1.0 if mode == "pre_rwa" else 1e-9)
            kind = "set_qubit"
        else:
            raise InvalidArgumentError(f"unknown protocol step {step!r}")
        summaries.append(
            StepSummary(
                i, kind, step.label, duration, state.norm, excited_probability(state),
                leakage(state, band) if band else 0.0, kernel_drift, discarded,
            )
        )
        if keep_states:
            states.append(state)
    return FidelityReport(
        mode=mode,
        target=(M, N),
        fidelity=fidelity(state, target),
        branch_phases=branch_phases(state, M, N),
        leakage=leakage(state, band) if band else 0.0,
        entropy_x_y=entanglement_entropy(state, "x"),
        final_state=state,
        steps=tuple(summaries),
        states=tuple(states) if keep_states else None,
    )


def moon_protocol(
    eta: float = 0.2,
    omega: float = 1.0,
    dims: tuple[int, int] = (32, 32),
    guard: int = 4,
    eta_quadratic: float = 0.05,
    omega_quadratic: float = 1.0,
    carrier_phi: float = DEFAULT_CARRIER_PHI,
    eta_stage_a: Optional[float] = None,
) -> Protocol:
    """The four-stage sequence producing ``|g>(|8,0> + |0,10>)/sqrt(2)``."""
    params = CouplingParams(eta, 4, omega)
    params_a = params if eta_stage_a is None else CouplingParams(eta_stage_a, 4, omega)
    quad = CouplingParams(eta_quadratic, 2, omega_quadratic)
    quad_pulse = PulseSpec("y", quad, model="quadratic", omega_eff=quadratic_omega_eff(quad, 8))
    steps = (
        PulseStep(PulseSpec("x", params_a), PiTime(0), "A: |e,0,0> -> |g,4,0>"),
        SetQubit("e", "A: reset qubit to e"),
        PulseStep(PulseSpec("y", params_a), PiTime(0), "A: |e,4,0> -> |g,4,4>"),
        SetQubit("plus", "A: qubit to (e+g)/sqrt2"),
        PulseStep(PulseSpec("x", params), PiTime(4), "B: x k=4 joint flip"),
        PulseStep(PulseSpec("y", params), PiTime(4), "C: y k=4 joint flip"),
        CarrierRotation(math.pi, carrier_phi, "C: carrier pi rotation"),
        PulseStep(quad_pulse, QuadraticFlipTime(8), "D: quadratic k=2 on y"),
    )
    initial = HybridState.basis("e", 0, 0, *dims)
    return Protocol(tuple(dims), initial, steps, (8, 10), guard)


def superposed_44_state(dims) -> HybridState:
    """``(|e> + |g>)/sqrt(2) |4>_x |4>_y``."""
    return HybridState.product("plus", _fock_modes(dims, [(4, 4, 1.0)]))


def _fock_modes(dims, terms) -> np.ndarray:
    m = np.zeros(dims, dtype=complex)
    for nx, ny, amp in terms:
        m[nx, ny] += amp
    return m


def branch_state(dims, terms) -> HybridState:
    """State from ``(qubit, nx, ny, amplitude)`` terms, e.g. the two-branch intermediates."""
    t = np.zeros((2,) + tuple(dims), dtype=complex)
    for q, nx, ny, amp in terms:
        t[QUBIT_E if q == "e" else QUBIT_G, nx, ny] += amp
    return HybridState(t, *dims)


# --- shared-clock scan ------------------------------------------------------------------

@dataclass(frozen=True)
class SharedClockRow:
    eta: float
    predicted_fidelity: Optional[float]
    run_fidelity: Optional[float]
    ratio: Optional[float]
    exact: bool
    degenerate: bool


@dataclass(frozen=True)
class SharedClockScan:
    rows: tuple[SharedClockRow, ...]
    best_index: Optional[int]
    threshold: float

    @property
    def max_disagreement(self) -> float:
        diffs = [
            abs(r.predicted_fidelity - r.run_fidelity)
            for r in self.rows
            if r.predicted_fidelity is not None and r.run_fidelity is not None
        ]
        return max(diffs, default=0.0)

    @property
    def any_reaches_threshold(self) -> bool:
        return any(r.run_fidelity is not None and r.run_fidelity >= self.threshold for r in self.rows)


def shared_clock_scan(
    eta_values: Sequence[float],
    omega: float = 1.0,
    full_run: bool = True,
    threshold: float = 0.999,
    **protocol_kwargs,
) -> SharedClockScan:
    """Compare the analytic joint-flip prediction with full shared-clock runs.

    Both k=4 joint-flip stages use the scanned eta, so the prediction is the
    single-pair ``sin²(lower-branch phase)`` of the (4, 4) branch pair.
    """
    comm = commensurability_scan(BranchPair(4, 4, 4), omega, eta_values)
    rows = []
    for crow in comm.rows:
        run_fid = None
        if full_run and not crow.degenerate:
            proto = moon_protocol(eta=crow.eta, omega=omega, **protocol_kwargs)
            run_fid = run(proto, "shared_clock").fidelity
        rows.append(SharedClockRow(crow.eta, crow.predicted_fidelity, run_fid, crow.ratio, crow.exact, crow.degenerate))
    return SharedClockScan(tuple(rows), comm.best_index, threshold)
