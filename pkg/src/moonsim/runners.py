"""Config-driven batch jobs behind the CLI subcommands.

Each runner turns a validated :class:`RunConfig` into plain data (rows or a
JSON-ready dict); file formats live in :mod:`moonsim.cli`.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import config as cfgmod
from . import dynamics, protocol, verification
from .config import RunConfig
from .coupling import BranchPair, commensurability_scan, pi_pulse_time
from .errors import ConfigError, InvalidArgumentError
from .fock import leakage

CSV_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1
THREADS_ENV = "MOONSIM_THREADS"


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


# --- simulate ----------------------------------------------------------------------------

def simulate(cfg: RunConfig) -> tuple[list[str], list[list[float]]]:
    """Time series of P_e and diagnostics for a single pulse."""
    sim = cfg.simulate
    if sim is None:
        raise ConfigError("simulate: section missing")
    pulse = cfgmod.build_pulse(sim.pulse, cfg.pre_rwa)
    state0 = cfgmod.build_initial(cfg)
    dims = state0.dims
    d = dynamics.pulsed_dim(dims, pulse.axis)
    for tr in sim.track:
        if tr.n >= (dims[0] if tr.axis == "x" else dims[1]):
            raise ConfigError(f"simulate.track: level {tr.n} outside mode {tr.axis}")
    if sim.time.t_max is not None:
        t_max = sim.time.t_max
    else:
        n_start = cfg.initial.nx if pulse.axis == "x" else cfg.initial.ny
        try:
            if pulse.model == "quadratic":
                t_ref = protocol.t_g_for_quadratic(n_start, pulse.coupling_omega_eff)
            else:
                t_ref = pi_pulse_time(n_start, pulse.params)
        except Exception as exc:
            raise ConfigError(f"simulate.time.t_max_pi: no pi time for this pulse ({exc})") from None
        t_max = sim.time.t_max_pi * t_ref
    times = np.linspace(0.0, t_max, sim.time.samples)

    if pulse.model == "full_pre_rwa":
        tol = cfg.pre_rwa.tol
        us = dynamics.pre_rwa_propagators(pulse, times, d, tol)
        states = [state0.replace(dynamics.apply_local(u, pulse.axis, state0.tensor)) for u in us]
    else:
        states = [dynamics.u_analytic(pulse, t, dims).apply(state0) for t in times]

    header = ["t", "P_e"] + [f"pop_{tr.axis}_{tr.n}" for tr in sim.track] + ["norm", "leakage"]
    if pulse.model == "full_pre_rwa":
        header.append("norm_drift")
    rows = []
    band = cfg.guard
    for t, s in zip(times, states):
        p = np.abs(s.tensor) ** 2
        row = [float(t), dynamics.excited_probability(s)]
        for tr in sim.track:
            row.append(float(p[:, tr.n, :].sum() if tr.axis == "x" else p[:, :, tr.n].sum()))
        row += [s.norm, leakage(s, band) if band else 0.0]
        if pulse.model == "full_pre_rwa":
            row.append(abs(s.norm - 1.0))
        rows.append(row)
    return header, rows


# --- protocol ----------------------------------------------------------------------------

def _joint_flip_prediction(proto: protocol.Protocol):
    """Shared-clock fidelity predicted from the joint-flip steps of a two-branch protocol.

    A joint-flip step is a pulse of duration ``t0(n)`` with ``n >= k``: it
    flips ``|e,n>`` exactly and the ``|g,n>`` branch by ``sin(phase)``.  With
    exactly two such steps (one per axis, as in the M00N sequence) each target
    component collects one factor, so the overlap is their mean.
    """
    sines = []
    for step in proto.steps:
        if isinstance(step, protocol.PulseStep) and isinstance(step.duration, protocol.PiTime):
            n, k = step.duration.n, step.pulse.params.k
            if step.pulse.model == "effective" and k > 0 and n >= k:
                rep = commensurability_scan(BranchPair(n, n, k), step.pulse.params.omega, [step.pulse.params.eta])
                row = rep.rows[0]
                if row.degenerate:
                    return None
                sines.append(math.sin(row.lower_phase))
    if len(sines) != 2:
        return None
    return (0.5 * (sines[0] + sines[1])) ** 2


def _summary_dict(s: protocol.StepSummary) -> dict:
    return {
        "index": s.index,
        "kind": s.kind,
        "label": s.label,
        "duration": s.duration,
        "norm": s.norm,
        "excited_probability": s.excited_probability,
        "leakage": s.leakage,
        "kernel_drift": s.kernel_drift,
        "discarded_weight": s.discarded_weight,
    }


def _sparse_state(state, cutoff: float = 1e-14) -> list:
    t = state.tensor
    idx = np.argwhere(np.abs(t) > cutoff)
    return [["eg"[q], int(nx), int(ny), float(t[q, nx, ny].real), float(t[q, nx, ny].imag)] for q, nx, ny in idx]


def protocol_report(cfg: RunConfig) -> tuple[dict, dict]:
    proto = cfgmod.build_protocol(cfg)
    mode = cfg.protocol.mode
    nu = tol = None
    if mode == "pre_rwa":
        if cfg.pre_rwa is None:
            raise ConfigError("protocol.mode: pre_rwa runs need a pre_rwa section with nu")
        nu, tol = cfg.pre_rwa.nu, cfg.pre_rwa.tol
    rep = protocol.run(proto, mode, nu=nu, tol=tol or 1e-10, keep_states=True)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "protocol",
        "mode": mode,
        "target": {"M": rep.target[0], "N": rep.target[1]},
        "fidelity": rep.fidelity,
        "infidelity": 1.0 - rep.fidelity,
        "branch_phases": rep.branch_phases,
        "leakage": rep.leakage,
        "entropy_x_y_bits": rep.entropy_x_y,
        "steps": [_summary_dict(s) for s in rep.steps],
    }
    if mode == "shared_clock":
        report["shared_clock_prediction"] = _joint_flip_prediction(proto)
    trajectory = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "basis": "qubit (e|g), nx, ny, re, im",
        "states": [_sparse_state(s) for s in rep.states],
    }
    return report, trajectory


# --- scan ----------------------------------------------------------------------------------

def scan_report(cfg: RunConfig) -> dict:
    sc = cfg.scan
    if sc is None:
        raise ConfigError("scan: section missing")
    if sc.kind == "resonance":
        return _resonance_report(cfg)
    grid = sc.eta.points()
    pair = BranchPair(sc.pair.n_upper, sc.pair.n_lower, sc.pair.k)
    try:
        comm = commensurability_scan(pair, sc.omega, grid)
    except InvalidArgumentError as exc:
        raise ConfigError(f"scan.eta: {exc}") from None
    is_moon_pair = (pair.n_upper, pair.n_lower, pair.k) == (4, 4, 4)
    run_fids = [None] * len(comm.rows)
    if sc.full_run and is_moon_pair:
        dims = (cfg.dims.x, cfg.dims.y)

        def one(row):
            if row.degenerate:
                return None
            proto = protocol.moon_protocol(eta=row.eta, omega=sc.omega, dims=dims, guard=cfg.guard)
            return protocol.run(proto, "shared_clock").fidelity

        with ThreadPoolExecutor(max_workers=thread_cap()) as ex:
            run_fids = list(ex.map(one, comm.rows))
    rows = []
    for i, (r, rf) in enumerate(zip(comm.rows, run_fids)):
        rows.append({
            "index": i,
            "eta": r.eta,
            "rate_upper": r.rate_upper,
            "rate_lower": r.rate_lower,
            "ratio": r.ratio,
            "lower_phase": r.lower_phase,
            "predicted_fidelity": r.predicted_fidelity,
            "predicted_infidelity": r.infidelity,
            "exact": r.exact,
            "degenerate": r.degenerate,
            "run_fidelity": rf,
        })
    diffs = [abs(r["predicted_fidelity"] - r["run_fidelity"]) for r in rows if r["run_fidelity"] is not None]
    best = comm.best
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "scan",
        "kind": "commensurability",
        "pair": {"n_upper": pair.n_upper, "n_lower": pair.n_lower, "k": pair.k},
        "omega": sc.omega,
        "full_run": bool(sc.full_run and is_moon_pair),
        "threshold": sc.threshold,
        "any_reaches_threshold": comm.any_reaches(sc.threshold),
        "best_index": comm.best_index,
        "best_eta": None if best is None else best.eta,
        "best_predicted_fidelity": None if best is None else best.predicted_fidelity,
        "max_prediction_run_disagreement": max(diffs) if diffs else None,
        "rows": rows,
    }


def _resonance_report(cfg: RunConfig) -> dict:
    sc = cfg.scan
    if cfg.pre_rwa is None:
        raise ConfigError("scan: resonance scans need a pre_rwa section with nu")
    pc = sc.pulse
    template = cfgmod.build_pulse(pc.model_copy(update={"model": "full_pre_rwa"}), cfg.pre_rwa)
    grid = sc.delta.points()
    dim = cfg.dims.x if pc.axis == "x" else cfg.dims.y
    rep = dynamics.resonance_scan(template, grid, dim, sc.n_ref, cfg.pre_rwa.tol)
    configured = -pc.k * cfg.pre_rwa.nu
    srt = sorted(grid)
    steps = [b - a for a, b in zip(srt[:-1], srt[1:]) if b > a]
    resolution = min(steps) if steps else 0.0
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "scan",
        "kind": "resonance",
        "k": pc.k,
        "nu": cfg.pre_rwa.nu,
        "probe_time": rep.probe_time,
        "configured_delta": configured,
        "peak_delta": rep.peak_delta,
        "grid_resolution": resolution,
        "peak_within_resolution": abs(rep.peak_delta - configured) <= resolution + 1e-12 * abs(configured),
        "rows": [{"index": i, "delta": d, "contrast": c} for i, (d, c) in enumerate(zip(rep.deltas, rep.contrasts))],
    }


# --- verify ---------------------------------------------------------------------------------

def verify_report(cfg: RunConfig, echo=None) -> dict:
    results = verification.run_checks(cfg.verify, echo)
    failed = [r.name for r in results if not r.passed]
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "verify",
        "passed": not failed,
        "failed": failed,
        "checks": [r.to_dict() for r in results],
    }
