"""Headless oracle checks run by ``moonsim verify``.

Each check compares a production code path against an independent route
(eigendecomposition, exact rational sums, root finding on simulated curves,
the time-dependent integrator) and reports the worst defect seen.  Reports
carry no timings so repeated runs are byte-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from . import dynamics, protocol
from .config import VerifyConfig
from .coupling import CouplingParams, laguerre_assoc, pi_pulse_time, rabi_frequency
from .dynamics import PulseSpec
from .fock import HybridState


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: dict

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.1e}"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "status": "pass" if self.passed else "fail",
            "worst": self.worst,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


def laguerre_direct_sum(n: int, k: int, x: float) -> Fraction:
    """Exact value of the finite Laguerre sum at the binary value of ``x``."""
    xf = Fraction(x)
    total = Fraction(0)
    for m in range(n + 1):
        coeff = Fraction(math.factorial(n + k), math.factorial(m) * math.factorial(m + k) * math.factorial(n - m))
        total += (-1) ** m * coeff * xf**m
    return total


def check_oracle_equivalence(cfg: VerifyConfig) -> CheckResult:
    tol = cfg.tolerances.oracle
    dims = (32, 32)
    worst, where = 0.0, None
    for k in (1, 2, 4):
        for eta in (0.05, 0.2, 0.5):
            params = CouplingParams(eta, k, 1.0)
            pulse = PulseSpec("x", params)
            t0 = pi_pulse_time(0, params)
            for label, t in (("0.1/omega", 0.1), ("t0", t0), ("3t0", 3 * t0)):
                ua = dynamics.u_analytic(pulse, t, dims).local()
                if cfg.inject.propagator_perturbation:
                    ua = ua.copy()
                    ua[0, 0] += cfg.inject.propagator_perturbation
                un = dynamics.u_numeric(pulse, t, dims).local()
                d = float(np.max(np.abs(ua - un)))
                if d > worst:
                    worst, where = d, {"k": k, "eta": eta, "t": label}
    return CheckResult("oracle_equivalence", worst <= tol, worst, tol, {"worst_at": where})


def _first_zero_of_excited_amplitude(pulse: PulseSpec, n: int, dims, t_guess: float) -> float:
    """First sign change of Re<e,n|U(t)|e,n>, located on the numeric propagator."""

    def amp(t):
        return dynamics.u_numeric(pulse, t, dims).u_ee[n, n].real

    ts = np.linspace(0.0, 2.0 * t_guess, 81)
    vals = [amp(t) for t in ts]
    for a, b, fa, fb in zip(ts[:-1], ts[1:], vals[:-1], vals[1:]):
        if fa > 0 >= fb:
            return brentq(amp, a, b, xtol=1e-15 * t_guess, rtol=4 * np.finfo(float).eps, maxiter=200)
    raise RuntimeError("no zero of the excited amplitude found")


def check_pi_time(cfg: VerifyConfig) -> list[CheckResult]:
    dims = (32, 32)
    pe_worst = root_worst = 0.0
    detail = {}
    for n in (0, 4):
        params = CouplingParams(0.2, 4, 1.0)
        pulse = PulseSpec("x", params)
        t0 = pi_pulse_time(n, params)
        psi = HybridState.basis("e", n, 0, *dims)
        pe = dynamics.excited_probability(dynamics.u_analytic(pulse, t0, dims).apply(psi))
        root = _first_zero_of_excited_amplitude(pulse, n, dims, t0)
        rel = abs(root - t0) / t0
        pe_worst, root_worst = max(pe_worst, pe), max(root_worst, rel)
        detail[f"n={n}"] = {"t0": t0, "numeric_zero": root, "P_e_at_t0": pe}
    return [
        CheckResult("pi_time_excited_probability", pe_worst <= cfg.tolerances.timing_pe, pe_worst, cfg.tolerances.timing_pe, detail),
        CheckResult("pi_time_first_zero", root_worst <= cfg.tolerances.timing_root, root_worst, cfg.tolerances.timing_root, {}),
    ]


LAGUERRE_XS = (1e-3, 1e-2, 0.04, 0.25, 1.0, 4.0)


def check_laguerre(cfg: VerifyConfig) -> CheckResult:
    tol = cfg.tolerances.laguerre
    worst, where, exact_zero_ok = 0.0, None, True
    for n in range(41):
        for k in range(9):
            for x in LAGUERRE_XS:
                exact = laguerre_direct_sum(n, k, x)
                got = laguerre_assoc(n, k, x)
                if exact == 0:
                    # exact roots such as L_1^0(1) = 0 have no relative error
                    exact_zero_ok &= got == 0.0
                    continue
                rel = float(abs((Fraction(got) - exact) / exact))
                if rel > worst:
                    worst, where = rel, {"n": n, "k": k, "x": x}
    return CheckResult("laguerre_recurrence", worst <= tol and exact_zero_ok, worst, tol,
                       {"worst_at": where, "exact_roots_reproduced": exact_zero_ok})


def check_protocol(cfg: VerifyConfig) -> list[CheckResult]:
    tols = cfg.tolerances
    proto = protocol.moon_protocol()
    rep = protocol.run(proto, "ideal_per_branch")
    infid = 1.0 - rep.fidelity
    kernel = rep.steps[-1].kernel_drift
    ent = abs(rep.entropy_x_y - 1.0)
    rep2 = protocol.run(proto, "ideal_per_branch")
    same = rep2.final_state.amplitudes.tobytes() == rep.final_state.amplitudes.tobytes() and rep2.fidelity == rep.fidelity
    return [
        CheckResult("protocol_fidelity", infid <= tols.protocol, infid, tols.protocol,
                    {"fidelity": rep.fidelity, "relative_phase": rep.branch_phases["relative"]}),
        CheckResult("quadratic_kernel_invariance", kernel <= tols.kernel, kernel, tols.kernel, {}),
        CheckResult("moon_entropy_one_bit", ent <= tols.entropy, ent, tols.entropy, {"entropy_bits": rep.entropy_x_y}),
        CheckResult("protocol_determinism", same, 0.0 if same else 1.0, 0.0, {}),
    ]


def check_shared_clock(cfg: VerifyConfig) -> CheckResult:
    tol = cfg.tolerances.shared_clock
    grid = cfg.shared_clock_grid.points()
    scan = protocol.shared_clock_scan(grid)
    best = scan.rows[scan.best_index] if scan.best_index is not None else None
    ok = scan.max_disagreement <= tol and len(grid) >= 50
    return CheckResult("shared_clock_vs_prediction", ok, scan.max_disagreement, tol, {
        "grid_points": len(grid),
        "best_eta": None if best is None else best.eta,
        "best_fidelity": None if best is None else best.run_fidelity,
        "any_eta_reaches_0.999": scan.any_reaches_threshold,
    })


def _unitarity_defect(u: np.ndarray, keep: np.ndarray) -> float:
    d = u.conj().T @ u - np.eye(u.shape[0])
    return float(np.max(np.abs(d[np.ix_(keep, keep)]))) if keep.any() else 0.0


def check_unitarity(cfg: VerifyConfig) -> list[CheckResult]:
    tols = cfg.tolerances
    dims = (32, 32)
    d = 32
    # norm drift along effective and quadratic trajectories
    norm_worst = 0.0
    for mode in ("ideal_per_branch", "shared_clock"):
        rep = protocol.run(protocol.moon_protocol(), mode)
        norm_worst = max(norm_worst, max(abs(s.norm - 1.0) for s in rep.steps))
    params = CouplingParams(0.2, 4, 1.0)
    pulse = PulseSpec("x", params)
    psi = HybridState.basis("e", 0, 0, *dims)
    for t in np.linspace(0.0, 3 * pi_pulse_time(0, params), 31):
        norm_worst = max(norm_worst, abs(dynamics.u_analytic(pulse, t, dims).apply(psi).norm - 1.0))
    quad = PulseSpec("y", CouplingParams(0.05, 2, 1.0), model="quadratic", omega_eff=1.0)
    for t in np.linspace(0.0, 5.0, 11):
        norm_worst = max(norm_worst, abs(dynamics.u_analytic(quad, t, dims).apply(psi).norm - 1.0))

    exact_worst = inside_worst = top_defect = 0.0
    for k in (1, 2, 4):
        for eta in (0.05, 0.2, 0.5):
            p = PulseSpec("x", CouplingParams(eta, k, 1.0))
            t = 3 * pi_pulse_time(0, p.params)
            levels = np.concatenate([np.arange(d), np.arange(d)])
            keep = levels < d - k
            exact = dynamics.u_analytic(p, t, dims, boundary="exact").local()
            closed = dynamics.u_analytic(p, t, dims, boundary="closed_form").local()
            exact_worst = max(exact_worst, _unitarity_defect(exact, np.ones(2 * d, bool)))
            inside_worst = max(inside_worst, _unitarity_defect(closed, keep))
            top_defect = max(top_defect, _unitarity_defect(closed, np.ones(2 * d, bool)))
    return [
        CheckResult("trajectory_norm", norm_worst <= tols.norm, norm_worst, tols.norm, {}),
        CheckResult("analytic_unitarity_off_top_levels", max(inside_worst, exact_worst) <= tols.unitarity,
                    max(inside_worst, exact_worst), tols.unitarity,
                    {"exact_boundary_defect": exact_worst, "closed_form_defect_below_top_k": inside_worst,
                     "closed_form_defect_top_k": top_defect}),
    ]


def rwa_deviation(nu: float, eta: float, k: int, samples: int = 201, tol: float = 1e-10, dim: int = 32) -> dict:
    """Max |P_e(pre-RWA) - P_e(effective)| over one flip from ``|e,0>``."""
    params = CouplingParams(eta, k, 1.0)
    t0 = pi_pulse_time(0, params)
    times = np.linspace(0.0, t0, samples)
    pulse = PulseSpec("x", params, model="full_pre_rwa", nu=nu)
    us = dynamics.pre_rwa_propagators(pulse, times, dim, tol)
    pe_full = np.sum(np.abs(us[:, :dim, 0]) ** 2, axis=1)
    pe_eff = np.cos(rabi_frequency(0, params) * times) ** 2
    drift = float(np.max(np.abs(np.linalg.norm(us[:, :, 0], axis=1) - 1.0)))
    return {"max_deviation": float(np.max(np.abs(pe_full - pe_eff))), "t0": t0, "norm_drift": drift}


def check_rwa(cfg: VerifyConfig) -> list[CheckResult]:
    r = cfg.rwa
    out = rwa_deviation(r.nu, r.eta, r.k, r.samples, r.tol)
    dev = out["max_deviation"]
    template = PulseSpec("x", CouplingParams(r.eta, r.k, 1.0), model="full_pre_rwa", nu=r.nu)
    step = 0.01
    centre = -r.k * r.nu
    grid = [centre + step * j for j in range(-5, 6)] + [-centre + step * j for j in range(-5, 6)]
    scan = dynamics.resonance_scan(template, grid, 32, 0, r.tol)
    offset = abs(scan.peak_delta - centre)
    return [
        CheckResult("rwa_validity", dev <= cfg.tolerances.rwa, dev, cfg.tolerances.rwa,
                    {"nu_over_omega": r.nu, "eta": r.eta, "k": r.k, "norm_drift": out["norm_drift"]}),
        CheckResult("resonance_convention", offset <= step, offset, step,
                    {"peak_delta": scan.peak_delta, "configured_delta": centre,
                     "peak_contrast": max(scan.contrasts)}),
    ]


CHECKS: tuple[Callable[[VerifyConfig], object], ...] = (
    check_oracle_equivalence,
    check_pi_time,
    check_laguerre,
    check_protocol,
    check_shared_clock,
    check_unitarity,
    check_rwa,
)


def run_checks(cfg: Optional[VerifyConfig] = None, echo: Optional[Callable[[str], None]] = None) -> list[CheckResult]:
    cfg = cfg or VerifyConfig()
    results: list[CheckResult] = []
    for fn in CHECKS:
        if fn is check_rwa and not cfg.include_rwa:
            continue
        out = fn(cfg)
        for res in out if isinstance(out, list) else [out]:
            results.append(res)
            if echo is not None:
                echo(res.line())
    return results
