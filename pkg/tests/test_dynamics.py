import math
import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from moonsim import dynamics
from moonsim.coupling import CouplingParams, coupling_f, pi_pulse_time, rabi_frequency
from moonsim.dynamics import (
    PulseSpec,
    evolve,
    evolve_pre_rwa,
    excited_probability,
    h_effective,
    h_quadratic,
    pre_rwa_propagators,
    resonance_scan,
    u_analytic,
    u_numeric,
)
from moonsim.errors import InvalidArgumentError
from moonsim.fock import HybridState


def index(q, nx, ny, dims):
    return (q * dims[0] + nx) * dims[1] + ny


def test_zero_drive_hamiltonian_vanishes():
    h = h_effective((5, 5), CouplingParams(0.3, 1, 0.0), "x")
    assert h.shape == (50, 50)
    assert not np.any(h)


def test_carrier_at_zero_eta_is_sigma_x():
    dims = (3, 4)
    h = h_effective(dims, CouplingParams(0.0, 0, 1.0), "y")
    sx = np.kron(np.array([[0, 1], [1, 0]]), np.eye(12))
    np.testing.assert_allclose(h, sx, atol=1e-15)


def test_effective_matrix_element():
    dims = (16, 16)
    params = CouplingParams(0.2, 4)
    h = h_effective(dims, params, "x")
    expected = coupling_f(4, params) * math.sqrt(math.factorial(8) / math.factorial(4))
    assert h[index(0, 4, 3, dims), index(1, 8, 3, dims)] == pytest.approx(expected, abs=1e-15)
    np.testing.assert_array_equal(h, h.conj().T)


def test_quadratic_matrix_element_and_kernel():
    dims = (12, 12)
    h = h_quadratic(dims, 1.0, "y")
    assert h[index(0, 0, 8, dims), index(1, 0, 10, dims)] == pytest.approx(math.sqrt(90), rel=1e-15)
    for n in (0, 1):
        ket = np.zeros(2 * 144, dtype=complex)
        ket[index(1, 3, n, dims)] = 1.0
        assert np.max(np.abs(h @ ket)) == 0.0


def test_quadratic_needs_room():
    with pytest.raises(InvalidArgumentError):
        h_quadratic((2, 2), 1.0, "x")


def test_quadratic_tracks_effective_near_reference_level():
    # with f rescaled at n_ref the a^2 model matches the k=2 sideband for small eta
    eta, n_ref, dims = 0.01, 8, (4, 14)
    params = CouplingParams(eta, 2)
    h_eff = h_effective(dims, params, "y")
    scale = coupling_f(n_ref, params)
    h_q = h_quadratic(dims, 1.0, "y")
    # apply the complex rescale to the sigma_plus block only
    rescaled = h_q.copy()
    half = h_q.shape[0] // 2
    rescaled[:half, half:] *= scale
    rescaled[half:, :half] *= np.conj(scale)
    assert np.max(np.abs(rescaled - h_eff)) / np.max(np.abs(h_eff)) <= 1e-3


def test_pulse_spec_validation():
    p = CouplingParams(0.1, 2)
    with pytest.raises(InvalidArgumentError):
        PulseSpec("z", p)
    with pytest.raises(InvalidArgumentError):
        PulseSpec("x", p, model="magic")
    with pytest.raises(InvalidArgumentError):
        PulseSpec("x", CouplingParams(0.05, 3), model="quadratic")
    with pytest.raises(InvalidArgumentError):
        PulseSpec("x", p, model="full_pre_rwa")
    with pytest.raises(InvalidArgumentError):
        PulseSpec("x", p, duration=-1.0)
    with pytest.warns(UserWarning):
        PulseSpec("x", CouplingParams(0.3, 2), model="quadratic", omega_eff=1.0)
    assert PulseSpec("x", p, model="full_pre_rwa", nu=10.0).resonant_delta == -20.0


@pytest.mark.parametrize("k", [1, 2, 4])
@pytest.mark.parametrize("eta", [0.05, 0.2, 0.5])
def test_analytic_matches_eigendecomposition(k, eta):
    dims = (32, 32)
    pulse = PulseSpec("x", CouplingParams(eta, k))
    t0 = pi_pulse_time(0, pulse.params)
    for t in (0.1, t0, 3 * t0):
        ua = u_analytic(pulse, t, dims).local()
        un = u_numeric(pulse, t, dims).local()
        assert np.max(np.abs(ua - un)) <= 1e-9


def test_analytic_matches_dense_expm_on_full_space():
    dims = (8, 6)
    params = CouplingParams(0.3, 2)
    h = h_effective(dims, params, "y")
    u_ref = scipy.linalg.expm(-1j * 1.7 * h)
    u = u_analytic(PulseSpec("y", params), 1.7, dims).full()
    assert np.max(np.abs(u - u_ref)) <= 1e-12


def test_two_level_sector_rate():
    params = CouplingParams(0.2, 4)
    pulse = PulseSpec("x", params)
    dims = (16, 2)
    r = rabi_frequency(0, params)
    for t in (0.0, 0.3 / r, 1.1 / r):
        s = evolve(pulse, HybridState.basis("e", 0, 0, *dims), t)
        assert excited_probability(s) == pytest.approx(math.cos(r * t) ** 2, abs=1e-14)


def test_pi_pulse_transfers_population():
    params = CouplingParams(0.2, 4)
    s = evolve(PulseSpec("x", params), HybridState.basis("e", 4, 2, 32, 8), pi_pulse_time(4, params))
    assert abs(s.amplitude("g", 8, 2)) ** 2 == pytest.approx(1.0, abs=1e-14)


def test_propagator_block_structure():
    pulse = PulseSpec("x", CouplingParams(0.2, 2))
    u = u_analytic(pulse, 0.8, (10, 3))
    # only |e,n> <-> |g,n+2> are connected
    for blk, shift in ((u.u_ee, 0), (u.u_gg, 0), (u.u_eg, 2), (u.u_ge, -2)):
        mask = ~np.eye(10, k=shift, dtype=bool)
        assert np.max(np.abs(blk[mask])) == 0.0


def test_ground_levels_below_k_are_invariant():
    pulse = PulseSpec("y", CouplingParams(0.4, 3))
    u = u_analytic(pulse, 2.3, (4, 12))
    np.testing.assert_array_equal(u.u_gg[:3, :3], np.eye(3))
    assert not np.any(u.u_eg[:, :3])


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 30.0), st.floats(0.0, 30.0), st.sampled_from([1, 2, 4]))
def test_semigroup(t1, t2, k):
    pulse = PulseSpec("x", CouplingParams(0.3, k))
    dims = (20, 2)
    u1 = u_analytic(pulse, t1, dims).local()
    u2 = u_analytic(pulse, t2, dims).local()
    u12 = u_analytic(pulse, t1 + t2, dims).local()
    assert np.max(np.abs(u1 @ u2 - u12)) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 50.0))
def test_norm_preserved_on_random_states(seed, t):
    rng = np.random.default_rng(seed)
    dims = (12, 10)
    amps = rng.normal(size=2 * 120) + 1j * rng.normal(size=2 * 120)
    s = HybridState(amps / np.linalg.norm(amps), *dims)
    for pulse in (
        PulseSpec("x", CouplingParams(0.2, 4)),
        PulseSpec("y", CouplingParams(0.05, 2), model="quadratic", omega_eff=0.3),
    ):
        assert abs(evolve(pulse, s, t).norm - 1.0) <= 1e-12


def test_closed_form_boundary_defect_confined_to_top_levels():
    k, d = 4, 24
    pulse = PulseSpec("x", CouplingParams(0.2, k))
    u = u_analytic(pulse, 5.0, (d, 2), boundary="closed_form").local()
    defect = u.conj().T @ u - np.eye(2 * d)
    top = np.zeros(2 * d, dtype=bool)
    top[d - k : d] = True  # |e, n >= d-k> has no partner inside the basis
    assert np.max(np.abs(defect[np.ix_(~top, ~top)])) <= 1e-12
    assert np.max(np.abs(defect[np.ix_(top, top)])) > 1e-3
    exact = u_analytic(pulse, 5.0, (d, 2)).local()
    assert np.max(np.abs(exact.conj().T @ exact - np.eye(2 * d))) <= 1e-12


def test_boundary_name_checked():
    with pytest.raises(InvalidArgumentError):
        u_analytic(PulseSpec("x", CouplingParams(0.2, 1)), 1.0, (4, 4), boundary="open")


def test_sideband_order_must_fit():
    with pytest.raises(InvalidArgumentError):
        u_analytic(PulseSpec("x", CouplingParams(0.2, 4)), 1.0, (4, 8))


def test_apply_rejects_dim_mismatch():
    u = u_analytic(PulseSpec("x", CouplingParams(0.2, 1)), 1.0, (4, 4))
    with pytest.raises(InvalidArgumentError):
        u.apply(HybridState.basis("e", 0, 0, 5, 4))


def test_displacement_kick_is_unitary():
    d = dynamics.displacement_kick(20, 0.5)
    assert np.max(np.abs(d.conj().T @ d - np.eye(20))) <= 1e-12


# --- pre-RWA --------------------------------------------------------------------

def pre_rwa_pulse(eta=0.5, k=4, omega=1.0, nu=200.0, delta=None):
    return PulseSpec("x", CouplingParams(eta, k, omega), model="full_pre_rwa", nu=nu, delta=delta)


def test_pre_rwa_zero_drive_only_changes_phases():
    pulse = pre_rwa_pulse(omega=0.0, nu=20.0, delta=-40.3)
    s0 = HybridState.basis("e", 2, 1, 10, 3)
    s = evolve_pre_rwa(pulse, s0, 7.7)
    assert abs(abs(s.amplitude("e", 2, 1)) - 1.0) <= 1e-12


def test_pre_rwa_floquet_matches_direct_integration():
    pulse = pre_rwa_pulse(eta=0.3, k=1, nu=20.0, delta=-20.15)
    s0 = HybridState.basis("e", 1, 0, 16, 2)
    t = 3.3
    a = evolve_pre_rwa(pulse, s0, t, method="floquet")
    b = evolve_pre_rwa(pulse, s0, t, method="direct")
    assert np.max(np.abs(a.amplitudes - b.amplitudes)) <= 1e-8


def test_pre_rwa_no_renormalization_and_tight_norm():
    pulse = pre_rwa_pulse(eta=0.3, k=1, nu=20.0)
    us = pre_rwa_propagators(pulse, [0.0, 0.5, 10.0], 16, 1e-10)
    np.testing.assert_array_equal(us[0], np.eye(32))
    for u in us:
        assert np.max(np.abs(u.conj().T @ u - np.eye(32))) <= 1e-8


def test_pre_rwa_tolerance_range():
    s0 = HybridState.basis("e", 0, 0, 8, 2)
    for tol in (1e-13, 1e-5):
        with pytest.raises(InvalidArgumentError):
            evolve_pre_rwa(pre_rwa_pulse(k=1, nu=20.0), s0, 1.0, tol=tol)


def test_pre_rwa_tracks_effective_model_in_resolved_regime():
    # k=1 sideband, nu/omega = 200: the flip curves should agree closely
    params = CouplingParams(0.3, 1)
    t0 = pi_pulse_time(0, params)
    times = np.linspace(0, t0, 41)
    us = pre_rwa_propagators(pre_rwa_pulse(eta=0.3, k=1), times, 24)
    pe_pre = [np.sum(np.abs(u[:24, 0]) ** 2) for u in us]
    s0 = HybridState.basis("e", 0, 0, 24, 2)
    pe_eff = [excited_probability(evolve(PulseSpec("x", params), s0, t)) for t in times]
    assert np.max(np.abs(np.subtract(pe_pre, pe_eff))) <= 0.05


def test_rwa_breaks_down_for_slow_trap():
    # diagnostic: nu/omega = 5 is far from the resolved-sideband regime
    params = CouplingParams(0.3, 1)
    t0 = pi_pulse_time(0, params)
    times = np.linspace(0, t0, 41)
    us = pre_rwa_propagators(pre_rwa_pulse(eta=0.3, k=1, nu=5.0), times, 24)
    pe_pre = np.array([np.sum(np.abs(u[:24, 0]) ** 2) for u in us])
    s0 = HybridState.basis("e", 0, 0, 24, 2)
    pe_eff = np.array([excited_probability(evolve(PulseSpec("x", params), s0, t)) for t in times])
    assert np.max(np.abs(pe_pre - pe_eff)) > 0.05


def test_carrier_resonance_peak_at_zero_detuning():
    template = pre_rwa_pulse(eta=0.1, k=0, nu=50.0)
    rep = resonance_scan(template, [-0.2, -0.1, 0.0, 0.1, 0.2], 12)
    assert rep.peak_delta == 0.0
    assert rep.contrasts[2] == pytest.approx(1.0, abs=1e-3)


def test_red_sideband_convention():
    # k=1 is resonant at delta = -nu, not +nu
    nu = 50.0
    template = pre_rwa_pulse(eta=0.2, k=1, nu=nu)
    rep = resonance_scan(template, [-nu, nu], 16)
    assert rep.peak_delta == -nu
    assert rep.contrasts[0] > 0.9 and rep.contrasts[1] < 0.1


def test_resonance_width_shrinks_with_drive():
    grid = np.linspace(-0.4, 0.4, 9)

    def width(omega):
        rep = resonance_scan(pre_rwa_pulse(eta=0.1, k=0, omega=omega, nu=50.0), grid, 8)
        return np.sum(np.array(rep.contrasts) > 0.5)

    assert width(0.05) < width(0.4)


def test_resonance_scan_needs_grid():
    with pytest.raises(InvalidArgumentError):
        resonance_scan(pre_rwa_pulse(k=1, nu=20.0), [], 8)
