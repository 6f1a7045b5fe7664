import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moonsim import fock
from moonsim.errors import InvalidArgumentError
from moonsim.fock import HybridState, TruncatedMode, leakage


def ket(d, n):
    v = np.zeros(d, dtype=complex)
    v[n] = 1.0
    return v


def test_truncated_mode_rejects_tiny_dims():
    with pytest.raises(InvalidArgumentError):
        TruncatedMode(1)
    assert TruncatedMode(2).dim == 2


def test_annihilation_examples():
    a2 = fock.annihilation(2)
    np.testing.assert_array_equal(a2 @ ket(2, 1), ket(2, 0))
    a5 = fock.annihilation(5)
    np.testing.assert_allclose(a5 @ ket(5, 4), 2 * ket(5, 3), atol=0)
    np.testing.assert_array_equal(a5 @ ket(5, 0), np.zeros(5))


def test_creation_examples():
    ad = fock.creation(3)
    np.testing.assert_array_equal(ad @ ket(3, 0), ket(3, 1))
    np.testing.assert_array_equal(ad @ ket(3, 2), np.zeros(3))
    assert fock.creation(8)[4, 3] == 2.0


def test_shift_examples():
    np.testing.assert_array_equal(fock.shift_down(4, 1) @ ket(4, 0), np.zeros(4))
    np.testing.assert_array_equal(fock.shift_down(16, 4) @ ket(16, 8), ket(16, 4))
    v = fock.shift_down(6, 1)
    expected = np.eye(6) - np.outer(ket(6, 0), ket(6, 0))
    np.testing.assert_array_equal(v.conj().T @ v, expected)


def test_shift_order_must_be_below_dim():
    with pytest.raises(InvalidArgumentError):
        fock.shift_down(4, 4)


@given(st.integers(2, 20), st.data())
def test_shift_products(dim, data):
    k = data.draw(st.integers(0, dim - 1))
    v, vd = fock.shift_down(dim, k), fock.shift_up(dim, k)
    # V^k V†^k is the identity except for the top-k truncation defect
    top = np.diag([1.0 if n < dim - k else 0.0 for n in range(dim)])
    np.testing.assert_array_equal(v @ vd, top)
    np.testing.assert_array_equal(vd @ v, np.eye(dim) - fock.projector_below(dim, k))


@given(st.integers(2, 20))
def test_commutator_defect_confined_to_top_level(dim):
    a, ad = fock.annihilation(dim), fock.creation(dim)
    comm = a @ ad - ad @ a
    np.testing.assert_allclose(comm[: dim - 1, : dim - 1], np.eye(dim - 1), atol=1e-12)
    assert abs(comm[dim - 1, dim - 1] - (1 - dim)) < 1e-12


def test_adjoint_involution_is_exact():
    a = fock.annihilation(7)
    np.testing.assert_array_equal(a.conj().T.conj().T, a)


def test_embed_identity_and_number():
    dims = (3, 4)
    np.testing.assert_array_equal(fock.embed(np.eye(3), "x", dims), np.eye(24))
    nx = fock.embed(fock.number(5), "x", (5, 2))
    psi = HybridState.basis("e", 3, 0, 5, 2)
    np.testing.assert_allclose(nx @ psi.amplitudes, 3 * psi.amplitudes)


def test_embed_ladder_operators_on_different_modes_commute():
    dims = (4, 5)
    ax = fock.embed(fock.annihilation(4), "x", dims)
    ady = fock.embed(fock.creation(5), "y", dims)
    assert np.max(np.abs(ax @ ady - ady @ ax)) == 0.0


def test_embed_rejects_mismatch():
    with pytest.raises(InvalidArgumentError):
        fock.embed(np.eye(3), "y", (3, 4))
    with pytest.raises(InvalidArgumentError):
        fock.embed(np.eye(2), "z", (3, 4))


@settings(max_examples=25)
@given(st.sampled_from(["qubit", "x", "y"]), st.integers(0, 2**31 - 1))
def test_embed_preserves_norm_and_adjointness(slot, seed):
    rng = np.random.default_rng(seed)
    dims = (3, 4)
    n = {"qubit": 2, "x": 3, "y": 4}[slot]
    op = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    big = fock.embed(op, slot, dims)
    assert np.isclose(np.linalg.norm(big, 2), np.linalg.norm(op, 2), rtol=1e-12)
    np.testing.assert_array_equal(fock.embed(op.conj().T, slot, dims), big.conj().T)


def test_index_order_is_qubit_x_y():
    s = HybridState.basis("g", 2, 1, 3, 4)
    flat = np.flatnonzero(s.amplitudes)
    assert flat.tolist() == [1 * 12 + 2 * 4 + 1]
    assert s.tensor.shape == (2, 3, 4)


def test_state_is_immutable():
    s = HybridState.basis("e", 0, 0, 3, 3)
    with pytest.raises(AttributeError):
        s.dim_x = 4
    with pytest.raises(ValueError):
        s.amplitudes[0] = 0.5


def test_state_validation():
    with pytest.raises(InvalidArgumentError):
        HybridState(np.ones(5), 2, 2)
    with pytest.raises(InvalidArgumentError):
        HybridState(np.full(8, np.nan), 2, 2)
    with pytest.raises(InvalidArgumentError):
        HybridState.basis("e", 3, 0, 3, 3)


def test_leakage_examples():
    assert leakage(HybridState.basis("e", 0, 0, 8, 8), 3) == 0.0
    assert leakage(HybridState.basis("g", 7, 0, 8, 8), 1) == 1.0
    with pytest.raises(InvalidArgumentError):
        leakage(HybridState.basis("e", 0, 0, 8, 8), 8)


def test_qubit_labels():
    np.testing.assert_allclose(fock.qubit_vector("plus"), np.array([1, 1]) / np.sqrt(2))
    with pytest.raises(InvalidArgumentError):
        fock.qubit_vector("up")
