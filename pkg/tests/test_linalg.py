import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from dibom import linalg
from helpers import kron_embed, partial_trace_loops, random_density, random_hermitian

seeds = st.integers(0, 2**32 - 1)


def test_basis_state_msb_convention():
    psi = linalg.basis_state([1, 0, 1])
    assert psi[0b101] == 1 and np.count_nonzero(psi) == 1


def test_embed_matches_kron_chain(rng):
    op = random_hermitian(2, rng)
    for n in (1, 2, 3):
        for q in range(n):
            np.testing.assert_allclose(linalg.embed(op, [q], n), kron_embed(op, q, n), atol=1e-14)


def test_embed_two_qubit_target_order():
    cnot = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    # control qubit 2, target qubit 0 on three qubits
    full = linalg.embed(cnot, [2, 0], 3)
    for idx in range(8):
        bits = [(idx >> (2 - p)) & 1 for p in range(3)]
        out = list(bits)
        if bits[2]:
            out[0] ^= 1
        assert full[int("".join(map(str, out)), 2), idx] == 1


@pytest.mark.parametrize("keep", [[0], [2], [1, 0], [0, 2], [2, 1, 0]])
def test_partial_trace_matches_loop_oracle(rng, keep):
    rho = random_density(3, rng)
    np.testing.assert_allclose(linalg.partial_trace(rho, keep), partial_trace_loops(rho, keep), atol=1e-13)


def test_partial_trace_of_product_state(rng):
    a, b = random_density(1, rng), random_density(2, rng)
    np.testing.assert_allclose(linalg.partial_trace(np.kron(a, b), [0]), a, atol=1e-14)
    np.testing.assert_allclose(linalg.partial_trace(np.kron(a, b), [1, 2]), b, atol=1e-14)


def test_partial_trace_rejects_bad_keep(rng):
    rho = random_density(2, rng)
    with pytest.raises(linalg.LinalgError):
        linalg.partial_trace(rho, [])
    with pytest.raises(linalg.LinalgError):
        linalg.partial_trace(rho, [2])


def test_partial_trace_batch(rng):
    rhos = np.stack([random_density(2, rng) for _ in range(3)])
    batched = linalg.partial_trace(rhos, [1])
    for r, b in zip(rhos, batched):
        np.testing.assert_allclose(linalg.partial_trace(r, [1]), b, atol=1e-15)


def test_project_qubits_sums_to_partial_trace(rng):
    rho = random_density(3, rng)
    total = sum(linalg.project_qubits(rho, [0, 2], (a, b)) for a in (0, 1) for b in (0, 1))
    np.testing.assert_allclose(total, linalg.partial_trace(rho, [1]), atol=1e-14)


def test_hermitian_exp_matches_expm(rng):
    h = random_hermitian(8, rng)
    np.testing.assert_allclose(linalg.hermitian_exp(h, 0.7), expm(0.7j * h), atol=1e-12)


def test_hermitian_exp_rejects_non_hermitian():
    with pytest.raises(linalg.LinalgError):
        linalg.hermitian_exp(np.array([[0, 1], [0, 0]], dtype=complex))


def test_unitary_log_round_trip(rng):
    u = linalg.haar_unitary(8, rng)
    h = linalg.unitary_log(u)
    assert linalg.is_hermitian(h)
    np.testing.assert_allclose(linalg.hermitian_exp(h), u, atol=1e-10)


def test_fidelity_pure_states_is_overlap(rng):
    a, b = linalg.haar_state(2, rng), linalg.haar_state(2, rng)
    f = linalg.fidelity(linalg.projector(a), linalg.projector(b))
    assert f == pytest.approx(abs(np.vdot(a, b)) ** 2, abs=1e-9)
    assert linalg.pure_fidelity(a, linalg.projector(b)) == pytest.approx(f, abs=1e-9)


def test_matrix_sqrt_rejects_negative():
    with pytest.raises(linalg.LinalgError):
        linalg.matrix_sqrt_psd(np.diag([1.0, -0.5]))


def test_check_density_rejects_bad_trace():
    with pytest.raises(linalg.LinalgError):
        linalg.check_density(np.eye(2, dtype=complex))


def test_num_qubits_rejects_non_power():
    with pytest.raises(linalg.LinalgError):
        linalg.num_qubits(6)


@given(seed=seeds, n=st.integers(1, 4))
def test_haar_unitary_is_unitary(seed, n):
    u = linalg.haar_unitary(1 << n, seed)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(1 << n), atol=1e-12)


@given(seed=seeds, n=st.integers(1, 4))
def test_haar_state_normalized(seed, n):
    assert abs(np.linalg.norm(linalg.haar_state(n, seed)) - 1) < 1e-12


@given(seed=seeds, n=st.integers(2, 4))
def test_partial_trace_preserves_trace_and_psd(seed, n):
    rng = np.random.default_rng(seed)
    rho = random_density(n, rng)
    keep = sorted(rng.choice(n, size=rng.integers(1, n), replace=False).tolist())
    red = linalg.partial_trace(rho, keep)
    assert abs(np.trace(red) - 1) < 1e-12
    assert np.linalg.eigvalsh(red).min() > -1e-12


@given(seed=seeds, n=st.integers(1, 4))
def test_permute_qubits_inverse(seed, n):
    rng = np.random.default_rng(seed)
    op = random_hermitian(1 << n, rng)
    order = rng.permutation(n).tolist()
    back = linalg.permute_qubits(linalg.permute_qubits(op, order), np.argsort(order).tolist())
    np.testing.assert_allclose(back, op, atol=1e-14)
