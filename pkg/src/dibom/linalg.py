"""Dense linear algebra for multi-qubit operators.

Qubit 0 is the most significant bit of a computational-basis index, so
``|q0 q1 ... q_{n-1}>`` maps to ``int("q0q1...", 2)``. Every routine in the
package follows this convention.
"""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, SIGMA_X, SIGMA_Y, SIGMA_Z)


class LinalgError(ValueError):
    """Raised for malformed operators or states."""


def make_rng(seed) -> np.random.Generator:
    """Return a generator for ``seed``; generators pass through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def num_qubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or (1 << n) != dim:
        raise LinalgError(f"dimension {dim} is not a power of two")
    return n


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of the operands, left to right."""
    if not ops:
        return np.ones((1, 1), dtype=complex)
    return reduce(np.kron, ops)


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return a.shape[-1] == a.shape[-2] and np.max(np.abs(a - dagger(a)), initial=0.0) <= tol


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape or a.shape[-1] != a.shape[-2]:
        raise LinalgError(f"commutator needs equal square operands, got {a.shape} and {b.shape}")
    return a @ b - b @ a


def projector(psi: np.ndarray) -> np.ndarray:
    """``|psi><psi|``; broadcasts over a leading batch axis."""
    psi = np.asarray(psi, dtype=complex)
    return psi[..., :, None] * np.conj(psi[..., None, :])


def basis_state(bits: Sequence[int]) -> np.ndarray:
    index = 0
    for b in bits:
        index = (index << 1) | int(b)
    psi = np.zeros(1 << len(bits), dtype=complex)
    psi[index] = 1.0
    return psi


def embed(op: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Lift ``op`` acting on ``targets`` (in that order) to ``n`` qubits."""
    targets = list(targets)
    k = len(targets)
    if op.shape != (1 << k, 1 << k):
        raise LinalgError(f"operator shape {op.shape} does not match {k} target qubits")
    if len(set(targets)) != k or any(t < 0 or t >= n for t in targets):
        raise LinalgError(f"bad target qubits {targets} for n={n}")
    rest = [q for q in range(n) if q not in targets]
    full = np.kron(op, np.eye(1 << len(rest), dtype=complex))
    return permute_qubits(full, targets + rest)


def permute_qubits(op: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Relabel qubits: position ``p`` of ``op`` becomes qubit ``order[p]``."""
    n = len(order)
    inverse = np.argsort(order)
    t = op.reshape((2,) * (2 * n))
    axes = list(inverse) + [n + a for a in inverse]
    return t.transpose(axes).reshape(op.shape)


def partial_trace(rho: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Trace out every qubit not in ``keep``.

    The reduced operator lists its qubits in the order given by ``keep``.
    A leading batch axis is supported.
    """
    keep = list(keep)
    dim = rho.shape[-1]
    n = num_qubits(dim)
    if not keep:
        raise LinalgError("keep set must be nonempty")
    if len(set(keep)) != len(keep) or any(q < 0 or q >= n for q in keep):
        raise LinalgError(f"keep set {keep} out of range for {n} qubits")
    batch = rho.shape[:-2]
    traced = [q for q in range(n) if q not in keep]
    t = rho.reshape(batch + (2,) * (2 * n))
    b = len(batch)
    axes = list(range(b)) + [b + q for q in keep + traced] + [b + n + q for q in keep + traced]
    dk, dt = 1 << len(keep), 1 << len(traced)
    t = t.transpose(axes).reshape(batch + (dk, dt, dk, dt))
    return np.einsum("...ajbj->...ab", t)


def project_qubits(rho: np.ndarray, measured: Sequence[int], outcome: Sequence[int]) -> np.ndarray:
    """Unnormalized ``<i|_A rho |i>_A`` for computational outcome ``i`` on ``measured``.

    Equals ``tr_A(rho (|i><i|_A (x) I))``; the surviving qubits keep their
    relative order.
    """
    dim = rho.shape[-1]
    n = num_qubits(dim)
    measured = list(measured)
    rest = [q for q in range(n) if q not in measured]
    batch = rho.shape[:-2]
    b = len(batch)
    t = rho.reshape(batch + (2,) * (2 * n))
    index = [slice(None)] * b + [slice(None)] * (2 * n)
    for q, bit in zip(measured, outcome):
        index[b + q] = bit
        index[b + n + q] = bit
    d = 1 << len(rest)
    return t[tuple(index)].reshape(batch + (d, d))


def hermitian_exp(h: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """``exp(i * scale * h)`` for Hermitian ``h`` via its eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h):
        raise LinalgError("hermitian_exp requires a Hermitian generator")
    w, v = np.linalg.eigh((h + dagger(h)) / 2)
    return (v * np.exp(1j * scale * w)) @ dagger(v)


def unitary_log(u: np.ndarray) -> np.ndarray:
    """Hermitian ``h`` with ``exp(i h) = u`` and spectrum in (-pi, pi]."""
    from scipy.linalg import schur

    t, z = schur(np.asarray(u, dtype=complex), output="complex")
    phases = np.angle(np.diag(t))
    h = (z * phases) @ dagger(z)
    return (h + dagger(h)) / 2


def matrix_sqrt_psd(rho: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    w, v = np.linalg.eigh((rho + dagger(rho)) / 2)
    if w.min(initial=0.0) < -tol:
        raise LinalgError(f"operator not PSD: min eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ dagger(v)


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    if rho.shape != sigma.shape:
        raise LinalgError(f"dimension mismatch {rho.shape} vs {sigma.shape}")
    s = matrix_sqrt_psd(rho)
    inner = s @ sigma @ s
    w = np.linalg.eigvalsh((inner + dagger(inner)) / 2)
    f = float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)
    return min(max(f, 0.0), 1.0)


def pure_fidelity(phi: np.ndarray, rho: np.ndarray) -> float:
    """``<phi|rho|phi>``."""
    return float(np.real(np.conj(phi) @ rho @ phi))


def haar_state(n: int, rng) -> np.ndarray:
    if n < 1:
        raise LinalgError("haar_state needs n >= 1")
    rng = make_rng(rng)
    z = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return z / np.linalg.norm(z)


def haar_unitary(dim: int, rng) -> np.ndarray:
    """Haar unitary from the QR decomposition of a complex Ginibre matrix."""
    if dim < 2:
        raise LinalgError("haar_unitary needs dim >= 2")
    rng = make_rng(rng)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def check_state(psi: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    num_qubits(psi.shape[-1])
    if abs(np.linalg.norm(psi) - 1.0) > tol:
        raise LinalgError("state is not normalized")
    return psi


def check_density(rho: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Validate a density matrix and return it unchanged."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise LinalgError(f"density matrix must be square, got {rho.shape}")
    num_qubits(rho.shape[0])
    if not np.all(np.isfinite(rho)):
        raise LinalgError("density matrix has non-finite entries")
    if not is_hermitian(rho, tol):
        raise LinalgError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise LinalgError("density matrix trace differs from 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise LinalgError("density matrix has a negative eigenvalue")
    return rho


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a), initial=0.0))
