"""Independent reference implementations used as test oracles."""

import itertools

import numpy as np

from dibom import linalg
from dibom.linalg import PAULIS

# filled by the acceptance module, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def kron_embed(op2: np.ndarray, target: int, n: int) -> np.ndarray:
    """Single-qubit operator on ``target`` built by an explicit Kronecker chain."""
    out = np.ones((1, 1), dtype=complex)
    for q in range(n):
        out = np.kron(out, op2 if q == target else np.eye(2))
    return out


def partial_trace_loops(rho: np.ndarray, keep: list[int]) -> np.ndarray:
    """Reduced operator by summing matrix elements over the traced bits."""
    n = int(np.log2(rho.shape[0]))
    traced = [q for q in range(n) if q not in keep]
    dk = 1 << len(keep)
    out = np.zeros((dk, dk), dtype=complex)

    def index(bits_keep, bits_traced):
        bits = [0] * n
        for q, b in zip(keep, bits_keep):
            bits[q] = b
        for q, b in zip(traced, bits_traced):
            bits[q] = b
        return int("".join(map(str, bits)), 2)

    for a, ka in enumerate(itertools.product([0, 1], repeat=len(keep))):
        for b, kb in enumerate(itertools.product([0, 1], repeat=len(keep))):
            for t in itertools.product([0, 1], repeat=len(traced)):
                out[a, b] += rho[index(ka, t), index(kb, t)]
    return out


def pauli_word(labels: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in labels:
        out = np.kron(out, PAULIS["IXYZ".index(ch)])
    return out


def is_product_unitary(u: np.ndarray, n: int, tol: float = 1e-10) -> bool:
    """True when ``u`` factors as a Kronecker product of single-qubit unitaries."""
    # operator Schmidt rank across every cut 1|rest must be one
    if n == 1:
        return True
    for q in range(n):
        t = u.reshape((2,) * (2 * n))
        rest = [p for p in range(n) if p != q]
        order = [q, n + q] + rest + [n + p for p in rest]
        mat = t.transpose(order).reshape(4, -1)
        s = np.linalg.svd(mat, compute_uv=False)
        if s[1] > tol * s[0]:
            return False
    return True


def random_density(n: int, rng, rank: int | None = None) -> np.ndarray:
    d = 1 << n
    rank = rank or d
    z = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = z @ z.conj().T
    return rho / np.trace(rho).real


def random_hermitian(d: int, rng) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (z + z.conj().T) / 2


def haar_states(n: int, count: int, rng) -> np.ndarray:
    return np.stack([linalg.haar_state(n, rng) for _ in range(count)])
