"""Parametrized gate layers and their unitaries."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import ClassVar, Sequence

import numpy as np
from scipy.linalg import expm, expm_frechet

from dibom import linalg
from dibom.linalg import PAULIS, LinalgError

_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


class LayerShapeError(LinalgError):
    """Layer parameters do not fit the qubit count they are applied to."""


def qubit_pairs(n: int) -> list[tuple[int, int]]:
    """Unordered qubit pairs ``j < k`` in lexicographic order."""
    return list(itertools.combinations(range(n), 2))


@lru_cache(maxsize=None)
def pauli_words(n: int) -> np.ndarray:
    """All ``4**n`` Pauli words, qubit 0 as the most significant base-4 digit."""
    words = np.ones((1, 1, 1), dtype=complex)
    for _ in range(n):
        words = np.einsum("aij,bkl->abikjl", words, np.stack(PAULIS)).reshape(
            words.shape[0] * 4, words.shape[1] * 2, words.shape[2] * 2
        )
    words.setflags(write=False)
    return words


_PAULI_TENSOR = np.stack(PAULIS)
# coefficient map tr(sigma_a B) = sum_ij sigma_a[j, i] B[i, j] on a flattened 2x2 block
_TO_PAULI = _PAULI_TENSOR.transpose(0, 2, 1).reshape(4, 4)
_FROM_PAULI = _PAULI_TENSOR.reshape(4, 4).T


def _per_qubit(t: np.ndarray, mat: np.ndarray, n: int) -> np.ndarray:
    for axis in range(n):
        t = np.moveaxis(np.tensordot(mat, t, axes=([1], [axis])), 0, axis)
    return t


def pauli_decompose(h: np.ndarray) -> np.ndarray:
    """Coefficients ``tr(P_w h) / 2**n`` in the ``pauli_words`` order."""
    n = linalg.num_qubits(h.shape[-1])
    t = np.asarray(h, dtype=complex).reshape((2,) * (2 * n))
    order = [a for q in range(n) for a in (q, n + q)]
    t = t.transpose(order).reshape((4,) * n)
    return _per_qubit(t, _TO_PAULI, n).reshape(-1) / (1 << n)


def pauli_compose(coeffs: np.ndarray) -> np.ndarray:
    """``sum_w c_w P_w``."""
    c = np.asarray(coeffs)
    n = (c.size.bit_length() - 1) // 2
    t = _per_qubit(c.astype(complex).reshape((4,) * n), _FROM_PAULI, n)
    t = t.reshape((2,) * (2 * n))
    inverse = np.argsort([a for q in range(n) for a in (q, n + q)])
    return t.transpose(inverse).reshape(1 << n, 1 << n)


def su2(alpha: Sequence[float]) -> np.ndarray:
    """``exp(i * (a1 X + a2 Y + a3 Z))`` in closed form."""
    a = np.asarray(alpha, dtype=float)
    theta = float(np.linalg.norm(a))
    if theta == 0.0:
        return np.eye(2, dtype=complex)
    nx, ny, nz = a / theta
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [[c + 1j * s * nz, 1j * s * nx + s * ny], [1j * s * nx - s * ny, c - 1j * s * nz]],
        dtype=complex,
    )


def su2_params(u: np.ndarray) -> np.ndarray:
    """Rotation vector ``alpha`` with ``su2(alpha) = u`` up to a global phase."""
    u = np.asarray(u, dtype=complex)
    u = u / np.sqrt(np.linalg.det(u))
    a0 = np.real(np.trace(u)) / 2
    v = np.array([np.real(np.trace(p @ u) / 2j) for p in PAULIS[1:]])
    norm = float(np.linalg.norm(v))
    if norm < 1e-300:
        return np.zeros(3) if a0 > 0 else np.array([np.pi, 0.0, 0.0])
    return np.arctan2(norm, a0) * v / norm


def _generator_from_derivative(du: np.ndarray, u: np.ndarray) -> np.ndarray:
    k = -1j * du @ linalg.dagger(u)
    return (k + linalg.dagger(k)) / 2


@dataclass(frozen=True, eq=False)
class Layer:
    """Base class; subclasses fix the tag and the parameter layout."""

    kind: ClassVar[str] = "layer"
    # generator family used by the K-update; None for parameter-free layers
    family: ClassVar[str | None] = None

    @property
    def params(self) -> np.ndarray:
        return np.zeros(0)

    @property
    def n_params(self) -> int:
        return self.params.size

    def with_params(self, values: np.ndarray) -> "Layer":
        if np.size(values):
            raise LayerShapeError(f"{self.kind} takes no parameters")
        return self

    def unitary(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def param_generators(self, n: int) -> list[np.ndarray]:
        """Hermitian ``G_a`` with ``dU/dtheta_a = i G_a U``."""
        return []

    def to_dict(self) -> dict:
        return {"type": self.kind}


@dataclass(frozen=True, eq=False)
class SingleQubitRotation(Layer):
    """``exp(i sum_j alpha_j sigma_j)`` on one target qubit."""

    target: int = 0
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(3))

    kind: ClassVar[str] = "single"
    family: ClassVar[str] = "single"

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float).reshape(-1)
        if a.shape != (3,) or not np.all(np.isfinite(a)):
            raise LayerShapeError("SingleQubitRotation needs 3 finite parameters")
        object.__setattr__(self, "alpha", a)

    @property
    def params(self) -> np.ndarray:
        return self.alpha.copy()

    def with_params(self, values):
        return SingleQubitRotation(self.target, np.asarray(values, dtype=float))

    def unitary(self, n: int) -> np.ndarray:
        if not 0 <= self.target < n:
            raise LayerShapeError(f"target {self.target} outside {n} qubits")
        return linalg.embed(su2(self.alpha), [self.target], n)

    def param_generators(self, n):
        return [linalg.embed(g, [self.target], n) for g in _su2_generators(self.alpha)]

    def to_dict(self):
        return {"type": self.kind, "target": self.target, "alpha": self.alpha.tolist()}


def _su2_generators(alpha: np.ndarray) -> list[np.ndarray]:
    """Closed form of ``int_0^1 exp(i s a.sigma) sigma_k exp(-i s a.sigma) ds``.

    Splits ``e_k`` into its parts along and across ``a``; the transverse
    part rotates about ``a`` at angular rate ``2|a|``.
    """
    alpha = np.asarray(alpha, dtype=float)
    theta = float(np.linalg.norm(alpha))
    paulis = np.stack(PAULIS[1:])
    if theta < 1e-12:
        return list(paulis)
    nhat = alpha / theta
    c = np.sin(2 * theta) / (2 * theta)
    d = np.sin(theta) ** 2 / theta
    out = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        par = nhat[k] * nhat
        v = par + c * (e - par) - d * np.cross(nhat, e)
        out.append(np.einsum("a,aij->ij", v, paulis))
    return out


@dataclass(frozen=True, eq=False)
class ProductRotationLayer(Layer):
    """Tensor product of independent single-qubit rotations, one triple per qubit."""

    alphas: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))

    kind: ClassVar[str] = "product"
    family: ClassVar[str] = "product"

    def __post_init__(self):
        a = np.array(self.alphas, dtype=float)
        if a.ndim != 2 or a.shape[1] != 3 or a.shape[0] < 1 or not np.all(np.isfinite(a)):
            raise LayerShapeError(f"ProductRotationLayer needs an (n, 3) array, got {a.shape}")
        object.__setattr__(self, "alphas", a)

    @property
    def n(self) -> int:
        return self.alphas.shape[0]

    @property
    def params(self):
        return self.alphas.reshape(-1).copy()

    def with_params(self, values):
        return ProductRotationLayer(np.asarray(values, dtype=float).reshape(self.n, 3))

    def factors(self) -> list[np.ndarray]:
        return [su2(a) for a in self.alphas]

    def unitary(self, n):
        if n != self.n:
            raise LayerShapeError(f"product layer built for {self.n} qubits, applied to {n}")
        return linalg.kron(*self.factors())

    def param_generators(self, n):
        if n != self.n:
            raise LayerShapeError(f"product layer built for {self.n} qubits, applied to {n}")
        out = []
        for q, a in enumerate(self.alphas):
            out.extend(linalg.embed(g, [q], n) for g in _su2_generators(a))
        return out

    def to_dict(self):
        return {"type": self.kind, "alphas": self.alphas.tolist()}


@dataclass(frozen=True, eq=False)
class GeneralizedCZLayer(Layer):
    """``exp(-i pi sum_{j<k} beta_jk |11><11|_jk)``; beta=1 is CZ, beta=0 identity."""

    betas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n: int = 1

    kind: ClassVar[str] = "gcz"
    family: ClassVar[str] = "gcz"

    def __post_init__(self):
        b = np.array(self.betas, dtype=float).reshape(-1)
        if b.size != self.n * (self.n - 1) // 2 or not np.all(np.isfinite(b)):
            raise LayerShapeError(f"GeneralizedCZLayer on {self.n} qubits needs {self.n * (self.n - 1) // 2} betas")
        object.__setattr__(self, "betas", b)

    @classmethod
    def from_pairs(cls, n: int, pairs: dict[tuple[int, int], float]) -> "GeneralizedCZLayer":
        betas = np.zeros(n * (n - 1) // 2)
        index = {p: i for i, p in enumerate(qubit_pairs(n))}
        for (j, k), value in pairs.items():
            betas[index[(min(j, k), max(j, k))]] = value
        return cls(betas, n)

    @property
    def params(self):
        return self.betas.copy()

    def with_params(self, values):
        return GeneralizedCZLayer(np.asarray(values, dtype=float), self.n)

    def diagonal_phases(self) -> np.ndarray:
        """Exponent ``-pi * sum beta_jk b_j b_k`` per basis state."""
        bits = _bit_table(self.n)
        exponent = np.zeros(1 << self.n)
        for beta, (j, k) in zip(self.betas, qubit_pairs(self.n)):
            exponent -= np.pi * beta * bits[:, j] * bits[:, k]
        return exponent

    def unitary(self, n):
        if n != self.n:
            raise LayerShapeError(f"GCZ layer built for {self.n} qubits, applied to {n}")
        return np.diag(np.exp(1j * self.diagonal_phases()))

    def param_generators(self, n):
        bits = _bit_table(self.n)
        return [np.diag(-np.pi * bits[:, j] * bits[:, k]).astype(complex) for j, k in qubit_pairs(self.n)]

    def to_dict(self):
        return {"type": self.kind, "n": self.n, "betas": self.betas.tolist()}


@lru_cache(maxsize=None)
def _bit_table(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    table = np.stack([(idx >> (n - 1 - q)) & 1 for q in range(n)], axis=1).astype(float)
    table.setflags(write=False)
    return table


@dataclass(frozen=True, eq=False)
class FixedCZLayer(Layer):
    """Parameter-free CZ gates on a fixed set of pairs (hardware-efficient entangler)."""

    pairs: tuple[tuple[int, int], ...] = ()
    connectivity: str = "all"

    kind: ClassVar[str] = "cz"

    def __post_init__(self):
        if self.connectivity not in ("all", "linear", "custom"):
            raise LayerShapeError(f"unknown connectivity {self.connectivity!r}")
        pairs = tuple(sorted((min(j, k), max(j, k)) for j, k in self.pairs))
        if any(j == k for j, k in pairs):
            raise LayerShapeError("CZ pair needs two distinct qubits")
        if self.connectivity == "linear" and any(k != j + 1 for j, k in pairs):
            raise LayerShapeError("linear connectivity only allows neighbouring pairs")
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def for_qubits(cls, n: int, connectivity: str = "all") -> "FixedCZLayer":
        if connectivity == "linear":
            return cls(tuple((q, q + 1) for q in range(n - 1)), "linear")
        return cls(tuple(qubit_pairs(n)), "all")

    def unitary(self, n):
        if any(k >= n for _, k in self.pairs):
            raise LayerShapeError(f"CZ pairs {self.pairs} outside {n} qubits")
        return GeneralizedCZLayer.from_pairs(n, {p: 1.0 for p in self.pairs}).unitary(n)

    def to_dict(self):
        return {"type": self.kind, "pairs": [list(p) for p in self.pairs], "connectivity": self.connectivity}


@dataclass(frozen=True, eq=False)
class HadamardLayer(Layer):
    kind: ClassVar[str] = "hadamard"

    def unitary(self, n):
        return linalg.kron(*([_HADAMARD] * n))


@dataclass(frozen=True, eq=False)
class GeneralUnitaryLayer(Layer):
    """``exp(i sum_w alpha_w P_w)`` over all ``4**n`` Pauli words ``P_w``.

    The identity-word coefficient only sets a global phase.
    """

    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(4))

    kind: ClassVar[str] = "general"
    family: ClassVar[str] = "general"

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        n = (c.size.bit_length() - 1) // 2
        if c.size < 4 or 4**n != c.size or not np.all(np.isfinite(c)):
            raise LayerShapeError(f"GeneralUnitaryLayer needs 4**n finite coefficients, got {c.size}")
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return (self.coeffs.size.bit_length() - 1) // 2

    @classmethod
    def from_unitary(cls, u: np.ndarray) -> "GeneralUnitaryLayer":
        return cls.from_generator(linalg.unitary_log(u))

    @classmethod
    def from_generator(cls, h: np.ndarray) -> "GeneralUnitaryLayer":
        linalg.num_qubits(h.shape[0])
        return cls(np.real(pauli_decompose(h)))

    @property
    def params(self):
        return self.coeffs.copy()

    def with_params(self, values):
        return GeneralUnitaryLayer(np.asarray(values, dtype=float))

    def generator(self) -> np.ndarray:
        return pauli_compose(self.coeffs)

    def unitary(self, n):
        if n != self.n:
            raise LayerShapeError(f"general layer built for {self.n} qubits, applied to {n}")
        return linalg.hermitian_exp(self.generator())

    def param_generators(self, n):
        x = 1j * self.generator()
        u = expm(x)
        return [
            _generator_from_derivative(expm_frechet(x, 1j * p, compute_expm=False), u)
            for p in pauli_words(self.n)
        ]

    def generator_traces(self, m: np.ndarray) -> np.ndarray:
        """``tr(m G_w)`` for every coordinate generator without forming any ``G_w``.

        In the eigenbasis ``h = V diag(w) V^dagger`` the derivative of
        ``exp(i h)`` along ``P`` is ``V (Phi o V^dagger i P V) V^dagger`` with
        divided differences ``Phi``.
        """
        w, v = np.linalg.eigh(self.generator())
        e = np.exp(1j * w)
        diff = w[:, None] - w[None, :]
        close = np.abs(diff) < 1e-12
        phi = np.where(close, e[:, None], (e[:, None] - e[None, :]) / np.where(close, 1.0, 1j * diff))
        u = (v * e) @ linalg.dagger(v)
        x = linalg.dagger(v) @ linalg.dagger(u) @ m @ v
        y = v @ (x.T * phi).T @ linalg.dagger(v)
        return pauli_decompose(y) * (1 << self.n)

    def to_dict(self):
        return {"type": self.kind, "coeffs": self.coeffs.tolist()}


LAYER_TYPES = {
    cls.kind: cls
    for cls in (
        SingleQubitRotation,
        ProductRotationLayer,
        GeneralizedCZLayer,
        FixedCZLayer,
        HadamardLayer,
        GeneralUnitaryLayer,
    )
}


def layer_from_dict(d: dict) -> Layer:
    kind = d["type"]
    if kind == "single":
        return SingleQubitRotation(int(d["target"]), np.array(d["alpha"], dtype=float))
    if kind == "product":
        return ProductRotationLayer(np.array(d["alphas"], dtype=float))
    if kind == "gcz":
        return GeneralizedCZLayer(np.array(d["betas"], dtype=float), int(d["n"]))
    if kind == "cz":
        return FixedCZLayer(tuple(tuple(p) for p in d["pairs"]), d.get("connectivity", "custom"))
    if kind == "hadamard":
        return HadamardLayer()
    if kind == "general":
        return GeneralUnitaryLayer(np.array(d["coeffs"], dtype=float))
    raise LayerShapeError(f"unknown layer type {kind!r}")


def layer_unitary(layer: Layer, n: int) -> np.ndarray:
    return layer.unitary(n)


def apply(layer: Layer, rho: np.ndarray) -> np.ndarray:
    """Conjugate ``rho`` (or a batch of operators) by the layer unitary."""
    n = linalg.num_qubits(rho.shape[-1])
    u = layer.unitary(n)
    return u @ rho @ linalg.dagger(u)
