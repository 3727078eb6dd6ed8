"""Synthetic datasets whose labels come from a hidden intrinsic unitary."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from dibom import linalg
from dibom.gates import GeneralizedCZLayer, ProductRotationLayer, SingleQubitRotation
from dibom.network import build_dibom


class IntrinsicKind(str, enum.Enum):
    SINGLE_QUBIT_ON_Q2 = "single_qubit_on_q2"
    GCZ_LAYER = "gcz_layer"
    SINGLE_QUBIT_TIMES_GCZ = "single_qubit_times_gcz"
    PRODUCT_THEN_GCZ = "product_then_gcz"
    DIBOM_SHAPE = "dibom_shape"
    ALTERNATING_STACK = "alternating_stack"
    HAAR_RANDOM = "haar_random"
    TELEPORTATION = "teleportation"


_LAYERED = (IntrinsicKind.DIBOM_SHAPE, IntrinsicKind.ALTERNATING_STACK)


@dataclass(frozen=True)
class IntrinsicSpec:
    kind: IntrinsicKind
    L: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", IntrinsicKind(self.kind))
        if self.kind in _LAYERED:
            if self.L is None or self.L < 1:
                raise ValueError(f"{self.kind.value} needs a layer count L >= 1")
        elif self.L is not None:
            raise ValueError(f"{self.kind.value} takes no layer count")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "L": self.L}

    @classmethod
    def from_dict(cls, d: dict) -> "IntrinsicSpec":
        return cls(d["kind"], d.get("L"))


@dataclass(frozen=True)
class CorruptionConfig:
    ratio: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"corruption ratio {self.ratio} outside [0, 1]")


@dataclass
class Dataset:
    """Input/label state pairs plus where they came from.

    ``provenance["V"]`` keeps the hidden unitary for diagnostics; trainers
    only read ``inputs`` and ``labels``.
    """

    n_in: int
    n_out: int
    inputs: np.ndarray
    labels: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=complex)
        self.labels = np.asarray(self.labels, dtype=complex)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels differ in length")
        if self.inputs.shape[1:] != (1 << self.n_in,) or self.labels.shape[1:] != (1 << self.n_out,):
            raise ValueError("state dimensions do not match n_in / n_out")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.inputs, self.labels))

    @property
    def intrinsic(self) -> np.ndarray | None:
        return self.provenance.get("V")

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        prov = dict(self.provenance)
        prov["indices"] = [int(i) for i in np.asarray(prov.get("indices", np.arange(len(self))))[indices]]
        return Dataset(self.n_in, self.n_out, self.inputs[indices], self.labels[indices], prov)


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    # independent streams for V and for the input states
    ss = np.random.SeedSequence(seed)
    a, b = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def _alpha(rng) -> np.ndarray:
    return rng.uniform(-np.pi, np.pi, 3)


def intrinsic_unitary(spec: IntrinsicSpec, n: int, rng) -> np.ndarray:
    """Hidden unitary for ``spec`` on ``n`` qubits (the single-qubit factor sits on qubit 1)."""
    rng = linalg.make_rng(rng)
    kind = spec.kind
    if kind is IntrinsicKind.TELEPORTATION:
        raise ValueError("the teleportation task has no intrinsic unitary")
    if kind in (IntrinsicKind.SINGLE_QUBIT_ON_Q2, IntrinsicKind.SINGLE_QUBIT_TIMES_GCZ) and n < 2:
        raise ValueError(f"{kind.value} needs at least 2 qubits")
    if kind in (IntrinsicKind.GCZ_LAYER, IntrinsicKind.PRODUCT_THEN_GCZ) and n < 2:
        raise ValueError(f"{kind.value} needs at least 2 qubits")
    n_pairs = n * (n - 1) // 2

    def gcz():
        return GeneralizedCZLayer(rng.uniform(0.0, 1.0, n_pairs), n).unitary(n)

    if kind is IntrinsicKind.SINGLE_QUBIT_ON_Q2:
        return SingleQubitRotation(1, _alpha(rng)).unitary(n)
    if kind is IntrinsicKind.GCZ_LAYER:
        return gcz()
    if kind is IntrinsicKind.SINGLE_QUBIT_TIMES_GCZ:
        sg = SingleQubitRotation(1, _alpha(rng)).unitary(n)
        return gcz() @ sg
    if kind is IntrinsicKind.PRODUCT_THEN_GCZ:
        prod = ProductRotationLayer(rng.uniform(-np.pi, np.pi, (n, 3))).unitary(n)
        return gcz() @ prod
    if kind in _LAYERED:
        return build_dibom(n, spec.L, rng).unitary()
    return linalg.haar_unitary(1 << n, rng)


def product_form_samples(n: int, N: int, seed) -> np.ndarray:
    """``N`` tensor products of independent Haar single-qubit states."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = linalg.make_rng(seed)
    out = np.empty((N, 1 << n), dtype=complex)
    for x in range(N):
        out[x] = linalg.kron(*[linalg.haar_state(1, rng)[:, None] for _ in range(n)])[:, 0]
    return out


def gen_dataset(
    spec: IntrinsicSpec,
    n: int,
    N: int = 20,
    seed: int = 0,
    product_inputs: bool = False,
    unitary: np.ndarray | None = None,
) -> Dataset:
    """Haar inputs labelled by ``V |input>``.

    ``unitary`` overrides the sampled ``V``. The teleportation task emits
    ``(|psi>|0>|0>, |psi>)`` pairs on ``n`` data qubits.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    v_rng, x_rng = _streams(seed)
    prov: dict[str, Any] = {"spec": spec.to_dict(), "seed": int(seed), "corruption_ratio": 0.0, "product_inputs": product_inputs}
    if spec.kind is IntrinsicKind.TELEPORTATION:
        if n != 1:
            raise ValueError("the teleportation task moves a single qubit (n = 1)")
        psi = np.stack([linalg.haar_state(1, x_rng) for _ in range(N)])
        zeros = np.zeros(4, dtype=complex)
        zeros[0] = 1.0
        inputs = np.stack([np.kron(p, zeros) for p in psi])
        prov["V"] = None
        return Dataset(3, 1, inputs, psi, prov)
    if unitary is None:
        v = intrinsic_unitary(spec, n, v_rng)
    else:
        v = np.asarray(unitary, dtype=complex)
        if v.shape != (1 << n, 1 << n):
            raise ValueError(f"override unitary has shape {v.shape}, expected {(1 << n, 1 << n)}")
    if product_inputs:
        inputs = product_form_samples(n, N, x_rng)
    else:
        inputs = np.stack([linalg.haar_state(n, x_rng) for _ in range(N)])
    labels = inputs @ v.T
    prov["V"] = v
    return Dataset(n, n, inputs, labels, prov)


def split(dataset: Dataset, train_fraction: float = 0.5, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded disjoint train/test partition; each side keeps original order."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    N = len(dataset)
    n_train = int(round(train_fraction * N))
    if n_train == 0 or n_train == N:
        raise ValueError(f"split of {N} samples at {train_fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(N)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


def corruption_count(ratio: float, N: int) -> int:
    # tolerance guards against products like 0.3 * 10 landing just under an integer
    return int(math.floor(ratio * N + 1e-9))


def corrupt(dataset: Dataset, config: CorruptionConfig) -> Dataset:
    """Replace ``floor(ratio * N)`` seeded pairs by independent Haar input and label states."""
    N = len(dataset)
    count = corruption_count(config.ratio, N)
    rng = np.random.default_rng(config.seed)
    chosen = np.sort(rng.permutation(N)[:count])
    inputs, labels = dataset.inputs.copy(), dataset.labels.copy()
    for index in chosen:
        inputs[index] = linalg.haar_state(dataset.n_in, rng)
        labels[index] = linalg.haar_state(dataset.n_out, rng)
    prov = dict(dataset.provenance)
    prov["corruption_ratio"] = float(config.ratio)
    prov["corruption_seed"] = int(config.seed)
    prov["corrupted"] = [int(i) for i in chosen]
    return Dataset(dataset.n_in, dataset.n_out, inputs, labels, prov)


# ----------------------------------------------------------- serialization


def _encode(a: np.ndarray) -> Any:
    a = np.asarray(a)
    if a.ndim == 0:
        z = complex(a)
        return ["%.17g" % z.real, "%.17g" % z.imag]
    return [_encode(x) for x in a]


def _decode(obj) -> np.ndarray:
    def walk(o):
        if len(o) == 2 and isinstance(o[0], str):
            return complex(float(o[0]), float(o[1]))
        return [walk(x) for x in o]

    return np.array(walk(obj), dtype=complex)


def dataset_to_dict(ds: Dataset) -> dict:
    prov = {k: v for k, v in ds.provenance.items() if k != "V"}
    v = ds.provenance.get("V")
    prov["V"] = None if v is None else _encode(v)
    return {
        "format_version": 1,
        "n_in": ds.n_in,
        "n_out": ds.n_out,
        "inputs": _encode(ds.inputs),
        "labels": _encode(ds.labels),
        "provenance": prov,
    }


def dataset_from_dict(d: dict) -> Dataset:
    prov = dict(d["provenance"])
    if prov.get("V") is not None:
        prov["V"] = _decode(prov["V"])
    return Dataset(d["n_in"], d["n_out"], _decode(d["inputs"]), _decode(d["labels"]), prov)


def dumps_dataset(ds: Dataset) -> str:
    return json.dumps(dataset_to_dict(ds))


def loads_dataset(text: str) -> Dataset:
    return dataset_from_dict(json.loads(text))
