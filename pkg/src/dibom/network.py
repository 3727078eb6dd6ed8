"""Model assembly and forward passes."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from dibom import linalg
from dibom.gates import (
    FixedCZLayer,
    GeneralizedCZLayer,
    GeneralUnitaryLayer,
    HadamardLayer,
    Layer,
    LayerShapeError,
    ProductRotationLayer,
    SingleQubitRotation,
    layer_from_dict,
    su2_params,
)
from dibom.linalg import LinalgError

FORMAT_VERSION = 1


class ModelKind(str, enum.Enum):
    DIBOM = "dibom"
    HARDWARE_EFFICIENT = "hardware_efficient"
    ISING_BORN = "ising_born"
    DISSIPATIVE = "dissipative"


@dataclass(frozen=True, eq=False)
class Circuit:
    """Ordered layer stack on ``n`` qubits; ``layers[0]`` acts first."""

    n: int
    layers: tuple[Layer, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for layer in self.layers:
            dim_n = getattr(layer, "n", None)
            if isinstance(dim_n, int) and dim_n != self.n:
                raise LayerShapeError(f"{layer.kind} layer sized for {dim_n} qubits in a {self.n}-qubit circuit")
            if isinstance(layer, SingleQubitRotation) and not 0 <= layer.target < self.n:
                raise LayerShapeError(f"rotation target {layer.target} outside {self.n} qubits")

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def params(self) -> np.ndarray:
        if not self.layers:
            return np.zeros(0)
        return np.concatenate([layer.params for layer in self.layers])

    def with_params(self, theta: np.ndarray) -> "Circuit":
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise LayerShapeError(f"expected {self.n_params} parameters, got {theta.size}")
        layers, start = [], 0
        for layer in self.layers:
            stop = start + layer.n_params
            layers.append(layer.with_params(theta[start:stop]))
            start = stop
        return Circuit(self.n, tuple(layers))

    def replace(self, index: int, layer: Layer) -> "Circuit":
        layers = list(self.layers)
        layers[index] = layer
        return Circuit(self.n, tuple(layers))

    def layer_unitaries(self) -> list[np.ndarray]:
        return [layer.unitary(self.n) for layer in self.layers]

    def unitary(self) -> np.ndarray:
        u = np.eye(1 << self.n, dtype=complex)
        for v in self.layer_unitaries():
            u = v @ u
        return u

    def to_dict(self) -> dict:
        return {"n": self.n, "layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        return cls(int(d["n"]), tuple(layer_from_dict(x) for x in d["layers"]))


def forward(c: Circuit, rho_in: np.ndarray) -> np.ndarray:
    """Apply every layer in order to ``rho_in`` (or a batch of operators)."""
    if rho_in.shape[-1] != 1 << c.n:
        raise LinalgError(f"state dimension {rho_in.shape[-1]} does not match {c.n} qubits")
    rho = rho_in
    for u in c.layer_unitaries():
        rho = u @ rho @ linalg.dagger(u)
    return rho


# ---------------------------------------------------------------- builders


def _random_product(n: int, rng: np.random.Generator) -> ProductRotationLayer:
    return ProductRotationLayer(rng.uniform(-np.pi, np.pi, size=(n, 3)))


def _random_gcz(n: int, rng: np.random.Generator) -> GeneralizedCZLayer:
    return GeneralizedCZLayer(rng.uniform(0.0, 1.0, size=n * (n - 1) // 2), n)


def _alternating(n: int, L: int, entangler, rng) -> Circuit:
    if n < 1:
        raise ValueError("need at least one qubit")
    if L < 1:
        raise ValueError("layer count L must be >= 1")
    layers: list[Layer] = []
    for index in range(L):
        layers.append(_random_product(n, rng) if index % 2 == 0 else entangler(n, rng))
    return Circuit(n, tuple(layers))


def build_dibom(n: int, L: int, rng=0) -> Circuit:
    """Alternate product-rotation and generalized-CZ layers, rotation first.

    Odd ``L`` ends with an extra rotation layer. Rotation angles are drawn
    uniformly in [-pi, pi] and CZ strengths uniformly in [0, 1].
    """
    return _alternating(n, L, _random_gcz, linalg.make_rng(rng))


def build_hardware_efficient(n: int, L: int, rng=0, connectivity: str = "all") -> Circuit:
    """DIBoM layout with every generalized CZ layer replaced by fixed CZ gates."""
    return _alternating(n, L, lambda n_, _: FixedCZLayer.for_qubits(n_, connectivity), linalg.make_rng(rng))


def build_ising_born(n: int, rng=0) -> Circuit:
    """Hadamards, then tunable pairwise Z-couplings, then tunable rotations."""
    rng = linalg.make_rng(rng)
    if n < 1:
        raise ValueError("need at least one qubit")
    return Circuit(n, (HadamardLayer(), _random_gcz(n, rng), _random_product(n, rng)))


@dataclass(frozen=True, eq=False)
class DissipativeQNN:
    """One general unitary on input + hidden + output qubits, then trace out all but output.

    Qubits are ordered input, hidden, output.
    """

    n_in: int
    n_hidden: int
    n_out: int
    layer: GeneralUnitaryLayer

    def __post_init__(self):
        if min(self.n_in, self.n_out) < 1 or self.n_hidden < 0:
            raise ValueError("dissipative QNN needs n_in, n_out >= 1 and n_hidden >= 0")
        if self.layer.n != self.n_total:
            raise LayerShapeError(f"general layer acts on {self.layer.n} qubits, model has {self.n_total}")

    @property
    def n_total(self) -> int:
        return self.n_in + self.n_hidden + self.n_out

    @property
    def circuit(self) -> Circuit:
        return Circuit(self.n_total, (self.layer,))

    @property
    def n_params(self) -> int:
        return 4**self.n_total - 1

    def with_circuit(self, c: Circuit) -> "DissipativeQNN":
        return DissipativeQNN(self.n_in, self.n_hidden, self.n_out, c.layers[0])

    def embed_input(self, rho_in: np.ndarray) -> np.ndarray:
        if rho_in.shape[-1] != 1 << self.n_in:
            raise LinalgError(f"input dimension {rho_in.shape[-1]} does not match {self.n_in} input qubits")
        zeros = np.zeros((1 << (self.n_hidden + self.n_out),) * 2, dtype=complex)
        zeros[0, 0] = 1.0
        return np.kron(rho_in, zeros) if rho_in.ndim == 2 else np.stack([np.kron(r, zeros) for r in rho_in])

    def lift_observable(self, obs: np.ndarray) -> np.ndarray:
        eye = np.eye(1 << (self.n_in + self.n_hidden), dtype=complex)
        return np.kron(eye, obs) if obs.ndim == 2 else np.stack([np.kron(eye, o) for o in obs])

    def readout(self, rho: np.ndarray) -> np.ndarray:
        return linalg.partial_trace(rho, range(self.n_in + self.n_hidden, self.n_total))


def build_dissipative(n_in: int, n_hidden: int, n_out: int, rng=0, scale: float = 0.1) -> DissipativeQNN:
    """Dissipative QNN with small random Pauli coefficients (near-identity start)."""
    rng = linalg.make_rng(rng)
    total = n_in + n_hidden + n_out
    coeffs = rng.normal(0.0, scale, size=4**total)
    coeffs[0] = 0.0
    return DissipativeQNN(n_in, n_hidden, n_out, GeneralUnitaryLayer(coeffs))


def dissipative_forward(model: DissipativeQNN, rho_in: np.ndarray) -> np.ndarray:
    """``tr_{in,hid}(U (rho_in (x) |0..0><0..0|) U^dagger)``."""
    return model.readout(forward(model.circuit, model.embed_input(rho_in)))


# ---------------------------------------------------------- conditional block


def outcome_bits(index: int, width: int) -> tuple[int, ...]:
    return tuple((index >> (width - 1 - p)) & 1 for p in range(width))


@dataclass(frozen=True, eq=False)
class ConditionalModel:
    """Unitary, computational-basis measurement, then an outcome-dependent circuit.

    ``pre_circuit`` acts on ``n_in + n_ancilla`` qubits with the ancilla
    appended after the input in state ``|0>``. ``branches[i]`` acts on the
    qubits not in ``measured`` (original relative order) after outcome ``i``,
    where the first measured qubit is the most significant outcome bit.
    """

    n_in: int
    n_ancilla: int
    pre_circuit: Circuit
    measured: tuple[int, ...]
    branches: tuple[Circuit, ...]

    def __post_init__(self):
        object.__setattr__(self, "measured", tuple(int(q) for q in self.measured))
        object.__setattr__(self, "branches", tuple(self.branches))
        total = self.n_in + self.n_ancilla
        if self.pre_circuit.n != total:
            raise LayerShapeError(f"pre-circuit has {self.pre_circuit.n} qubits, expected {total}")
        if len(set(self.measured)) != len(self.measured) or any(not 0 <= q < total for q in self.measured):
            raise LayerShapeError(f"bad measured set {self.measured}")
        if len(self.branches) != 1 << len(self.measured):
            raise LayerShapeError(
                f"need {1 << len(self.measured)} branches for {len(self.measured)} measured qubits, got {len(self.branches)}"
            )
        for b in self.branches:
            if b.n != self.n_out:
                raise LayerShapeError(f"branch circuit on {b.n} qubits, expected {self.n_out}")

    @property
    def n_total(self) -> int:
        return self.n_in + self.n_ancilla

    @property
    def n_out(self) -> int:
        return self.n_total - len(self.measured)

    @property
    def surviving(self) -> list[int]:
        return [q for q in range(self.n_total) if q not in self.measured]

    @property
    def n_params(self) -> int:
        return self.pre_circuit.n_params + sum(b.n_params for b in self.branches)

    def embed_input(self, rho_in: np.ndarray) -> np.ndarray:
        if rho_in.shape[-1] != 1 << self.n_in:
            raise LinalgError(f"input dimension {rho_in.shape[-1]} does not match {self.n_in} input qubits")
        if self.n_ancilla == 0:
            return rho_in
        zeros = np.zeros((1 << self.n_ancilla,) * 2, dtype=complex)
        zeros[0, 0] = 1.0
        return np.kron(rho_in, zeros) if rho_in.ndim == 2 else np.stack([np.kron(r, zeros) for r in rho_in])

    def outcomes(self) -> list[tuple[int, ...]]:
        return [outcome_bits(i, len(self.measured)) for i in range(len(self.branches))]

    def branch_inputs(self, rho1: np.ndarray) -> list[np.ndarray]:
        """Unnormalized post-measurement states, one per outcome."""
        if not self.measured:
            return [rho1]
        return [linalg.project_qubits(rho1, self.measured, bits) for bits in self.outcomes()]

    def adjoint_observable(self, obs: np.ndarray) -> np.ndarray:
        """Heisenberg-picture observable on the pre-circuit output.

        ``sum_i |i><i|_measured (x) V_i^dagger obs V_i``, so that
        ``tr(obs * output) = tr(adjoint_observable(obs) * rho1)``.
        """
        k = len(self.measured)
        batch = obs.shape[:-2]
        dim = 1 << self.n_total
        order = list(self.measured) + self.surviving
        total = np.zeros(batch + (dim, dim), dtype=complex)
        for i, branch in enumerate(self.branches):
            v = branch.unitary()
            heis = linalg.dagger(v) @ obs @ v
            p = np.zeros((1 << k, 1 << k), dtype=complex)
            p[i, i] = 1.0
            stacked = np.einsum("ab,...cd->...acbd", p, heis).reshape(batch + (dim, dim))
            total = total + _permute_batch(stacked, order)
        return total


def _permute_batch(op: np.ndarray, order: Sequence[int]) -> np.ndarray:
    if op.ndim == 2:
        return linalg.permute_qubits(op, order)
    return np.stack([linalg.permute_qubits(o, order) for o in op])


def conditional_forward(m: ConditionalModel, rho_in: np.ndarray) -> np.ndarray:
    rho1 = forward(m.pre_circuit, m.embed_input(rho_in))
    out = None
    for branch, rho2 in zip(m.branches, m.branch_inputs(rho1)):
        term = forward(branch, rho2)
        out = term if out is None else out + term
    return out


def conditional_model(n_in: int, n_out: int, pre_circuit: Circuit, branches: Sequence[Circuit] | None = None):
    """Handle unequal input/output widths the standard way.

    ``n_in < n_out`` appends ``n_out - n_in`` ancillas and measures nothing;
    ``n_in > n_out`` measures the lowest-index ``n_in - n_out`` qubits.
    """
    n_anc = max(n_out - n_in, 0)
    measured = tuple(range(max(n_in - n_out, 0)))
    if branches is None:
        branches = [Circuit(n_out)] * (1 << len(measured))
    return ConditionalModel(n_in, n_anc, pre_circuit, measured, tuple(branches))


_H_ALPHA = np.array([np.pi / (2 * np.sqrt(2)), 0.0, np.pi / (2 * np.sqrt(2))])


def _rotations(n: int, assign: dict[int, np.ndarray]) -> ProductRotationLayer:
    alphas = np.zeros((n, 3))
    for q, a in assign.items():
        alphas[q] = a
    return ProductRotationLayer(alphas)


def teleport_model() -> ConditionalModel:
    """Textbook teleportation of qubit 0 onto qubit 2 written in DIBoM layers.

    Hadamard is ``su2(pi/(2 sqrt 2) * (1, 0, 1))`` up to phase and each CNOT
    is a CZ conjugated by Hadamards on the target.
    """
    pre = Circuit(
        3,
        (
            _rotations(3, {1: _H_ALPHA, 2: _H_ALPHA}),
            GeneralizedCZLayer.from_pairs(3, {(1, 2): 1.0}),
            _rotations(3, {1: _H_ALPHA, 2: _H_ALPHA}),
            GeneralizedCZLayer.from_pairs(3, {(0, 1): 1.0}),
            _rotations(3, {0: _H_ALPHA, 1: _H_ALPHA}),
        ),
    )
    half = np.pi / 2
    corrections = [
        np.zeros(3),  # 00: I
        np.array([half, 0.0, 0.0]),  # 01: X
        np.array([0.0, 0.0, half]),  # 10: Z
        np.array([0.0, half, 0.0]),  # 11: ZX = iY
    ]
    branches = tuple(Circuit(1, (SingleQubitRotation(0, a),)) for a in corrections)
    return ConditionalModel(1, 2, pre, (0, 1), branches)


def trainable_teleport_model(L: int = 3, rng=0, control: bool = True) -> ConditionalModel:
    """Learnable measure-and-correct model for the teleportation task.

    The three input qubits (data plus two ``|0>`` qubits) pass through a
    DIBoM of depth ``L``; qubits 0 and 1 are measured and each outcome
    selects a single-qubit rotation on qubit 2. With ``control=False`` the
    branches are empty, which discards the measurement record.
    """
    rng = linalg.make_rng(rng)
    pre = build_dibom(3, L, rng)
    if control:
        branches = tuple(Circuit(1, (_random_product(1, rng),)) for _ in range(4))
    else:
        branches = (Circuit(1),) * 4
    return ConditionalModel(3, 0, pre, (0, 1), branches)


# -------------------------------------------------------- parameter counting


def count_parameters(kind: ModelKind | str, n: int, L: int = 1, n_hidden: int = 0, n_out: int | None = None) -> int:
    """Tunable parameter count of each architecture.

    For the dissipative QNN ``n`` is the input width; the output width
    defaults to ``n``.
    """
    kind = ModelKind(kind)
    pairs = n * (n - 1) // 2
    if kind is ModelKind.DIBOM:
        return ((L + 1) // 2) * 3 * n + (L // 2) * pairs
    if kind is ModelKind.HARDWARE_EFFICIENT:
        return ((L + 1) // 2) * 3 * n
    if kind is ModelKind.ISING_BORN:
        return pairs + 3 * n
    total = n + n_hidden + (n if n_out is None else n_out)
    return 4**total - 1


# ---------------------------------------------------- universality reduction


@dataclass(frozen=True)
class Gate:
    """Element of a generic circuit: a single-qubit unitary or a CZ."""

    name: str
    qubits: tuple[int, ...]
    matrix: np.ndarray | None = field(default=None, compare=False)


def single(q: int, u: np.ndarray) -> Gate:
    return Gate("u", (q,), np.asarray(u, dtype=complex))


def cz(j: int, k: int) -> Gate:
    return Gate("cz", (j, k))


def generic_unitary(n: int, moments: Iterable[Sequence[Gate]]) -> np.ndarray:
    """Monolithic unitary of a list of moments, each applied gate by gate."""
    u = np.eye(1 << n, dtype=complex)
    for moment in moments:
        for g in moment:
            if g.name == "u":
                op = linalg.embed(g.matrix, g.qubits, n)
            elif g.name == "cz":
                op = GeneralizedCZLayer.from_pairs(n, {g.qubits: 1.0}).unitary(n)
            else:
                raise ValueError(f"unsupported gate {g.name!r}")
            u = op @ u
    return u


def circuit_to_dibom(n: int, moments: Sequence[Sequence[Gate]]) -> Circuit:
    """Rewrite a circuit of single-qubit and CZ gates into DIBoM form.

    Each moment (gates on disjoint qubits) becomes a product-rotation layer
    followed by a generalized-CZ layer, missing gates filled with identities.
    Single-qubit gates are matched up to their global phase.
    """
    layers: list[Layer] = []
    for moment in moments:
        touched: set[int] = set()
        alphas = np.zeros((n, 3))
        betas: dict[tuple[int, int], float] = {}
        for g in moment:
            if g.name not in ("u", "cz"):
                raise ValueError(f"unsupported gate {g.name!r}")
            if touched & set(g.qubits) or any(not 0 <= q < n for q in g.qubits):
                raise ValueError(f"gates in a moment must act on disjoint in-range qubits: {g.qubits}")
            touched |= set(g.qubits)
            if g.name == "u":
                alphas[g.qubits[0]] = su2_params(g.matrix)
            else:
                betas[g.qubits] = 1.0
        layers.append(ProductRotationLayer(alphas))
        layers.append(GeneralizedCZLayer.from_pairs(n, betas))
    return Circuit(n, tuple(layers))


# ------------------------------------------------------------- serialization


def model_to_dict(model, kind: ModelKind | str | None = None) -> dict:
    if isinstance(model, Circuit):
        d = {"model": "circuit", **model.to_dict()}
    elif isinstance(model, DissipativeQNN):
        d = {
            "model": "dissipative",
            "n_in": model.n_in,
            "n_hidden": model.n_hidden,
            "n_out": model.n_out,
            "layer": model.layer.to_dict(),
        }
    elif isinstance(model, ConditionalModel):
        d = {
            "model": "conditional",
            "n_in": model.n_in,
            "n_ancilla": model.n_ancilla,
            "measured": list(model.measured),
            "pre_circuit": model.pre_circuit.to_dict(),
            "branches": [b.to_dict() for b in model.branches],
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    d["format_version"] = FORMAT_VERSION
    if kind is not None:
        d["kind"] = ModelKind(kind).value
    if isinstance(model, Circuit):
        d["L"] = len(model)
    return d


def model_from_dict(d: dict):
    tag = d["model"]
    if tag == "circuit":
        return Circuit.from_dict(d)
    if tag == "dissipative":
        return DissipativeQNN(int(d["n_in"]), int(d["n_hidden"]), int(d["n_out"]), layer_from_dict(d["layer"]))
    if tag == "conditional":
        return ConditionalModel(
            int(d["n_in"]),
            int(d["n_ancilla"]),
            Circuit.from_dict(d["pre_circuit"]),
            tuple(d["measured"]),
            tuple(Circuit.from_dict(b) for b in d["branches"]),
        )
    raise ValueError(f"unknown model tag {tag!r}")


def dumps_model(model, kind=None) -> str:
    # json writes floats with repr(), which round-trips exactly
    return json.dumps(model_to_dict(model, kind), indent=1)


def loads_model(text: str):
    return model_from_dict(json.loads(text))


def build_model(kind: ModelKind | str, n: int, L: int, rng=0, connectivity: str = "all", n_hidden: int = 0):
    kind = ModelKind(kind)
    if kind is ModelKind.DIBOM:
        return build_dibom(n, L, rng)
    if kind is ModelKind.HARDWARE_EFFICIENT:
        return build_hardware_efficient(n, L, rng, connectivity)
    if kind is ModelKind.ISING_BORN:
        return build_ising_born(n, rng)
    return build_dissipative(n, n_hidden, n, rng)

