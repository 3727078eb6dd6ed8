"""Losses, commutator gradients, closed-form layer updates and training loops.

All models are trained through one quantity: for per-sample input operators
``A_x`` and output observables ``B_x`` the score is

    C = (1/N) sum_x tr(B_x U A_x U^dagger)

With ``A_x = |psi><psi|`` and ``B_x = |phi><phi|`` this is the fidelity score
of the global loss. The local loss uses the reversed simulation with
``A_x = (1/n) sum_y |phi_y><phi_y| (x) I``. Moving layer ``l`` along
``exp(i eps K) U_l`` changes ``C`` at rate ``(i/N) tr(M_l K)``, with
``M_l`` the commutator of the forward-propagated input and the
backward-propagated observable.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from dibom import linalg
from dibom.gates import (
    GeneralizedCZLayer,
    GeneralUnitaryLayer,
    Layer,
    ProductRotationLayer,
    su2,
    su2_params,
)
from dibom.linalg import PAULIS, dagger
from dibom.network import Circuit, ConditionalModel, DissipativeQNN

log = logging.getLogger(__name__)


class LossKind(str, enum.Enum):
    GLOBAL = "global"
    LOCAL = "local"


class Method(str, enum.Enum):
    SIMULTANEOUS = "simultaneous"
    LAYER_BY_LAYER = "layer_by_layer"
    NESTEROV = "nesterov"
    GRADIENT_DESCENT = "gradient_descent"


class NumericalAbort(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainingConfig:
    lam: float = 0.5
    epsilon: float = 0.1
    max_iters: int = 1000
    method: Method = Method.SIMULTANEOUS
    loss: LossKind = LossKind.GLOBAL
    seed: int = 0
    convergence_tol: float = 1e-6
    max_halvings: int = 20
    # layer-by-layer order: "round_robin" or "random"
    schedule: str = "round_robin"
    # learning rate and difference step of the finite-difference optimizers
    eta: float = 0.1
    fd_epsilon: float = 1e-6

    def __post_init__(self):
        self.method = Method(self.method)
        self.loss = LossKind(self.loss)
        if self.lam <= 0 or self.epsilon <= 0 or self.convergence_tol <= 0:
            raise ValueError("lam, epsilon and convergence_tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.schedule not in ("round_robin", "random"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.eta <= 0 or self.fd_epsilon <= 0:
            raise ValueError("eta and fd_epsilon must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        d["loss"] = self.loss.value
        return d


@dataclass
class TrainRecord:
    iter: int
    train_loss: float
    test_loss: float
    wall_ms: float


@dataclass
class TrainTrace:
    records: list[TrainRecord] = field(default_factory=list)
    model: object = None

    @property
    def train_losses(self) -> np.ndarray:
        return np.array([r.train_loss for r in self.records])

    @property
    def test_losses(self) -> np.ndarray:
        return np.array([r.test_loss for r in self.records])

    @property
    def final_loss(self) -> float:
        return self.records[-1].train_loss

    def to_csv(self, timing: bool = False) -> str:
        """CSV text; ``wall_ms`` is left empty unless ``timing`` is set so reruns match byte for byte."""
        lines = ["iter,train_loss,test_loss,wall_ms"]
        for r in self.records:
            wall = f"{r.wall_ms:.3f}" if timing else ""
            test = "" if math.isnan(r.test_loss) else repr(r.test_loss)
            lines.append(f"{r.iter},{r.train_loss!r},{test},{wall}")
        return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ datasets


def _pairs(dataset) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(dataset, "inputs"):
        inputs, labels = dataset.inputs, dataset.labels
    else:
        inputs, labels = dataset
    inputs = np.asarray(inputs, dtype=complex)
    labels = np.asarray(labels, dtype=complex)
    if inputs.shape[0] == 0:
        raise ValueError("empty dataset")
    if inputs.shape[0] != labels.shape[0]:
        raise ValueError("inputs and labels differ in length")
    return inputs, labels


def _as_density(states: np.ndarray) -> np.ndarray:
    return states if states.ndim == 3 else linalg.projector(states)


def product_factors(psi: np.ndarray, tol: float = 1e-8) -> list[np.ndarray]:
    """Split a product state into its single-qubit factors."""
    n = linalg.num_qubits(psi.shape[0])
    rho = linalg.projector(psi)
    factors = []
    for q in range(n):
        w, v = np.linalg.eigh(linalg.partial_trace(rho, [q]))
        factors.append(v[:, -1])
    if abs(abs(np.vdot(linalg.kron(*[f[:, None] for f in factors])[:, 0], psi)) - 1.0) > tol:
        raise ValueError("input state is not of product form")
    return factors


def local_input_operator(psi: np.ndarray) -> np.ndarray:
    """``(1/n) sum_y |phi_y><phi_y| (x) I`` for a product state ``psi``."""
    factors = product_factors(psi)
    n = len(factors)
    op = np.zeros((1 << n, 1 << n), dtype=complex)
    for q, f in enumerate(factors):
        op += linalg.embed(linalg.projector(f), [q], n)
    return op / n


# ------------------------------------------------------------ model segments


def segments(model) -> list[tuple[tuple, Circuit]]:
    """Independently parametrized circuits inside ``model``."""
    if isinstance(model, Circuit):
        return [(("main",), model)]
    if isinstance(model, DissipativeQNN):
        return [(("main",), model.circuit)]
    if isinstance(model, ConditionalModel):
        return [(("pre",), model.pre_circuit)] + [(("branch", i), b) for i, b in enumerate(model.branches)]
    raise TypeError(f"unsupported model type {type(model).__name__}")


def with_segments(model, replacements: dict[tuple, Circuit]):
    if not replacements:
        return model
    if isinstance(model, Circuit):
        return replacements[("main",)]
    if isinstance(model, DissipativeQNN):
        return model.with_circuit(replacements[("main",)])
    pre = replacements.get(("pre",), model.pre_circuit)
    branches = tuple(replacements.get(("branch", i), b) for i, b in enumerate(model.branches))
    return ConditionalModel(model.n_in, model.n_ancilla, pre, model.measured, branches)


def layer_keys(model, trainable: Callable[[tuple], bool] | None = None) -> list[tuple]:
    """Keys ``(segment_key, layer_index)`` of the tunable layers, in order."""
    keys = []
    for seg, circ in segments(model):
        for index, layer in enumerate(circ.layers):
            key = (seg, index)
            if layer.family is not None and layer.n_params and (trainable is None or trainable(key)):
                keys.append(key)
    return keys


def model_params(model) -> np.ndarray:
    parts = [c.params() for _, c in segments(model)]
    return np.concatenate(parts) if parts else np.zeros(0)


def model_with_params(model, theta: np.ndarray):
    theta = np.asarray(theta, dtype=float)
    repl, start = {}, 0
    for seg, c in segments(model):
        stop = start + c.n_params
        repl[seg] = c.with_params(theta[start:stop])
        start = stop
    if start != theta.size:
        raise ValueError(f"expected {start} parameters, got {theta.size}")
    return with_segments(model, repl)


# ------------------------------------------------------------ score engine


@dataclass
class Problem:
    """Per-sample operators ``A_x`` (input side) and ``B_x`` (output side)."""

    inputs: np.ndarray
    observables: np.ndarray
    # per-sample weights multiplying tr(B U A U^dagger); sums to 1 across samples
    n_samples: int


def build_problem(model, dataset, loss: LossKind | str = LossKind.GLOBAL) -> Problem:
    loss = LossKind(loss)
    inputs, labels = _pairs(dataset)
    if labels.ndim == 3:
        raise ValueError("mixed labels have no linear score; use global_loss")
    if loss is LossKind.LOCAL:
        if not isinstance(model, Circuit):
            raise ValueError("the local loss is defined for plain circuits")
        a = np.stack([local_input_operator(psi) for psi in inputs])
    else:
        a = linalg.projector(inputs)
    b = linalg.projector(labels)
    if isinstance(model, DissipativeQNN):
        a, b = model.embed_input(a), model.lift_observable(b)
    elif isinstance(model, ConditionalModel):
        a = model.embed_input(a)
        if b.shape[-1] != 1 << model.n_out:
            raise ValueError(f"labels of dimension {b.shape[-1]} for a {model.n_out}-qubit output")
    elif isinstance(model, Circuit):
        if a.shape[-1] != 1 << model.n or b.shape[-1] != 1 << model.n:
            raise ValueError(f"dataset dimensions do not match a {model.n}-qubit circuit")
    return Problem(a, b, inputs.shape[0])


def _mean_trace(b: np.ndarray, rho: np.ndarray) -> float:
    # tr(B rho) per sample, summed in fixed sample order
    vals = np.real(np.einsum("xij,xji->x", b, rho))
    return float(np.sum(vals) / vals.shape[0])


def score(model, problem: Problem) -> float:
    """``C = (1/N) sum_x tr(B_x model(A_x))``."""
    if isinstance(model, ConditionalModel):
        rho1 = _conj(model.pre_circuit.unitary(), problem.inputs)
        out = None
        for branch, rho2 in zip(model.branches, model.branch_inputs(rho1)):
            term = _conj(branch.unitary(), rho2)
            out = term if out is None else out + term
        return _mean_trace(problem.observables, out)
    circ = model if isinstance(model, Circuit) else model.circuit
    return _mean_trace(problem.observables, _conj(circ.unitary(), problem.inputs))


def _conj(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return u @ rho @ dagger(u)


def circuit_commutators(circuit: Circuit, a: np.ndarray, b: np.ndarray) -> list[np.ndarray]:
    """Sample-summed ``M_l = sum_x [rho_l,x, B~_l,x]`` for every layer.

    ``rho_l`` is ``A`` pushed through layers ``1..l`` and ``B~_l`` is ``B``
    pulled back through layers ``L..l+1``.
    """
    us = circuit.layer_unitaries()
    forward_states = []
    rho = a
    for u in us:
        rho = _conj(u, rho)
        forward_states.append(rho)
    out: list[np.ndarray] = [None] * len(us)  # type: ignore[list-item]
    obs = b
    for l in range(len(us) - 1, -1, -1):
        rho = forward_states[l]
        out[l] = np.sum(rho @ obs - obs @ rho, axis=0)
        obs = dagger(us[l]) @ obs @ us[l]
    return out


def commutators(model, problem: Problem) -> dict[tuple, list[np.ndarray]]:
    """Summed ``M_l`` for every layer of every segment."""
    if isinstance(model, ConditionalModel):
        rho1 = _conj(model.pre_circuit.unitary(), problem.inputs)
        ms = {("pre",): circuit_commutators(model.pre_circuit, problem.inputs, model.adjoint_observable(problem.observables))}
        for i, (branch, rho2) in enumerate(zip(model.branches, model.branch_inputs(rho1))):
            ms[("branch", i)] = circuit_commutators(branch, rho2, problem.observables)
        return ms
    circ = model if isinstance(model, Circuit) else model.circuit
    return {("main",): circuit_commutators(circ, problem.inputs, problem.observables)}


def compute_M(model, sample, l: int, loss: LossKind | str = LossKind.GLOBAL, segment: tuple = None) -> np.ndarray:
    """``M^l`` for a single ``(input, label)`` sample; ``l`` counts layers from 1."""
    problem = build_problem(model, ([sample[0]], [sample[1]]), loss)
    seg = segment or segments(model)[0][0]
    ms = commutators(model, problem)[seg]
    if not 1 <= l <= len(ms):
        raise IndexError(f"layer index {l} outside 1..{len(ms)}")
    return ms[l - 1]


# ---------------------------------------------------------------- K-updates


@dataclass
class GradientUpdate:
    """Hermitian generator ``K`` and its coordinates in the layer family.

    ``coeffs`` holds Pauli coefficients (single/product/general) or the
    ``|11><11|`` weights (gcz).
    """

    family: str
    K: np.ndarray
    coeffs: np.ndarray
    target: int | None = None


def _summed(m_values) -> tuple[np.ndarray, int]:
    m = np.asarray(m_values, dtype=complex)
    if m.ndim == 3:
        return m.sum(axis=0), m.shape[0]
    raise ValueError("pass per-sample M values (N, d, d) or use n_samples")


def _resolve(m_values, n_samples):
    if n_samples is None:
        return _summed(m_values)
    return np.asarray(m_values, dtype=complex), int(n_samples)


def _local_generator(m_local: np.ndarray, n_samples: int, lam: float) -> np.ndarray:
    k = 1j * m_local / (n_samples * lam)
    return (k + dagger(k)) / 2


def _pauli_coeffs(k2: np.ndarray) -> np.ndarray:
    return np.array([np.real(np.trace(p @ k2)) / 2 for p in PAULIS[1:]])


def k_update_single(m_values, target: int, lam: float, n_samples: int | None = None) -> GradientUpdate:
    """``K = i sum_x tr_rest(M) / (N lam)`` on qubit ``target``."""
    m, n_s = _resolve(m_values, n_samples)
    n = linalg.num_qubits(m.shape[-1])
    k2 = _local_generator(linalg.partial_trace(m, [target]), n_s, lam)
    return GradientUpdate("single", linalg.embed(k2, [target], n), _pauli_coeffs(k2), target)


def k_update_product(m_values, lam: float, n_samples: int | None = None) -> GradientUpdate:
    """Sum of the per-qubit single-qubit generators."""
    m, n_s = _resolve(m_values, n_samples)
    n = linalg.num_qubits(m.shape[-1])
    k = np.zeros_like(m)
    coeffs = np.zeros((n, 3))
    for q in range(n):
        k2 = _local_generator(linalg.partial_trace(m, [q]), n_s, lam)
        coeffs[q] = _pauli_coeffs(k2)
        k += linalg.embed(k2, [q], n)
    return GradientUpdate("product", k, coeffs)


def k_update_gcz(m_values, lam: float, n_samples: int | None = None) -> GradientUpdate:
    """Diagonal generator ``sum_jk kappa_jk |11><11|_jk``.

    ``kappa_jk = i <11| tr_rest(M) |11> / (2 N lam)``; ``M`` is
    anti-Hermitian so the bracket is imaginary and ``kappa`` is real.
    """
    from dibom.gates import _bit_table, qubit_pairs

    m, n_s = _resolve(m_values, n_samples)
    n = linalg.num_qubits(m.shape[-1])
    pairs = qubit_pairs(n)
    kappa = np.zeros(len(pairs))
    bits = _bit_table(n)
    diag = np.zeros(1 << n)
    for index, (j, k) in enumerate(pairs):
        value = 1j * linalg.partial_trace(m, [j, k])[3, 3] / (2 * n_s * lam)
        kappa[index] = value.real
        diag += value.real * bits[:, j] * bits[:, k]
    return GradientUpdate("gcz", np.diag(diag).astype(complex), kappa)


def k_update_general(m_values, lam: float, n_samples: int | None = None) -> GradientUpdate:
    """Full generator ``K = i 2^n sum_x M / (N lam)``."""
    m, n_s = _resolve(m_values, n_samples)
    n = linalg.num_qubits(m.shape[-1])
    k = 1j * (1 << n) * m / (n_s * lam)
    k = (k + dagger(k)) / 2
    return GradientUpdate("general", k, GeneralUnitaryLayer.from_generator(k).coeffs)


def k_update(layer: Layer, m_sum: np.ndarray, n_samples: int, lam: float) -> GradientUpdate:
    if layer.family == "single":
        return k_update_single(m_sum, layer.target, lam, n_samples)
    if layer.family == "product":
        return k_update_product(m_sum, lam, n_samples)
    if layer.family == "gcz":
        return k_update_gcz(m_sum, lam, n_samples)
    if layer.family == "general":
        return k_update_general(m_sum, lam, n_samples)
    raise ValueError(f"layer {layer.kind} has no tunable family")


def apply_update(layer: Layer, update: GradientUpdate, eps: float) -> Layer:
    """Layer whose unitary is ``exp(i eps K) U_layer``, kept inside the family."""
    if layer.family == "single":
        k2 = np.einsum("a,aij->ij", update.coeffs, np.stack(PAULIS[1:]))
        return layer.with_params(su2_params(linalg.hermitian_exp(k2, eps) @ su2(layer.alpha)))
    if layer.family == "product":
        alphas = np.array(
            [
                su2_params(linalg.hermitian_exp(np.einsum("a,aij->ij", c, np.stack(PAULIS[1:])), eps) @ su2(a))
                for c, a in zip(update.coeffs, layer.alphas)
            ]
        )
        return ProductRotationLayer(alphas)
    if layer.family == "gcz":
        return GeneralizedCZLayer(layer.betas - eps * update.coeffs / np.pi, layer.n)
    if layer.family == "general":
        return GeneralUnitaryLayer.from_unitary(linalg.hermitian_exp(update.K, eps) @ layer.unitary(layer.n))
    raise ValueError(f"layer {layer.kind} has no tunable family")


def compute_updates(model, problem: Problem, lam: float, keys: Iterable[tuple] | None = None) -> dict[tuple, GradientUpdate]:
    ms = commutators(model, problem)
    keys = layer_keys(model) if keys is None else list(keys)
    seg_map = dict(segments(model))
    return {key: k_update(seg_map[key[0]].layers[key[1]], ms[key[0]][key[1]], problem.n_samples, lam) for key in keys}


def apply_updates(model, updates: dict[tuple, GradientUpdate], eps: float):
    seg_map = dict(segments(model))
    new_layers: dict[tuple, list[Layer]] = {}
    for (seg, index), upd in updates.items():
        layers = new_layers.setdefault(seg, list(seg_map[seg].layers))
        layers[index] = apply_update(layers[index], upd, eps)
    return with_segments(model, {seg: Circuit(seg_map[seg].n, tuple(ls)) for seg, ls in new_layers.items()})


def directional_derivative(model, problem: Problem, updates: dict[tuple, GradientUpdate]) -> float:
    """``dC/ds = (i/N) sum_l tr(M_l K_l)`` along the given generators."""
    ms = commutators(model, problem)
    total = 0.0 + 0.0j
    for (seg, index), upd in updates.items():
        total += np.trace(ms[seg][index] @ upd.K)
    return float(np.real(1j * total / problem.n_samples))


# -------------------------------------------------------------------- losses


def global_loss(model, dataset) -> float:
    """``1 - mean_x <phi_x| out_x |phi_x>``; mixed labels use the Uhlmann fidelity."""
    inputs, labels = _pairs(dataset)
    if labels.ndim == 3:
        outs = [model_output(model, linalg.projector(psi)) for psi in inputs]
        return 1.0 - float(np.mean([linalg.fidelity(o, s) for o, s in zip(outs, labels)]))
    return 1.0 - score(model, build_problem(model, dataset, LossKind.GLOBAL))


def local_loss(model, dataset) -> float:
    """``1 - (1/nN) sum_x sum_y <phi_x,y| tr_rest(U^dagger |label><label| U) |phi_x,y>``."""
    return 1.0 - score(model, build_problem(model, dataset, LossKind.LOCAL))


def loss(model, dataset, kind: LossKind | str = LossKind.GLOBAL) -> float:
    return local_loss(model, dataset) if LossKind(kind) is LossKind.LOCAL else global_loss(model, dataset)


def model_output(model, rho_in: np.ndarray) -> np.ndarray:
    from dibom.network import conditional_forward, dissipative_forward, forward

    if isinstance(model, Circuit):
        return forward(model, rho_in)
    if isinstance(model, DissipativeQNN):
        return dissipative_forward(model, rho_in)
    return conditional_forward(model, rho_in)


# -------------------------------------------------------- gradient helpers


def finite_diff_grad(model, dataset, coord: int, epsilon: float = 1e-6, loss_kind=LossKind.GLOBAL, scheme: str = "backward") -> float:
    """Finite-difference derivative of the loss in parameter ``coord``.

    ``backward`` is ``(L(y) - L(y - eps)) / eps``; ``central`` is kept for
    verification.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    theta = model_params(model)
    problem = build_problem(model, dataset, loss_kind)

    def at(shift):
        t = theta.copy()
        t[coord] += shift
        return 1.0 - score(model_with_params(model, t), problem)

    if scheme == "backward":
        return (at(0.0) - at(-epsilon)) / epsilon
    if scheme == "central":
        return (at(epsilon) - at(-epsilon)) / (2 * epsilon)
    raise ValueError(f"unknown scheme {scheme!r}")


def fd_gradient(model, problem: Problem, epsilon: float) -> tuple[float, np.ndarray]:
    """Backward-difference gradient of the loss over all parameters."""
    theta = model_params(model)
    base = 1.0 - score(model, problem)
    grad = np.empty_like(theta)
    for index in range(theta.size):
        t = theta.copy()
        t[index] -= epsilon
        grad[index] = (base - (1.0 - score(model_with_params(model, t), problem))) / epsilon
    return base, grad


def param_gradient(model, dataset, loss_kind=LossKind.GLOBAL) -> np.ndarray:
    """Analytic loss gradient in parameter coordinates.

    Uses ``dU/dtheta_a = i G_a U`` so ``dL/dtheta_a = -(i/N) tr(M_l G_a)``.
    """
    problem = build_problem(model, dataset, loss_kind)
    ms = commutators(model, problem)
    parts = [np.zeros(0)]
    for seg, circ in segments(model):
        for layer, m in zip(circ.layers, ms[seg]):
            parts.append(-layer_rates(layer, m, circ.n) / problem.n_samples)
    return np.concatenate(parts)


def layer_rates(layer: Layer, m: np.ndarray, n: int) -> np.ndarray:
    """``Re(i tr(M G_a))`` for every coordinate generator ``G_a`` of ``layer``.

    Single-qubit and pair generators are contracted against reduced blocks
    of ``M`` instead of being embedded.
    """
    from dibom.gates import _su2_generators, qubit_pairs

    if layer.family == "single":
        m2 = linalg.partial_trace(m, [layer.target])
        return np.array([np.real(1j * np.trace(m2 @ g)) for g in _su2_generators(layer.alpha)])
    if layer.family == "product":
        out = []
        for q, a in enumerate(layer.alphas):
            m2 = linalg.partial_trace(m, [q])
            out.extend(np.real(1j * np.trace(m2 @ g)) for g in _su2_generators(a))
        return np.array(out)
    if layer.family == "gcz":
        return np.array([np.real(-1j * np.pi * linalg.partial_trace(m, [j, k])[3, 3]) for j, k in qubit_pairs(layer.n)])
    if layer.family == "general":
        return np.real(1j * layer.generator_traces(m))
    return np.array([np.real(1j * np.trace(m @ g)) for g in layer.param_generators(n)])


# ----------------------------------------------------------------- training


@dataclass
class StepResult:
    model: object
    loss: float
    accepted: bool
    epsilon: float


def _check_finite(value: float) -> float:
    if not math.isfinite(value):
        raise NumericalAbort(f"non-finite score {value}")
    return value


def ascent_step(model, problem: Problem, lam: float, epsilon: float, keys=None, max_halvings: int = 20) -> StepResult:
    """One K-update with the increase check: halve the step until the score rises, else skip."""
    base = _check_finite(score(model, problem))
    updates = compute_updates(model, problem, lam, keys)
    eps = epsilon
    for _ in range(max_halvings + 1):
        candidate = apply_updates(model, updates, eps)
        value = _check_finite(score(candidate, problem))
        if value > base:
            return StepResult(candidate, 1.0 - value, True, eps)
        eps /= 2
    return StepResult(model, 1.0 - base, False, 0.0)


def train_step(model, dataset, config: TrainingConfig, keys=None) -> tuple[object, float]:
    problem = build_problem(model, dataset, config.loss)
    result = ascent_step(model, problem, config.lam, config.epsilon, keys, config.max_halvings)
    return result.model, result.loss


def train(
    model,
    dataset,
    config: TrainingConfig | None = None,
    test=None,
    trainable: Callable[[tuple], bool] | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> TrainTrace:
    """Iterate training steps; ``trace.model`` holds the final model.

    Record 0 is the untrained model. Training stops after ``max_iters``
    steps or once the train loss falls below ``convergence_tol``.
    """
    config = config or TrainingConfig()
    problem = build_problem(model, dataset, config.loss)
    test_problem = build_problem(model, test, config.loss) if test is not None else None
    keys = layer_keys(model, trainable)
    rng = np.random.default_rng(config.seed)
    start = clock()

    def test_loss(m):
        return 1.0 - score(m, test_problem) if test_problem is not None else float("nan")

    current = _check_finite(1.0 - score(model, problem))
    trace = TrainTrace([TrainRecord(0, current, test_loss(model), 0.0)])
    if config.method in (Method.NESTEROV, Method.GRADIENT_DESCENT):
        return _train_fd(model, problem, test_loss, config, trace, start, clock, trainable)

    for it in range(1, config.max_iters + 1):
        if current < config.convergence_tol or not keys:
            break
        if config.method is Method.SIMULTANEOUS:
            step_keys = keys
        elif config.schedule == "random":
            step_keys = [keys[int(rng.integers(len(keys)))]]
        else:
            step_keys = [keys[(it - 1) % len(keys)]]
        result = ascent_step(model, problem, config.lam, config.epsilon, step_keys, config.max_halvings)
        model, current = result.model, result.loss
        trace.records.append(TrainRecord(it, current, test_loss(model), (clock() - start) * 1e3))
    if not keys and config.max_iters:
        for it in range(1, config.max_iters + 1):
            trace.records.append(TrainRecord(it, current, test_loss(model), (clock() - start) * 1e3))
    trace.model = model
    return trace


def _train_fd(model, problem, test_loss, config, trace, start, clock, trainable):
    mask = np.zeros(model_params(model).size, dtype=bool)
    offset = 0
    for seg, circ in segments(model):
        for index, layer in enumerate(circ.layers):
            if trainable is None or trainable((seg, index)):
                mask[offset : offset + layer.n_params] = True
            offset += layer.n_params
    y_prev = y = model_params(model)
    current = trace.records[0].train_loss
    for k in range(1, config.max_iters + 1):
        if current < config.convergence_tol:
            break
        if config.method is Method.NESTEROV:
            x = y + (k - 1) / (k + 2) * (y - y_prev)
        else:
            x = y
        _, grad = fd_gradient(model_with_params(model, x), problem, config.fd_epsilon)
        y_prev, y = y, x - config.eta * grad * mask
        model = model_with_params(model, y)
        current = _check_finite(1.0 - score(model, problem))
        trace.records.append(TrainRecord(k, current, test_loss(model), (clock() - start) * 1e3))
    trace.model = model
    return trace


def train_conditional(model: ConditionalModel, dataset, config: TrainingConfig | None = None, test=None, trainable=None) -> TrainTrace:
    """Train a measure-and-correct model; branch circuits get their own K-updates."""
    if not isinstance(model, ConditionalModel):
        raise TypeError("train_conditional needs a ConditionalModel")
    inputs, labels = _pairs(dataset)
    if inputs.shape[-1] != 1 << model.n_in or labels.shape[-1] != 1 << model.n_out:
        raise ValueError("dataset dimensions do not match the model's input/output widths")
    return train(model, dataset, config, test, trainable)


# ------------------------------------------------------------- diagnostics


def iterations_to(losses: Sequence[float], threshold: float) -> int | None:
    for index, value in enumerate(losses):
        if value < threshold:
            return index
    return None


def longest_plateau(losses: Sequence[float], flat_tol: float = 1e-5, floor: float = 0.1) -> int:
    """Longest run of steps with ``|delta loss| < flat_tol`` while the loss exceeds ``floor``."""
    best = run = 0
    for prev, cur in zip(losses[:-1], losses[1:]):
        if abs(cur - prev) < flat_tol and cur > floor:
            run += 1
            best = max(best, run)
        else:
            run = 0
    return best


# --------------------------------------------------------------- swap test


def _swap_test_circuit(n: int) -> np.ndarray:
    """``H_anc . CSWAP . H_anc`` on 1 + 2n qubits (ancilla first)."""
    d = 1 << n
    swap = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            swap[j * d + i, i * d + j] = 1.0
    cswap = np.block([[np.eye(d * d), np.zeros((d * d, d * d))], [np.zeros((d * d, d * d)), swap]])
    h = np.kron(np.array([[1, 1], [1, -1]]) / np.sqrt(2), np.eye(d * d))
    return (h @ cswap @ h).astype(complex)


def swap_test_estimate(phi: np.ndarray, rho: np.ndarray, shots: int = 0, rng=None) -> float:
    """Probability that the swap-test ancilla reads 0.

    ``shots == 0`` returns the exact probability of the simulated circuit;
    otherwise the ancilla is sampled ``shots`` times.
    """
    phi = np.asarray(phi, dtype=complex)
    if rho.shape != (phi.size, phi.size):
        raise ValueError(f"state dimensions differ: {phi.size} vs {rho.shape}")
    if shots < 0:
        raise ValueError("shots must be non-negative")
    n = linalg.num_qubits(phi.size)
    anc = np.zeros((2, 2), dtype=complex)
    anc[0, 0] = 1.0
    state = np.kron(anc, np.kron(rho, linalg.projector(phi)))
    u = _swap_test_circuit(n)
    out = u @ state @ dagger(u)
    p0 = float(np.real(np.trace(out[: out.shape[0] // 2, : out.shape[0] // 2])))
    p0 = min(max(p0, 0.0), 1.0)
    if shots == 0:
        return p0
    rng = linalg.make_rng(rng)
    return rng.binomial(shots, p0) / shots
