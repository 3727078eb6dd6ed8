"""Fidelity-based expressivity (FBE) upper bounds by sampled minimax.

For ``k`` Haar unitaries ``U_i`` and ``m`` shared Haar states ``phi_j`` the
score of an architecture ``A`` on ``U_i`` is

    s_i = max_theta (1/m) sum_j |<phi_j| A(theta)^dagger U_i |phi_j>|

and ``min_i s_i`` bounds the FBE from above. The inner maximization uses
the same closed-form layer generators as training.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from dibom import linalg
from dibom.gates import GeneralUnitaryLayer, HadamardLayer
from dibom.linalg import dagger
from dibom.network import (
    Circuit,
    ModelKind,
    build_dibom,
    build_hardware_efficient,
    count_parameters,
)
from dibom.training import NumericalAbort, apply_update, k_update, layer_rates

Architecture = Callable[[int, int, np.random.Generator], Circuit]

# universal 3-qubit DIBoM size from the two-level decomposition count
UNIVERSAL_3Q_LAYERS = 2241


@dataclass(frozen=True)
class FBEConfig:
    k: int = 100
    m: int = 10
    restarts: int = 3
    inner_iters: int = 100
    seed: int = 0
    # "gradient": fixed-step ascent in parameter coordinates;
    # "k_update": closed-form layer generators with step halving
    optimizer: str = "gradient"
    step: float = 0.05
    epsilon: float = 1.0
    lam: float = 0.5
    max_halvings: int = 20

    def __post_init__(self):
        for name in ("k", "m", "restarts", "inner_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.optimizer not in ("gradient", "k_update"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.step <= 0 or self.epsilon <= 0 or self.lam <= 0:
            raise ValueError("step, epsilon and lam must be positive")

    @classmethod
    def fast(cls, seed: int = 0, **overrides) -> "FBEConfig":
        """Reduced sample profile used by the acceptance suite."""
        return cls(k=20, m=5, seed=seed, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FBEResult:
    estimate: float
    scores: np.ndarray
    argmin: int
    n_params: int = 0
    seconds: float = 0.0
    config: dict = field(default_factory=dict)


# ----------------------------------------------------------- architectures


def _general(n: int, L: int, rng) -> Circuit:
    # L is ignored: one full unitary layer already reaches every target
    return Circuit(n, (GeneralUnitaryLayer(np.zeros(4**n)),))


def _fixed(n: int, L: int, rng) -> Circuit:
    return Circuit(n, (HadamardLayer(),))


ARCHITECTURES: dict[str, Architecture] = {
    ModelKind.DIBOM.value: lambda n, L, rng: build_dibom(n, L, rng),
    ModelKind.HARDWARE_EFFICIENT.value: lambda n, L, rng: build_hardware_efficient(n, L, rng),
    "general": _general,
    "fixed": _fixed,
}


def resolve_architecture(arch: str | Architecture) -> Architecture:
    if callable(arch):
        return arch
    try:
        return ARCHITECTURES[arch]
    except KeyError:
        raise ValueError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}") from None


# ------------------------------------------------------------ inner ascent


def overlap_score(circuit: Circuit, target: np.ndarray, states: np.ndarray) -> float:
    """``(1/m) sum_j |<phi_j| A^dagger U |phi_j>|``."""
    a_phi = states @ circuit.unitary().T
    u_phi = states @ target.T
    return float(np.mean(np.abs(np.einsum("ji,ji->j", np.conj(a_phi), u_phi))))


def overlap_commutators(circuit: Circuit, target: np.ndarray, states: np.ndarray) -> list[np.ndarray]:
    """State-summed ``M_l`` with ``d s/d eps = (i/m) tr(M_l K)`` for ``U_l -> exp(i eps K) U_l``.

    With ``a = U_{<=l} phi``, ``b = U_{>l}^dagger U phi`` and ``z = <a|b>``
    the rate of ``|z|`` is ``Re tr(K W)`` for ``W = -i conj(z)/|z| |b><a|``.
    """
    us = circuit.layer_unitaries()
    fwd = []
    a = states.copy()
    for u in us:
        a = a @ u.T
        fwd.append(a)
    z = np.einsum("ji,ji->j", np.conj(a), states @ target.T)
    mag = np.abs(z)
    phase = np.where(mag > 0, np.conj(z) / np.where(mag > 0, mag, 1.0), 0.0)
    out: list[np.ndarray] = [None] * len(us)  # type: ignore[list-item]
    b = states @ target.T
    for l in range(len(us) - 1, -1, -1):
        w = np.einsum("j,ji,jk->ik", -1j * phase, b, np.conj(fwd[l]))
        out[l] = -1j * (w + dagger(w)) / 2
        b = b @ np.conj(us[l])  # b <- U_l^dagger b, rows are states
    return out


def overlap_gradient(circuit: Circuit, target: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Gradient of the overlap score in the flat parameter vector."""
    ms = overlap_commutators(circuit, target, states)
    parts = [layer_rates(layer, m, circuit.n) for layer, m in zip(circuit.layers, ms) if layer.n_params]
    return np.concatenate(parts) / states.shape[0] if parts else np.zeros(0)


def maximize_overlap(circuit: Circuit, target: np.ndarray, states: np.ndarray, config: FBEConfig) -> tuple[float, Circuit]:
    """Best score seen along the ascent, and the circuit that reached it."""
    if config.optimizer == "k_update":
        return _k_ascent(circuit, target, states, config)
    return _gradient_ascent(circuit, target, states, config)


def _gradient_ascent(circuit, target, states, config):
    best_circuit = circuit
    best = overlap_score(circuit, target, states)
    theta = circuit.params()
    for _ in range(config.inner_iters if theta.size else 0):
        grad = overlap_gradient(circuit, target, states)
        if not np.all(np.isfinite(grad)):
            raise NumericalAbort("non-finite overlap gradient")
        theta = theta + config.step * grad
        circuit = circuit.with_params(theta)
        value = overlap_score(circuit, target, states)
        if not math.isfinite(value):
            raise NumericalAbort("non-finite overlap score")
        if value > best:
            best, best_circuit = value, circuit
    return best, best_circuit


def _k_ascent(circuit, target, states, config):
    """Accept-if-increase ascent on the overlap score; stops when a step is rejected."""
    keys = [i for i, layer in enumerate(circuit.layers) if layer.family is not None and layer.n_params]
    best = overlap_score(circuit, target, states)
    m = states.shape[0]
    for _ in range(config.inner_iters if keys else 0):
        ms = overlap_commutators(circuit, target, states)
        updates = {i: k_update(circuit.layers[i], ms[i], m, config.lam) for i in keys}
        eps, moved = config.epsilon, False
        for _ in range(config.max_halvings + 1):
            layers = list(circuit.layers)
            for i, upd in updates.items():
                layers[i] = apply_update(layers[i], upd, eps)
            candidate = Circuit(circuit.n, tuple(layers))
            value = overlap_score(candidate, target, states)
            if not math.isfinite(value):
                raise NumericalAbort("non-finite overlap score")
            if value > best:
                circuit, best, moved = candidate, value, True
                break
            eps /= 2
        if not moved:
            break
    return best, circuit


# ---------------------------------------------------------------- estimator


def _stream(seed: int, *index: int) -> np.random.Generator:
    return np.random.default_rng([seed, *index])


def sample_states(n: int, m: int, seed: int) -> np.ndarray:
    rng = _stream(seed, 0)
    return np.stack([linalg.haar_state(n, rng) for _ in range(m)])


def sample_unitary(n: int, i: int, seed: int) -> np.ndarray:
    """``U_i`` from its own stream, so the first ``k`` draws never depend on ``k``."""
    return linalg.haar_unitary(1 << n, _stream(seed, 1, i))


def unitary_score(arch: Architecture, n: int, L: int, target: np.ndarray, states: np.ndarray, config: FBEConfig, i: int) -> float:
    best = -np.inf
    for r in range(config.restarts):
        circuit = arch(n, L, _stream(config.seed, 2, i, r))
        value, _ = maximize_overlap(circuit, target, states, config)
        best = max(best, value)
    return float(best)


def fbe_upper_bound(architecture: str | Architecture, n: int, L: int, config: FBEConfig | None = None) -> FBEResult:
    """``min_i s_i`` over ``config.k`` sampled unitaries."""
    config = config or FBEConfig()
    arch = resolve_architecture(architecture)
    start = time.perf_counter()
    states = sample_states(n, config.m, config.seed)
    scores = np.array([unitary_score(arch, n, L, sample_unitary(n, i, config.seed), states, config, i) for i in range(config.k)])
    argmin = int(np.argmin(scores))
    return FBEResult(
        estimate=float(scores[argmin]),
        scores=scores,
        argmin=argmin,
        n_params=arch(n, L, _stream(config.seed, 2, 0, 0)).n_params,
        seconds=time.perf_counter() - start,
        config=config.to_dict(),
    )


@dataclass
class FrontierPoint:
    L: int | None
    n_params: int
    log_params: float
    fbe: float
    analytic: bool = False


def frontier(n: int, layer_grid: Sequence[int], config: FBEConfig | None = None, architecture: str = "dibom") -> list[FrontierPoint]:
    """FBE against log parameter count; for ``n = 3`` both analytic endpoints are added.

    The empty architecture has FBE 0 and the universal DIBoM of
    ``UNIVERSAL_3Q_LAYERS`` layers has FBE 1. ``log_params`` is the natural
    log, or ``-inf`` for zero parameters.
    """
    if not layer_grid:
        raise ValueError("layer grid must be nonempty")
    config = config or FBEConfig()
    points = []
    for L in layer_grid:
        res = fbe_upper_bound(architecture, n, L, config)
        points.append(FrontierPoint(L, res.n_params, _log(res.n_params), res.estimate))
    if n == 3 and architecture == ModelKind.DIBOM.value:
        universal = count_parameters(ModelKind.DIBOM, 3, UNIVERSAL_3Q_LAYERS)
        points.insert(0, FrontierPoint(0, 0, _log(0), 0.0, analytic=True))
        points.append(FrontierPoint(UNIVERSAL_3Q_LAYERS, universal, _log(universal), 1.0, analytic=True))
    return points


def _log(count: int) -> float:
    return math.log(count) if count > 0 else -math.inf


def median3(values: Sequence[float]) -> np.ndarray:
    """Three-point running median with the end points kept."""
    v = np.asarray(values, dtype=float)
    out = v.copy()
    for i in range(1, len(v) - 1):
        out[i] = np.median(v[i - 1 : i + 2])
    return out
