import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from dibom import linalg
from dibom.gates import (
    FixedCZLayer,
    GeneralizedCZLayer,
    GeneralUnitaryLayer,
    HadamardLayer,
    LayerShapeError,
    ProductRotationLayer,
    SingleQubitRotation,
    apply,
    layer_from_dict,
    pauli_compose,
    pauli_decompose,
    pauli_words,
    qubit_pairs,
    su2,
    su2_params,
)
from helpers import kron_embed, pauli_word, random_density, random_hermitian

seeds = st.integers(0, 2**32 - 1)
CZ = np.diag([1, 1, 1, -1]).astype(complex)


def test_su2_matches_expm(rng):
    a = rng.uniform(-3, 3, 3)
    gen = sum(c * p for c, p in zip(a, linalg.PAULIS[1:]))
    np.testing.assert_allclose(su2(a), expm(1j * gen), atol=1e-13)


def test_su2_params_round_trip_up_to_phase(rng):
    u = linalg.haar_unitary(2, rng)
    v = su2(su2_params(u))
    phase = np.vdot(v.ravel(), u.ravel())
    np.testing.assert_allclose(v * phase / abs(phase), u, atol=1e-10)


def test_single_qubit_layer_embeds_on_target(rng):
    a = rng.uniform(-1, 1, 3)
    layer = SingleQubitRotation(1, a)
    np.testing.assert_allclose(layer.unitary(3), kron_embed(su2(a), 1, 3), atol=1e-14)


def test_product_layer_is_kron(rng):
    alphas = rng.uniform(-2, 2, (3, 3))
    u = ProductRotationLayer(alphas).unitary(3)
    np.testing.assert_allclose(u, np.kron(np.kron(su2(alphas[0]), su2(alphas[1])), su2(alphas[2])), atol=1e-14)


def test_gcz_endpoints():
    np.testing.assert_allclose(GeneralizedCZLayer(np.array([1.0]), 2).unitary(2), CZ, atol=1e-14)
    np.testing.assert_allclose(GeneralizedCZLayer(np.array([0.0]), 2).unitary(2), np.eye(4), atol=1e-14)


def test_gcz_pair_order_and_phases():
    layer = GeneralizedCZLayer.from_pairs(3, {(0, 2): 0.5})
    assert qubit_pairs(3) == [(0, 1), (0, 2), (1, 2)]
    np.testing.assert_allclose(layer.betas, [0.0, 0.5, 0.0])
    u = layer.unitary(3)
    # |1?1> picks up exp(-i pi / 2)
    for idx in range(8):
        expected = -1j if (idx & 0b101) == 0b101 else 1.0
        assert u[idx, idx] == pytest.approx(expected)


def test_fixed_cz_matches_unit_betas():
    fixed = FixedCZLayer.for_qubits(3, "all").unitary(3)
    np.testing.assert_allclose(fixed, GeneralizedCZLayer(np.ones(3), 3).unitary(3), atol=1e-14)
    linear = FixedCZLayer.for_qubits(3, "linear")
    assert list(linear.pairs) == [(0, 1), (1, 2)]
    assert linear.n_params == 0


def test_hadamard_layer():
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    np.testing.assert_allclose(HadamardLayer().unitary(2), np.kron(h, h), atol=1e-14)


def test_general_layer_pauli_coefficients(rng):
    coeffs = rng.normal(size=16)
    layer = GeneralUnitaryLayer(coeffs)
    words = ["".join(p) for p in __import__("itertools").product("IXYZ", repeat=2)]
    gen = sum(c * pauli_word(w) for c, w in zip(coeffs, words))
    np.testing.assert_allclose(layer.generator(), gen, atol=1e-13)
    np.testing.assert_allclose(layer.unitary(2), expm(1j * gen), atol=1e-12)


def test_general_layer_from_unitary(rng):
    u = linalg.haar_unitary(4, rng)
    np.testing.assert_allclose(GeneralUnitaryLayer.from_unitary(u).unitary(2), u, atol=1e-10)


def test_pauli_transform_matches_word_table(rng):
    h = random_hermitian(8, rng) + 1j * random_hermitian(8, rng)
    ref = np.einsum("wij,ji->w", pauli_words(3), h) / 8
    np.testing.assert_allclose(pauli_decompose(h), ref, atol=1e-13)
    np.testing.assert_allclose(pauli_compose(pauli_decompose(h)), h, atol=1e-13)


@pytest.mark.parametrize(
    "layer",
    [
        SingleQubitRotation(2, np.array([0.3, -1.2, 2.0])),
        ProductRotationLayer(np.array([[0.1, 0.2, 0.3], [1.0, -2.0, 0.5], [0.0, 0.0, 0.0]])),
        GeneralizedCZLayer(np.array([0.2, 0.7, -0.4]), 3),
        GeneralUnitaryLayer(np.linspace(-0.3, 0.4, 64)),
    ],
    ids=["single", "product", "gcz", "general"],
)
def test_param_generators_match_finite_differences(layer):
    n = 3
    u = layer.unitary(n)
    theta = layer.params
    h = 1e-6
    for a, g in enumerate(layer.param_generators(n)):
        assert linalg.is_hermitian(g, 1e-10)
        tp, tm = theta.copy(), theta.copy()
        tp[a] += h
        tm[a] -= h
        du = (layer.with_params(tp).unitary(n) - layer.with_params(tm).unitary(n)) / (2 * h)
        np.testing.assert_allclose(du, 1j * g @ u, atol=1e-7)


def test_general_generator_traces(rng):
    layer = GeneralUnitaryLayer(rng.normal(size=16))
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    ref = [np.trace(m @ g) for g in layer.param_generators(2)]
    np.testing.assert_allclose(layer.generator_traces(m), ref, atol=1e-12)


@pytest.mark.parametrize(
    "layer",
    [
        SingleQubitRotation(1, np.array([0.1, 0.2, 0.3])),
        ProductRotationLayer(np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])),
        GeneralizedCZLayer(np.array([0.123456789]), 2),
        FixedCZLayer.for_qubits(2),
        HadamardLayer(),
        GeneralUnitaryLayer(np.arange(16) / 7.0),
    ],
)
def test_layer_dict_round_trip(layer):
    back = layer_from_dict(json.loads(json.dumps(layer.to_dict())))
    assert type(back) is type(layer)
    assert np.array_equal(back.params, layer.params)
    np.testing.assert_array_equal(back.unitary(2), layer.unitary(2))


def test_shape_errors():
    with pytest.raises(LayerShapeError):
        GeneralizedCZLayer(np.zeros(2), 3)
    with pytest.raises(LayerShapeError):
        GeneralUnitaryLayer(np.zeros(5))
    with pytest.raises(LayerShapeError):
        ProductRotationLayer(np.zeros((2, 3))).unitary(3)


@given(seed=seeds, n=st.integers(1, 4))
def test_every_layer_is_unitary(seed, n):
    rng = np.random.default_rng(seed)
    layers = [
        SingleQubitRotation(int(rng.integers(n)), rng.uniform(-np.pi, np.pi, 3)),
        ProductRotationLayer(rng.uniform(-np.pi, np.pi, (n, 3))),
        GeneralizedCZLayer(rng.normal(size=n * (n - 1) // 2), n),
        GeneralUnitaryLayer(rng.normal(size=4**n) * 0.5),
        HadamardLayer(),
    ]
    for layer in layers:
        u = layer.unitary(n)
        np.testing.assert_allclose(u @ u.conj().T, np.eye(1 << n), atol=1e-10)


@given(seed=seeds, n=st.integers(1, 4))
def test_layers_preserve_trace_and_positivity(seed, n):
    rng = np.random.default_rng(seed)
    rho = random_density(n, rng)
    layer = ProductRotationLayer(rng.uniform(-np.pi, np.pi, (n, 3)))
    if n > 1 and rng.random() < 0.5:
        layer = GeneralizedCZLayer(rng.normal(size=n * (n - 1) // 2), n)
    out = apply(layer, rho)
    assert abs(np.trace(out) - 1) < 1e-12
    assert np.linalg.eigvalsh(out).min() > -1e-12


@given(seed=seeds)
def test_su2_params_round_trip_property(seed):
    u = linalg.haar_unitary(2, seed)
    v = su2(su2_params(u))
    assert abs(abs(np.vdot(v.ravel(), u.ravel())) - 2) < 1e-9
