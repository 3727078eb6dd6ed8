import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dibom import linalg
from dibom.expressivity import (
    UNIVERSAL_3Q_LAYERS,
    FBEConfig,
    fbe_upper_bound,
    frontier,
    maximize_overlap,
    median3,
    overlap_gradient,
    overlap_score,
    resolve_architecture,
    sample_states,
    sample_unitary,
)
from dibom.gates import GeneralUnitaryLayer
from dibom.network import Circuit, build_dibom


def test_config_validation():
    with pytest.raises(ValueError):
        FBEConfig(k=0)
    with pytest.raises(ValueError):
        FBEConfig(optimizer="anneal")
    fast = FBEConfig.fast(4)
    assert (fast.k, fast.m, fast.seed) == (20, 5, 4)


def test_overlap_score_of_exact_target(rng):
    u = linalg.haar_unitary(8, rng)
    states = sample_states(3, 4, 0)
    circuit = Circuit(3, (GeneralUnitaryLayer.from_unitary(u),))
    assert overlap_score(circuit, u, states) == pytest.approx(1.0, abs=1e-9)
    # global phase does not matter
    assert overlap_score(circuit, 1j * u, states) == pytest.approx(1.0, abs=1e-9)


def test_overlap_gradient_matches_fd(rng):
    circuit = build_dibom(3, 4, rng)
    u = sample_unitary(3, 0, 1)
    states = sample_states(3, 5, 1)
    grad = overlap_gradient(circuit, u, states)
    theta = circuit.params()
    h = 1e-6
    for a in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[a] += h
        tm[a] -= h
        fd = (overlap_score(circuit.with_params(tp), u, states) - overlap_score(circuit.with_params(tm), u, states)) / (2 * h)
        assert grad[a] == pytest.approx(fd, abs=1e-7)


@pytest.mark.parametrize("optimizer", ["gradient", "k_update"])
def test_maximize_overlap_improves(optimizer):
    circuit = build_dibom(2, 5, 0)
    u = sample_unitary(2, 0, 0)
    states = sample_states(2, 4, 0)
    start = overlap_score(circuit, u, states)
    best, found = maximize_overlap(circuit, u, states, FBEConfig(inner_iters=30, optimizer=optimizer))
    assert best > start
    assert overlap_score(found, u, states) == pytest.approx(best)


def test_unitary_streams_independent_of_k():
    small = fbe_upper_bound("fixed", 2, 1, FBEConfig(k=3, m=2, restarts=1, inner_iters=1))
    large = fbe_upper_bound("fixed", 2, 1, FBEConfig(k=5, m=2, restarts=1, inner_iters=1))
    np.testing.assert_array_equal(small.scores, large.scores[:3])
    assert large.estimate <= small.estimate


def test_estimate_is_min_of_scores():
    res = fbe_upper_bound("dibom", 2, 3, FBEConfig(k=4, m=3, restarts=1, inner_iters=5))
    assert res.estimate == res.scores.min() == res.scores[res.argmin]
    assert res.n_params == build_dibom(2, 3).n_params
    assert 0 <= res.estimate <= 1


def test_general_architecture_reaches_one():
    res = fbe_upper_bound("general", 1, 1, FBEConfig(k=3, m=3, restarts=1, inner_iters=200, step=0.3))
    assert res.estimate > 0.99


def test_resolve_architecture():
    assert callable(resolve_architecture("hardware_efficient"))
    with pytest.raises(ValueError):
        resolve_architecture("tensor_network")


def test_frontier_adds_analytic_endpoints():
    pts = frontier(3, [1], FBEConfig(k=2, m=2, restarts=1, inner_iters=2))
    assert pts[0].analytic and pts[0].fbe == 0.0 and pts[0].log_params == -math.inf
    assert pts[-1].analytic and pts[-1].L == UNIVERSAL_3Q_LAYERS and pts[-1].n_params == 13449
    assert not pts[1].analytic
    assert len(frontier(2, [1], FBEConfig(k=1, m=1, restarts=1, inner_iters=1))) == 1


def test_median3():
    np.testing.assert_array_equal(median3([0, 5, 1, 2, 9]), [0, 1, 2, 2, 9])


@settings(max_examples=200)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3), iters=st.integers(1, 6), extra=st.integers(1, 6))
def test_fbe_monotone_in_inner_iters(seed, n, iters, extra):
    base = FBEConfig(k=2, m=2, restarts=1, inner_iters=iters, seed=seed)
    longer = FBEConfig(k=2, m=2, restarts=1, inner_iters=iters + extra, seed=seed)
    a = fbe_upper_bound("dibom", n, 2, base)
    b = fbe_upper_bound("dibom", n, 2, longer)
    assert np.all(b.scores >= a.scores)
    assert b.estimate >= a.estimate
