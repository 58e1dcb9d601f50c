import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simba.autodiff import Tensor
from simba.errors import ConfigurationError
from simba.graph_conv import (
    GCModule,
    GcnLayer,
    MixHopLayer,
    gc_module_forward,
    gcn_forward,
    mixhop_forward,
    normalize_adjacency,
    symmetrize,
)

from conftest import numeric_grad, rel_err


def test_normalize_examples():
    assert np.array_equal(normalize_adjacency(Tensor(np.zeros((3, 3)))).data, np.eye(3))
    assert np.allclose(normalize_adjacency(Tensor([[0.0, 1], [1, 0]])).data, 0.5)


def test_normalize_against_loops(rng):
    A = rng.random((4, 4))
    out = normalize_adjacency(Tensor(A)).data
    Ah = A + np.eye(4)
    d = Ah.sum(axis=1)
    for i in range(4):
        for j in range(4):
            assert abs(out[i, j] - Ah[i, j] / np.sqrt(d[i] * d[j])) < 1e-14


@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.booleans())
def test_normalized_entries_in_unit_interval(seed, n, sym):
    # learned weights lie in [0, 1); large directed weights can exceed the bound
    A = np.random.default_rng(seed).random((n, n))
    if sym:
        A = (A + A.T) * 5.0
    out = normalize_adjacency(Tensor(A)).data
    assert np.all(out >= 0) and np.all(out <= 1 + 1e-12)


def _gcn_identity(rng, n):
    layer = GcnLayer(rng, n, n)
    layer.weight.data[...] = np.eye(n)
    return layer


def test_gcn_examples(rng):
    H = rng.random((3, 3))
    assert np.allclose(gcn_forward(_gcn_identity(rng, 3), Tensor(np.eye(3)), Tensor(H)).data, H)
    lin = GcnLayer(rng, 2, 2, activation=None)
    lin.weight.data[...] = np.eye(2)
    A = normalize_adjacency(Tensor([[0.0, 1], [1, 0]]))
    assert np.allclose(lin(A, Tensor(np.eye(2))).data, 0.5)
    with pytest.raises(ConfigurationError):
        GcnLayer(rng, 2, 2, activation="gelu")


def test_gcn_gradient(rng):
    layer = GcnLayer(rng, 3, 4)
    A = normalize_adjacency(Tensor(rng.random((5, 5))))
    H = rng.normal(size=(5, 3))
    R = rng.normal(size=(5, 4))
    f = lambda: float((layer(A, Tensor(H)).data * R).sum())
    h = Tensor(H, requires_grad=True)
    (layer(A, h) * Tensor(R)).sum().backward()
    assert rel_err(h.grad, numeric_grad(f, H)) < 1e-4
    assert rel_err(layer.weight.grad, numeric_grad(f, layer.weight.data)) < 1e-4


def test_mixhop_full_retention(rng):
    layer = MixHopLayer(rng, 3, 2, depth=2, beta=1.0)
    H = rng.normal(size=(4, 3))
    A = normalize_adjacency(Tensor(rng.random((4, 4))))
    for s in layer.hop_states(A, Tensor(H)):
        assert np.array_equal(s.data, H)
    W = sum(w.data for w in layer.weights)
    assert np.allclose(layer(A, Tensor(H)).data, H @ W, atol=1e-12)


def test_mixhop_identity_fixed_point(rng):
    layer = MixHopLayer(rng, 3, 2, depth=3, beta=0.5)
    H = rng.normal(size=(4, 3))
    for s in layer.hop_states(Tensor(np.eye(4)), Tensor(H)):
        assert np.allclose(s.data, H)


def test_mixhop_against_recursion(rng):
    layer = MixHopLayer(rng, 3, 2, depth=2, beta=0.5)
    A = rng.random((4, 4))
    An = normalize_adjacency(Tensor(A)).data
    H = rng.normal(size=(4, 3))
    h1 = 0.5 * H + 0.5 * (An @ H)
    h2 = 0.5 * H + 0.5 * (An @ h1)
    W0, W1, W2 = (w.data for w in layer.weights)
    expect = H @ W0 + h1 @ W1 + h2 @ W2
    assert np.array_equal(mixhop_forward(layer, Tensor(An), Tensor(H)).data, expect)


def test_mixhop_reduces_to_gcn(rng):
    mh = MixHopLayer(rng, 3, 2, depth=1, beta=0.0)
    mh.weights[0].data[...] = 0.0
    gcn = GcnLayer(rng, 3, 2, activation=None)
    gcn.weight.data[...] = mh.weights[1].data
    A = normalize_adjacency(Tensor(rng.random((5, 5))))
    H = Tensor(rng.normal(size=(5, 3)))
    assert np.allclose(mh(A, H).data, gcn(A, H).data, atol=1e-14)


def test_mixhop_validation(rng):
    with pytest.raises(ConfigurationError):
        MixHopLayer(rng, 2, 2, depth=0)
    with pytest.raises(ConfigurationError):
        MixHopLayer(rng, 2, 2, beta=1.5)


def test_gc_module_symmetric_tied_is_double(rng):
    gc = GCModule(rng, 3, 2)
    for a, b in zip(gc.inflow.weights, gc.outflow.weights):
        b.data[...] = a.data
    A = rng.random((4, 4))
    A = A + A.T
    H = Tensor(rng.normal(size=(4, 3)))
    single = gc.inflow(normalize_adjacency(Tensor(A)), H).data
    assert np.allclose(gc_module_forward(gc, Tensor(A), H).data, 2 * single, atol=1e-12)


def test_gc_module_locality(rng):
    gc = GCModule(rng, 3, 2)
    H = rng.normal(size=(4, 3))
    base = gc(Tensor(np.zeros((4, 4))), Tensor(H)).data
    H2 = H.copy()
    H2[2] += 5.0
    moved = gc(Tensor(np.zeros((4, 4))), Tensor(H2)).data
    assert np.array_equal(np.delete(base, 2, axis=0), np.delete(moved, 2, axis=0))


def test_gc_module_edge_flip_swaps_branches(rng):
    gc = GCModule(rng, 2, 2)
    H = Tensor(rng.normal(size=(2, 2)))
    fwd = Tensor([[0.0, 0.8], [0.0, 0.0]])
    rev = Tensor([[0.0, 0.0], [0.8, 0.0]])
    in_f = gc.inflow(normalize_adjacency(fwd), H).data
    out_f = gc.outflow(normalize_adjacency(fwd.T), H).data
    in_r = gc.inflow(normalize_adjacency(rev), H).data
    out_r = gc.outflow(normalize_adjacency(rev.T), H).data
    # the inflow branch on the flipped edge sees what the outflow branch saw before
    assert np.allclose(normalize_adjacency(rev).data, normalize_adjacency(fwd.T).data)
    assert np.allclose(in_r, gc.inflow(normalize_adjacency(fwd.T), H).data)
    assert np.allclose(out_r, gc.outflow(normalize_adjacency(fwd), H).data)
    assert np.allclose(gc(fwd, H).data, in_f + out_f)
    assert not np.allclose(gc(fwd, H).data, gc(rev, H).data)


def test_permutation_equivariance(rng):
    gc = GCModule(rng, 3, 4)
    A, H = rng.random((6, 6)), rng.normal(size=(6, 3))
    perm = rng.permutation(6)
    P = np.eye(6)[perm]
    out = gc(Tensor(A), Tensor(H)).data
    out_p = gc(Tensor(P @ A @ P.T), Tensor(P @ H)).data
    assert np.allclose(out_p, P @ out, atol=1e-12)
    layer = GcnLayer(rng, 3, 2)
    An = normalize_adjacency(Tensor(A)).data
    assert np.allclose(layer(Tensor(P @ An @ P.T), Tensor(P @ H)).data, P @ layer(Tensor(An), Tensor(H)).data)


def test_batched_features(rng):
    gc = GCModule(rng, 3, 2)
    A, H = rng.random((4, 4)), rng.normal(size=(5, 4, 3))
    batched = gc(Tensor(A), Tensor(H)).data
    for b in range(5):
        assert np.allclose(batched[b], gc(Tensor(A), Tensor(H[b])).data, atol=1e-12)


def test_gc_module_gradient_wrt_adjacency(rng):
    gc = GCModule(rng, 3, 2)
    A, H = rng.random((4, 4)), rng.normal(size=(4, 3))
    R = rng.normal(size=(4, 2))
    f = lambda: float((gc(Tensor(A), Tensor(H)).data * R).sum())
    a = Tensor(A, requires_grad=True)
    (gc(a, Tensor(H)) * Tensor(R)).sum().backward()
    assert rel_err(a.grad, numeric_grad(f, A)) < 1e-4


def test_symmetrize(rng):
    A = rng.random((3, 3))
    S = symmetrize(Tensor(A)).data
    assert np.allclose(S, S.T) and np.allclose(S, (A + A.T) / 2)
