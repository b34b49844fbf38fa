"""Stage I: message passing, box head, and the box regression loss."""

import numpy as np
import pytest

import layoutforge.tensor as T
from layoutforge.boxnet import (
    BoxHead,
    EmbeddingTable,
    GcnStack,
    Stage1Model,
    box_l1_loss,
    gcn_forward,
    predict_box_tensor,
    predict_boxes,
)
from layoutforge.errors import ConfigError, ContractError
from layoutforge.scenegraph import SceneGraph


def rng(seed=0):
    return np.random.default_rng(seed)


def small_model(dim=6, depth=2, n_cats=4, seed=3):
    return Stage1Model(n_cats, dim=dim, depth=depth, seed=seed)


TRIANGLE_GRAPH = SceneGraph(
    (("a", 1), ("b", 2), ("c", 3)),
    ((0, 0, 1), (1, 2, 2), (2, 5, 0)))


# ------------------------------------------------------------- gcn forward


def test_single_node_no_edges_is_node_mlp_of_embedding():
    m = small_model(dim=5, depth=1)
    g = SceneGraph((("a", 2),), ())
    out = gcn_forward(g, m.table, m.stack).numpy()

    layer = m.stack.layers[0]
    v = m.table.objects.data[2]
    h = np.maximum(v @ layer.node1.w.data + layer.node1.b.data, 0.0)
    expect = h @ layer.node2.w.data + layer.node2.b.data
    np.testing.assert_allclose(out[0], expect, atol=1e-12)


def test_two_node_one_edge_hand_unrolled():
    m = small_model(dim=4, depth=1, seed=11)
    g = SceneGraph((("a", 1), ("b", 3)), ((0, 2, 1),))
    out = gcn_forward(g, m.table, m.stack).numpy()

    layer = m.stack.layers[0]
    d = 4
    va = m.table.objects.data[1]
    vb = m.table.objects.data[3]
    ve = m.table.relations.data[2]
    x = np.concatenate([va, ve, vb])[None, :]
    h = np.maximum(x @ layer.edge1.w.data + layer.edge1.b.data, 0.0)
    msg = (h @ layer.edge2.w.data + layer.edge2.b.data)[0]
    cand_a, cand_b = msg[:d], msg[2 * d:]
    pooled_a = (va + cand_a) / 2.0
    pooled_b = (vb + cand_b) / 2.0
    expect = []
    for pooled in (pooled_a, pooled_b):
        hh = np.maximum(pooled @ layer.node1.w.data + layer.node1.b.data, 0.0)
        expect.append(hh @ layer.node2.w.data + layer.node2.b.data)
    np.testing.assert_allclose(out, np.stack(expect), atol=1e-10)


def test_permutation_equivariance_is_exact():
    m = small_model(dim=8, depth=3)
    base = gcn_forward(TRIANGLE_GRAPH, m.table, m.stack).numpy()

    perm = [2, 0, 1]  # new index of old node i is perm.index(i)
    inv = {old: new for new, old in enumerate(perm)}
    permuted = SceneGraph(
        tuple(TRIANGLE_GRAPH.objects[old] for old in perm),
        tuple((inv[s], r, inv[o]) for s, r, o in TRIANGLE_GRAPH.edges))
    out = gcn_forward(permuted, m.table, m.stack).numpy()
    for new, old in enumerate(perm):
        assert np.array_equal(out[new], base[old])


def test_isolated_node_still_updates():
    m = small_model(dim=6, depth=2)
    g = SceneGraph((("a", 1), ("b", 2), ("lone", 3)), ((0, 0, 1),))
    out = gcn_forward(g, m.table, m.stack).numpy()
    assert np.all(np.isfinite(out))
    # the isolated row must differ from its raw embedding (it passed the MLPs)
    assert not np.allclose(out[2], m.table.objects.data[3])


def test_empty_graph_flows_through():
    m = small_model()
    out = gcn_forward(SceneGraph((), ()), m.table, m.stack)
    assert out.shape == (0, m.dim)


def test_dim_mismatch_is_config_error():
    r = rng(0)
    table = EmbeddingTable("t", 4, 6, r)
    stack = GcnStack("s", 8, 2, r)
    with pytest.raises(ConfigError):
        gcn_forward(TRIANGLE_GRAPH, table, stack)


def test_category_out_of_table_range():
    m = small_model(n_cats=2)
    with pytest.raises(ContractError):
        gcn_forward(TRIANGLE_GRAPH, m.table, m.stack)


# ---------------------------------------------------------------- box head


def test_boxes_always_satisfy_layout_invariants():
    # one big batch in place of many trials: every row must be ordered
    head = BoxHead("h", 16, rng(5))
    vecs = T.Tensor(rng(6).standard_normal((10_000, 16)) * 3)
    out = predict_box_tensor(head, vecs).numpy()
    assert np.all(out >= 0.0) and np.all(out <= 1.0)
    assert np.all(out[:, 0] <= out[:, 2])
    assert np.all(out[:, 1] <= out[:, 3])


def test_zero_weights_give_centered_point_boxes():
    head = BoxHead("h", 8, rng(0))
    for p in head.parameters():
        p.assign(np.zeros(p.shape))
    out = predict_box_tensor(head, T.Tensor(rng(1).standard_normal((3, 8)))).numpy()
    np.testing.assert_allclose(out, 0.5)


def test_predict_boxes_wraps_graph_metadata():
    m = small_model()
    vecs = gcn_forward(TRIANGLE_GRAPH, m.table, m.stack)
    layout = predict_boxes(m.head, vecs, TRIANGLE_GRAPH)
    assert [e.instance_id for e in layout] == ["a", "b", "c"]
    assert [e.category for e in layout] == [1, 2, 3]


def test_head_rejects_nonfinite_vectors():
    head = BoxHead("h", 4, rng(0))
    with pytest.raises(ContractError):
        predict_box_tensor(head, T.Tensor(np.array([[1.0, np.nan, 0.0, 0.0]])))


def test_head_needs_two_dims():
    with pytest.raises(ConfigError):
        BoxHead("h", 1, rng(0))


# -------------------------------------------------------------------- loss


def test_box_loss_identity_is_zero():
    pred = T.Tensor([[0.1, 0.2, 0.5, 0.9]])
    assert box_l1_loss(pred, pred.numpy()).item() == 0.0


def test_box_loss_single_object_hand_value():
    pred = T.Tensor([[0.1, 0.1, 0.9, 0.9]])
    truth = np.array([[0.0, 0.0, 1.0, 1.0]])
    assert box_l1_loss(pred, truth).item() == pytest.approx(0.4)


def test_box_loss_averages_over_objects():
    pred = T.Tensor([[0.0, 0.0, 0.5, 0.5], [0.5, 0.5, 1.0, 0.8]])
    truth = np.array([[0.0, 0.0, 0.5, 0.5], [0.5, 0.5, 1.0, 1.0]])
    assert box_l1_loss(pred, truth).item() == pytest.approx(0.1)


def test_box_loss_contract_errors():
    with pytest.raises(ContractError):
        box_l1_loss(T.Tensor(np.zeros((2, 4))), np.zeros((3, 4)))
    with pytest.raises(ContractError):
        box_l1_loss(T.Tensor(np.zeros((0, 4))), np.zeros((0, 4)))


# ---------------------------------------------------------------- gradients


def randomize(params, r, scale=0.4):
    """Random values everywhere, biases included, so no ReLU input sits
    exactly on its kink (zero-init biases do exactly that)."""
    for p in params:
        p.assign(r.standard_normal(p.shape) * scale)


def kink_free_truth(coords):
    """A target 0.2 away per coordinate, so probes never cross the L1 kink."""
    t = coords + np.where(coords < 0.5, 0.2, -0.2)
    lo = np.minimum(t[:, [0, 1]], t[:, [2, 3]])
    hi = np.maximum(t[:, [0, 1]], t[:, [2, 3]])
    out = np.empty_like(t)
    out[:, [0, 1]], out[:, [2, 3]] = lo, hi
    return out


def test_stage1_gradients_match_finite_differences():
    m = small_model(dim=4, depth=1, seed=7)
    randomize(m.parameters(), rng(20))
    _, coords = m.forward(TRIANGLE_GRAPH)
    truth = kink_free_truth(coords.numpy())

    def loss():
        _, c = m.forward(TRIANGLE_GRAPH)
        return box_l1_loss(c, truth)

    report = T.grad_check_params(loss, m.parameters(), rtol=1e-4)
    assert report.ok, report


def test_stage1_overfits_single_graph():
    m = small_model(dim=8, depth=2, seed=1)
    truth = np.array([[0.1, 0.1, 0.4, 0.4],
                      [0.6, 0.1, 0.9, 0.4],
                      [0.3, 0.6, 0.7, 0.9]])
    opt = T.Adam(m.parameters(), learning_rate=5e-3)
    first = last = None
    for _ in range(150):
        opt.zero_grad()
        _, coords = m.forward(TRIANGLE_GRAPH)
        loss = box_l1_loss(coords, truth)
        if first is None:
            first = loss.item()
        T.backward(loss)
        opt.step()
        last = loss.item()
    assert last < first * 0.2, (first, last)


def test_checkpoint_state_round_trip_preserves_forward():
    m = small_model(seed=2)
    before = m.predict_layout(TRIANGLE_GRAPH)
    state = {k: v.copy() for k, v in m.state_arrays().items()}
    m2 = small_model(seed=99)  # different init
    assert m2.predict_layout(TRIANGLE_GRAPH) != before
    m2.load_state_arrays(state)
    assert m2.predict_layout(TRIANGLE_GRAPH) == before
