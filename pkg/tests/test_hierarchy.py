import logging
import math

import numpy as np
import pytest

from par_graph.autodiff import Tensor
from par_graph.errors import ConfigError, InvalidArgumentError
from par_graph.graph import AffinityMatrix
from par_graph.hierarchy import (
    AioParams,
    LocalGcn,
    SceneGeometry,
    additive_mask,
    aio_aggregate,
    build_hierarchy,
    distance_affinity,
    distance_mask,
    relation_floor,
    relation_matrix,
    spatial_distance_matrix,
    t2d_readout,
)
from par_graph.nn import Activation, MlpSpec, ParamStore, finite_diff_check, init_mlp


def _geometry(anchors, areas, width=1000.0):
    return SceneGeometry(np.array(anchors, dtype=float), np.array(areas, dtype=float), width)


def _gcn(dim, seed=0):
    rng = np.random.default_rng(seed)
    return LocalGcn(init_mlp(MlpSpec((dim, dim)), rng), init_mlp(MlpSpec((dim, dim)), rng))


def _aio(dim, seed=0):
    gcn = _gcn(dim, seed)
    return AioParams(to_group=gcn, to_global=gcn)


def _head(in_dim, out_dim, zero=False, seed=0):
    params = init_mlp(
        MlpSpec((in_dim, 4, out_dim), output_activation=Activation.SIGMOID),
        np.random.default_rng(seed),
    )
    if zero:
        params.weights[-1].data[:] = 0.0
    return params


def _affinity(weights):
    w = Tensor(np.array(weights, dtype=float))
    return AffinityMatrix(logits=w, weights=w)


@pytest.mark.parametrize(
    "anchors, areas, expected",
    [
        ([(0, 0), (3, 4)], [8, 8], 1.25),
        ([(0, 0), (6, 8)], [32, 18], 10.0 / math.sqrt(50.0)),
        ([(5, 5), (5, 5)], [4, 9], 0.0),
    ],
)
def test_normalized_distance(anchors, areas, expected):
    d = spatial_distance_matrix(_geometry(anchors, areas))
    assert d[0, 1] == pytest.approx(expected)
    assert d[1, 0] == d[0, 1]
    assert d[0, 0] == 0.0


def test_euclidean_distance_ablation():
    d = spatial_distance_matrix(_geometry([(0, 0), (3, 4)], [8, 8]), euclid=True)
    assert d[0, 1] == pytest.approx(5.0)


def test_non_positive_area_rejected():
    with pytest.raises(InvalidArgumentError):
        spatial_distance_matrix(_geometry([(0, 0), (1, 1)], [4, 0]))


def test_anchor_outside_image_warns(caplog):
    with caplog.at_level(logging.WARNING):
        _geometry([(-5, 0), (3, 4)], [8, 8], width=100.0)
    assert "outside the image" in caplog.text


def test_distance_mask_rules():
    d = np.array([[0.0, 1.25, 3.0], [1.25, 0.0, 2.0], [3.0, 2.0, 0.0]])
    keep = distance_mask(d, rho=2.0)
    assert keep.tolist() == [[True, True, False], [True, True, True], [False, True, True]]
    assert additive_mask(keep)[0].tolist() == [0.0, 0.0, -np.inf]
    assert distance_mask(d, rho=np.inf).all()
    with pytest.raises(InvalidArgumentError):
        distance_mask(d, rho=0.0)


def test_distance_affinity_values():
    dbreve = distance_affinity(np.array([[0.0, 1.25], [1.25, 0.0]]))
    assert dbreve[0, 1] == pytest.approx(0.6899744811276125)
    assert dbreve[0, 0] == 1.0
    assert distance_affinity(np.array([[0.0, 10.0], [10.0, 0.0]]))[0, 1] == pytest.approx(0.52497918747894)


def test_relation_matrix_fusion():
    dbreve = distance_affinity(np.array([[0.0, 1.25], [1.25, 0.0]]))
    r = relation_matrix(_affinity([[0.6, 0.4], [0.4, 0.6]]), dbreve, lam=0.5)
    assert r.data[0, 1] == pytest.approx(0.5 * 0.4 + 0.5 * 0.6899744811276125)
    assert r.data[0, 1] == pytest.approx(0.54499, abs=1e-5)
    assert np.diag(r.data).tolist() == [1.0, 1.0]


def test_relation_matrix_masked_pair():
    dbreve = distance_affinity(np.array([[0.0, 10.0], [10.0, 0.0]]))
    r = relation_matrix(_affinity([[1.0, 0.0], [0.0, 1.0]]), dbreve, lam=0.5)
    assert r.data[0, 1] == pytest.approx(0.26249, abs=1e-5)


def test_relation_matrix_endpoints_and_symmetry():
    e = _affinity([[0.2, 0.5, 0.3], [0.1, 0.1, 0.8], [0.6, 0.2, 0.2]])
    dbreve = np.full((3, 3), 0.9)
    r = relation_matrix(e, dbreve, lam=1.0)
    assert r.data[0, 1] == pytest.approx(0.3)
    assert r.data[1, 2] == pytest.approx(0.5)
    assert np.array_equal(r.data, r.data.T)
    only_distance = relation_matrix(e, dbreve, lam=0.5, use_affinity=False)
    assert only_distance.data[0, 2] == pytest.approx(0.9)
    only_affinity = relation_matrix(e, dbreve, lam=0.5, use_distance=False)
    assert only_affinity.data[0, 2] == pytest.approx(0.45)
    with pytest.raises(ConfigError):
        relation_matrix(e, dbreve, lam=0.5, use_affinity=False, use_distance=False)
    with pytest.raises(InvalidArgumentError):
        relation_matrix(e, np.ones((2, 2)), lam=0.5)


@pytest.mark.parametrize(
    "lam, use_affinity, use_distance, expected",
    [(0.5, True, True, 0.25), (0.2, True, True, 0.4), (1.0, True, True, 0.0), (0.5, False, True, 0.5), (0.5, True, False, 0.0)],
)
def test_relation_floor_bounds_off_diagonal(lam, use_affinity, use_distance, expected):
    assert relation_floor(lam, use_affinity, use_distance) == pytest.approx(expected)
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(6, 6))
    weights = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    anchors = rng.uniform(0, 2000, size=(6, 2))
    dbreve = distance_affinity(spatial_distance_matrix(_geometry(anchors, [900.0] * 6, width=2000.0)))
    r = relation_matrix(_affinity(weights), dbreve, lam, use_affinity, use_distance).data
    off = ~np.eye(6, dtype=bool)
    assert r[off].min() >= expected


def test_aio_single_node_unchanged():
    node = Tensor([[1.5, -2.0, 0.25]])
    assert aio_aggregate(node, _gcn(3)).data.tolist() == node.data.tolist()


def test_aio_symmetric_pair_is_mean():
    # zero logits give equal weights
    gcn = _gcn(2)
    for layer in (gcn.left, gcn.right):
        layer.weights[0].data[:] = 0.0
    out = aio_aggregate(Tensor([[1.0, 0.0], [0.0, 1.0]]), gcn)
    assert out.data[0] == pytest.approx([0.5, 0.5])


def test_aio_identical_nodes():
    rows = Tensor(np.tile([[0.3, 0.7, -1.0]], (4, 1)))
    assert aio_aggregate(rows, _gcn(3, seed=5)).data[0] == pytest.approx([0.3, 0.7, -1.0])


def test_aio_output_is_convex_combination():
    rng = np.random.default_rng(6)
    nodes = rng.normal(size=(5, 3))
    out = aio_aggregate(Tensor(nodes), _gcn(3, seed=6)).data[0]
    assert np.all(out >= nodes.min(axis=0) - 1e-12)
    assert np.all(out <= nodes.max(axis=0) + 1e-12)


def test_aio_empty_and_maxpool():
    with pytest.raises(InvalidArgumentError):
        aio_aggregate(Tensor(np.zeros((0, 3))), _gcn(3))
    pooled = aio_aggregate(Tensor([[1.0, 5.0], [3.0, 2.0]]), _gcn(2), maxpool=True)
    assert pooled.data.tolist() == [[3.0, 5.0]]


def test_hierarchy_all_singletons():
    nodes = Tensor(np.random.default_rng(7).normal(size=(3, 4)))
    aio = _aio(4)
    h = build_hierarchy(nodes, [], [0, 1, 2], aio)
    assert h.n_groups == 0
    assert h.group_nodes.shape == (0, 4)
    assert np.allclose(h.global_node.data, aio_aggregate(nodes, aio.to_global).data)


def test_hierarchy_single_group_global_equals_group():
    nodes = Tensor(np.random.default_rng(8).normal(size=(3, 4)))
    h = build_hierarchy(nodes, [(0, 1, 2)], [], _aio(4))
    assert np.array_equal(h.global_node.data, h.group_nodes.data)


def test_hierarchy_identical_features():
    nodes = Tensor(np.tile([[0.5, -1.0]], (3, 1)))
    h = build_hierarchy(nodes, [(0, 1)], [2], _aio(2, seed=9))
    assert h.group_nodes.data[0] == pytest.approx([0.5, -1.0])
    assert h.global_node.data[0] == pytest.approx([0.5, -1.0])


@pytest.mark.parametrize(
    "groups, singletons",
    [
        ([(0, 1), (1, 2)], []),
        ([(0, 1)], [1, 2]),
        ([(0, 1)], []),
        ([(0,)], [1, 2]),
    ],
)
def test_hierarchy_rejects_bad_cover(groups, singletons):
    with pytest.raises(InvalidArgumentError):
        build_hierarchy(Tensor(np.zeros((3, 2))), groups, singletons, _aio(2))


def test_readout_zero_heads_give_half():
    nodes = Tensor(np.random.default_rng(10).normal(size=(3, 4)))
    h = build_hierarchy(nodes, [(0, 2)], [1], _aio(4))
    out = t2d_readout(h, _head(8, 5, zero=True), _head(8, 3, zero=True), _head(4, 2, zero=True))
    assert out.individual.shape == (3, 5)
    assert out.social.shape == (1, 3)
    assert out.global_.shape == (1, 2)
    for t in (out.individual, out.social, out.global_):
        assert np.all(t.data == 0.5)


def test_readout_single_subject_has_no_group_output():
    h = build_hierarchy(Tensor([[1.0, 2.0]]), [], [0], _aio(2))
    out = t2d_readout(h, _head(4, 5), _head(4, 3), _head(2, 2))
    assert out.social.shape == (0, 3)
    assert out.individual.shape == (1, 5)
    assert out.global_.shape == (1, 2)


def test_readout_without_global_feedback_ignores_global_node():
    nodes = Tensor(np.random.default_rng(11).normal(size=(4, 3)))
    h = build_hierarchy(nodes, [(0, 1)], [2, 3], _aio(3))
    heads = (_head(6, 5, seed=1), _head(6, 3, seed=2), _head(3, 2, seed=3))
    base = t2d_readout(h, *heads, feed_individual=False, feed_group=False)
    h.global_node = Tensor(h.global_node.data + 10.0)
    moved = t2d_readout(h, *heads, feed_individual=False, feed_group=False)
    assert np.array_equal(base.individual.data, moved.individual.data)
    assert np.array_equal(base.social.data, moved.social.data)
    assert not np.array_equal(base.global_.data, moved.global_.data)


def test_readout_width_checks():
    h = build_hierarchy(Tensor(np.zeros((2, 3))), [(0, 1)], [], _aio(3))
    with pytest.raises(ConfigError):
        t2d_readout(h, _head(4, 5), _head(6, 3), _head(3, 2))
    with pytest.raises(ConfigError):
        t2d_readout(h, _head(6, 5), _head(6, 3), _head(3, 2), sizes=(27, 11, 7))


def test_hierarchy_gradients_reach_local_gcn():
    rng = np.random.default_rng(12)
    params = ParamStore({"x": Tensor(rng.normal(size=(5, 3)))})
    gcn = _gcn(3, seed=12)
    params.add_mlp("aio.left", gcn.left)
    params.add_mlp("aio.right", gcn.right)
    fi, fp, fg = _head(6, 4, seed=4), _head(6, 2, seed=5), _head(3, 2, seed=6)
    for prefix, head in (("Fi", fi), ("Fp", fp), ("Fg", fg)):
        params.add_mlp(prefix, head)
    aio = AioParams(to_group=gcn, to_global=gcn)

    def loss():
        h = build_hierarchy(params["x"], [(0, 3), (1, 2)], [4], aio)
        out = t2d_readout(h, fi, fp, fg)
        return out.individual.sum() + out.social.sum() * 2.0 + out.global_.sum() * 3.0

    assert finite_diff_check(loss, params) < 1e-5
