import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from betacert.corona import (
    angle_stopping_region,
    assign_planes,
    beta_stopping_forest,
    d_collection,
    default_tau,
    extend_layers,
    is_coherent,
    is_sibling_closed,
    layer_bounds,
    stop_size_ratio,
    tau_zero,
)
from betacert.generators import dihedral, line
from betacert.geometry import AffinePlane, PointCloud
from betacert.nets import build_tree

_LINE = line(129)
_LINE_TREE = build_tree(_LINE, 0.5, scale=2.5)
_RIDGE = dihedral(0.3, 257)
_RIDGE_TREE = build_tree(_RIDGE, 0.5, scale=2.5)
_RIDGE_PLANES = assign_planes(_RIDGE_TREE, 1)


def _random_planes(tree, seed, spread):
    rng = np.random.default_rng(seed)
    ang = rng.normal(scale=spread, size=tree.n_nodes)
    return [AffinePlane(tree.center[q], [[np.cos(a), np.sin(a)]]) for q, a in enumerate(ang)]


def test_d_collection_examples():
    tree = _LINE_TREE
    q = int(tree.by_level[2][0])
    inside = tree.points[tree.members[q]]
    assert np.all(d_collection(tree, [q], inside) <= tree.side[q] + 1e-12)
    anchor = inside[0]
    x = anchor + np.array([0.0, 0.7])
    assert d_collection(tree, [q], x)[0] == pytest.approx(tree.side[q] + np.min(np.linalg.norm(inside - x, axis=1)))
    with pytest.raises(ValueError):
        d_collection(tree, [], x)


def test_d_collection_is_one_lipschitz():
    tree = _RIDGE_TREE
    cubes = [int(q) for q in tree.by_level[3][:4]]
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(200, 2))
    y = x + rng.normal(scale=0.1, size=x.shape)
    dx, dy = d_collection(tree, cubes, x), d_collection(tree, cubes, y)
    assert np.all(np.abs(dx - dy) <= np.linalg.norm(x - y, axis=1) + 1e-12)


def test_angle_region_extremes():
    tree = _RIDGE_TREE
    root = int(tree.by_level[0][0])
    only = angle_stopping_region(tree, _RIDGE_PLANES, root, 0.0)
    assert only.members == [root]
    same = [_RIDGE_PLANES[root]] * tree.n_nodes
    everything = angle_stopping_region(tree, same, root, 0.1)
    assert set(everything.members) == set(tree.descendants(root)) | {root}
    assert all(why == "resolution" for why in everything.minimal.values())
    assert len(everything.residual) == 0


def test_flat_cloud_has_no_stops():
    planes = assign_planes(_LINE_TREE, 1)
    forest = extend_layers(_LINE_TREE, planes, 0.1, default_tau(0.5))
    assert forest.layers[0]["stop"] == []
    assert len(forest.regions) == 1
    assert set(forest.regions[0].members) == set(range(_LINE_TREE.n_nodes))


def test_tau_range():
    t0 = tau_zero(0.5)
    assert 0 < default_tau(0.5) < t0
    for tau in (0.0, t0, 1.0):
        with pytest.raises(ValueError):
            extend_layers(_LINE_TREE, assign_planes(_LINE_TREE, 1), 0.1, tau)


def test_ridge_layers_respect_bounds():
    forest = extend_layers(_RIDGE_TREE, _RIDGE_PLANES, 0.05, default_tau(0.5))
    rows = layer_bounds(_RIDGE_TREE, forest)
    assert rows and all(r["lower_ok"] and r["upper_ok"] for r in rows)
    for reg in forest.regions:
        assert is_coherent(_RIDGE_TREE, reg) and is_sibling_closed(_RIDGE_TREE, reg)
    assert np.isfinite(stop_size_ratio(_RIDGE_TREE, forest, 2.0))
    # the Stop(N) bounds alone force a side ratio of at most 2 / rho between touching cubes
    assert stop_size_ratio(_RIDGE_TREE, forest, 1.0) <= 4 / _RIDGE_TREE.rho


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.5), st.floats(0.02, 0.3))
def test_angle_regions_are_coherent(seed, spread, alpha):
    tree = _RIDGE_TREE
    planes = _random_planes(tree, seed, spread)
    for top in tree.by_level[1]:
        reg = angle_stopping_region(tree, planes, int(top), alpha)
        assert is_coherent(tree, reg) and is_sibling_closed(tree, reg)
        covered = [set(tree.members[q].tolist()) for q in reg.minimal]
        for i, a in enumerate(covered):
            for b in covered[i + 1 :]:
                assert not a & b
        assert not set(reg.residual.tolist()) & set().union(*covered)


def test_beta_forest_extremes():
    tree = _RIDGE_TREE
    zero = beta_stopping_forest(tree, 1, 2.0, 0.1, np.zeros(tree.n_nodes))
    assert len(zero.regions) == 1 and len(zero.regions[0].members) == tree.n_nodes
    huge = beta_stopping_forest(tree, 1, 2.0, 100.0, np.ones(tree.n_nodes))
    assert len(huge.regions) == 1
    cut = beta_stopping_forest(tree, 1, 2.0, 0.5, np.ones(tree.n_nodes))
    assert all(len(r.members) == 1 for r in cut.regions)
    assert len(cut.regions) == tree.n_nodes
    with pytest.raises(ValueError):
        beta_stopping_forest(tree, 1, 2.0, 0.0, np.zeros(tree.n_nodes))
    with pytest.raises(ValueError):
        beta_stopping_forest(tree, 1, 0.5, 0.1, np.zeros(tree.n_nodes))


def test_forest_json_is_deterministic():
    a = extend_layers(_RIDGE_TREE, _RIDGE_PLANES, 0.05, default_tau(0.5)).to_json()
    b = extend_layers(_RIDGE_TREE, assign_planes(_RIDGE_TREE, 1), 0.05, default_tau(0.5)).to_json()
    assert a == b
