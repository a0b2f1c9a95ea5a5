import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from betacert.beta import beta_content, beta_inf, check_exponent, omega_lp, p_limit, vartheta
from betacert.generators import plane, plane_with_hole
from betacert.geometry import AffinePlane, Ball, PointCloud
from betacert.nets import build_tree
from oracles import ContentOracle, layer_cake

# content beta of the tent below, frozen from beta_content_oracle
# (48 normals x 24 offsets, Nelder-Mead polish, exact set-cover content)
TENT_BETA_ORACLE = 0.05049999999999999


def _tent():
    x = np.linspace(0, 1, 201)
    pts = np.column_stack([x, 0.2 - 0.4 * np.abs(x - 0.5)])
    cloud = PointCloud(pts, 1, 0.005)
    return pts, build_tree(cloud, 0.5)


def test_beta_inf_examples():
    tri = np.array([[0, 0], [1, 0], [0.5, 0.2]])
    assert beta_inf(tri, Ball([0.5, 0.1], 1.0), 1).value == pytest.approx(0.1, abs=1e-9)
    assert beta_inf(np.array([[0.3, 0.3]]), Ball([0, 0], 1.0), 1).value == 0.0
    flat = plane(3, 2, 121)
    assert beta_inf(flat.points, Ball([0, 0, 0], 0.7), 2).value == pytest.approx(0.0, abs=1e-12)


def test_beta_inf_with_given_plane_and_errors():
    tri = np.array([[0, 0], [1, 0], [0.5, 0.2]])
    axis = AffinePlane(np.zeros(2), [[1.0, 0.0]])
    assert beta_inf(tri, Ball([0.5, 0.1], 2.0), 1, axis).value == pytest.approx(0.1)
    with pytest.raises(ValueError):
        beta_inf(tri, Ball([5, 5], 1.0), 1)
    with pytest.raises(ValueError):
        beta_inf(np.zeros((2, 3)), Ball([0, 0, 0], 1.0), 1, AffinePlane(np.zeros(3), [[1, 0, 0], [0, 1, 0]]))


def test_beta_content_coplanar_is_zero():
    flat = plane(2, 1, 101)
    tree = build_tree(flat, 0.5)
    for p in (1.0, 2.0, 7.0):
        assert beta_content(flat.points, Ball([0.1, 0], 0.8), 1, p, tree).value == pytest.approx(0.0, abs=1e-12)


def test_beta_content_tent():
    pts, tree = _tent()
    ball = Ball([0.5, 0.1], 1.0)
    res = beta_content(pts, ball, 1, 1.0, tree)
    assert 0 < res.value <= 2 * beta_inf(pts, ball, 1).value <= 0.2 + 1e-9
    assert res.value == pytest.approx(TENT_BETA_ORACLE, rel=1e-6)
    f = np.minimum(res.plane.dist(pts), 1.0)
    assert layer_cake(f, np.arange(len(pts)), ContentOracle(tree, 1)) == pytest.approx(res.value, rel=1e-9)


def test_beta_content_truncates_at_ball_radius():
    # every distance exceeds the radius, so the integrand is 1 and beta^p = content / (p r^d)
    pts, tree = _tent()
    ball = Ball([0.5, 0.1], 0.3)
    far = AffinePlane([0.5, 5.0], [[1.0, 0.0]])
    scope = np.nonzero(ball.contains(pts))[0]
    mass = ContentOracle(tree, 1)(scope)
    for p in (1.0, 2.0):
        val = beta_content(pts, ball, 1, p, tree, far).value
        assert val**p == pytest.approx(mass / p / 0.3, rel=1e-12)


def test_exponent_range():
    assert p_limit(1) == np.inf and p_limit(3) == pytest.approx(6.0)
    check_exponent(1.0, 3)
    check_exponent(5.99, 3)
    for p, d in ((0.5, 1), (6.0, 3), (4.0, 4)):
        with pytest.raises(ValueError):
            check_exponent(p, d)
    pts, tree = _tent()
    with pytest.raises(ValueError):
        beta_content(pts, Ball([0.5, 0.1], 1.0), 1, 0.9, tree)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1.0, 2.0, 4.0]))
def test_content_beta_bounded_by_sup_beta_on_fixed_plane(seed, p):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, 80)
    pts = np.column_stack([x, 0.1 * rng.normal(size=80)])
    tree = build_tree(PointCloud(pts, 1, 0.01), 0.5)
    ball = Ball([0, 0], 1.0)
    L = AffinePlane([0, rng.normal(scale=0.05)], [[np.cos(0.1), np.sin(0.1)]])
    sup = beta_inf(pts, ball, 1, L).value
    assert beta_content(pts, ball, 1, p, tree, L).value <= 2 * sup + 1e-12


# ---------------------------------------------------------------- bilateral


def test_vartheta_plane():
    cloud = plane(3, 2, 1681)
    delta = cloud.resolution
    res = vartheta(cloud.points, Ball([0.1, 0, 0], 0.8), 2, delta, cloud.window)
    assert res.value <= 2 * delta / 0.8


def test_vartheta_sees_hole_that_beta_misses():
    cloud = plane_with_hole(0.5, 6561)
    delta = cloud.resolution
    ball = Ball([0, 0, 0], 1.0)
    assert beta_inf(cloud.points, ball, 2).value == pytest.approx(0.0, abs=1e-12)
    res = vartheta(cloud.points, ball, 2, delta / 2, cloud.window)
    assert abs(res.value - 0.5) <= 3 * delta


def test_vartheta_solid_ball_far_from_lines():
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(4000, 3))
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True) * rng.uniform(size=(4000, 1)) ** (1 / 3)
    assert vartheta(pts, Ball([0, 0, 0], 1.0), 1, 0.05).value >= 0.4


def test_vartheta_threshold_decisions():
    cloud = plane_with_hole(0.5, 1681)
    ball = Ball([0, 0, 0], 1.0)
    full = vartheta(cloud.points, ball, 2, cloud.resolution, cloud.window).value
    low = vartheta(cloud.points, ball, 2, cloud.resolution, cloud.window, threshold=0.9)
    assert low.value < 0.9 and low.info["decided"] == "upper-bound"
    high = vartheta(cloud.points, ball, 2, cloud.resolution, cloud.window, threshold=0.1)
    assert high.value == pytest.approx(full)


# ---------------------------------------------------------------- omega


def test_omega_examples():
    x = np.linspace(-1, 1, 20001)
    assert omega_lp(x, 3 * x - 1, 2, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert omega_lp(x, np.full_like(x, 2.5), 1.5, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert omega_lp(x, x**2, 2, 1.0) == pytest.approx(np.sqrt(4 / 45), rel=1e-4)
    with pytest.raises(ValueError):
        omega_lp(x, x, 0.5, 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1.0, 1.5, 2.0, 3.0]))
def test_omega_is_best_affine_fit(seed, p):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-1, 1, size=(200, 2))
    f = np.sin(2 * xy[:, 0]) + xy[:, 1] ** 2
    best = omega_lp(xy, f, p, 1.0)
    for _ in range(5):
        coef = rng.normal(scale=0.5, size=3)
        other = np.mean(np.abs(f - coef[0] - xy @ coef[1:]) ** p) ** (1 / p)
        assert best <= other + 1e-9
