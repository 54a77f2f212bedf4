import math
from dataclasses import dataclass

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tubed.errors import ConfigurationError, CoverageError, NumericError, PreconditionError
from tubed.hull import hull_distance
from tubed.lattice import LatticeCoords, phi_map
from tubed.models import Euclidean, HyperbolicPlane, Sphere
from tubed.nets import Net, build_net, count_N_lambda, intersection_graph
from tubed.pointset import PointSet, sample_region
from tubed.smooth import (
    F2_PROFILES,
    F1Map,
    F2Map,
    PartitionOfUnity,
    SmoothMapStack,
    build_f2,
    bump,
    bump_derivative,
    choose_epsilon,
    clique_violations,
    coloring_is_proper,
    derivative_bounds,
    greedy_coloring,
    stretch_ratios,
)

from helpers import small_euclidean_stack


@pytest.fixture(scope="module")
def stack_parts():
    return small_euclidean_stack()


# -- bump ---------------------------------------------------------------------


def test_bump_values():
    assert bump(0.5) == 1.0
    assert bump(3.0) == 0.0
    assert bump(1.5) == pytest.approx(0.5, abs=1e-15)
    assert bump(1.0) == 1.0 and bump(2.0) == 0.0


def _sigma_mp(t):
    g = lambda s: mpmath.e ** (-1 / s) if s > 0 else mpmath.mpf(0)  # noqa: E731
    return g(2 - t) / (g(2 - t) + g(t - 1))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_bump_derivatives_against_mpmath(k):
    mpmath.mp.dps = 40
    for t in np.linspace(1.02, 1.98, 25):
        exact = float(mpmath.diff(_sigma_mp, mpmath.mpf(float(t)), k))
        got = float(bump_derivative(np.array([t]), k)[0])
        assert got == pytest.approx(exact, rel=1e-8, abs=1e-10)


def test_bump_known_derivatives_at_midpoint():
    assert bump_derivative(np.array([1.5]), 1)[0] == pytest.approx(-2.0, abs=1e-12)
    assert bump_derivative(np.array([1.5]), 3)[0] == pytest.approx(16.0, abs=1e-9)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_junction_derivatives_vanish(k):
    for t in (1.0, 1.0 + 1e-3, 1.0 + 1e-2, 2.0 - 1e-2, 2.0 - 1e-3, 2.0):
        assert abs(bump_derivative(np.array([t]), k)[0]) < 1e-9
    assert np.all(bump_derivative(np.array([0.0, 0.5, 2.5, 7.0]), k) == 0)


@given(st.floats(-10, 10))
def test_bump_range_and_monotone(t):
    v = float(bump(t))
    assert 0.0 <= v <= 1.0
    assert float(bump(t + 1e-3)) <= v + 1e-15


def test_bump_derivative_order_checked():
    with pytest.raises(PreconditionError):
        bump_derivative(np.array([1.5]), 5)


# -- partition of unity ---------------------------------------------------------


def test_isolated_vertex_has_singleton_support():
    V = np.array([[0.0, 0.0], [5.0, 0.0]])
    net = Net(Euclidean(2), 1.0, V, "", np.arange(2))
    vals = PartitionOfUnity(net).evaluate(V[:1])
    assert vals.support(0).tolist() == [0]
    assert vals.weights_of(0).tolist() == [1.0]


def test_partition_normalisation_and_bounds(stack_parts):
    ps, net, g2, f1, _ = stack_parts
    pu = PartitionOfUnity(net)
    vals = pu.evaluate(ps.points)
    assert vals.normalization_error <= 1e-12
    N2 = count_N_lambda(net, 2.0, np.vstack([net.vertices, ps.points]))
    assert vals.psi_sum.min() >= 1.0 and vals.psi_sum.max() <= N2
    # oracle: direct support count by brute force on 10^4 points
    rng = np.random.default_rng(0)
    X = ps.points[rng.choice(len(ps), 10_000, replace=False)]
    d = np.linalg.norm(X[:, None, :] - net.vertices[None, :, :], axis=2)
    assert np.max((d < 2 * net.r).sum(axis=1)) <= N2
    sub = pu.evaluate(X)
    assert clique_violations(sub, net, 2.0) == 0


def test_coverage_error_outside_region():
    net = Net(Euclidean(2), 1.0, np.zeros((1, 2)), "", np.zeros(1, np.int64))
    with pytest.raises(CoverageError):
        PartitionOfUnity(net).evaluate(np.array([[3.0, 0.0]]))


# -- f1 ------------------------------------------------------------------------


def test_f1_singleton_support_is_phi(stack_parts):
    V = np.array([[0.0, 0.0], [5.0, 0.0]])
    net = Net(Euclidean(2), 1.0, V, "", np.arange(2))
    coords = LatticeCoords(2, np.array([[0, 0], [3, 1]]))
    f1 = F1Map(PartitionOfUnity(net), coords, 2.0)
    assert np.allclose(f1(V), phi_map(coords.coords, 2.0), atol=0)


def test_f1_hull_membership(stack_parts):
    ps, net, _, f1, _ = stack_parts
    rng = np.random.default_rng(1)
    X = ps.points[rng.choice(len(ps), 10_000, replace=False)]
    vals = f1.partition.evaluate(X)
    F = f1(X)
    worst = 0.0
    for i in range(0, len(X), 10):  # exact hull distance is the slow part
        worst = max(worst, hull_distance(F[i][None], f1.phi_table[vals.support(i)]).distance)
    assert worst < 1e-9
    # convex-combination identity at every point
    rows = np.repeat(np.arange(len(X)), np.diff(vals.indptr))
    recon = np.zeros_like(F)
    np.add.at(recon, rows, vals.weights[:, None] * f1.phi_table[vals.indices])
    assert np.max(np.abs(recon - F)) < 1e-12


def test_f1_separation_and_disjoint_supports(stack_parts):
    ps, net, _, f1, _ = stack_parts
    rng = np.random.default_rng(2)
    X = ps.points
    a = rng.integers(0, len(X), 40_000)
    b = rng.integers(0, len(X), 40_000)
    keep = np.linalg.norm(X[a] - X[b], axis=1) >= 4 * net.r
    a, b = a[keep][:10_000], b[keep][:10_000]
    assert len(a) == 10_000
    sep = np.linalg.norm(f1(X[a]) - f1(X[b]), axis=1)
    assert sep.min() >= 1.0
    va, vb = f1.partition.evaluate(X[a]), f1.partition.evaluate(X[b])
    for i in range(0, 10_000, 7):
        assert not set(va.support(i).tolist()) & set(vb.support(i).tolist())


def test_f1_coordinate_count_checked():
    net = Net(Euclidean(2), 1.0, np.zeros((2, 2)) + [[0, 0], [3, 0]], "", np.arange(2))
    with pytest.raises(ConfigurationError):
        F1Map(PartitionOfUnity(net), LatticeCoords(2, np.zeros((3, 2), np.int64)), 1.0)


# -- f2 ------------------------------------------------------------------------


def test_f2_block_zero_at_net_point():
    V = np.array([[0.0, 0.0], [10.0, 0.0]])
    net = Net(Euclidean(2), 1.0, V, "", np.arange(2))
    f2 = build_f2(net, "wide")
    assert np.all(f2(V[:1]) == 0)


@pytest.mark.parametrize("model", [Euclidean(2), HyperbolicPlane(10.0), Sphere(10.0)], ids=["E2", "H2", "S2"])
def test_f2_local_isometry_in_plateau(model):
    # a single chart: ratio -> 1 as the step shrinks, on the plateau
    v = model.origin()
    net = Net(model, 1.0, v[None, :], "", np.zeros(1, np.int64))
    f2 = F2Map(net, np.zeros(1, np.int64), 2.0)
    rng = np.random.default_rng(3)
    for _ in range(20):
        u = rng.standard_normal(2)
        u /= np.linalg.norm(u)
        base = model.exp_map(v, rng.uniform(0, 1.5) * np.array([1.0, 0.0]))
        h = 1e-6
        x, y = model.exp_map(base, -h * u), model.exp_map(base, h * u)
        ratio = np.linalg.norm(f2(x[None]) - f2(y[None])) / model.distance(x, y)
        assert ratio == pytest.approx(1.0, abs=1e-3 if model.kind == "euclidean" else 2e-2)


def test_literal_profile_folds():
    # t * sigma(2t) turns at t0 ~ 0.61: two radii on either side map to one point
    t = np.linspace(0.5, 1.0, 200001)
    prof = t * bump(2 * t)
    t0 = t[np.argmax(prof)]
    assert 0.60 < t0 < 0.62
    target = 0.3  # on the plateau the profile is the identity
    hi = t[t > t0][np.argmin(np.abs(prof[t > t0] - target))]
    V = np.array([[0.0, 0.0]])
    f2 = F2Map(Net(Euclidean(2), 1.0, V, "", np.zeros(1, np.int64)), np.zeros(1, np.int64), F2_PROFILES["literal"][0])
    x, y = np.array([[0.3, 0.0]]), np.array([[hi, 0.0]])
    assert np.linalg.norm(f2(x) - f2(y)) < 1e-5
    assert np.linalg.norm(x - y) > 0.45


def test_f2_wide_distortion_on_unit_balls(stack_parts):
    from tubed.pipeline import f2_distortion
    from tubed.nets import central_vertices

    _, _, _, _, f2 = stack_parts
    net2 = f2.net
    centers = net2.vertices[central_vertices(net2, [0, 0], 10)]
    lo, hi, _ = f2_distortion(f2, Euclidean(2), centers, 300, 3000, seed=0)
    assert np.all(lo > 1.0) and np.all(np.isfinite(hi))
    lo2, hi2, _ = f2_distortion(f2, Euclidean(2), centers, 300, 3000, seed=0)
    assert np.array_equal(lo, lo2) and np.array_equal(hi, hi2)


def test_f2_colouring(stack_parts):
    _, _, _, _, f2 = stack_parts
    assert coloring_is_proper(f2)
    g = intersection_graph(f2.net, F2_PROFILES["wide"][1])
    c = greedy_coloring(g)
    assert np.all(c[g.edges[:, 0]] != c[g.edges[:, 1]])
    # first fit never needs more than max degree + 1 colours
    assert c.max() + 1 <= g.degrees().max() + 1
    broken = F2Map(f2.net, np.zeros_like(f2.colors), f2.plateau)
    assert not coloring_is_proper(broken)


def test_unknown_profile():
    net = Net(Euclidean(2), 1.0, np.zeros((1, 2)), "", np.zeros(1, np.int64))
    with pytest.raises(ConfigurationError):
        build_f2(net, "narrow")


# -- combined map, epsilon, derivatives ----------------------------------------


@dataclass
class _Linear:
    A: np.ndarray

    @property
    def dim(self):
        return self.A.shape[0]

    def __call__(self, x):
        return np.asarray(x, float) @ self.A.T


def test_isometric_stack_epsilon():
    E = Euclidean(2)
    stack = SmoothMapStack(E, _Linear(np.eye(2)), _Linear(np.zeros((0, 2))))
    X = np.random.default_rng(0).uniform(-1, 1, (200, 2))
    eps, sup = choose_epsilon(stack.raw, E, X)
    assert sup == pytest.approx(1.0, abs=1e-9)
    assert eps == pytest.approx(1 / math.sqrt(2.5), abs=1e-9)


def test_doubling_phi_halves_epsilon(stack_parts):
    ps, net, _, f1, _ = stack_parts
    E = Euclidean(2)
    f1b = F1Map(f1.partition, f1.coords, 2 * f1.scale)
    zero = _Linear(np.zeros((0, 2)))
    rng = np.random.default_rng(5)
    S = ps.points[rng.choice(len(ps), 2000, replace=False)]
    e1, _ = choose_epsilon(SmoothMapStack(E, f1, zero).raw, E, S, rng=np.random.default_rng(1))
    e2, _ = choose_epsilon(SmoothMapStack(E, f1b, zero).raw, E, S, rng=np.random.default_rng(1))
    assert e2 / e1 == pytest.approx(0.5, rel=0.05)


def test_epsilon_stable_under_sample_doubling(stack_parts):
    ps, _, _, f1, f2 = stack_parts
    E = Euclidean(2)
    stack = SmoothMapStack(E, f1, f2)
    rng = np.random.default_rng(6)
    S = ps.points[rng.choice(len(ps), 8000, replace=False)]
    _, s1 = choose_epsilon(stack.raw, E, S[:4000], rng=np.random.default_rng(2))
    _, s2 = choose_epsilon(stack.raw, E, S, rng=np.random.default_rng(2))
    assert s2 / s1 == pytest.approx(1.0, rel=0.10)


def test_combined_map_needs_positive_eps(stack_parts):
    _, _, _, f1, f2 = stack_parts
    stack = SmoothMapStack(Euclidean(2), f1, f2, eps=0.0)
    with pytest.raises(PreconditionError):
        stack.combined(np.zeros((1, 2)))


def test_combined_map_injective_and_far_separated(stack_parts):
    ps, net, _, f1, f2 = stack_parts
    E = Euclidean(2)
    stack = SmoothMapStack(E, f1, f2)
    rng = np.random.default_rng(7)
    stack.eps, _ = choose_epsilon(stack.raw, E, ps.points[rng.choice(len(ps), 1000, replace=False)], rng=rng)
    sub = ps.points[rng.choice(len(ps), 5000, replace=False)]
    Y = stack(sub)
    a, b = rng.integers(0, 5000, 100_000), rng.integers(0, 5000, 100_000)
    k = a != b
    d = np.linalg.norm(Y[a[k]] - Y[b[k]], axis=1)
    assert np.all(d >= 1e-6 * stack.eps)
    far = np.linalg.norm(sub[a[k]] - sub[b[k]], axis=1) >= 1
    assert d[far].min() >= stack.eps


def test_derivative_bounds_constant_and_linear():
    E = Euclidean(2)
    X = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    C = derivative_bounds(lambda x: np.ones((len(x), 3)), E, X)
    assert np.all(C < 1e-8)
    A = np.array([[2.0, 1.0], [0.0, 1.0], [1.0, -1.0]])
    C = derivative_bounds(_Linear(A), E, X, n_geodesics=200)
    assert C[0] <= np.linalg.norm(A, 2) + 1e-9
    assert C[0] >= 0.9 * np.linalg.norm(A, 2)
    assert C[1] < 1e-6


def test_derivative_bounds_stable_for_f1(stack_parts):
    ps, _, _, f1, _ = stack_parts
    E = Euclidean(2)
    X = ps.points[np.linalg.norm(ps.points, axis=1) < 1]
    kw = dict(length=2.0, n_grid=100, step=1e-3)
    C1 = derivative_bounds(f1, E, X, n_geodesics=400, rng=np.random.default_rng(0), **kw)
    C2 = derivative_bounds(f1, E, X, n_geodesics=800, rng=np.random.default_rng(0), **kw)
    assert np.all(np.isfinite(C1)) and np.all(C1 > 0)
    assert np.all(np.abs(C2 / C1 - 1) <= 0.20)


def test_derivative_step_guard():
    with pytest.raises(NumericError):
        derivative_bounds(lambda x: x, Euclidean(2), np.zeros((1, 2)), step=1e-8)
    with pytest.raises(PreconditionError):
        derivative_bounds(lambda x: x, Euclidean(2), np.zeros((1, 2)), k_max=5)


def test_stretch_ratio_of_linear_map():
    E = Euclidean(2)
    A = np.diag([3.0, 1.0])
    r = stretch_ratios(_Linear(A), E, np.zeros((1, 2)), n_dirs=500, rng=np.random.default_rng(0))
    assert r.max() <= 9.0 + 1e-6 and r.min() >= 1.0 - 1e-6
