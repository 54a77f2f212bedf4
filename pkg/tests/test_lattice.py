import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tubed.errors import ConfigurationError, PreconditionError, ResourceError
from tubed.hull import hull_distance, min_norm_point
from tubed.lattice import (
    LatticeCoords,
    calibrate,
    calibrate_scale,
    certified_calibration,
    certified_scale,
    clique_hull_distance,
    enumerate_cliques,
    grid_snap_coords,
    heuristic_lattice_coords,
    max_edge_length,
    parity_coloring,
    phi_map,
    register_embedder,
    verify_lattice_coords,
)
from tubed.models import Euclidean, HyperbolicPlane
from tubed.nets import Net, build_net, intersection_graph
from tubed.pointset import sample_region

from helpers import grid_oracle, slsqp_oracle


# -- colouring and Phi --------------------------------------------------------


def test_parity_coloring_binary_encoding():
    assert parity_coloring(np.array([[0, 0], [1, 0], [0, 1], [1, 1]])).tolist() == [0, 1, 2, 3]


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=5))
def test_parity_complement(v):
    v = np.array(v)
    n = len(v)
    assert parity_coloring(v) ^ parity_coloring(v + 1) == 2**n - 1


@pytest.mark.parametrize("n", [1, 2, 3])
def test_coloring_proper_on_box(n):
    pts = np.array(list(itertools.product(range(5), repeat=n)))
    cols = parity_coloring(pts)
    for step in itertools.product((-1, 0, 1), repeat=n):
        if not any(step):
            continue
        q = pts + np.array(step)
        ok = np.all((q >= 0) & (q <= 4), axis=1)
        assert np.all(cols[ok] != parity_coloring(q[ok]))


def test_phi_small_cases():
    assert phi_map(np.array([0]), 1.0).tolist() == [0.0, 1.0, 0.0]
    assert phi_map(np.array([1]), 1.0).tolist() == [1.0, 0.0, 1.0]


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_adjacent_phi_distance_bound(n):
    # maximise over every step and every starting parity class
    best = 0.0
    for base in itertools.product((0, 1), repeat=n):
        for step in itertools.product((-1, 0, 1), repeat=n):
            if any(step):
                v = np.array(base)
                best = max(best, float(np.linalg.norm(phi_map(v) - phi_map(v + np.array(step)))))
    assert best <= max_edge_length(n) + 1e-12
    assert best == pytest.approx(max_edge_length(n))


@given(st.floats(0.01, 100.0), st.integers(0, 2**31 - 1))
def test_phi_homogeneity(scale, seed):
    rng = np.random.default_rng(seed)
    v, w = rng.integers(-9, 9, (2, 3))
    d1 = np.linalg.norm(phi_map(v) - phi_map(w))
    ds = np.linalg.norm(phi_map(v, scale) - phi_map(w, scale))
    assert ds == pytest.approx(scale * d1, rel=1e-12, abs=1e-12)


# -- hull distance --------------------------------------------------------------


def test_parallel_segments_value():
    d = clique_hull_distance([[0], [1]], [[2], [3]], 1.0).distance
    assert d == pytest.approx(math.sqrt(8 / 3), abs=1e-12)
    assert grid_oracle(phi_map(np.array([[0], [1]])), phi_map(np.array([[2], [3]]))) == pytest.approx(d, abs=1e-6)


def test_singleton_hulls_are_points():
    v, w = np.array([[2, 3]]), np.array([[5, -1]])
    assert clique_hull_distance(v, w).distance == pytest.approx(np.linalg.norm(phi_map(v[0]) - phi_map(w[0])), abs=1e-14)


def test_non_disjoint_cliques_rejected():
    with pytest.raises(PreconditionError):
        clique_hull_distance([[0], [1]], [[0], [1]]).distance
    with pytest.raises(PreconditionError):
        clique_hull_distance([[0], [2]], [[5]]).distance  # not a clique


def _random_clique(rng, n, size):
    corner = rng.integers(-3, 3, n)
    cube = list(itertools.product((0, 1), repeat=n))
    pick = rng.choice(len(cube), size, replace=False)
    return [tuple(corner + np.array(cube[i])) for i in pick]


@pytest.mark.parametrize("n", [1, 2, 3])
def test_hull_distance_matches_grid_oracle(n):
    rng = np.random.default_rng(n)
    done = 0
    while done < 100 // 3 + 1:
        A = _random_clique(rng, n, int(rng.integers(1, min(3, 2**n) + 1)))
        B = _random_clique(rng, n, int(rng.integers(1, min(3, 2**n) + 1)))
        if set(A) & set(B):
            continue
        d = clique_hull_distance(A, B).distance
        oracle = grid_oracle(phi_map(np.array(A)), phi_map(np.array(B)), steps=300)
        assert d == pytest.approx(oracle, abs=1e-6)
        done += 1


@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(1, 6), st.integers(1, 5))
def test_min_norm_point_kkt(seed, k, m, dim):
    rng = np.random.default_rng(seed)
    P, Q = rng.standard_normal((k, dim)), rng.standard_normal((m, dim)) + 1.0
    res = hull_distance(P, Q)
    x = res.alpha @ P - res.beta @ Q
    assert np.linalg.norm(x) == pytest.approx(res.distance, abs=1e-9)
    assert res.alpha.min() >= -1e-12 and res.beta.min() >= -1e-12
    # optimality: no vertex of the difference set has a smaller projection on x
    D = (P[:, None] - Q[None]).reshape(-1, dim)
    assert np.min(D @ x) >= x @ x - 1e-9
    assert res.distance <= slsqp_oracle(P, Q) + 1e-7


def test_min_norm_point_contains_origin():
    x, w, _ = min_norm_point(np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]]))
    assert np.linalg.norm(x) < 1e-14 and w.sum() == pytest.approx(1.0)


# -- calibration -------------------------------------------------------------


def _check_conditions(cal, n, box):
    """Exhaustive (a) and (b) on the calibration box."""
    cliques = enumerate_cliques(n, box)
    for A, B in itertools.combinations(cliques, 2):
        if set(A) & set(B):
            continue
        assert clique_hull_distance(A, B, cal.scale).distance >= 1 - 1e-9
    pts = np.array(list(itertools.product(range(box + 1), repeat=n)))
    for step in itertools.product((-1, 0, 1), repeat=n):
        q = pts + np.array(step)
        ok = np.all((q >= 0) & (q <= box), axis=1)
        d = np.linalg.norm(phi_map(pts[ok], cal.scale) - phi_map(q[ok], cal.scale), axis=1)
        assert d.max() <= cal.rho + 1e-12


def test_calibration_n1_exhaustive():
    cal = calibrate_scale(1, 6)
    # extremal: a vertex against the next edge, or two consecutive edges, at sqrt(8/3)
    assert cal.min_distance == pytest.approx(math.sqrt(8 / 3), abs=1e-12)
    assert cal.scale == pytest.approx(math.sqrt(3 / 8), abs=1e-12)
    assert cal.rho == pytest.approx(cal.scale * math.sqrt(3))
    assert cal.n_computed + cal.n_bounded == cal.n_pairs
    _check_conditions(cal, 1, 6)


def test_calibration_n2_exhaustive_box4():
    cal = calibrate_scale(2, 4)
    assert cal.scale == pytest.approx(certified_scale(2), abs=1e-12)
    assert cal.n_computed + cal.n_bounded == cal.n_pairs
    _check_conditions(cal, 2, 4)


def test_calibration_box_invariance():
    for n in (1, 2):
        a, b = calibrate_scale(n, 4), calibrate_scale(n, 6)
        assert a.scale == pytest.approx(b.scale, abs=1e-12)
    assert calibrate_scale(1, 8).scale == pytest.approx(calibrate_scale(1, 6).scale, abs=1e-12)


def test_smaller_scale_fails():
    cal = calibrate_scale(2, 3)
    A, B = cal.extremal_pair
    assert clique_hull_distance(A, B, cal.scale).distance == pytest.approx(1.0, abs=1e-12)
    assert clique_hull_distance(A, B, cal.scale * (1 - 1e-6)).distance < 1


@pytest.mark.parametrize("n", [1, 2])
def test_closed_form_matches_exhaustive(n):
    box = {1: 5, 2: 3}[n]
    ex = calibrate_scale(n, box)
    if n == 1:
        # the closed form is clamped at 1 and is only an upper bound here
        assert ex.scale < certified_scale(n)
    else:
        assert ex.scale == pytest.approx(certified_scale(n), abs=1e-12)
    cf = certified_calibration(n)
    if n >= 2:
        even, odd = cf.extremal_pair
        assert clique_hull_distance(even, odd, cf.scale).distance == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [3, 4])
def test_closed_form_bound_on_random_clique_pairs(n):
    rng = np.random.default_rng(10 + n)
    bound = 2 ** (1 - n / 2)
    worst = math.inf
    for _ in range(400):
        A = _random_clique(rng, n, int(rng.integers(1, 2**n + 1)))
        corner = np.min(A, axis=0) + rng.integers(-1, 2, n)
        cube = list(itertools.product((0, 1), repeat=n))
        pick = rng.choice(len(cube), int(rng.integers(1, 2**n + 1)), replace=False)
        B = [tuple(corner + np.array(cube[i])) for i in pick]
        if set(A) & set(B):
            continue
        worst = min(worst, clique_hull_distance(A, B).distance)
    assert worst >= bound - 1e-9


def test_closed_form_witness_higher_n():
    for n in (4, 5, 6):
        cf = certified_calibration(n)
        even, odd = cf.extremal_pair
        assert clique_hull_distance(even, odd, cf.scale).distance == pytest.approx(1.0, abs=1e-9)
        assert cf.scale == pytest.approx(2 ** (n / 2 - 1))


def test_calibrate_dispatch_and_errors():
    assert calibrate(2, 3).method == "exhaustive"
    assert calibrate(6).method == "closed-form"
    with pytest.raises(PreconditionError):
        calibrate_scale(1, 1)
    with pytest.raises(ResourceError):
        calibrate_scale(3, 6, max_pairs=1000)


# -- lattice coordinates --------------------------------------------------------


def test_grid_snap_pitch_2r():
    ps = sample_region(Euclidean(2), [0, 0], 10.0, 0.2, seed=0)
    net = build_net(ps, 1.0)
    g = intersection_graph(net, 1.0)
    res = heuristic_lattice_coords(g)
    assert res.ok and res.info["pitch"] == pytest.approx(2.0)
    bad, coll = verify_lattice_coords(g.edges, res.coords.coords)
    assert len(bad) == 0 and len(coll) == 0
    C = res.coords.coords
    assert np.all(np.abs(C[g.edges[:, 0]] - C[g.edges[:, 1]]).max(axis=1) == 1)


def test_single_vertex_coords():
    net = Net(Euclidean(2), 1.0, np.array([[0.3, 0.4]]), "", np.zeros(1, np.int64))
    res = grid_snap_coords(intersection_graph(net, 2.0))
    assert res.ok and res.coords.coords.tolist() == [[0, 0]]


def test_complete_graph_beyond_clique_bound_fails():
    # K_5 in dimension 2: every assignment in a box fails (pigeonhole oracle)
    n = 2
    edges = np.array(list(itertools.combinations(range(2**n + 1), 2)))
    cells = np.array(list(itertools.product(range(3), repeat=n)))
    idx = np.array(list(itertools.product(range(len(cells)), repeat=2**n + 1)))
    C = cells[idx]  # (assignments, 5, n)
    sep = np.abs(C[:, edges[:, 0]] - C[:, edges[:, 1]]).max(axis=2)
    assert not np.any(np.all(sep == 1, axis=1))
    # the library verifier agrees on a sample of assignments
    for a in idx[:: len(idx) // 50]:
        bad, coll = verify_lattice_coords(edges, cells[a])
        assert len(bad) or len(coll)
    # grid snapping restricted to dimension 2 fails the same way
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]]) * 0.4
    net = Net(Euclidean(2), 0.2, pts, "", np.arange(5))
    g = intersection_graph(net, 2.0)
    assert len(g.edges) == 10
    assert not grid_snap_coords(g, max_dim=2).ok


def test_non_flat_model_reports_failure():
    ps = sample_region(HyperbolicPlane(), [0, 0], 2.0, 0.2, seed=0)
    g = intersection_graph(build_net(ps, 0.5), 2.0)
    res = heuristic_lattice_coords(g)
    assert not res.ok and "flat" in res.info["reason"]


def test_embedder_registry_and_json():
    register_embedder("zeros", lambda graph, **kw: grid_snap_coords(graph))
    net = Net(Euclidean(1), 1.0, np.array([[0.0], [1.5]]), "", np.arange(2))
    res = heuristic_lattice_coords(intersection_graph(net, 1.0), "zeros")
    obj = res.coords.as_json()
    assert LatticeCoords.from_json(obj).coords.tolist() == res.coords.coords.tolist()
    with pytest.raises(ConfigurationError):
        heuristic_lattice_coords(intersection_graph(net, 1.0), "nope")
