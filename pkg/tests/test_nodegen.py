import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import pdist

from surfnodes.directions import SplitMix64
from surfnodes.geometry import ParamDomain, Surface, gallery
from surfnodes.nodegen import (GenerationConfig, NodeSet, SeedError, SingularDirectionError,
                               generate_naive, generate_proposed, generate_supersampled,
                               parametric_lattice, propose_candidate, random_seed_param,
                               run_algorithm, supersampling_factor)
from surfnodes.quality import max_empty_sphere, nn_stats


def cfg(seed=1, **kw):
    return GenerationConfig(rng_seed=seed, **kw)


# ---------------------------------------------------------------- candidate step

def test_propose_identity_square():
    eta, alpha = propose_candidate([0.0, 0.0], [1.0, 0.0], 0.1, gallery("identity_square"))
    np.testing.assert_allclose(eta, [0.1, 0.0])
    assert alpha == pytest.approx(0.1)


def test_propose_circle():
    eta, alpha = propose_candidate([0.0], [1.0], 0.2, gallery("circle"))
    assert eta[0] == pytest.approx(0.2) and alpha == pytest.approx(0.2)


def test_propose_sine_sheet_anisotropy():
    """Parametric steps shrink along directions in which the surface is steep."""
    s = gallery("sine_sheet")
    xi = np.array([8.42, 5.99])
    J = s.jacobian(xi)
    alphas = []
    for phi in np.linspace(0, math.pi, 12, endpoint=False):
        d = np.array([math.cos(phi), math.sin(phi)])
        _, a = propose_candidate(xi, d, 0.23, s)
        assert a == pytest.approx(0.23 / np.linalg.norm(J @ d))
        alphas.append(a)
    grad = np.array([J[2, 0], J[2, 1]])
    steep = grad / np.linalg.norm(grad)
    flat = np.array([-steep[1], steep[0]])
    a_steep = propose_candidate(xi, steep, 0.23, s)[1]
    a_flat = propose_candidate(xi, flat, 0.23, s)[1]
    assert a_steep < min(alphas) + 1e-12 and a_flat == pytest.approx(0.23)
    assert max(alphas) / min(alphas) > 1.5


def test_propose_singular_direction():
    with pytest.raises(SingularDirectionError):
        propose_candidate([0.3, 0.0], [1.0, 0.0], 0.1, gallery("sphere_patch"))


def test_propose_requires_positive_h():
    with pytest.raises(ValueError):
        propose_candidate([0.0], [1.0], 0.0, gallery("circle"))


# ---------------------------------------------------------------- advancing front

def arc_gaps(ns):
    phi = np.sort(ns.params[:, 0])
    return np.diff(np.append(phi, phi[0] + 2 * math.pi))


def test_circle_count_and_gaps():
    ns = generate_proposed(gallery("circle"), 0.1, cfg=cfg(1))
    assert 61 <= len(ns) <= 65
    gaps = arc_gaps(ns)
    assert gaps.min() >= 0.09 and gaps.max() <= 0.21


@pytest.mark.parametrize("seed", range(5))
def test_circle_seeds(seed):
    ns = generate_proposed(gallery("circle"), 0.1, cfg=cfg(seed))
    assert 61 <= len(ns) <= 65
    assert (arc_gaps(ns) > 0.09).all()


def test_sphere_patch_covers():
    s = gallery("sphere_patch")
    ns = generate_proposed(s, 0.08, cfg=cfg(3))
    r = max_empty_sphere(s, ns, 0.08)
    assert math.isfinite(r) and r < 2 * 0.08
    assert len(ns) > 0.5 * math.pi / 0.08 ** 2  # area pi covered at density ~1/h^2
    assert ns.diagnostics["singular"] >= 0


def test_grid_and_kdtree_identical():
    s = gallery("identity_square")
    a = generate_proposed(s, 0.05, cfg=cfg(4, index_kind="kdtree", compiled=False))
    b = generate_proposed(s, 0.05, cfg=cfg(4, index_kind="grid"))
    np.testing.assert_array_equal(a.params, b.params)
    np.testing.assert_array_equal(a.points, b.points)


@pytest.mark.parametrize("name,h", [("torus", 0.2), ("polar_curve", 0.01), ("heart", 0.1),
                                    ("sphere_patch", 0.1)])
def test_compiled_and_python_paths_agree(name, h):
    s = gallery(name)
    a = generate_proposed(s, h, cfg=cfg(2))
    b = generate_proposed(s, h, cfg=cfg(2, compiled=False))
    np.testing.assert_array_equal(a.params, b.params)
    np.testing.assert_array_equal(a.spacing, b.spacing)
    assert a.diagnostics == b.diagnostics


def test_python_surface_and_spacing():
    c = gallery("circle")
    s = Surface("circle_py", c.domain, 2, map_fn=c.map, jac_fn=c.jacobian)
    ns = generate_proposed(s, lambda p: 0.1, cfg=cfg(1))
    ref = generate_proposed(c, 0.1, cfg=cfg(1))
    np.testing.assert_array_equal(ns.params, ref.params)


def test_determinism():
    s = gallery("heart")
    a = generate_proposed(s, 0.08, cfg=cfg(7))
    b = generate_proposed(s, 0.08, cfg=cfg(7))
    np.testing.assert_array_equal(a.points, b.points)
    c = generate_proposed(s, 0.08, cfg=cfg(8))
    assert len(c) != len(a) or not np.array_equal(c.points, a.points)


@pytest.mark.parametrize("name,h", [("torus", 0.15), ("heart", 0.08), ("roman", 0.05),
                                    ("sine_sheet", 0.4), ("sphere", 0.1), ("polar_curve", 0.01)])
def test_containment_and_consistency(name, h):
    s = gallery(name)
    ns = generate_proposed(s, h, cfg=cfg(1))
    assert all(s.domain.contains(x) for x in ns.params)
    np.testing.assert_allclose(ns.points, s.map_many(ns.params), atol=1e-12, rtol=0)
    assert len(ns.params) == len(ns.points) == len(ns.spacing)
    assert not ns.capped


def test_proximity_replay_identity_square():
    """On a linear map every candidate lies exactly h from its parent, so each node
    is at least h (to rounding) from every node stored before it."""
    ns = generate_proposed(gallery("identity_square"), 0.07, cfg=cfg(5))
    P = ns.points
    for j in range(1, len(P)):
        d = np.sqrt(np.sum((P[:j] - P[j]) ** 2, axis=1)).min()
        assert d >= 0.07 * (1 - 1e-12)


def test_variable_spacing():
    s = gallery("identity_square")
    ns = generate_proposed(s, lambda p: 0.02 + 0.08 * p[0], cfg=cfg(1))
    np.testing.assert_allclose(ns.spacing, 0.02 + 0.08 * ns.points[:, 0])
    left = (ns.points[:, 0] < 0.3).sum()
    right = (ns.points[:, 0] > 0.7).sum()
    assert left > 3 * right


def test_multiple_seeds_and_bad_seed():
    s = gallery("identity_square")
    ns = generate_proposed(s, 0.1, seeds=[[0.1, 0.1], [0.9, 0.9]], cfg=cfg(1))
    np.testing.assert_array_equal(ns.params[:2], [[0.1, 0.1], [0.9, 0.9]])
    with pytest.raises(ValueError):
        generate_proposed(s, 0.1, seeds=[[1.5, 0.5]])


def test_max_nodes_cap():
    ns = generate_proposed(gallery("torus"), 0.05, cfg=cfg(1, max_nodes=100))
    assert ns.capped and len(ns) == 100


def test_seed_failure():
    dom = ParamDomain([0.0], [1.0], predicate=lambda x: False)
    with pytest.raises(SeedError):
        random_seed_param(dom, SplitMix64(0), tries=1000)


def test_config_validation():
    with pytest.raises(ValueError):
        GenerationConfig(n_candidates=0)
    with pytest.raises(ValueError):
        GenerationConfig(max_nodes=0)
    with pytest.raises(ValueError):
        GenerationConfig(index_kind="octree")


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.6), st.integers(0, 2 ** 32))
def test_property_circle_chord_separation(h, seed):
    """Unit-speed circle: every candidate is a chord 2 sin(h/2) from its parent, which
    bounds all pairwise distances from below."""
    ns = generate_proposed(gallery("circle"), h, cfg=cfg(seed))
    assert pdist(ns.points).min() >= 2 * math.sin(h / 2) * (1 - 1e-12)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.03, 0.3), st.integers(0, 1000))
def test_property_square_separation(h, seed):
    ns = generate_proposed(gallery("identity_square"), h, cfg=cfg(seed))
    assert pdist(ns.points).min() >= h * (1 - 1e-12)


def test_csv_roundtrip(tmp_path):
    ns = generate_proposed(gallery("torus"), 0.3, cfg=cfg(1))
    ns.to_csv(tmp_path / "n.csv")
    header = (tmp_path / "n.csv").read_text().splitlines()[0]
    assert header == "x0,x1,x2,xi0,xi1,h"
    back = NodeSet.from_csv(tmp_path / "n.csv", 2)
    np.testing.assert_array_equal(back.points, ns.points)
    np.testing.assert_array_equal(back.params, ns.params)
    np.testing.assert_array_equal(back.spacing, ns.spacing)


# ---------------------------------------------------------------- baselines

def test_naive_square():
    ns = generate_naive(gallery("identity_square"), 0.5)
    assert len(ns) == 9
    np.testing.assert_allclose(ns.points, [[i * 0.5, j * 0.5] for i in range(3) for j in range(3)])


def test_naive_circle_quarters():
    ns = generate_naive(gallery("circle"), math.pi / 2)
    assert len(ns) == 4
    np.testing.assert_allclose(ns.points, [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=1e-15)


def test_naive_rejects_bad_h():
    with pytest.raises(ValueError):
        generate_naive(gallery("circle"), -1.0)


def test_naive_polar_much_less_uniform():
    s = gallery("polar_curve")
    na = nn_stats(generate_naive(s, 0.06)).summary()["std_dbar"]
    pa = nn_stats(generate_proposed(s, 0.06, cfg=cfg(1))).summary()["std_dbar"]
    assert na > 5 * pa


def test_lattice_order_row_major():
    X = parametric_lattice(ParamDomain([0.0, 0.0], [1.0, 2.0]), 1.0)
    np.testing.assert_array_equal(X, [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [1, 2]])


def test_supersampled_square_tau_one_equals_naive():
    s = gallery("identity_square")
    with pytest.warns(UserWarning):
        sd = generate_supersampled(s, 0.5, tau=1.0, area_samples=1000)
    np.testing.assert_array_equal(sd.points, generate_naive(s, 0.5).points)


def test_supersampled_circle():
    sd = generate_supersampled(gallery("circle"), 0.1, tau=5.0)
    assert pdist(sd.points).min() >= 0.1
    assert len(sd) <= 2 * math.pi / 0.1
    assert sd.diagnostics["gamma"] == pytest.approx(5.0)


def test_supersampling_factor():
    assert supersampling_factor(gallery("torus"), 5.0, 1000) == pytest.approx(5 * math.sqrt(2))


def test_supersampled_python_surface_matches_compiled():
    c = gallery("heart")
    py = Surface("heart_py", c.domain, 3, map_fn=c.map, jac_fn=c.jacobian)
    a = generate_supersampled(c, 0.2, 2.0, area_samples=20_000)
    b = generate_supersampled(py, 0.2, 2.0, area_samples=20_000)
    np.testing.assert_array_equal(a.params, b.params)


def test_run_algorithm_dispatch():
    s = gallery("circle")
    assert run_algorithm("na", s, 0.5).algorithm == "na"
    with pytest.raises(ValueError):
        run_algorithm("xx", s, 0.5)
    with pytest.raises(ValueError):
        generate_supersampled(s, 0.1, tau=0.0)


# ---------------------------------------------------------------- published statistics

def nn_stats_summary(ns):
    return nn_stats(ns).summary()


def test_naive_polar_published_row():
    st = nn_stats_summary(generate_naive(gallery("polar_curve"), 3e-5))
    assert st["mean_dbar"] == pytest.approx(1.9550, rel=0.01)
    assert st["std_dbar"] == pytest.approx(1.8386, rel=0.01)


def test_naive_heart_published_row():
    st = nn_stats_summary(generate_naive(gallery("heart"), 0.004))
    assert st["mean_dbar"] == pytest.approx(0.8946, rel=0.1)
    assert st["std_dbar"] == pytest.approx(0.2086, rel=0.1)


def test_supersampled_polar_published_row():
    st = nn_stats_summary(generate_supersampled(gallery("polar_curve"), 3e-5, tau=5.0))
    assert st["mean_dbar"] == pytest.approx(1.1403, rel=0.1)
    assert st["std_dbar"] == pytest.approx(0.1715, rel=0.1)


def test_proposed_heart_published_row():
    st = nn_stats_summary(generate_proposed(gallery("heart"), 0.004, cfg=GenerationConfig()))
    assert st["mean_dbar"] == pytest.approx(1.0357, rel=0.1)
    assert st["std_dbar"] == pytest.approx(0.0374, rel=0.1)
