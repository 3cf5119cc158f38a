import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import pdist

from lego import dataset as ds
from lego import downstream as dn
from lego import graph as gr
from lego.errors import AlignmentError, InvalidArgumentError
from lego.pipeline import clean_chart_stress, preset, run_boundary


def _rotation(theta):
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


def _rotation3(seed):
    Q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(3, 3)))
    return Q * np.sign(np.linalg.det(Q))


def test_two_views_known_transform():
    Y = np.array([[0.0, 0.0], [1.0, 0.2], [0.3, 1.1], [0.8, 0.9]])
    R, t = _rotation(0.7), np.array([2.0, -1.0])
    coords = np.stack([Y, Y @ R + t])
    views = dn.LocalViews(coords, np.array([[0, 1, 2, 3]] * 2), 4)
    al, Z = dn.align_views(views)
    G0 = coords[0] @ al.rotations[0] + al.translations[0]
    G1 = coords[1] @ al.rotations[1] + al.translations[1]
    assert np.max(np.abs(G0 - G1)) < 1e-8
    # relative transform recovered: view 1 -> view 0 is y -> (y - t) R^T
    rel = al.rotations[1] @ al.rotations[0].T
    assert np.max(np.abs(rel - R.T)) < 1e-8
    assert np.allclose(pdist(Z), pdist(Y), atol=1e-8)
    assert np.allclose(np.swapaxes(al.rotations, 1, 2) @ al.rotations, np.eye(2), atol=1e-10)


def test_single_view_identity():
    Y = np.random.default_rng(0).normal(size=(5, 2))
    al, Z = dn.align_views(dn.LocalViews(Y[None], np.arange(5)[None], 5))
    assert np.array_equal(al.rotations[0], np.eye(2)) and np.array_equal(al.translations[0], np.zeros(2))
    assert np.allclose(Z, Y, atol=1e-12)


def test_disconnected_views_raise():
    coords = np.random.default_rng(0).normal(size=(2, 3, 2))
    views = dn.LocalViews(coords, np.array([[0, 1, 2], [3, 4, 5]]), 6)
    with pytest.raises(AlignmentError) as info:
        dn.align_views(views)
    assert sorted(map(sorted, info.value.components)) == [[0], [1]]


def test_small_overlap_warns():
    coords = np.random.default_rng(0).normal(size=(2, 3, 2))
    views = dn.LocalViews(coords, np.array([[0, 1, 2], [2, 3, 4]]), 5)
    al, _ = dn.align_views(views)
    assert al.warnings and "1 < d+1" in al.warnings[0]


@pytest.fixture(scope="module")
def swiss_clean():
    c = ds.gen_swiss_roll(3000, seed=0)
    return c, gr.knn_graph(c, 9)


def test_swiss_roll_embedding_isometric(swiss_clean):
    c, g = swiss_clean
    al, Z = dn.align_views(dn.build_local_views(c, g, c.clean.tangent))
    assert clean_chart_stress(Z, c.clean.params) <= 0.05
    assert not al.warnings


def test_alignment_error_monotone(swiss_clean):
    c, g = swiss_clean
    noisy = ds.apply_noise(c, ds.NoiseSpec("uniform_normal_interval", level=0.01, seed=2))
    al, _ = dn.align_views(dn.build_local_views(noisy, g, c.clean.tangent), iters=8)
    h = np.array(al.history)
    assert np.all(np.diff(h) <= 1e-9 * h[0])
    assert al.error <= h[0]
    assert al.error == pytest.approx(dn.alignment_error(dn.build_local_views(noisy, g, c.clean.tangent),
                                                        al.rotations, al.translations))


def test_embedding_rigid_invariance(swiss_clean):
    c, g = swiss_clean
    R, t = _rotation3(5), np.array([1.0, -2.0, 0.5])
    _, Z = dn.align_views(dn.build_local_views(c, g, c.clean.tangent))
    _, Zr = dn.align_views(dn.build_local_views(c.points @ R.T + t, g, R @ c.clean.tangent))
    idx = np.random.default_rng(0).choice(c.n, 300, replace=False)
    assert np.max(np.abs(pdist(Z[idx]) - pdist(Zr[idx]))) < 1e-8


def test_local_views_translation_invariant(swiss_clean):
    c, g = swiss_clean
    a = dn.build_local_views(c, g, c.clean.tangent)
    b = dn.build_local_views(c.points + np.array([5.0, -3.0, 2.0]), g, c.clean.tangent)
    assert np.max(np.abs(a.coords - b.coords)) < 1e-12


def test_local_views_on_a_line():
    x = np.linspace(0, 1, 30)
    X = np.column_stack([x, np.zeros(30)])
    g = gr.knn_graph(X, 4)
    frames = np.tile(np.array([[1.0], [0.0]]), (30, 1, 1))
    v = dn.build_local_views(X, g, frames)
    for j in range(30):
        off = x[g.neighbors[j]] - x[g.neighbors[j]].mean()
        assert np.allclose(np.abs(v.coords[j, :, 0]), np.abs(off), atol=1e-15)


def test_local_view_norms_bounded(swiss_clean):
    c, g = swiss_clean
    noisy = ds.apply_noise(c, ds.NoiseSpec("uniform_normal_interval", level=0.01, seed=2))
    v = dn.build_local_views(noisy, g, c.clean.tangent)
    nb = noisy.points[g.neighbors]
    diam = np.max(np.linalg.norm(nb[:, :, None] - nb[:, None], axis=-1), axis=(1, 2))
    assert np.all(np.linalg.norm(v.coords, axis=2) <= diam[:, None] + 1e-12)
    inc = v.incidence()
    assert inc.shape == (c.n, c.n) and inc.sum() == c.n * 9
    assert all(j in v.members[i] for j, views in enumerate(v.overlap_index()[:50]) for i in views)


@pytest.fixture(scope="module")
def square_lattice():
    c = ds.gen_rectangle_strip(30, 30, length=1.0, halfwidth=0.5)
    K = gr.sinkhorn_doubly_stochastic(gr.gaussian_affinity(c, None, 0.1, mode="dense"))
    x, y = c.points.T
    edge = np.isclose(x, 0) | np.isclose(x, 1) | np.isclose(np.abs(y), 0.5)
    return c.points, K, edge


def test_boundary_interior_cancels(square_lattice):
    X, K, edge = square_lattice
    r = dn.detect_boundary(X, np.tile(np.eye(2), (X.shape[0], 1, 1)), K)
    inner = (np.abs(X[:, 0] - 0.5) < 0.2) & (np.abs(X[:, 1]) < 0.2)
    assert r.norms[inner].max() <= 0.1 * r.norms[edge].max()


def test_boundary_recall_on_lattice(square_lattice):
    X, K, edge = square_lattice
    r = dn.detect_boundary(X, np.tile(np.eye(2), (X.shape[0], 1, 1)), K, 100 * (1 - edge.mean()))
    assert np.sum(r.labels & edge) / edge.sum() >= 0.8
    assert np.array_equal(r.labels, r.norms > r.threshold)


def test_boundary_rejects_bad_kernel(square_lattice):
    X, _, _ = square_lattice
    A = gr.gaussian_affinity(X, None, 0.1, mode="dense")
    frames = np.tile(np.eye(2), (X.shape[0], 1, 1))
    with pytest.raises(InvalidArgumentError):
        dn.detect_boundary(X, frames, A)
    with pytest.raises(InvalidArgumentError):
        dn.detect_boundary(X, frames, gr.sinkhorn_doubly_stochastic(A), percentile=100)


@given(seed=st.integers(0, 1000))
@settings(max_examples=5, deadline=None)
def test_boundary_rotation_invariant(seed):
    c = ds.gen_truncated_torus(400, seed=1)
    g = gr.knn_graph(c, 10)
    K = gr.sinkhorn_doubly_stochastic(gr.gaussian_affinity(c, g, gr.bandwidth_heuristic(g)))
    R = _rotation3(seed)
    a = dn.detect_boundary(c, c.clean.tangent, K)
    b = dn.detect_boundary(c.points @ R.T, R @ c.clean.tangent, K)
    assert np.allclose(a.norms, b.norms, rtol=1e-9, atol=1e-14)


def test_jaccard():
    assert dn.jaccard([1, 1, 0, 0], [1, 0, 1, 0]) == pytest.approx(1 / 3)
    assert dn.jaccard([0, 0], [0, 0]) == 1.0


@pytest.mark.slow
def test_torus_boundary_lego_matches_true_frames():
    _, out = run_boundary(preset("truncated_torus"))
    assert out["jaccard_vs_true"]["lego"] >= 0.7


def test_writers(tmp_path):
    r = dn.BoundaryReport(np.array([0.1, 0.5]), 0.3, np.array([False, True]), 50.0)
    assert dn.write_boundary(r, tmp_path / "b.csv").read_text().splitlines() == [
        "index,norm,label", "0,0.10000000000000001,0", "1,0.5,1"]
    Z = np.array([[1.0, 2.0]])
    assert dn.write_embedding(Z, tmp_path / "z.csv").read_text().splitlines()[0] == "index,z0,z1"
