import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import sparse

from lego import dataset as ds
from lego import graph as gr
from lego.errors import ConvergenceError, DegenerateGraphError, InvalidArgumentError

# L = I - Dn^-1 K for A = [[1,a,0],[a,1,a],[0,a,1]], a = exp(-1); computed symbolically
PATH3_LAPLACIAN = np.array([
    [0.22475241462908050, -0.22475241462908050, 0.0],
    [-0.24141964735677210, 0.48283929471354420, -0.24141964735677210],
    [0.0, -0.22475241462908050, 0.22475241462908050],
])
PATH3_EIGENVALUES = np.array([0.0, 0.22475241462908050, 0.70759170934262470])


def path3_affinity():
    a = np.exp(-1.0)
    return gr.Affinity(sparse.csr_matrix([[1, a, 0], [a, 1, a], [0, a, 1]]), 1.0, "knn_truncated")


def test_collinear_knn():
    X = np.array([[0.0], [1.0], [2.0]])
    g = gr.knn_graph(X, 1)
    assert g.neighbors[0, 0] == 1 and g.neighbors[2, 0] == 1
    assert g.neighbors[1, 0] in (0, 2)
    assert g.neighbors[1, 0] == 0  # ties by smaller index


def test_duplicate_points_rank_first():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [3.0, 0.0]])
    g = gr.knn_graph(X, 2)
    assert g.neighbors[0, 0] == 2 and g.distances[0, 0] == 0.0
    assert g.neighbors[2, 0] == 0
    assert all(j not in g.neighbors[j] for j in range(4))


@given(X=arrays(np.float64, st.tuples(st.integers(5, 40), st.integers(1, 3)),
                elements=st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.0, -1.0])),
       k=st.integers(1, 4), self_=st.booleans())
@settings(max_examples=60, deadline=None)
def test_knn_matches_brute_force_with_ties(X, k, self_):
    g = gr.knn_graph(X, k, includes_self=self_)
    nb, dist = gr.brute_force_knn(X, k, includes_self=self_)
    assert np.array_equal(g.neighbors, nb)
    assert np.array_equal(g.distances, dist)
    assert np.all(np.diff(g.distances, axis=1) >= 0)


def test_knn_matches_brute_force_random():
    X = np.random.default_rng(0).normal(size=(500, 3))
    g = gr.knn_graph(X, 10)
    nb, _ = gr.brute_force_knn(X, 10)
    assert np.array_equal(g.neighbors, nb)


def test_knn_requires_k_below_n():
    with pytest.raises(InvalidArgumentError):
        gr.knn_graph(np.zeros((5, 2)), 5)


def test_bandwidth_equal_distances():
    # regular simplex: every pairwise distance equals c
    c = 0.7
    X = np.eye(4) * c / np.sqrt(2)
    g = gr.knn_graph(X, 3)
    assert gr.bandwidth_heuristic(g) == pytest.approx(np.sqrt(2) * c, rel=1e-12)


def test_bandwidth_regular_grid():
    h = 0.3
    xs = np.arange(12) * h
    X = np.stack(np.meshgrid(xs, xs), -1).reshape(-1, 2)
    g = gr.knn_graph(X, 4)
    # 2nd neighbor is at distance h for every lattice point
    assert gr.bandwidth_heuristic(g) == pytest.approx(np.sqrt(2) * h, rel=1e-12)


@given(alpha=st.floats(0.01, 100.0))
@settings(max_examples=20, deadline=None)
def test_bandwidth_homogeneous(alpha):
    X = np.random.default_rng(1).normal(size=(60, 2))
    s1 = gr.bandwidth_heuristic(gr.knn_graph(X, 6))
    s2 = gr.bandwidth_heuristic(gr.knn_graph(alpha * X, 6))
    assert s2 == pytest.approx(alpha * s1, rel=1e-10)


def test_kernel_values():
    assert gr.gaussian_kernel(np.zeros(3), 0.4) == 1.0
    z = np.array([0.3, 0.4])
    assert gr.gaussian_kernel(z, 0.5) == pytest.approx(np.exp(-1.0), rel=1e-15)


@given(z1=arrays(np.float64, 3, elements=st.floats(-3, 3)), z2=arrays(np.float64, 3, elements=st.floats(-3, 3)),
       s=st.floats(0.05, 5.0))
@settings(max_examples=200, deadline=None)
def test_kernel_lipschitz_bound(z1, z2, s):
    lhs = abs(gr.gaussian_kernel(z1, s) - gr.gaussian_kernel(z2, s))
    assert lhs <= np.sqrt(2 / np.e) / s * np.linalg.norm(z1 - z2) + 1e-12


def test_affinity_modes_agree_on_support():
    c = ds.gen_wave_on_circle(200, seed=0)
    g = gr.knn_graph(c, 8)
    sp_aff = gr.gaussian_affinity(c, g, 0.1)
    dn_aff = gr.gaussian_affinity(c, None, 0.1, mode="dense")
    W = sp_aff.toarray()
    mask = W > 0
    assert np.allclose(W[mask], dn_aff.weights[mask], rtol=0, atol=1e-15)
    assert abs(W - W.T).max() < 1e-12
    assert np.all(W[mask] <= 1.0) and np.all(np.diag(W) == 1.0)
    # support is the union-symmetrized kNN graph plus the diagonal
    expected = np.eye(200, dtype=bool)
    rows = np.repeat(np.arange(200), 8)
    expected[rows, g.neighbors.ravel()] = True
    expected |= expected.T
    assert np.array_equal(mask, expected)


def test_affinity_rejects_bad_bandwidth():
    with pytest.raises(InvalidArgumentError):
        gr.gaussian_affinity(np.zeros((3, 1)), None, 0.0, mode="dense")


def test_normalized_affinity_two_nodes():
    a = 0.3
    K = gr.normalized_affinity(gr.Affinity(np.array([[1, a], [a, 1]]), 1.0, "dense")).weights
    assert K[0, 1] == pytest.approx(0.17751479289940828, rel=1e-14)


def test_normalized_affinity_matches_dense_product():
    rng = np.random.default_rng(4)
    B = rng.uniform(0.1, 1, (5, 5))
    A = B + B.T
    K = gr.normalized_affinity(gr.Affinity(A, 1.0, "dense")).weights
    D = np.diag(1 / A.sum(1))
    assert np.allclose(K, D @ A @ D, rtol=1e-14)
    assert np.allclose(K, K.T)


def test_zero_degree():
    with pytest.raises(DegenerateGraphError):
        gr.normalized_affinity(gr.Affinity(np.array([[1.0, 0.0], [0.0, 0.0]]), 1.0, "dense"))


def test_path3_laplacian_oracle():
    L = gr.random_walk_laplacian(path3_affinity())
    assert np.max(np.abs(L.toarray() - PATH3_LAPLACIAN)) < 1e-15
    assert np.max(np.abs(L.toarray() @ np.ones(3))) < 1e-15


def test_complete_graph_spectrum():
    n, w = 5, 0.4
    A = np.full((n, n), w)
    np.fill_diagonal(A, 1.0)
    L = gr.random_walk_laplacian(gr.Affinity(A, 1.0, "dense")).toarray()
    lam = np.sort(np.linalg.eigvals(L).real)
    # K is a multiple of A, so P = A / rowsum(A): eigenvalues 1 - (1 - w) / (1 + (n-1) w)
    expected = 1 - (1 - w) / (1 + (n - 1) * w)
    assert lam[0] == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(lam[1:], expected, atol=1e-13)
    # with unit off-diagonal weight (w -> 1) and zero self-weight the value would be n/(n-1)
    B = np.ones((n, n)) - np.eye(n)
    P = B / B.sum(1, keepdims=True)
    assert np.allclose(np.sort(np.linalg.eigvals(np.eye(n) - P).real)[1:], n / (n - 1))


def test_laplacian_row_sums_and_spectrum_range():
    c = ds.apply_noise(ds.gen_truncated_torus(400, seed=0), ds.NoiseSpec("uniform_normal_interval", level=0.01))
    g = gr.knn_graph(c, 10)
    lap = gr.random_walk_laplacian(gr.gaussian_affinity(c, g, gr.bandwidth_heuristic(g)))
    assert np.max(np.abs(lap.matrix @ np.ones(400))) < 1e-10
    S = lap.symmetric_kernel().toarray()
    lam = scipy.linalg.eigvalsh(np.eye(400) - S)
    assert lam.min() > -1e-10 and lam.max() < 2 + 1e-10


def test_degree_lower_bound_dense():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, (300, 3))
    X /= np.maximum(1.0, np.linalg.norm(X, axis=1, keepdims=True))
    R, s = 1.0, 0.8
    A = gr.gaussian_affinity(X, None, s, mode="dense")
    assert A.weights.sum(1).min() >= 300 * np.exp(-4 * R ** 2 / s ** 2)


def test_laplacian_deviation():
    lap = gr.random_walk_laplacian(path3_affinity())
    assert gr.laplacian_deviation(lap, lap) == 0.0
    E = np.zeros((3, 3))
    E[1, 2] = -0.25
    assert gr.laplacian_deviation(lap, lap.toarray() + E) == pytest.approx(0.25, rel=1e-15)
    rng = np.random.default_rng(0)
    P, Q = rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
    assert gr.laplacian_deviation(P, Q) == pytest.approx(np.sqrt(np.sum((P - Q) ** 2)), rel=1e-14)
    with pytest.raises(InvalidArgumentError):
        gr.laplacian_deviation(P, np.zeros((5, 5)))


def _alternating_oracle(A, iters=20000):
    M = A.copy()
    for _ in range(iters):
        M = M / M.sum(1, keepdims=True)
        M = M / M.sum(0, keepdims=True)
        if np.max(np.abs(M.sum(1) - 1)) < 1e-14:
            break
    return M


def test_sinkhorn_matches_alternating_normalization():
    rng = np.random.default_rng(7)
    B = rng.uniform(0.1, 1.0, (10, 10))
    A = B + B.T
    K = gr.sinkhorn_doubly_stochastic(gr.Affinity(A, 1.0, "dense"), tol=1e-14).weights
    assert np.max(np.abs(K - _alternating_oracle(A))) < 1e-10
    assert np.allclose(K, K.T, atol=1e-15)


def test_sinkhorn_two_by_two():
    A = np.array([[1.0, 0.3], [0.3, 2.0]])
    K = gr.sinkhorn_doubly_stochastic(gr.Affinity(A, 1.0, "dense")).weights
    assert np.max(np.abs(K.sum(1) - 1)) < 1e-8


def test_sinkhorn_already_doubly_stochastic():
    A = np.full((4, 4), 0.25)
    K = gr.sinkhorn_doubly_stochastic(gr.Affinity(A, 1.0, "dense"))
    assert np.array_equal(K.weights, A)


def test_sinkhorn_sparse_and_nonconvergence():
    c = ds.gen_wave_on_circle(300, seed=1)
    g = gr.knn_graph(c, 8)
    aff = gr.gaussian_affinity(c, g, gr.bandwidth_heuristic(g))
    K = gr.sinkhorn_doubly_stochastic(aff)
    assert np.max(np.abs(np.asarray(K.weights.sum(1)).ravel() - 1)) < 1e-8
    with pytest.raises(ConvergenceError) as info:
        gr.sinkhorn_doubly_stochastic(aff, tol=1e-12, max_iter=2)
    assert info.value.residual > 1e-12


def test_triplet_export(tmp_path):
    p = gr.write_triplets(path3_affinity(), tmp_path / "a.csv")
    rows = np.loadtxt(p, delimiter=",", skiprows=1)
    assert p.read_text().startswith("i,j,value")
    assert rows.shape == (7, 3)
