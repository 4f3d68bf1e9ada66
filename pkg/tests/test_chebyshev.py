import numpy as np
import pytest

from decopt.chebyshev import chebyshev_solve
from decopt.topology import Graph, Topology, max_degree_mixing


def _path_chord_operator(c=0.7, beta=0.9):
    edges = tuple((i, i + 1) for i in range(7)) + ((0, 4),)
    g = Graph(n=8, edges=edges, kind="custom")
    topo = Topology(g, max_degree_mixing(g))
    k = c * topo.laplacian + beta * np.eye(8)
    return k, beta, c * topo.lap_lambda_max + beta


def test_matches_direct_solve():
    k, lam_min, lam_max = _path_chord_operator()
    b = np.random.default_rng(3).normal(size=(8, 2))
    res = chebyshev_solve(lambda v: k @ v, b, np.zeros((8, 2)), 40,
                          lam_min, lam_max)
    direct = np.linalg.solve(k, b)
    assert np.abs(res.x - direct).max() <= 1e-10
    assert np.linalg.norm(b - k @ res.x) / np.linalg.norm(b) <= 1e-10


def test_residual_recurrence_is_truthful():
    k, lam_min, lam_max = _path_chord_operator()
    b = np.random.default_rng(1).normal(size=(8, 1))
    res = chebyshev_solve(lambda v: k @ v, b, np.zeros((8, 1)), 12,
                          lam_min, lam_max)
    assert np.abs(res.residual - (b - k @ res.x)).max() <= 1e-12
    assert np.abs(res.k_dx - k @ res.x).max() <= 1e-12


def test_supplied_initial_residual_and_warm_start():
    k, lam_min, lam_max = _path_chord_operator()
    rng = np.random.default_rng(2)
    b = rng.normal(size=(8, 1))
    x0 = rng.normal(size=(8, 1))
    res = chebyshev_solve(lambda v: k @ v, b, x0, 16, lam_min, lam_max,
                          r0=b - k @ x0)
    assert np.linalg.norm(b - k @ res.x) / np.linalg.norm(b) <= 1e-6


def test_one_application_per_order():
    k, lam_min, lam_max = _path_chord_operator()
    calls = [0]

    def apply_op(v):
        calls[0] += 1
        return k @ v

    b = np.ones((8, 1))
    chebyshev_solve(apply_op, b, np.zeros((8, 1)), 7, lam_min, lam_max,
                    r0=b.copy())
    assert calls[0] == 7


def test_contraction_flag_detects_bad_interval():
    k, lam_min, _ = _path_chord_operator()
    b = np.random.default_rng(0).normal(size=(8, 1))
    good = chebyshev_solve(lambda v: k @ v, b, np.zeros((8, 1)), 4,
                           lam_min, 4.0)
    assert good.contracted
    # declaring a spectrum far below the truth makes the iteration expand
    bad = chebyshev_solve(lambda v: 50.0 * (k @ v), b, np.zeros((8, 1)), 6,
                          lam_min, 4.0)
    assert not bad.contracted


def test_parameter_validation():
    with pytest.raises(ValueError):
        chebyshev_solve(lambda v: v, np.ones(3), np.zeros(3), 0, 1.0, 2.0)
    with pytest.raises(ValueError):
        chebyshev_solve(lambda v: v, np.ones(3), np.zeros(3), 3, -1.0, 2.0)
    with pytest.raises(ValueError):
        chebyshev_solve(lambda v: v, np.ones(3), np.zeros(3), 3, 3.0, 2.0)
