import numpy as np
import pytest

from diskperc.lattice import build_lattice, ball_vertices
from diskperc.potential import (
    DirichletSolver,
    continuum_annulus_hit,
    continuum_cap_ball,
    continuum_green,
)


@pytest.fixture(scope="module")
def solver16():
    return DirichletSolver(build_lattice(16))


def test_green_n1():
    s = DirichletSolver(build_lattice(1))
    assert s.green(0, 0) == pytest.approx(0.25, abs=1e-14)


def test_green_n2_path_sum_oracle():
    lat = build_lattice(2)
    s = DirichletSolver(lat)
    c = lat.index_of(0, 0)
    # brute-force path sum: G = (1/4) sum_k P^k(0,0), P the killed kernel
    P = np.zeros((9, 9))
    for v in range(9):
        for w in lat.nbr[v]:
            if w >= 0:
                P[v, w] = 0.25
    vec = np.zeros(9)
    vec[c] = 1.0
    total = 0.0
    for _ in range(10_000):
        total += vec[c]
        vec = P @ vec
    assert s.green(c, c) == pytest.approx(total / 4.0, abs=1e-9)
    assert s.green(c, c) == pytest.approx(3.0 / 8.0, abs=1e-12)


def test_green_symmetry(solver16):
    rng = np.random.default_rng(1)
    N = solver16.lattice.num_vertices
    for _ in range(5):
        x, y = rng.integers(0, N, size=2)
        assert solver16.green(x, y) == pytest.approx(solver16.green(y, x), abs=1e-12)


def test_green_rejects_bad_vertex(solver16):
    with pytest.raises(ValueError):
        solver16.green(-1, 0)


def test_equilibrium_point_n2():
    lat = build_lattice(2)
    s = DirichletSolver(lat)
    K = np.zeros(9, dtype=bool)
    K[lat.index_of(0, 0)] = True
    em = s.equilibrium_measure(K)
    assert em.cap == pytest.approx(8.0 / 3.0, abs=1e-12)
    assert em.weights[0] == pytest.approx(8.0 / 3.0, abs=1e-12)


def test_equilibrium_full_disk(solver16):
    lat = solver16.lattice
    K = np.ones(lat.num_vertices, dtype=bool)
    em = s_em = solver16.equilibrium_measure(K)
    assert em.cap == pytest.approx(lat.boundary_edges.shape[0], abs=1e-12)
    _, bdry_deg = lat.degree_split()
    dense = em.dense(lat.num_vertices)
    assert np.allclose(dense, bdry_deg)
    assert np.all((em.weights >= 1) & (em.weights <= 4))


def test_last_exit_identity(solver16):
    lat = solver16.lattice
    rng = np.random.default_rng(7)
    for _ in range(10):
        c = rng.integers(0, lat.num_vertices)
        rad = rng.uniform(0.05, 0.5)
        K = ball_vertices(lat, lat.points[c], rad, closed=True)
        if not K.any():
            continue
        em = solver16.equilibrium_measure(K)
        Ge = solver16.solve(em.dense(lat.num_vertices))
        assert np.abs(Ge[K] - 1.0).max() < 1e-10


def test_empty_K_rejected(solver16):
    with pytest.raises(ValueError):
        solver16.equilibrium_measure(np.zeros(solver16.lattice.num_vertices, dtype=bool))


def test_capacity_ball_convergence():
    target = continuum_cap_ball(0.5)
    errs = {}
    for n in (32, 64):
        s = DirichletSolver(build_lattice(n))
        K = ball_vertices(s.lattice, (0, 0), 0.5)
        errs[n] = abs(s.capacity(K) - target)
    assert errs[32] / errs[64] > 1.8


def test_capacity_lower_bound_uniform():
    caps = []
    for n in (16, 32, 64):
        s = DirichletSolver(build_lattice(n))
        caps.append(s.capacity(ball_vertices(s.lattice, (0, 0), 0.4)))
    assert min(caps) > 3.0  # continuum value 2*pi/log(1/0.4) ~ 6.86


def test_es_statistic():
    s = DirichletSolver(build_lattice(16))
    lat = s.lattice
    # a single vertex loses everything when its support is peeled
    K = np.zeros(lat.num_vertices, dtype=bool)
    K[lat.index_of(0, 0)] = True
    assert s.es_statistic(K) == 0.0
    K = ball_vertices(lat, (0, 0), 0.5)
    em = s.equilibrium_measure(K)
    val = s.es_statistic(K)
    assert 0.0 < val <= 4.0 / em.cap + 1e-12


def test_es_statistic_decays():
    vals = []
    for n in (16, 32, 64, 128):
        s = DirichletSolver(build_lattice(n))
        vals.append(s.es_statistic(ball_vertices(s.lattice, (0, 0), 0.5)))
    assert vals == sorted(vals, reverse=True)
    assert vals[-1] < vals[0] / 2


def test_continuum_formulas():
    assert continuum_green(0, 0.5) == pytest.approx(np.log(2) / (2 * np.pi), abs=1e-15)
    assert continuum_green(0, 0.5j) == pytest.approx(continuum_green(0, 0.5), abs=1e-15)
    assert continuum_green(0.3 + 0.1j, 0.3 + 0.1j) == np.inf
    assert continuum_cap_ball(0.5) == pytest.approx(2 * np.pi / np.log(2), abs=1e-15)
    assert continuum_annulus_hit(0.5, 0.25, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert continuum_annulus_hit(0.25, 0.25, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert continuum_annulus_hit(1.0, 0.25, 1.0) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        continuum_cap_ball(1.5)
    with pytest.raises(ValueError):
        continuum_annulus_hit(0.1, 0.25, 1.0)


def test_green_vs_continuum_rate():
    # |G_n(0,y) - G(0,y)| * |y| * n stays bounded as n doubles
    prods = []
    for n in (16, 32, 64, 128):
        s = DirichletSolver(build_lattice(n))
        lat = s.lattice
        c = lat.index_of(0, 0)
        col = s.green_column(c)
        rng = np.random.default_rng(n)
        idx = rng.choice(np.nonzero(lat.norm > 0.1)[0], size=40, replace=False)
        worst = 0.0
        for y in idx:
            gc = continuum_green(0, complex(lat.x[y], lat.y[y]))
            worst = max(worst, abs(col[y] - gc) * lat.norm[y] * n)
        prods.append(worst)
    assert max(prods) < 3.0 * max(prods[0], 0.05)


def test_equilibrium_vs_last_exit_tv():
    # the walk's last-exit distribution on a ball is exactly G(0,y) e(y); its
    # total-variation distance to the normalized equilibrium measure decays
    # like cap/(r n), so the normalized product stays bounded as n doubles
    from diskperc.lattice import build_lattice, ball_vertices
    from diskperc.potential import DirichletSolver
    r = 0.5
    prods = []
    for n in (16, 32, 64, 128):
        s = DirichletSolver(build_lattice(n))
        lat = s.lattice
        K = ball_vertices(lat, (0, 0), r)
        em = s.equilibrium_measure(K)
        g0 = s.green_column(lat.index_of(0, 0))
        last_exit = g0[em.support] * em.weights
        tv = 0.5 * np.abs(last_exit - em.weights / em.cap).sum()
        prods.append(tv * r * n / em.cap)
    assert max(prods) < 3.0 * max(prods[0], 1e-3)
    # and the TV itself decays
    tvs = [p / (r * n) for p, n in zip(prods, (16, 32, 64, 128))]
    assert tvs[-1] < tvs[0]
