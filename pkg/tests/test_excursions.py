import numpy as np
import pytest
from scipy import stats

from diskperc import excursions as ex
from diskperc.acceptance import two_sample_chi2_pvalue
from diskperc.lattice import build_lattice, ball_vertices
from diskperc.potential import DirichletSolver
from diskperc.rng import substream


@pytest.fixture(scope="module")
def lat2():
    return build_lattice(2)


def test_rejects_nonpositive_u(lat2):
    with pytest.raises(ValueError):
        ex.sample_cloud_direct(lat2, 0.0, substream(1))
    with pytest.raises(ValueError):
        ex.sample_cloud_single_walk(lat2, -1.0, substream(1))


def test_tiny_u_mostly_empty(lat2):
    counts = [ex.sample_cloud_direct(lat2, 1e-4, substream(2, k)).count for k in range(300)]
    assert np.mean(np.asarray(counts) == 0) > 0.98


def test_vacant_set_definition(lat2):
    cloud = ex.sample_cloud_direct(lat2, 0.8, substream(3), keep_paths=True)
    vac = ex.vacant_set(cloud)
    assert np.array_equal(vac, ~cloud.occupied)
    rebuilt = ex.occupancy_of(lat2, cloud)
    assert np.array_equal(rebuilt, cloud.occupied)


def test_trace_validity(lat2):
    cloud = ex.sample_cloud_direct(lat2, 1.0, substream(4), keep_paths=True)
    for p, edge in zip(cloud.paths, cloud.start_edges):
        assert p.size >= 1
        assert p[0] == edge[0]
        for a, b in zip(p[:-1], p[1:]):
            assert b in lat2.nbr[a]


def test_single_step_fraction_oracle(lat2):
    # fraction of enter-and-exit excursions vs the exact per-edge exit law
    _, bdry_deg = lat2.degree_split()
    edges = lat2.boundary_edges
    p_exit = bdry_deg[edges[:, 0]] / 4.0
    expected = float(p_exit.mean())
    reps = 400
    tot = one = 0
    for k in range(reps):
        c = ex.sample_cloud_direct(lat2, 1.0, substream(5, k))
        tot += c.count
        one += int((c.lifetimes == 2).sum())
    phat = one / tot
    se = np.sqrt(expected * (1 - expected) / tot)
    assert abs(phat - expected) < 3 * se


def test_label_thinning_count_law(lat2):
    # thinned counts at u' match fresh Poisson(u' * B) counts
    reps = 3000
    thinned = []
    for k in range(reps):
        c = ex.sample_cloud_direct(lat2, 1.0, substream(6, k))
        thinned.append(int(ex.thin_mask(c, 0.4).sum()))
    fresh = substream(7).poisson(0.4 * 12, size=reps)
    p = two_sample_chi2_pvalue([min(c, 12) for c in thinned], [min(int(c), 12) for c in fresh])
    assert p > 0.01


def test_time_reversal_symmetry(lat2):
    # (entry sector, exit sector) law is exchangeable under reversal
    pairs, swapped = [], []
    for k in range(4000):
        c = ex.sample_cloud_direct(lat2, 0.5, substream(8, k))
        for j in range(c.count):
            b0 = lat2.exit_point[c.start_edges[j, 0], c.start_edges[j, 1]]
            b1 = lat2.exit_point[c.exit_edges[j, 0], c.exit_edges[j, 1]]
            s0 = int(np.arctan2(b0[1], b0[0]) // (np.pi / 2)) % 4
            s1 = int(np.arctan2(b1[1], b1[0]) // (np.pi / 2)) % 4
            pairs.append((s0, s1))
            swapped.append((s1, s0))
    assert two_sample_chi2_pvalue(pairs, swapped) > 0.01


def test_hitting_sampler_point_mass():
    lat = build_lattice(2)
    s = DirichletSolver(lat)
    K = np.zeros(9, dtype=bool)
    K[lat.index_of(0, 0)] = True
    cloud = ex.sample_hitting_K(lat, 1.0, K, s, substream(9))
    assert np.all(cloud.entry_vertices == lat.index_of(0, 0))
    with pytest.raises(ValueError):
        ex.sample_hitting_K(lat, 1.0, np.zeros(9, dtype=bool), s, substream(9))


def test_heavy_boundary_traffic():
    lat = build_lattice(32)
    annulus = (lat.norm >= 0.9) & (lat.norm < 1.0)
    fracs = []
    for k in range(100):
        c = ex.sample_cloud_direct(lat, 20.0, substream(10, k))
        fracs.append((~c.occupied & annulus).sum() / annulus.sum())
    assert np.mean(fracs) < 0.05


def test_occupancy_batch_matches_direct():
    lat = build_lattice(8)
    occ = ex.sample_occupancy_batch(lat, 0.7, 50, substream(11))
    assert occ.shape == (50, lat.num_vertices)
    assert 0 < occ.mean() < 1


def test_continuum_guard_and_counts():
    with pytest.raises(ValueError):
        ex.sample_continuum_cloud_ball(1.0, 0.9, 1e-3, substream(12))
    rng = substream(13)
    counts = [ex.sample_continuum_cloud_ball(1.0, 0.5, 1e-4, rng, keep_paths=False)[0]
              for _ in range(2000)]
    mean = 2 * np.pi / np.log(2)
    assert abs(np.mean(counts) - mean) < 3 * np.sqrt(mean / 2000)


def test_continuum_backward_repelled_and_forward_hits():
    rng = substream(14)
    dt = 2.5e-5
    r = 0.5
    n_total = 4000
    _, _, pairs = ex.sample_continuum_cloud_ball(1.0, r, dt, rng, count=n_total,
                                                 keep_samples=False)
    n_in = sum(bwd.min_abs < r - 2 * np.sqrt(dt) for _, bwd in pairs)
    hit = sum(fwd.min_abs <= 0.25 for fwd, _ in pairs)
    assert n_in / n_total < 0.005
    p = hit / n_total
    # hitting probability log(1/0.5)/log(1/0.25) = 1/2 up to O(sqrt(dt)) bias
    assert abs(p - 0.5) < 0.03


def test_single_walk_vs_direct_hitting_stats():
    from diskperc.lattice import ball_vertices
    lat = build_lattice(16)
    K = ball_vertices(lat, (0, 0), 0.3)
    theta = np.arctan2(lat.y, lat.x)
    sector = (np.mod(theta, 2 * np.pi) // (np.pi / 2)).astype(int)

    def cells(sampler, seed):
        out = []
        for k in range(2500):
            c = sampler(lat, 0.4, substream(seed, k), hit_mask=K)
            hits = c.hit_first[c.hit_first >= 0] if c.count else np.zeros(0, dtype=int)
            out.append((min(len(hits), 4),
                        -1 if len(hits) == 0 else int(sector[hits[0]])))
        return out

    p = two_sample_chi2_pvalue(cells(ex.sample_cloud_direct, 20),
                               cells(ex.sample_cloud_single_walk, 21))
    assert p > 0.01
