import numpy as np
import pytest

from diskperc import excursions as ex
from diskperc import loopsoup as ls
from diskperc.acceptance import chi2_poisson_pvalue, two_sample_chi2_pvalue
from diskperc.lattice import build_lattice
from diskperc.potential import DirichletSolver
from diskperc.rng import substream


@pytest.fixture(scope="module")
def lat2():
    return build_lattice(2)


@pytest.fixture(scope="module")
def peel2(lat2):
    return ls.peel_return_probabilities(lat2)


def test_rejects_nonpositive(lat2):
    with pytest.raises(ValueError):
        ls.sample_loop_soup(lat2, 0.0, substream(1))


def test_peel_pivots_match_dense(lat2):
    order, r = ls.peel_return_probabilities(lat2)
    L = np.zeros((9, 9))
    for v in range(9):
        L[v, v] = 4.0
        for w in lat2.nbr[v]:
            if w >= 0:
                L[v, w] -= 1.0
    for i, x in enumerate(order):
        H = order[i:]
        sub = L[np.ix_(H, H)]
        g = np.linalg.inv(sub)[0, 0]
        assert abs(r[i] - (1.0 - 1.0 / (4.0 * g))) < 1e-12


def test_total_mass_identity(lat2, peel2):
    _, r = peel2
    P = np.zeros((9, 9))
    for v in range(9):
        for w in lat2.nbr[v]:
            if w >= 0:
                P[v, w] = 0.25
    _, logdet = np.linalg.slogdet(np.eye(9) - P)
    assert abs(-np.log1p(-r).sum() - (-logdet)) < 1e-10


def test_per_base_counts_poisson(lat2, peel2):
    order, r = peel2
    lam = 0.5
    reps = 10_000
    soups = ls.sample_loop_soup_batch(lat2, lam, reps, substream(2), peel=peel2)
    base_counts = np.zeros((reps, 9), dtype=int)
    for k, s in enumerate(soups):
        for b in s.bases:
            base_counts[k, b] += 1
    for i, x in enumerate(order):
        mean = lam * (-np.log1p(-r[i]))
        if mean < 1e-4:
            assert base_counts[:, x].sum() == 0 or base_counts[:, x].mean() < 0.01
            continue
        assert chi2_poisson_pvalue(base_counts[:, x], mean) > 0.005


def test_loops_even_and_valid(lat2, peel2):
    soups = ls.sample_loop_soup_batch(lat2, 0.8, 500, substream(3), peel=peel2, keep_loops=True)
    for s in soups:
        assert np.all(s.lengths % 2 == 0)
        assert np.all(s.lengths >= 2)
        for lp in s.loops:
            assert lp[0] == lp[-1]


def test_oracle_guards(lat2):
    with pytest.raises(ValueError):
        ls.loop_rejection_oracle(build_lattice(16), 0.5, 12, substream(4))
    with pytest.raises(ValueError):
        ls.loop_rejection_oracle(lat2, 0.5, 40, substream(4))


def test_oracle_center_length2_mean(lat2):
    # q_2(0,0) = 1/4, so rooted length-2 loops at the center come at rate
    # lam * q_2 / 2 = lam/8; the unrooted loops visiting the center also get
    # the neighbor-rooted representatives, doubling the mass to lam/4
    lam = 0.5
    c = lat2.index_of(0, 0)
    count = 0
    reps = 8000
    for k in range(reps):
        s = ls.loop_rejection_oracle(lat2, lam, 2, substream(5, k), keep_loops=True)
        for lp in s.loops:
            if lp.size == 3 and c in lp:
                count += 1
    mean = lam / 4.0
    se = np.sqrt(mean / reps)
    assert abs(count / reps - mean) < 4 * se


def test_truncation_tail_small(lat2):
    tail, total = ls.rejection_truncation_tail(lat2, 20)
    assert tail / total < 0.01


def test_reorder_invariance(lat2):
    lam = 0.6
    reps = 8000
    orders = [lat2.hilbert_order(), np.arange(9)[::-1].astype(np.int32)]
    stats_ab = []
    for j, order in enumerate(orders):
        peel = ls.peel_return_probabilities(lat2, order=np.asarray(order))
        soups = ls.sample_loop_soup_batch(lat2, lam, reps, substream(6, j), peel=peel)
        counts = [min(s.count, 5) for s in soups]
        clusters = []
        for s in soups:
            lab = s.cluster_labels(9)
            sizes = np.bincount(lab[lab >= 0]) if s.count else np.zeros(0, dtype=int)
            clusters.append(min(int(sizes.max()) if sizes.size else 0, 8))
        stats_ab.append((counts, clusters))
    assert two_sample_chi2_pvalue(stats_ab[0][0], stats_ab[1][0]) > 0.01
    assert two_sample_chi2_pvalue(stats_ab[0][1], stats_ab[1][1]) > 0.01


def test_vertex_visit_probability(lat2, peel2):
    # P(some loop visits x) = 1 - (1 - r_x)^lam with r_x the full-disk return
    lam = 0.5
    s = DirichletSolver(lat2)
    c = lat2.index_of(0, 0)
    r_full = 1.0 - 1.0 / (4.0 * s.green(c, c))
    target = 1.0 - (1.0 - r_full) ** lam
    reps = 10_000
    soups = ls.sample_loop_soup_batch(lat2, lam, reps, substream(7), peel=peel2)
    hits = sum(bool(s_.occupied_vertices(9)[c]) for s_ in soups)
    se = np.sqrt(target * (1 - target) / reps)
    assert abs(hits / reps - target) < 3.5 * se


def test_combined_monotone_in_u_and_lambda():
    lat = build_lattice(12)
    peel = ls.peel_return_probabilities(lat)
    rng = substream(8)
    for k in range(20):
        cloud = ex.sample_cloud_direct(lat, 1.0, substream(8, k), keep_paths=True)
        soup_hi = ls.sample_loop_soup(lat, 0.5, substream(9, k), peel=peel)
        # thin the soup to lambda' = 0.25 by an independent 1/2-coin per loop
        keep = substream(10, k).uniform(size=soup_hi.count) < 0.5
        soup_lo = ls.LoopSoupSample(
            lam=0.25, bases=soup_hi.bases[keep],
            lengths=soup_hi.lengths[keep],
            edges=soup_hi.edges[keep[soup_hi.loop_of_edge]],
            loop_of_edge=soup_hi.loop_of_edge[keep[soup_hi.loop_of_edge]])
        occ_hi_u = ex.occupancy_of(lat, cloud)
        occ_lo_u = ex.occupancy_of(lat, cloud, ex.thin_mask(cloud, 0.5))
        hi = ls.combined_occupied_bitmap(lat, occ_hi_u, soup_hi)
        lo_u = ls.combined_occupied_bitmap(lat, occ_lo_u, soup_hi)
        lo_l = ls.combined_occupied_bitmap(lat, occ_hi_u, soup_lo)
        assert not np.any(lo_u & ~hi)
        assert not np.any(lo_l & ~hi)


def test_disjoint_cluster_excluded(lat2):
    # a soup cluster not meeting the excursion trace stays out
    occupied = np.zeros(9, dtype=bool)
    occupied[lat2.index_of(1, 1)] = True
    c = lat2.index_of(0, 0)
    w = lat2.index_of(-1, 0)
    soup = ls.LoopSoupSample(lam=0.5, bases=np.array([c]), lengths=np.array([2]),
                             edges=np.array([[c, w], [w, c]], dtype=np.int32),
                             loop_of_edge=np.array([0, 0]))
    out = ls.combined_occupied_bitmap(lat2, occupied, soup)
    assert np.array_equal(out, occupied)
    occupied2 = occupied.copy()
    occupied2[w] = True
    out2 = ls.combined_occupied_bitmap(lat2, occupied2, soup)
    assert out2[c] and out2[w]


def test_sign_backend_dominates_trace():
    from diskperc import gff
    lat = build_lattice(24)
    solver = DirichletSolver(lat)
    fs = gff.FieldSampler(solver)
    peel = ls.peel_return_probabilities(lat)
    from diskperc.percolation import crossing_in_grid
    from diskperc.lattice import ball_vertices
    inner = ball_vertices(lat, (0, 0), 0.3)
    outer = lat.norm >= 0.9
    u = 0.5
    reps = 300
    hits_trace = hits_sign = 0
    clouds = ex.sample_occupancy_batch(lat, u, reps, substream(11))
    soups = ls.sample_loop_soup_batch(lat, 0.5, reps, substream(12), peel=peel)
    phis = fs.sample(substream(13), reps=reps)
    rng_edge = substream(14)
    for k in range(reps):
        occ_t = ls.combined_occupied_bitmap(lat, clouds[k], soups[k])
        hits_trace += crossing_in_grid(lat, ~occ_t, inner, outer)
        cl = type("C", (), {"occupied": clouds[k]})
        occ_s = ls.sign_cluster_occupied(lat, cl, phis[:, k], rng_edge)
        hits_sign += crossing_in_grid(lat, ~occ_s, inner, outer)
    p_t, p_s = hits_trace / reps, hits_sign / reps
    se = np.sqrt((p_t * (1 - p_t) + p_s * (1 - p_s)) / reps)
    # the exact backend merges at least as much, so its vacant set crosses no
    # more often (up to noise)
    assert p_s <= p_t + 2.5 * se
