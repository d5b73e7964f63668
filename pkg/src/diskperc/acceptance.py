"""Acceptance battery: one function per numbered criterion.

Each criterion returns a record dict(name, passed, detail, seconds) and is
driven both by the test suite and by the `validate` CLI subcommand.  Seeds
and tolerances are fixed here; nothing is calibrated at run time.
"""
import hashlib
import math
import time

import numpy as np
from scipy import stats

from . import coupling, excursions, gff, loopsoup, percolation, sle
from .lattice import ball_vertices, build_lattice
from .potential import (DirichletSolver, continuum_annulus_hit,
                        continuum_cap_ball, continuum_green)
from .rng import substream

PI3 = np.pi / 3.0


def _record(name, passed, detail, t0):
    return dict(name=name, passed=bool(passed), detail=detail,
                seconds=round(time.time() - t0, 2))


def chi2_poisson_pvalue(sample, mean):
    """Goodness-of-fit p-value of integer draws against Poisson(mean)."""
    sample = np.asarray(sample)
    kmax = int(sample.max())
    obs = np.bincount(sample, minlength=kmax + 1).astype(float)
    pmf = stats.poisson.pmf(np.arange(kmax + 1), mean)
    pmf = np.append(pmf, 1.0 - pmf.sum())
    obs = np.append(obs, 0.0)
    exp = pmf * sample.size
    # pool the tail so every cell expects at least 5
    while exp.size > 2 and exp[-1] < 5:
        exp[-2] += exp[-1]
        obs[-2] += obs[-1]
        exp, obs = exp[:-1], obs[:-1]
    while exp.size > 2 and exp[0] < 5:
        exp[1] += exp[0]
        obs[1] += obs[0]
        exp, obs = exp[1:], obs[1:]
    chi2 = ((obs - exp) ** 2 / exp).sum()
    return float(stats.chi2.sf(chi2, df=exp.size - 1))


def two_sample_chi2_pvalue(cells_a, cells_b):
    """Homogeneity p-value for two samples of integer category labels."""
    cats = sorted(set(cells_a) | set(cells_b))
    idx = {c: i for i, c in enumerate(cats)}
    ta = np.bincount([idx[c] for c in cells_a], minlength=len(cats)).astype(float)
    tb = np.bincount([idx[c] for c in cells_b], minlength=len(cats)).astype(float)
    # merge sparse categories
    order = np.argsort(ta + tb)
    merged_a, merged_b = [], []
    acc_a = acc_b = 0.0
    for i in order:
        acc_a += ta[i]
        acc_b += tb[i]
        if acc_a + acc_b >= 10:
            merged_a.append(acc_a)
            merged_b.append(acc_b)
            acc_a = acc_b = 0.0
    if acc_a + acc_b > 0:
        if merged_a:
            merged_a[-1] += acc_a
            merged_b[-1] += acc_b
        else:
            merged_a, merged_b = [acc_a], [acc_b]
    table = np.array([merged_a, merged_b])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 1.0
    return float(stats.chi2_contingency(table)[1])


def criterion_01():
    t0 = time.time()
    tol = 1e-12
    checks = [
        ("cap(B(1/2))", continuum_cap_ball(0.5), 2 * np.pi / np.log(2)),
        ("G(0,1/2)", continuum_green(0, 0.5), np.log(2) / (2 * np.pi)),
        ("annulus hit", continuum_annulus_hit(0.5, 0.25, 1.0), 0.5),
        ("p(1,1)", gff.line_stay_probability(1, 1), 1 - np.exp(-2)),
        ("rho_{8/3}(1/3)", sle.rho_kappa_alpha(8 / 3, 1 / 3), -2 / 3),
        ("rho_4(1/4)", sle.rho_kappa_alpha(4.0, 0.25), 0.0),
        ("lambda(4)", sle.lambda_kappa(4.0), 0.5),
        ("lambda(8/3)", sle.lambda_kappa(8 / 3), 0.0),
    ]
    worst = max(abs(v - e) for _, v, e in checks)
    return _record("C1 exact continuum formulas", worst <= tol,
                   f"max |err| = {worst:.2e} (tol {tol:g})", t0)


def criterion_02():
    t0 = time.time()
    tol = 1e-9
    lat2 = build_lattice(2)
    s2 = DirichletSolver(lat2)
    K0 = np.zeros(lat2.num_vertices, dtype=bool)
    K0[lat2.index_of(0, 0)] = True
    err = abs(s2.capacity(K0) - 8.0 / 3.0)
    s1 = DirichletSolver(build_lattice(1))
    err = max(err, abs(s1.green(0, 0) - 0.25))
    lat = build_lattice(16)
    s = DirichletSolver(lat)
    rng = substream(102)
    for _ in range(10):
        c = int(rng.integers(0, lat.num_vertices))
        K = ball_vertices(lat, lat.points[c], float(rng.uniform(0.05, 0.45)), closed=True)
        if not K.any():
            K[c] = True
        em = s.equilibrium_measure(K)
        Ge = s.solve(em.dense(lat.num_vertices))
        err = max(err, float(np.abs(Ge[K] - 1.0).max()))
    return _record("C2 exact discrete oracle", err <= tol,
                   f"max |err| = {err:.2e} (tol {tol:g})", t0)


def criterion_03():
    t0 = time.time()
    target = continuum_cap_ball(0.5)
    errs = {}
    for n in (32, 64, 128):
        s = DirichletSolver(build_lattice(n))
        errs[n] = abs(s.capacity(ball_vertices(s.lattice, (0, 0), 0.5)) - target)
    r1 = errs[32] / errs[64]
    r2 = errs[64] / errs[128]
    return _record("C3 capacity convergence", r1 >= 1.8 and r2 >= 1.8,
                   f"error ratios 32/64 = {r1:.2f}, 64/128 = {r2:.2f} (need >= 1.8)", t0)


def criterion_04(reps=10_000):
    t0 = time.time()
    lat2 = build_lattice(2)
    s2 = DirichletSolver(lat2)
    K0 = np.zeros(lat2.num_vertices, dtype=bool)
    K0[lat2.index_of(0, 0)] = True
    counts_direct = np.array([excursions.sample_cloud_direct(lat2, 1.0, substream(104, 0, k)).count
                              for k in range(reps)])
    counts_single = np.array([excursions.sample_cloud_single_walk(lat2, 0.5, substream(104, 1, k)).count
                              for k in range(reps)])
    counts_hit = np.array([excursions.sample_hitting_K(lat2, 1.0, K0, s2, substream(104, 2, k)).count
                           for k in range(reps)])
    rngc = substream(104, 3)
    counts_cont = np.array([excursions.sample_continuum_cloud_ball(1.0, 0.5, 1e-4, rngc,
                                                                   keep_paths=False)[0]
                            for k in range(reps)])
    ps = {
        "direct(12)": chi2_poisson_pvalue(counts_direct, 12.0),
        "single(6)": chi2_poisson_pvalue(counts_single, 6.0),
        "hitting(8/3)": chi2_poisson_pvalue(counts_hit, 8.0 / 3.0),
        "continuum(9.065)": chi2_poisson_pvalue(counts_cont, continuum_cap_ball(0.5)),
    }
    ok = all(p > 0.01 for p in ps.values())
    detail = ", ".join(f"{k}: p={v:.3f}" for k, v in ps.items())
    return _record("C4 Poisson count laws", ok, detail + " (need p > 0.01)", t0)


def criterion_05(reps=10_000, u=0.5):
    t0 = time.time()
    lat = build_lattice(32)
    s = DirichletSolver(lat)
    K = ball_vertices(lat, (0, 0), 0.3)
    theta = np.arctan2(lat.y, lat.x)
    sector = (np.mod(theta, 2 * np.pi) // (np.pi / 2)).astype(int)

    # direct clouds, batched: per replica the number of excursions meeting K
    # and the first-hit vertex of the first one that does
    rng = substream(1051)
    B = lat.boundary_edges.shape[0]
    n_exc = rng.poisson(u * B, size=reps)
    rep_ids = np.repeat(np.arange(reps), n_exc)
    eids = rng.integers(0, B, size=int(n_exc.sum()))
    entries = lat.boundary_edges[eids, 0].astype(np.int32)
    res = excursions.run_walks(lat, entries, rng, hit_mask=K)
    hit = res["hit_first"] >= 0
    counts_d = np.bincount(rep_ids[hit], minlength=reps)
    first_vertex = np.full(reps, -1, dtype=np.int64)
    for w in np.nonzero(hit)[0][::-1]:
        first_vertex[rep_ids[w]] = res["hit_first"][w]
    cells_d = [(min(int(c), 5), -1 if v < 0 else int(sector[v]))
               for c, v in zip(counts_d, first_vertex)]

    # local picture: Poisson(u cap) entries from the equilibrium law
    rng2 = substream(1052)
    em = s.equilibrium_measure(K)
    probs = em.weights / em.weights.sum()
    counts_l = rng2.poisson(u * em.cap, size=reps)
    cells_l = []
    for c in counts_l:
        v = em.support[rng2.choice(em.weights.size, p=probs)] if c else -1
        cells_l.append((min(int(c), 5), -1 if v < 0 else int(sector[v])))

    p = two_sample_chi2_pvalue(cells_d, cells_l)
    return _record("C5 sampler equivalence", p > 0.01,
                   f"two-sample chi-square p = {p:.3f} on (hit count, entry sector), "
                   f"{reps} replicas each", t0)


def criterion_06(mc_reps=10_000):
    t0 = time.time()
    lat = build_lattice(32)
    s = DirichletSolver(lat)
    rng = substream(106)
    worst = 0.0
    for _ in range(10):
        K = ball_vertices(lat, (0, 0), 0.3)
        grow = ball_vertices(lat, (float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.3, 0.3))),
                             float(rng.uniform(0.1, 0.4)))
        K |= grow
        em = s.equilibrium_measure(K)
        var = float(em.weights @ s.solve(em.dense(lat.num_vertices))[em.support])
        worst = max(worst, abs(var - em.cap))
    alg_ok = worst <= 1e-8
    lat16 = build_lattice(16)
    s16 = DirichletSolver(lat16)
    K16 = ball_vertices(lat16, (0, 0), 0.4)
    em16 = s16.equilibrium_measure(K16)
    fs = gff.FieldSampler(s16)
    phi = fs.sample(substream(106, 1), reps=mc_reps)
    M = em16.weights @ phi[em16.support]
    vhat = float(M.var(ddof=1))
    sd = em16.cap * math.sqrt(2.0 / (mc_reps - 1))
    mc_ok = abs(vhat - em16.cap) <= 3 * sd
    return _record("C6 exploration-martingale identity", alg_ok and mc_ok,
                   f"algebraic max|Var-cap| = {worst:.2e} (tol 1e-8); "
                   f"MC var {vhat:.3f} vs cap {em16.cap:.3f} (3sigma = {3*sd:.3f})", t0)


def criterion_07(reps_sep=2000, reps_mid=(2000, 1200, 500), seed=107):
    t0 = time.time()
    sep = {}
    for i, uu in enumerate((0.7, 1.4)):
        spec = percolation.CrossingSpec("vacant-excursion", uu, r=0.3, eps=0.1)
        sep[uu] = percolation.crossing_probability(spec, 64, reps_sep, seed + i)
    diff = sep[0.7].p_hat - sep[1.4].p_hat
    sigma = math.hypot(sep[0.7].stderr, sep[1.4].stderr)
    sep_ok = diff > 0.2 and diff > 5 * sigma
    grid = [0.85, 0.95, 1.05, 1.15, 1.25, 1.35]
    bands = {}
    for j, (n, reps) in enumerate(zip((32, 64, 128), reps_mid)):
        res = percolation.threshold_sweep("vacant-excursion", grid, [n], reps,
                                          seed + 10 + j, r=0.3, eps=0.1)
        fit = res.fits[n]
        bands[n] = (fit.midpoint, fit.band(3.0))
    band_txt = "; ".join(f"n={n}: m={m:.3f} band=({b[0]:.3f},{b[1]:.3f})"
                         for n, (m, b) in bands.items())
    contained = {n: (b[0] <= PI3 <= b[1]) for n, (m, b) in bands.items()}
    # desk-scale midpoints cannot equal the limit; require the drift across n
    # to move toward it
    mids = [bands[n][0] for n in (32, 64, 128)]
    trend_ok = abs(mids[2] - PI3) < abs(mids[0] - PI3)
    return _record("C7 vacant-set threshold trend", sep_ok and trend_ok,
                   f"p(0.7)-p(1.4) = {diff:.3f} (> 0.2 and > 5sigma = {5*sigma:.3f}); "
                   f"midpoints vs pi/3 = {PI3:.4f}: {band_txt}; contains pi/3: {contained}; "
                   f"drift toward pi/3: {trend_ok}", t0)


def criterion_08(reps=2000, seed=108):
    t0 = time.time()
    p02 = percolation.crossing_probability(
        percolation.CrossingSpec("gff-level", 0.2, r=0.3, eps=0.1), 48, reps, seed)
    p16 = percolation.crossing_probability(
        percolation.CrossingSpec("gff-level", 1.6, r=0.3, eps=0.1), 48, reps, seed + 1)
    lvl_ok = p02.p_hat >= 0.1 and p16.p_hat <= p02.p_hat / 2
    grid = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2]
    res = percolation.threshold_sweep("gff-level", grid, [48], reps, seed + 2,
                                      r=0.3, eps=0.1)
    mid = res.fits[48].midpoint
    mid_ok = 0.0 < mid <= 1.26
    return _record("C8 dGFF level-set trend", lvl_ok and mid_ok,
                   f"p(0.2) = {p02.p_hat:.3f} (>= 0.1), p(1.6) = {p16.p_hat:.3f} "
                   f"(<= half), midpoint = {mid:.3f} in (0, 1.26]", t0)


def criterion_09(reps=2000, seed=109):
    t0 = time.time()
    details = []
    ok = True
    for i, u in enumerate((0.3, 0.5, 0.8)):
        pg, sg, pv, sv = gff.isomorphism_domination(u, 48, 0.3, 0.1, reps, seed + 10 * i)
        margin = pg - pv
        lim = 2.0 * math.hypot(sg, sv)
        ok &= margin <= lim
        details.append(f"u={u}: p_gff={pg:.3f} p_vac={pv:.3f} margin={margin:+.3f} (2sig={lim:.3f})")
    return _record("C9 isomorphism domination", ok, "; ".join(details), t0)


def criterion_10(reps=10_000, seed=110):
    t0 = time.time()
    details = []
    ok = True
    for i, alpha in enumerate((1.0 / 3.0, 1.0)):
        p, se, pex = sle.restriction_check(alpha, 1.0, 0.5, reps, seed + i, n=128)
        ok &= abs(p - pex) <= 3 * se
        details.append(f"alpha={alpha:.3f}: p_mc={p:.4f} vs {pex:.4f} (|d|={abs(p-pex):.4f}, 3se={3*se:.4f})")
    return _record("C10 restriction formula", ok, "; ".join(details), t0)


def criterion_11(reps=800, seed=111):
    t0 = time.time()
    lo = sle.boundary_hit_statistic(8 / 3, 0.20, 50.0, 5e-5, 0.01, reps, substream(seed, 0))
    hi = sle.boundary_hit_statistic(8 / 3, 0.45, 50.0, 5e-5, 0.01, reps, substream(seed, 1))
    sep_ok = (lo - hi) >= 0.4
    fr = sle.boundary_hit_statistic(8 / 3, None, 50.0, 2e-4, 0.01, 300, substream(seed, 2),
                                    alphas=[0.15, 0.25, 0.35, 0.45])
    mono_ok = bool(np.all(np.diff(fr) <= 1e-12))
    return _record("C11 SLE boundary dichotomy", sep_ok and mono_ok,
                   f"frac(0.20) = {lo:.3f}, frac(0.45) = {hi:.3f} (sep {lo-hi:.3f} >= 0.4); "
                   f"common-noise grid {np.round(fr, 3).tolist()} nonincreasing: {mono_ok}", t0)


def criterion_12(reps=10_000, seed=112):
    t0 = time.time()
    lat2 = build_lattice(2)
    peel = loopsoup.peel_return_probabilities(lat2)
    soups = loopsoup.sample_loop_soup_batch(lat2, 0.5, reps, substream(seed, 0), peel=peel)
    counts_peel, lens_peel = [], []
    for s in soups:
        keep = s.lengths <= 12
        counts_peel.append(int(keep.sum()))
        lens_peel.extend(s.lengths[keep].tolist())
    counts_orac, lens_orac = [], []
    for k in range(reps):
        s = loopsoup.loop_rejection_oracle(lat2, 0.5, 12, substream(seed, 1, k), keep_loops=False)
        counts_orac.append(s.count)
        lens_orac.extend(s.lengths.tolist())
    p_count = two_sample_chi2_pvalue([min(c, 4) for c in counts_peel],
                                     [min(c, 4) for c in counts_orac])
    p_len = two_sample_chi2_pvalue(lens_peel, lens_orac)
    spec0 = percolation.CrossingSpec("vacant-excursion-loops", 0.8, lam=0.0, r=0.3, eps=0.1)
    spec1 = percolation.CrossingSpec("vacant-excursion", 0.8, r=0.3, eps=0.1)
    e0 = percolation.crossing_probability(spec0, 24, 256, seed + 7)
    e1 = percolation.crossing_probability(spec1, 24, 256, seed + 7)
    reduce_ok = e0.p_hat == e1.p_hat
    ok = p_count > 0.01 and p_len > 0.01 and reduce_ok
    return _record("C12 loop-soup validation", ok,
                   f"count p = {p_count:.3f}, length p = {p_len:.3f} (need > 0.01); "
                   f"lambda=0 bitwise reduction: {reduce_ok}", t0)


def criterion_13(seed=113):
    t0 = time.time()
    horizons = [2 ** 8, 2 ** 10, 2 ** 12, 2 ** 14]
    med = coupling.dyadic_deviation_medians(horizons, 1000, substream(seed, 0))
    lh = np.log(horizons)
    r2 = float(np.corrcoef(lh, med)[0, 1] ** 2)
    med2d = {}
    for n in (16, 32, 64):
        sups, _ = coupling.kmt_deviation_stats(n, 350, substream(seed, 1, n))
        med2d[n] = float(np.median(sups))
    ratios = (med2d[32] / med2d[16], med2d[64] / med2d[32])
    ratio_ok = all(0.4 <= r <= 0.9 for r in ratios)
    probs, slope = coupling.beurling_check(128, 10_000, substream(seed, 2))
    beur_ok = 0.40 <= slope <= 0.60
    ok = r2 >= 0.9 and ratio_ok and beur_ok
    return _record("C13 coupling scaling", ok,
                   f"1D medians {np.round(med, 2).tolist()} R^2 = {r2:.3f} (>= 0.9); "
                   f"2D ratios = ({ratios[0]:.2f}, {ratios[1]:.2f}) in [0.4, 0.9]; "
                   f"Beurling exponent = {slope:.3f} in [0.40, 0.60]", t0)


def criterion_14(reps=40_000, steps=20_000, seed=114):
    t0 = time.time()
    target = 1.0 - np.exp(-4.0)
    rng = substream(seed)
    T = 0.5
    dt = T / steps
    hits = 0
    chunk = 2000
    done = 0
    while done < reps:
        c = min(chunk, reps - done)
        x = np.ones(c)
        ok = np.ones(c, dtype=bool)
        remaining = T
        for k in range(steps - 1):
            remaining = T - (k + 1) * dt
            mean = x + (1.0 - x) * dt / (remaining + dt)
            sd = math.sqrt(dt * remaining / (remaining + dt))
            x = mean + sd * rng.standard_normal(c)
            ok &= x > 0.0
        hits += int(ok.sum())
        done += c
    p = hits / reps
    se = math.sqrt(p * (1 - p) / reps)
    passed = abs(p - target) <= 3 * se
    return _record("C14 bridge-minimum formula", passed,
                   f"MC {p:.5f} vs 1-e^-4 = {target:.5f} (|d| = {abs(p-target):.5f}, 3se = {3*se:.5f})", t0)


def _determinism_digest(seed):
    h = hashlib.sha256()
    lat = build_lattice(16)
    cl = excursions.sample_cloud_direct(lat, 0.8, substream(seed, 0))
    h.update(cl.occupied.tobytes())
    soup = loopsoup.sample_loop_soup(lat, 0.5, substream(seed, 1))
    h.update(soup.edges.tobytes())
    s = DirichletSolver(lat)
    phi = gff.FieldSampler(s).sample(substream(seed, 2))
    h.update(np.ascontiguousarray(phi).tobytes())
    f = sle.boundary_hit_statistic(8 / 3, 0.3, 5.0, 1e-3, 0.05, 50, substream(seed, 3))
    h.update(repr(f).encode())
    med = coupling.dyadic_deviation_medians([64, 256], 40, substream(seed, 4))
    h.update(med.tobytes())
    p, se, _ = sle.restriction_check(0.5, 1.0, 0.5, 100, seed + 5, n=24)
    h.update(repr((p, se)).encode())
    return h.hexdigest()


def criterion_15(seed=115):
    t0 = time.time()
    d1 = _determinism_digest(seed)
    d2 = _determinism_digest(seed)
    spec = percolation.CrossingSpec("vacant-excursion", 0.9, r=0.3, eps=0.1)
    e1 = percolation.crossing_probability(spec, 24, 300, seed, workers=1)
    e2 = percolation.crossing_probability(spec, 24, 300, seed, workers=4)
    ok = (d1 == d2) and (e1.p_hat == e2.p_hat)
    return _record("C15 determinism", ok,
                   f"digest rerun match: {d1 == d2} ({d1[:12]}...); "
                   f"workers 1 vs 4 identical: {e1.p_hat == e2.p_hat}", t0)


ALL = [criterion_01, criterion_02, criterion_03, criterion_04, criterion_05,
       criterion_06, criterion_07, criterion_08, criterion_09, criterion_10,
       criterion_11, criterion_12, criterion_13, criterion_14, criterion_15]


def run_all(selected=None, echo=print):
    """Run all (or the selected) criteria, echoing one line per result."""
    records = []
    for i, fn in enumerate(ALL, start=1):
        if selected and i not in selected:
            continue
        rec = fn()
        records.append(rec)
        status = "PASS" if rec["passed"] else "FAIL"
        echo(f"[{status}] {rec['name']} ({rec['seconds']}s): {rec['detail']}")
    return records
