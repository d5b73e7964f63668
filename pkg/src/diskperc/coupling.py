"""Walk/Brownian couplings and convergence experiments.

The one-dimensional coupling is dyadic: the endpoint displacement of the walk
is quantile-coupled to the Gaussian endpoint, then each dyadic midpoint is
quantile-coupled conditionally on its block endpoints (a hypergeometric count
against the Gaussian bridge).  Both marginals stay exact, and the sup
deviation over the horizon grows like log(horizon), which is what the
scaling fits check.  The planar coupling runs two independent copies along
the diagonal coordinates of the walk.

Everything reports with seeds and is reproducible bit for bit.
"""
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import gammaln, ndtr

from .rng import as_generator


@dataclass
class PairedPath:
    walk: np.ndarray   # integer walk positions at integer times (1D or (T+1, 2))
    bm: np.ndarray     # Brownian positions at the same times
    horizon: int

    def deviation(self):
        return np.abs(self.bm - self.walk).max()


def _hypergeom_quantile(u, M, ngood, nsample):
    """Vectorized hypergeometric quantile: smallest x with CDF(x) >= u."""
    x = np.arange(nsample + 1)
    ng = ngood[:, None]
    xs = x[None, :]
    ok = (xs <= ng) & (nsample - xs <= M - ng)
    with np.errstate(invalid="ignore"):
        logpmf = (gammaln(ng + 1) - gammaln(xs + 1) - gammaln(np.maximum(ng - xs, 0) + 1)
                  + gammaln(M - ng + 1) - gammaln(nsample - xs + 1)
                  - gammaln(np.maximum(M - ng - nsample + xs, 0) + 1)
                  - (gammaln(M + 1) - gammaln(nsample + 1) - gammaln(M - nsample + 1)))
    pmf = np.where(ok, np.exp(logpmf), 0.0)
    cdf = np.cumsum(pmf, axis=1)
    total = cdf[:, -1:]
    idx = (cdf < u[:, None] * total).sum(axis=1)
    return np.minimum(idx, nsample)


def _dyadic_block(paths, h, rng):
    """Coupled (B, Y) on 0..h from 0: X shape (paths, h+1) for both."""
    if h < 2 or (h & (h - 1)) != 0:
        raise ValueError("block length must be a power of two >= 2")
    B = np.zeros((paths, h + 1))
    Y = np.zeros((paths, h + 1), dtype=np.int64)
    xi = rng.standard_normal(paths)
    B[:, h] = np.sqrt(h) * xi
    Y[:, h] = 2 * stats.binom.ppf(ndtr(xi), h, 0.5).astype(np.int64) - h
    b = h // 2
    while b >= 1:
        mids = np.arange(b, h, 2 * b)
        left = mids - b
        right = mids + b
        xi = rng.standard_normal((paths, mids.size))
        B[:, mids] = 0.5 * (B[:, left] + B[:, right]) + np.sqrt(b / 2.0) * xi
        up_total = (Y[:, right] - Y[:, left] + 2 * b) // 2
        q = _hypergeom_quantile(ndtr(xi).ravel(), 2 * b, up_total.ravel(), b)
        Y[:, mids] = Y[:, left] + 2 * q.reshape(paths, mids.size) - b
        b //= 2
    return B, Y


def dyadic_coupling_1d(horizon, rng, paths=1):
    """Coupled walk/Brownian pair(s) over a power-of-two horizon >= 2."""
    rng = as_generator(rng)
    if horizon < 2:
        raise ValueError("horizon must be at least 2")
    if horizon & (horizon - 1):
        raise ValueError("horizon must be a power of two")
    B, Y = _dyadic_block(paths, horizon, rng)
    if paths == 1:
        return PairedPath(walk=Y[0], bm=B[0], horizon=horizon)
    return [PairedPath(walk=Y[k], bm=B[k], horizon=horizon) for k in range(paths)]


def dyadic_deviation_medians(horizons, paths, rng, chunk=100):
    """Median sup-deviation per horizon (integer times), for the scaling fit."""
    rng = as_generator(rng)
    med = []
    for h in horizons:
        devs = []
        left = paths
        while left > 0:
            c = min(chunk, left)
            B, Y = _dyadic_block(c, h, rng)
            devs.append(np.abs(B - Y).max(axis=1))
            left -= c
        med.append(float(np.median(np.concatenate(devs))))
    return np.asarray(med)


def _planar_pair(n, rng, max_blocks=24, start_walk=(0, 0), start_bm=(0.0, 0.0)):
    """Coupled planar walk and Brownian motion in walk units, grown block by
    block until one of them leaves the disk of radius n.

    Returns positions (T+1, 2) for both, truncated at the first exit step.
    The walk's diagonal coordinates are two independent simple walks, each
    coupled to an independent Brownian coordinate.
    """
    block = 1 << max(4, int(np.ceil(np.log2(max(4 * n * n, 16)))))
    U = [np.zeros(1, dtype=np.int64)]
    V = [np.zeros(1, dtype=np.int64)]
    W1 = [np.zeros(1)]
    W2 = [np.zeros(1)]
    sw = np.asarray(start_walk, dtype=np.float64)
    sb = np.asarray(start_bm, dtype=np.float64)
    for _ in range(max_blocks):
        B1, Y1 = _dyadic_block(1, block, rng)
        B2, Y2 = _dyadic_block(1, block, rng)
        U.append(U[-1][-1] + Y1[0][1:])
        V.append(V[-1][-1] + Y2[0][1:])
        W1.append(W1[-1][-1] + B1[0][1:])
        W2.append(W2[-1][-1] + B2[0][1:])
        u = np.concatenate(U)
        v = np.concatenate(V)
        w1 = np.concatenate(W1)
        w2 = np.concatenate(W2)
        walk = np.stack([(u + v) / 2.0, (u - v) / 2.0], axis=1) + sw
        bm = np.stack([(w1 + w2) / 2.0, (w1 - w2) / 2.0], axis=1) + sb
        rw = np.hypot(walk[:, 0], walk[:, 1])
        rb = np.hypot(bm[:, 0], bm[:, 1])
        dead = np.nonzero((rw >= n) | (rb >= n))[0]
        if dead.size:
            k = dead[0]
            return walk[: k + 1], bm[: k + 1]
    return walk, bm


def kmt_2d(n, rng):
    """One coupled planar pair killed at the circle of radius n (walk units);
    the Brownian marginal is the diffusive rescaling of the walk clock."""
    rng = as_generator(rng)
    if n < 2:
        raise ValueError("need n >= 2")
    walk, bm = _planar_pair(n, rng)
    return PairedPath(walk=walk, bm=bm, horizon=walk.shape[0] - 1)


def kmt_deviation_stats(n, reps, rng):
    """Sup deviation (disk units) and walk exit angle per coupled pair."""
    rng = as_generator(rng)
    sups = np.zeros(reps)
    angles = np.zeros(reps)
    for k in range(reps):
        walk, bm = _planar_pair(n, rng)
        sups[k] = np.hypot(*(walk - bm).T).max() / n
        angles[k] = np.arctan2(walk[-1, 1], walk[-1, 0])
    return sups, angles


def last_exit_gap(r, n, reps, rng, s_grid=(5.0, 10.0, 20.0, 40.0)):
    """Distance between the walk and Brownian last-exit points of the r-ball
    under the planar coupling, plus the Brownian last-exit angles.

    Returns (gaps, exceed, angles): gaps in disk units, exceedance rates of
    s*log(n)/n over the s grid, and the continuum last-exit angle sample.
    """
    if not 0.5 < r < 1:
        raise ValueError("need r in (1/2, 1)")
    rng = as_generator(rng)
    gaps = np.zeros(reps)
    angles = np.zeros(reps)
    rn = r * n
    for k in range(reps):
        walk, bm = _planar_pair(n, rng)
        in_w = np.nonzero(np.hypot(walk[:, 0], walk[:, 1]) <= rn)[0]
        in_b = np.nonzero(np.hypot(bm[:, 0], bm[:, 1]) <= rn)[0]
        pw = walk[in_w[-1]] if in_w.size else walk[0]
        pb = bm[in_b[-1]] if in_b.size else bm[0]
        gaps[k] = np.hypot(*(pw - pb)) / n
        angles[k] = np.arctan2(pb[1], pb[0])
    thresh = np.asarray(s_grid) * np.log(n) / n
    exceed = (gaps[None, :] >= thresh[:, None]).mean(axis=1)
    return gaps, exceed, angles


def beurling_check(n, reps, rng, R=0.3, ds=(2, 4, 8, 16), common_noise=True):
    """Escape probabilities around a slit tip and the fitted distance exponent.

    The obstacle is the lattice segment {(i, 0): 0 <= i <= n}, the walk starts
    at (-d, 0), and escape means reaching distance R*n from the start before
    hitting the segment.  Returns (probs, fitted exponent).  With common
    noise the escape indicator is pointwise monotone in d.
    """
    rng = as_generator(rng)
    ds = np.asarray(ds, dtype=np.int64)
    if np.any(ds == 0):
        raise ValueError("start on the obstacle has escape probability zero")
    Rn = R * n
    steps_cap = int(50 * Rn * Rn)
    esc = np.zeros((len(ds), reps), dtype=bool)
    chunk = 2000
    done = 0
    while done < reps:
        c = min(chunk, reps - done)
        if common_noise:
            pos = np.tile(np.stack([-ds, np.zeros_like(ds)], axis=1)[:, None, :], (1, c, 1)).astype(np.int64)
            alive = np.ones((len(ds), c), dtype=bool)
            res = np.zeros((len(ds), c), dtype=bool)
            start = pos.copy()
            for _ in range(steps_cap):
                if not alive.any():
                    break
                step = rng.integers(0, 4, size=c)
                move = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])[step]
                pos = pos + move[None, :, :]
                on_seg = (pos[:, :, 1] == 0) & (pos[:, :, 0] >= 0) & (pos[:, :, 0] <= n)
                far = np.hypot(pos[:, :, 0] - start[:, :, 0], pos[:, :, 1]) >= Rn
                res |= alive & far & ~on_seg
                alive &= ~(on_seg | far)
            esc[:, done:done + c] = res
        else:
            for j, d in enumerate(ds):
                for k in range(c):
                    x, y = -int(d), 0
                    for _ in range(steps_cap):
                        s = int(rng.integers(0, 4))
                        x += (1, -1, 0, 0)[s]
                        y += (0, 0, 1, -1)[s]
                        if y == 0 and 0 <= x <= n:
                            break
                        if np.hypot(x + d, y) >= Rn:
                            esc[j, done + k] = True
                            break
        done += c
    probs = esc.mean(axis=1)
    slope = np.polyfit(np.log(ds), np.log(np.clip(probs, 1e-9, None)), 1)[0]
    return probs, float(slope)


def segment_mask(lat, a, b):
    """Vertices on the real-axis segment [a, b] (disk units)."""
    i = lat.coords[:, 0]
    return (lat.coords[:, 1] == 0) & (i >= int(np.ceil(a * lat.n))) & (i <= int(np.floor(b * lat.n)))


def capacity_convergence_table(ns, ref_n=320, ball_r=0.5, seg=(0.2, 0.8)):
    """Discrete-vs-reference capacities for a ball and a radial segment.

    The ball error is against the closed form; the segment has no closed form,
    so the reference is the finest-mesh value and the table shows the Cauchy
    decay.  Rows: dict(shape, n, cap, ref, err).
    """
    from .lattice import ball_vertices, build_lattice
    from .potential import DirichletSolver, continuum_cap_ball

    rows = []
    ref_ball = continuum_cap_ball(ball_r)
    lat_ref = build_lattice(ref_n)
    ref_seg = DirichletSolver(lat_ref).capacity(segment_mask(lat_ref, *seg))
    for n in ns:
        lat = build_lattice(n)
        s = DirichletSolver(lat)
        cb = s.capacity(ball_vertices(lat, (0, 0), ball_r))
        rows.append(dict(shape="ball", n=n, cap=cb, ref=ref_ball, err=abs(cb - ref_ball)))
        cs = s.capacity(segment_mask(lat, *seg))
        rows.append(dict(shape="segment", n=n, cap=cs, ref=ref_seg, err=abs(cs - ref_seg)))
    return rows


def boundary_capacity_growth(ns):
    """Capacity of a radial segment reaching within n^(-1/2) of the boundary;
    grows like log(n).  Returns (ns, caps, fitted constant)."""
    from .lattice import build_lattice
    from .potential import DirichletSolver

    caps = []
    for n in ns:
        lat = build_lattice(n)
        depth = (n - int(np.ceil(np.sqrt(n)))) / n
        K = segment_mask(lat, 0.0, depth)
        caps.append(DirichletSolver(lat).capacity(K))
    caps = np.asarray(caps)
    c = float(np.polyfit(np.log(ns), caps, 1)[0])
    return np.asarray(ns), caps, c


def excursion_match(r, n, u, reps, rng, s_grid=(5.0, 10.0, 20.0, 40.0)):
    """Greedy entry-matched coupling between continuum and discrete clouds
    through the r-ball; reports the per-pair sup-distance sample.

    Counts are quantile-coupled Poisson variables; entry points are matched
    in angular order; each matched pair evolves under the planar walk/BM
    coupling until the last exit of the ball.  Unmatched trajectories (count
    mismatch) are recorded as infinite deviations.  Returns (sup_distances,
    exceedance over s*log(n)/n, mismatch fraction).
    """
    from .lattice import build_lattice
    from .potential import DirichletSolver, continuum_cap_ball
    from .lattice import ball_vertices

    rng = as_generator(rng)
    lat = build_lattice(n)
    solver = DirichletSolver(lat)
    K = ball_vertices(lat, (0, 0), r)
    em = solver.equilibrium_measure(K)
    probs = em.weights / em.weights.sum()
    mean_d = u * em.cap
    mean_c = u * continuum_cap_ball(r)
    rn = r * n
    sups = []
    mism = 0
    total_pairs = 0
    for _ in range(reps):
        uu = rng.uniform()
        Nc = int(stats.poisson.ppf(uu, mean_c))
        Nd = int(stats.poisson.ppf(uu, mean_d))
        m = min(Nc, Nd)
        mism += abs(Nc - Nd)
        total_pairs += max(Nc, Nd)
        if m == 0:
            continue
        th = np.sort(rng.uniform(0, 2 * np.pi, size=Nc))[:m]
        ent = em.support[rng.choice(em.weights.size, size=Nd, p=probs)]
        ang_d = np.arctan2(lat.coords[ent, 1], lat.coords[ent, 0])
        ent = ent[np.argsort(ang_d)][:m]
        for j in range(m):
            z = rn * np.exp(1j * th[j])
            x = lat.coords[ent[j]]
            walk, bm = _planar_pair(n, rng, start_walk=(x[0], x[1]),
                                    start_bm=(z.real, z.imag))
            rw = np.hypot(walk[:, 0], walk[:, 1])
            rb = np.hypot(bm[:, 0], bm[:, 1])
            inside = np.nonzero((rw <= rn) | (rb <= rn))[0]
            last = inside[-1] if inside.size else 0
            seg = slice(0, last + 1)
            sups.append(np.hypot(*(walk[seg] - bm[seg]).T).max() / n)
    sups = np.asarray(sups)
    thresh = np.asarray(s_grid) * np.log(n) / n
    exceed = (sups[None, :] >= thresh[:, None]).mean(axis=1) if sups.size else np.ones(len(s_grid))
    return sups, exceed, (mism / total_pairs if total_pairs else 0.0)
