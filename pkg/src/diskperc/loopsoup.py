"""Random-walk loop soup on the lattice disk.

Sampling uses vertex peeling: fix an ordering of the vertices; the loops
whose earliest vertex in the ordering is x form, inside the graph with all
earlier vertices removed, a Poisson family of mass log(1/(1 - r_x)), where
r_x is the return probability of the killed walk before leaving that graph.
A loop with J returns (J logarithmic-series distributed) is the
concatenation of J independent return excursions, sampled here by rejection.

All return probabilities come from a single LDU factorization of the
Dirichlet Laplacian in reversed peeling order: the pivot produced when vertex
x is eliminated equals 1/G_H(x,x) for the trailing subgraph H, hence
r_x = 1 - pivot/4.  The discrete-time soup sampled this way has the same
trace law as the continuous-time soup, which is all the cluster logic needs.

Cluster structure is computed at the trace level (loops sharing a vertex);
cable-interior merges are not modeled except through the exact sign-cluster
backend available at intensity 1/2 (see `sign_cluster_occupied`).
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .potential import dirichlet_laplacian
from .rng import as_generator

REJECTION_MAX_VERTICES = 100
REJECTION_MAX_LEN = 20


@dataclass
class DiscreteLoop:
    base: int                # earliest vertex of the loop in the peel order
    vertices: np.ndarray     # cyclic sequence, first == last

    @property
    def length(self):
        return self.vertices.shape[0] - 1


@dataclass
class LoopSoupSample:
    lam: float
    bases: np.ndarray        # base vertex per loop (earliest vertex in the peel)
    lengths: np.ndarray      # total step count per loop
    edges: np.ndarray        # (M, 2) vertex pairs traversed by accepted loop steps
    loop_of_edge: np.ndarray  # loop id per edge row
    loops: Optional[list] = None   # full vertex sequences when requested

    @property
    def count(self):
        return len(self.bases)

    def loop(self, k):
        """Materialize loop k; needs keep_loops sampling."""
        if self.loops is None:
            raise ValueError("soup was sampled without vertex sequences")
        return DiscreteLoop(base=int(self.bases[k]), vertices=self.loops[k])

    def occupied_vertices(self, num_vertices):
        occ = np.zeros(num_vertices, dtype=bool)
        if self.edges.size:
            occ[self.edges[:, 0]] = True
            occ[self.edges[:, 1]] = True
        occ[self.bases] = True
        return occ

    def cluster_labels(self, num_vertices):
        """Connected-component label per vertex for the union of loop traces;
        -1 off the traces.  Loops sharing a vertex share a label."""
        occ = self.occupied_vertices(num_vertices)
        if self.edges.size:
            g = sp.coo_matrix(
                (np.ones(self.edges.shape[0]), (self.edges[:, 0], self.edges[:, 1])),
                shape=(num_vertices, num_vertices))
            _, lab = connected_components(g + g.T, directed=False)
        else:
            lab = np.arange(num_vertices)
        lab = np.where(occ, lab, -1)
        return lab


def peel_return_probabilities(lat, order=None):
    """Return probability r_i of the killed walk at each peel vertex before
    leaving the graph stripped of all earlier peel vertices.

    One natural-order factorization of the reordered Dirichlet Laplacian
    yields every r_i exactly (no pivoting happens: the matrix is an M-matrix
    and the elimination is a sequence of Schur complements).
    """
    if order is None:
        order = lat.hilbert_order()
    order = np.asarray(order, dtype=np.int64)
    L = dirichlet_laplacian(lat)
    perm = order[::-1]
    Lp = L[perm][:, perm].tocsc()
    lu = spla.splu(Lp, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                   options=dict(SymmetricMode=True))
    if not (np.array_equal(lu.perm_r, np.arange(L.shape[0]))
            and np.array_equal(lu.perm_c, np.arange(L.shape[0]))):
        raise RuntimeError("factorization reordered the peel; pivots unusable")
    piv = lu.U.diagonal()
    r = 1.0 - piv[::-1] / 4.0
    return order, np.clip(r, 0.0, 1.0 - 1e-15)


def _logarithmic_rvs(r, rng):
    """Logarithmic-series variates, P(J=j) proportional to r^j / j (Kemp)."""
    r = np.asarray(r, dtype=np.float64)
    out = np.ones(r.shape, dtype=np.int64)
    v = rng.uniform(size=r.shape)
    need = v < r
    if need.any():
        u = rng.uniform(size=int(need.sum()))
        q = 1.0 - np.power(1.0 - r[need], u)
        vv = v[need]
        j = np.ones(q.shape, dtype=np.int64)
        lo = vv < q * q
        with np.errstate(divide="ignore", invalid="ignore"):
            j[lo] = np.maximum(1, (1.0 + np.log(vv[lo]) / np.log(q[lo])).astype(np.int64))
        mid = (~lo) & (vv <= q)
        j[mid] = 1
        j[(~lo) & (vv > q)] = 2
        out[need] = j
    return out


def sample_loop_soup(lat, lam, rng, *, order=None, peel=None, keep_loops=False):
    """Vertex-peeling sampler for the loop soup at intensity lam.

    `peel` may carry a precomputed (order, r) pair so repeated sampling does
    not refactorize.  Loops are returned with their base vertex, length, and
    the multiset of traversed edges (enough for trace-level clusters).
    """
    return sample_loop_soup_batch(lat, lam, 1, rng, order=order, peel=peel,
                                  keep_loops=keep_loops)[0]


def sample_loop_soup_batch(lat, lam, reps, rng, *, order=None, peel=None,
                           keep_loops=False):
    """Independent soup replicas sharing one walker pool (amortizes the
    stepping overhead across replicas)."""
    rng = as_generator(rng)
    if lam <= 0:
        raise ValueError("loop-soup intensity must be positive")
    if peel is None:
        order, r = peel_return_probabilities(lat, order)
    else:
        order, r = peel
    rank = np.empty(lat.num_vertices, dtype=np.int64)
    rank[order] = np.arange(lat.num_vertices)
    mass = np.log1p(-r) * -1.0
    counts = rng.poisson(lam * np.tile(mass, reps))          # (reps * N,)
    loop_bases = np.repeat(np.tile(order, reps), counts)
    rep_of_loop = np.repeat(np.repeat(np.arange(reps), lat.num_vertices), counts)
    if loop_bases.size == 0:
        empty = [LoopSoupSample(lam=lam, bases=np.zeros(0, dtype=np.int64),
                                lengths=np.zeros(0, dtype=np.int64),
                                edges=np.zeros((0, 2), dtype=np.int32),
                                loop_of_edge=np.zeros(0, dtype=np.int64),
                                loops=[] if keep_loops else None)
                 for _ in range(reps)]
        return empty
    n_loops = loop_bases.size
    excursions_left = _logarithmic_rvs(np.repeat(np.tile(r, reps), counts), rng)
    base_rank = rank[loop_bases]

    # walkers: one per loop, running rejection attempts for the pending excursion
    nbr = lat.nbr
    pos = loop_bases.astype(np.int32).copy()
    live = np.arange(n_loops)
    seg_from, seg_to, seg_loop, seg_attempt = [], [], [], []
    acc_loop, acc_att = [], []
    attempt = np.zeros(n_loops, dtype=np.int64)
    iters = 0
    while live.size:
        iters += 1
        if iters > 50_000_000:
            raise RuntimeError("loop-soup walker failed to terminate")
        dirs = rng.integers(0, 4, size=live.size, dtype=np.int8)
        nxt = nbr[pos[live], dirs]
        off_graph = (nxt < 0) | (rank[np.maximum(nxt, 0)] < base_rank[live])
        seg_from.append(pos[live].copy())
        seg_to.append(nxt)
        seg_loop.append(live.copy())
        seg_attempt.append(attempt[live].copy())
        returned = (~off_graph) & (nxt == loop_bases[live])
        ret = live[returned]
        if ret.size:
            acc_loop.append(ret)
            acc_att.append(attempt[ret].copy())
            excursions_left[ret] -= 1
        # rejected attempts restart fresh from the base; a return opens the
        # next excursion, so both bump the attempt counter
        attempt[live[off_graph | returned]] += 1
        pos[live] = np.where(off_graph | returned, loop_bases[live], nxt)
        finished = returned & (excursions_left[live] == 0)
        live = live[~finished]
    seg_from = np.concatenate(seg_from)
    seg_to = np.concatenate(seg_to)
    seg_loop = np.concatenate(seg_loop)
    seg_attempt = np.concatenate(seg_attempt)
    # keep only steps belonging to accepted (returned) attempts
    stride = attempt.max() + 1
    acc_keys = np.concatenate(acc_loop).astype(np.int64) * stride + np.concatenate(acc_att)
    seg_keys = seg_loop.astype(np.int64) * stride + seg_attempt
    keep = np.isin(seg_keys, acc_keys)
    seg_from, seg_to, seg_loop = seg_from[keep], seg_to[keep].astype(np.int32), seg_loop[keep]
    # loops were generated replica-major, so per-replica blocks are slices
    loop_order = np.argsort(seg_loop, kind="stable")
    sf, st = seg_from[loop_order], seg_to[loop_order]
    lengths = np.bincount(seg_loop, minlength=n_loops)
    loop_starts = np.concatenate([[0], np.cumsum(lengths)])
    rep_lo = np.searchsorted(rep_of_loop, np.arange(reps))
    rep_hi = np.searchsorted(rep_of_loop, np.arange(reps), side="right")
    out = []
    for rep in range(reps):
        lo, hi = rep_lo[rep], rep_hi[rep]
        if lo == hi:
            out.append(LoopSoupSample(lam=lam, bases=np.zeros(0, dtype=np.int64),
                                      lengths=np.zeros(0, dtype=np.int64),
                                      edges=np.zeros((0, 2), dtype=np.int32),
                                      loop_of_edge=np.zeros(0, dtype=np.int64),
                                      loops=[] if keep_loops else None))
            continue
        a, b = loop_starts[lo], loop_starts[hi]
        local_len = lengths[lo:hi]
        loops = None
        if keep_loops:
            loops = []
            for l in range(lo, hi):
                la, lb = loop_starts[l], loop_starts[l + 1]
                loops.append(np.concatenate([sf[la:lb], st[lb - 1:lb]])
                             if lb > la else np.zeros(0, dtype=np.int32))
        out.append(LoopSoupSample(
            lam=lam, bases=loop_bases[lo:hi], lengths=local_len,
            edges=np.stack([sf[a:b], st[a:b]], axis=1).astype(np.int32),
            loop_of_edge=np.repeat(np.arange(hi - lo), local_len), loops=loops))
    return out


def loop_rejection_oracle(lat, lam, max_len, rng, *, keep_loops=True):
    """Validation sampler for tiny lattices: loops drawn length by length.

    For each vertex x and even length m <= max_len, the number of rooted
    loops is Poisson(lam * q_m(x,x) / m) with q_m the killed m-step return
    probability (computed by dense matrix powers), and each loop is sampled
    by rejection: run m steps, accept when the walk stayed inside and
    returned.  Uniform rotation recovers the unrooted law.
    """
    rng = as_generator(rng)
    N = lat.num_vertices
    if N > REJECTION_MAX_VERTICES or max_len > REJECTION_MAX_LEN:
        raise ValueError("rejection oracle is restricted to tiny instances")
    P = np.zeros((N, N))
    for v in range(N):
        for w in lat.nbr[v]:
            if w >= 0:
                P[v, w] = 0.25
    q_diag = {}
    Pm = np.eye(N)
    for m in range(1, max_len + 1):
        Pm = Pm @ P
        q_diag[m] = Pm.diagonal().copy()
    bases, lengths, loops = [], [], []
    nbr = lat.nbr
    for m in range(2, max_len + 1, 2):
        means = lam * q_diag[m] / m
        counts = rng.poisson(means)
        for x in np.nonzero(counts)[0]:
            for _ in range(counts[x]):
                while True:
                    seq = [x]
                    ok = True
                    v = x
                    for _ in range(m):
                        v = nbr[v, rng.integers(0, 4)]
                        if v < 0:
                            ok = False
                            break
                        seq.append(v)
                    if ok and seq[-1] == x:
                        break
                shift = int(rng.integers(0, m))
                cyc = seq[:-1]
                rooted = cyc[shift:] + cyc[:shift] + [cyc[shift]]
                bases.append(min(rooted))
                lengths.append(m)
                loops.append(np.asarray(rooted, dtype=np.int32))
    bases = np.asarray(bases, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if loops:
        e_from = np.concatenate([l[:-1] for l in loops])
        e_to = np.concatenate([l[1:] for l in loops])
        loop_of_edge = np.repeat(np.arange(len(loops)), lengths)
    else:
        e_from = e_to = np.zeros(0, dtype=np.int32)
        loop_of_edge = np.zeros(0, dtype=np.int64)
    return LoopSoupSample(lam=lam, bases=bases, lengths=lengths,
                          edges=np.stack([e_from, e_to], axis=1).astype(np.int32),
                          loop_of_edge=loop_of_edge,
                          loops=loops if keep_loops else None)


def rejection_truncation_tail(lat, max_len):
    """Loop-measure mass ignored by the length truncation, and the total mass.

    Uses the spectrum of the killed kernel: mass of length-m loops is
    tr(P^m)/m, summed in closed form past the cutoff.
    """
    N = lat.num_vertices
    if N > REJECTION_MAX_VERTICES:
        raise ValueError("tail bound is restricted to tiny instances")
    P = np.zeros((N, N))
    for v in range(N):
        for w in lat.nbr[v]:
            if w >= 0:
                P[v, w] = 0.25
    eig = np.linalg.eigvalsh((P + P.T) / 2.0)
    ms = np.arange(1, 4000)
    powers = eig[None, :] ** ms[:, None]
    mass_by_m = powers.sum(axis=1) / ms
    total = mass_by_m.sum()
    tail = mass_by_m[max_len:].sum()
    return float(tail), float(total)


def combined_occupied(lat, cloud, soup):
    """Trace-level occupied set: the excursion trace together with every loop
    cluster whose vertex set meets it."""
    if cloud.occupied.shape[0] != lat.num_vertices:
        raise ValueError("cloud does not match this lattice")
    return combined_occupied_bitmap(lat, cloud.occupied, soup)


def combined_occupied_bitmap(lat, occupied, soup):
    occ = occupied.copy()
    if soup is None or soup.count == 0:
        return occ
    labels = soup.cluster_labels(lat.num_vertices)
    touching = np.unique(labels[(labels >= 0) & occ])
    if touching.size:
        occ |= np.isin(labels, touching)
    return occ


def sign_cluster_occupied(lat, cloud, phi, rng):
    """Exact cable-cluster backend at intensity 1/2.

    By the cable-system correspondence between the half-intensity loop soup
    and field sign components, a sign cluster of the cable field has the same
    vertex-set law as a loop cluster: an edge joins the cluster when both
    endpoint values share a sign and the bridge over the cable avoids zero,
    which happens with probability 1 - exp(-4 phi_x phi_y).  Returns the
    union of the excursion trace with every sign cluster meeting it.
    """
    rng = as_generator(rng)
    N = lat.num_vertices
    src = lat.interior_edges[:, 0]
    dst = lat.interior_edges[:, 1]
    prod = phi[src] * phi[dst]
    p_open = np.where(prod > 0, -np.expm1(-4.0 * np.clip(prod, 0, None)), 0.0)
    open_e = rng.uniform(size=p_open.shape) < p_open
    g = sp.coo_matrix((np.ones(int(open_e.sum())), (src[open_e], dst[open_e])),
                      shape=(N, N))
    _, labels = connected_components(g + g.T, directed=False)
    occ = cloud.occupied.copy()
    touching = np.unique(labels[occ])
    occ |= np.isin(labels, touching)
    return occ
