"""Zero-boundary Gaussian field on the lattice disk, level sets, cable edges,
and the exploration martingale.

Sampling factors the Dirichlet energy through the edge-incidence matrix:
with one standard Gaussian per edge (boundary edges included), solving
L phi = B^T z gives Cov(phi) = L^-1 exactly, so one shared factorization
serves every replica.  Cable decorations reduce to one Bernoulli per edge:
conditionally on the endpoint values a >= h, b >= h, the bridge over a
length-1/2 cable stays above h with probability 1 - exp(-4(a-h)(b-h)).

The exploration grows a vertex set from a centered ball, stopping along any
direction where the field drops below the level; its martingale is the
equilibrium-weighted boundary sum, whose variance equals the capacity by the
last-exit identity.
"""
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .lattice import ball_vertices
from .rng import as_generator


def line_stay_probability(a, b):
    """Probability that a standard Brownian path stays above -a*t - b."""
    if a <= 0 or b <= 0:
        raise ValueError("slope and intercept must be positive")
    return -np.expm1(-2.0 * a * b)


def bridge_open_probability(a, b):
    """Probability that the length-1/2 bridge between values a, b >= 0 stays
    positive; zero if either endpoint touches the level."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = -np.expm1(-4.0 * a * b)
    return np.where((a > 0) & (b > 0), out, 0.0)


class FieldSampler:
    """Exact dGFF replicas sharing one Laplacian factorization."""

    def __init__(self, solver):
        self.solver = solver
        lat = solver.lattice
        E = lat.interior_edges
        Bd = lat.boundary_edges
        rows = np.concatenate([E[:, 0], E[:, 1], Bd[:, 0]])
        cols = np.concatenate([np.arange(E.shape[0]), np.arange(E.shape[0]),
                               E.shape[0] + np.arange(Bd.shape[0])])
        vals = np.concatenate([np.ones(E.shape[0]), -np.ones(E.shape[0]),
                               np.ones(Bd.shape[0])])
        self._Bt = sp.coo_matrix((vals, (rows, cols)),
                                 shape=(lat.num_vertices, E.shape[0] + Bd.shape[0])).tocsr()

    def sample(self, rng, reps=None):
        """One field (reps None) or a (N, reps) block of independent fields."""
        rng = as_generator(rng)
        k = 1 if reps is None else int(reps)
        z = rng.standard_normal((self._Bt.shape[1], k))
        phi = self.solver.solve(self._Bt @ z)
        return phi[:, 0] if reps is None else phi


def sample_dgff(solver, rng):
    return FieldSampler(solver).sample(rng)


def level_set(phi, h):
    return np.asarray(phi) >= h


@dataclass
class CableLevelSet:
    h: float
    vertices: np.ndarray     # {phi >= h}
    open_edges: np.ndarray   # per interior edge; open implies both ends in vertices


def cable_open_edges(lat, phi, h, rng):
    """Cable decoration of the level set: per-edge Bernoulli openings."""
    rng = as_generator(rng)
    src = lat.interior_edges[:, 0]
    dst = lat.interior_edges[:, 1]
    a = phi[src] - h
    b = phi[dst] - h
    p = bridge_open_probability(np.clip(a, 0, None), np.clip(b, 0, None))
    ok = (a >= 0) & (b >= 0)
    open_e = ok & (rng.uniform(size=p.shape) < p)
    return CableLevelSet(h=h, vertices=level_set(phi, h), open_edges=open_e)


def exploration_martingale(solver, K, phi):
    """Equilibrium-weighted field sum over the inner boundary of K."""
    em = solver.equilibrium_measure(np.asarray(K, dtype=bool))
    return float(np.dot(em.weights, phi[em.support]))


@dataclass
class ExplorationResult:
    explored: np.ndarray            # final K
    reached: bool                   # hit the disk's inner boundary at level >= h
    martingale: Optional[float]     # M at termination
    cap: Optional[float]            # cap at termination
    trajectory: list = field(default_factory=list)   # (M, cap) per step if recorded


def explore(phi, h, solver, r, record="final", stop_at_boundary=True):
    """Breadth-first level-set exploration from the centered r-ball.

    A visited vertex always joins the explored set; it extends the frontier
    only where the field is at least h.  Terminates when the frontier dies
    or, with stop_at_boundary, as soon as an inner-boundary vertex is crossed
    at level >= h.
    """
    lat = solver.lattice
    K = ball_vertices(lat, (0.0, 0.0), r)
    if not K.any():
        raise ValueError("initial ball contains no vertex")
    seen = K.copy()
    is_inner = np.zeros(lat.num_vertices, dtype=bool)
    is_inner[lat.inner_boundary] = True
    queue = deque()
    for v in np.nonzero(K)[0]:
        for w in lat.nbr[v]:
            if w >= 0 and not seen[w]:
                seen[w] = True
                queue.append(w)
    reached = bool(np.any(K & is_inner))
    trajectory = []
    while queue and not (reached and stop_at_boundary):
        v = queue.popleft()
        K[v] = True
        if phi[v] >= h:
            if is_inner[v]:
                reached = True
            for w in lat.nbr[v]:
                if w >= 0 and not seen[w]:
                    seen[w] = True
                    queue.append(w)
        if record == "all":
            em = solver.equilibrium_measure(K)
            trajectory.append((float(np.dot(em.weights, phi[em.support])), em.cap))
    em = solver.equilibrium_measure(K)
    M = float(np.dot(em.weights, phi[em.support]))
    return ExplorationResult(explored=K, reached=reached, martingale=M,
                             cap=em.cap, trajectory=trajectory)


def isomorphism_domination(u, n, r, eps, reps, seed, lam=0.5):
    """Estimate the level-set and vacant-set crossing probabilities that the
    field/excursion coupling orders.

    Returns (p_gff, se_gff, p_vac, se_vac): the first pair is the crossing of
    {phi >= sqrt(2u)} from the centered r-ball to norm >= 1-eps, the second
    the same event in the trace-level vacant set of excursions at u plus
    half-intensity loop clusters.  The coupling implies p_gff <= p_vac up to
    Monte Carlo error.
    """
    from .percolation import CrossingSpec, crossing_probability

    h = float(np.sqrt(2.0 * u))
    spec_g = CrossingSpec(model="gff-level", param=h, r=r, eps=eps)
    spec_v = CrossingSpec(model="vacant-excursion-loops", param=u, lam=lam, r=r, eps=eps)
    est_g = crossing_probability(spec_g, n, reps, seed)
    est_v = crossing_probability(spec_v, n, reps, seed + 1)
    return est_g.p_hat, est_g.stderr, est_v.p_hat, est_v.stderr
