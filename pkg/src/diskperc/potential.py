"""Discrete and continuum potential theory on the disk.

The Dirichlet Laplacian of the killed walk is L = 4I - A over the disk
vertices (A = interior adjacency); its inverse is the Green function G with
the 1/4-per-visit normalization, i.e. G(x,y) = (1/4) E_x[visits to y before
the outer boundary].  Equilibrium weights are e_K(x) = 4 P_x(escape to the
outer boundary before returning to K), computed by one harmonic solve per K.
The last-exit identity sum_y G(x,y) e_K(y) = 1 on K holds to solver precision
and is the main internal consistency check.

Everything here is deterministic; the samplers treat this module as their
exact oracle.
"""
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# above this many vertices, fall back to conjugate gradients per solve
DIRECT_SOLVE_LIMIT = 600_000
CG_RTOL = 1e-12


@dataclass
class EquilibriumMeasure:
    support: np.ndarray   # vertex indices with positive weight
    weights: np.ndarray   # weight per support vertex, in [0, 4]
    cap: float

    def dense(self, num_vertices):
        e = np.zeros(num_vertices)
        e[self.support] = self.weights
        return e


def dirichlet_laplacian(lat):
    """Sparse 4I - A for the interior adjacency of the lattice disk."""
    N = lat.num_vertices
    src = lat.interior_edges[:, 0]
    dst = lat.interior_edges[:, 1]
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    data = -np.ones(rows.shape[0])
    L = sp.coo_matrix((data, (rows, cols)), shape=(N, N))
    return (L + sp.eye(N) * 4.0).tocsc()


class DirichletSolver:
    """Factorized Dirichlet Laplacian of a lattice disk.

    The factorization is computed once and shared; concurrent solves with
    distinct right-hand sides are safe.  Green columns are cached with an LRU
    bound since the full inverse is quadratic in memory.
    """

    def __init__(self, lat, green_cache=256):
        self.lattice = lat
        self.L = dirichlet_laplacian(lat)
        self._lu = None
        self._green_cache = OrderedDict()
        self._green_cache_size = green_cache
        self._lock = threading.Lock()

    def _factor(self):
        if self._lu is None:
            self._lu = spla.splu(self.L)
        return self._lu

    def solve(self, rhs):
        """Solve L z = rhs (rhs may carry multiple columns)."""
        if self.lattice.num_vertices <= DIRECT_SOLVE_LIMIT:
            return self._factor().solve(np.asarray(rhs, dtype=np.float64))
        return _cg_solve(self.L, np.asarray(rhs, dtype=np.float64))

    def green_column(self, x):
        """Column G(., x) of the Green function, LRU-cached."""
        x = int(x)
        with self._lock:
            if x in self._green_cache:
                self._green_cache.move_to_end(x)
                return self._green_cache[x]
        rhs = np.zeros(self.lattice.num_vertices)
        rhs[x] = 1.0
        col = self.solve(rhs)
        with self._lock:
            self._green_cache[x] = col
            if len(self._green_cache) > self._green_cache_size:
                self._green_cache.popitem(last=False)
        return col

    def green(self, x, y):
        """G(x, y); symmetric, equals the (x, y) entry of L^-1."""
        N = self.lattice.num_vertices
        if not (0 <= x < N and 0 <= y < N):
            raise ValueError("green is defined for disk vertices only")
        return float(self.green_column(int(x))[int(y)])

    def harmonic(self, absorbing, boundary_rhs, outer_value=0.0):
        """Harmonic extension on the disk minus an absorbing vertex set.

        Solves h harmonic on the complement of `absorbing` with h given by
        `boundary_rhs` on absorbing vertices and `outer_value` on the outer
        boundary; returns the full vertex vector (equal to boundary_rhs on
        the absorbing set).
        """
        lat = self.lattice
        absorbing = np.asarray(absorbing, dtype=bool)
        h = np.array(boundary_rhs, dtype=np.float64)
        free = np.nonzero(~absorbing)[0]
        if free.size == 0:
            return h
        Lred, rhs = _reduced_system(lat, absorbing, h, outer_value)
        sol = _solve_once(Lred, rhs)
        out = h.copy()
        out[free] = sol
        return out

    def equilibrium_measure(self, K):
        """Equilibrium weights e_K and capacity of a nonempty vertex set K.

        One harmonic solve of h(y) = P_y(outer boundary before K) on the
        complement; then e(x) = sum over lattice neighbors of h*(y) with
        h* = 1 outside the disk, h on free vertices and 0 on K.
        """
        lat = self.lattice
        K = np.asarray(K, dtype=bool)
        if not K.any():
            raise ValueError("equilibrium measure of the empty set")
        free = np.nonzero(~K)[0]
        hstar = np.zeros(lat.num_vertices)
        if free.size:
            Lred, rhs = _reduced_system(lat, K, np.zeros(lat.num_vertices), 1.0)
            hstar[free] = _solve_once(Lred, rhs)
        Kidx = np.nonzero(K)[0]
        e = np.zeros(Kidx.shape[0])
        for d in range(4):
            nb = lat.nbr[Kidx, d]
            outside = nb < 0
            e[outside] += 1.0
            ins = np.nonzero(~outside)[0]
            e[ins] += hstar[nb[ins]] * (~K[nb[ins]])
        pos = e > 0
        return EquilibriumMeasure(support=Kidx[pos].astype(np.int64), weights=e[pos],
                                  cap=float(e.sum()))

    def capacity(self, K):
        return self.equilibrium_measure(K).cap

    def es_statistic(self, K):
        """Peel the equilibrium support off K and normalize the peeled set's
        largest equilibrium weight by cap(K); 0 when the peeled set is empty."""
        K = np.asarray(K, dtype=bool)
        em = self.equilibrium_measure(K)
        core = K.copy()
        core[em.support] = False
        if not core.any():
            return 0.0
        em_core = self.equilibrium_measure(core)
        sup = em_core.weights.max() if em_core.weights.size else 0.0
        return float(sup / em.cap)


def _reduced_system(lat, absorbing, boundary_values, outer_value):
    """Dirichlet system on the free vertices with data on `absorbing` and the
    outer boundary."""
    free = np.nonzero(~absorbing)[0]
    remap = -np.ones(lat.num_vertices, dtype=np.int64)
    remap[free] = np.arange(free.size)
    rows, cols, vals = [], [], []
    rhs = np.zeros(free.size)
    for d in range(4):
        nb = lat.nbr[free, d]
        outside = nb < 0
        rhs[outside] += outer_value
        has = ~outside
        nbv = nb[has]
        absorbed = absorbing[nbv]
        idx_has = np.nonzero(has)[0]
        rhs[idx_has[absorbed]] += boundary_values[nbv[absorbed]]
        keep = idx_has[~absorbed]
        rows.append(remap[free[keep]])
        cols.append(remap[nbv[~absorbed]])
        vals.append(-np.ones(keep.size))
    rows.append(np.arange(free.size))
    cols.append(np.arange(free.size))
    vals.append(4.0 * np.ones(free.size))
    Lred = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(free.size, free.size)).tocsc()
    return Lred, rhs


def _solve_once(Lred, rhs):
    if Lred.shape[0] <= DIRECT_SOLVE_LIMIT:
        return spla.splu(Lred).solve(rhs)
    return _cg_solve(Lred, rhs)


def _cg_solve(L, rhs):
    rhs = np.atleast_2d(rhs.T).T
    out = np.empty_like(rhs)
    M = spla.LinearOperator(L.shape, spla.splu(sp.csc_matrix(sp.diags(L.diagonal()))).solve)
    for k in range(rhs.shape[1]):
        sol, info = spla.cg(L, rhs[:, k], rtol=CG_RTOL, atol=0.0, M=M)
        if info != 0:
            raise RuntimeError(f"conjugate gradient failed to converge (info={info})")
        out[:, k] = sol
    return out.reshape(rhs.shape) if rhs.ndim > 1 else out[:, 0]


# continuum closed forms -----------------------------------------------------

def continuum_green(w, z):
    """Green function of the unit disk; infinite on the diagonal."""
    w = complex(w)
    z = complex(z)
    if abs(w) >= 1 or abs(z) >= 1:
        raise ValueError("arguments must lie in the open unit disk")
    if w == z:
        return np.inf
    return float(np.log(abs(1 - np.conj(w) * z) / abs(w - z)) / (2 * np.pi))


def continuum_cap_ball(r):
    """Capacity (relative to the disk) of the centered ball of radius r."""
    if not 0 < r < 1:
        raise ValueError("radius must satisfy 0 < r < 1")
    return 2 * np.pi / np.log(1.0 / r)


def continuum_annulus_hit(x, r, R):
    """Probability that Brownian motion from x hits the r-ball before leaving
    the R-ball; x may be a point (complex or pair) or the modulus itself."""
    if np.ndim(x):
        ax = float(np.hypot(x[0], x[1]))
    else:
        ax = abs(complex(x))
    if not (0 < r <= ax <= R):
        raise ValueError("need r <= |x| <= R with positive radii")
    return float(np.log(R / ax) / np.log(R / r))
