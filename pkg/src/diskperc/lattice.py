"""Lattice disk geometry.

The disk graph at mesh n has vertex set {(i/n, j/n) : i^2 + j^2 < n^2} with
nearest-neighbor edges.  Outer-boundary points are the lattice points outside
the disk adjacent to it; they are stored implicitly through the boundary-edge
list (vertex, direction), so a boundary point adjacent to two vertices carries
multiplicity two, which is the weight the excursion measure needs.

Vertices are indexed densely in row-major order over the bounding square, so
neighbor lookup is a table access, no hashing.  A vertex set is a boolean
numpy array over vertex indices.  LatticeDisk instances are immutable after
construction and safe to share across parallel workers.
"""
from dataclasses import dataclass, field

import numpy as np

# step order: +x, -x, +y, -y
DIRS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)


@dataclass(frozen=True)
class LatticeDisk:
    n: int
    coords: np.ndarray        # (N, 2) integer lattice coordinates, point = coords / n
    nbr: np.ndarray           # (N, 4) int32 neighbor index, -1 where the neighbor is outside
    grid: np.ndarray          # (2n+1, 2n+1) int32 dense index map, -1 off-disk
    boundary_edges: np.ndarray   # (B, 2) rows (vertex index, direction)
    interior_edges: np.ndarray   # (E, 2) vertex index pairs, i < j
    inner_boundary: np.ndarray   # vertex indices adjacent to the outside
    outer_boundary: np.ndarray   # (M, 2) distinct outside lattice points
    exit_point: np.ndarray       # (N, 4, 2) lattice coords of coords + dir (valid where nbr == -1)
    _hilbert: np.ndarray = field(default=None, repr=False)

    @property
    def num_vertices(self):
        return self.coords.shape[0]

    @property
    def x(self):
        return self.coords[:, 0] / self.n

    @property
    def y(self):
        return self.coords[:, 1] / self.n

    @property
    def points(self):
        return self.coords / self.n

    @property
    def norm(self):
        return np.hypot(*self.coords.T) / self.n

    def index_of(self, i, j):
        """Dense index of the vertex at integer coordinates (i, j), -1 if absent."""
        n = self.n
        if abs(i) > n or abs(j) > n:
            return -1
        return int(self.grid[i + n, j + n])

    def hilbert_order(self):
        """Vertex indices sorted along a Hilbert curve over the bounding square."""
        return self._hilbert

    def degree_split(self):
        """(interior degree, boundary degree) per vertex; they sum to 4."""
        inside = (self.nbr >= 0).sum(axis=1)
        return inside, 4 - inside


def _hilbert_d(order, xs, ys):
    """Distance along a Hilbert curve of 2^order x 2^order cells (vectorized)."""
    rx = np.zeros_like(xs)
    ry = np.zeros_like(xs)
    d = np.zeros_like(xs, dtype=np.int64)
    x = xs.copy()
    y = ys.copy()
    s = 1 << (order - 1)
    while s > 0:
        rx = ((x & s) > 0).astype(np.int64)
        ry = ((y & s) > 0).astype(np.int64)
        d += s * s * ((3 * rx) ^ ry)
        # rotate quadrant
        swap = ry == 0
        flip = swap & (rx == 1)
        x_f = np.where(flip, s - 1 - x, x)
        y_f = np.where(flip, s - 1 - y, y)
        x, y = np.where(swap, y_f, x_f), np.where(swap, x_f, y_f)
        s >>= 1
    return d


def build_lattice(n):
    """Construct the disk graph at mesh n with all derived boundary structure.

    Deterministic in n.  Membership tests are exact integer arithmetic:
    a lattice point (i, j) is a vertex iff i^2 + j^2 < n^2, and points on the
    unit circle are excluded.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"mesh parameter must be >= 1, got {n}")
    side = 2 * n + 1
    ij = np.arange(-n, n + 1, dtype=np.int64)
    I, J = np.meshgrid(ij, ij, indexing="ij")
    inside = I * I + J * J < n * n
    N = int(inside.sum())
    grid = -np.ones((side, side), dtype=np.int32)
    grid[inside] = np.arange(N, dtype=np.int32)
    coords = np.stack([I[inside], J[inside]], axis=1)

    nbr = np.full((N, 4), -1, dtype=np.int32)
    exit_point = np.zeros((N, 4, 2), dtype=np.int64)
    for d, (di, dj) in enumerate(DIRS):
        ii = coords[:, 0] + di
        jj = coords[:, 1] + dj
        exit_point[:, d, 0] = ii
        exit_point[:, d, 1] = jj
        ok = (np.abs(ii) <= n) & (np.abs(jj) <= n)
        vals = np.full(N, -1, dtype=np.int32)
        vals[ok] = grid[ii[ok] + n, jj[ok] + n]
        nbr[:, d] = vals

    v_idx, d_idx = np.nonzero(nbr < 0)
    boundary_edges = np.stack([v_idx, d_idx], axis=1).astype(np.int32)
    outer = exit_point[v_idx, d_idx]
    outer_boundary = np.unique(outer, axis=0)
    inner_boundary = np.unique(v_idx).astype(np.int32)

    src, dd = np.nonzero(nbr[:, [0, 2]] >= 0)  # +x and +y suffice to list each edge once
    dst = nbr[src, 2 * dd]
    interior_edges = np.stack([src, dst], axis=1).astype(np.int32)

    order = max(1, int(np.ceil(np.log2(side))))
    hd = _hilbert_d(order, coords[:, 0] + n, coords[:, 1] + n)
    hilbert = np.argsort(hd, kind="stable").astype(np.int32)

    return LatticeDisk(
        n=n, coords=coords, nbr=nbr, grid=grid,
        boundary_edges=boundary_edges, interior_edges=interior_edges,
        inner_boundary=inner_boundary, outer_boundary=outer_boundary,
        exit_point=exit_point, _hilbert=hilbert,
    )


def ball_vertices(lat, center, radius, closed=False):
    """Vertices of the lattice disk within the given ball.

    Strict inequality unless `closed`.  Radius 0 follows the point-ball
    convention and returns just the center when it is a vertex.
    """
    cx, cy = (float(center[0]), float(center[1])) if np.ndim(center) else (float(center), 0.0)
    if cx * cx + cy * cy > 1.0 + 1e-12:
        raise ValueError("ball center must lie in the closed unit disk")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    dx = lat.coords[:, 0] / lat.n - cx
    dy = lat.coords[:, 1] / lat.n - cy
    d2 = dx * dx + dy * dy
    if radius == 0:
        return d2 == 0.0
    r2 = radius * radius
    return d2 <= r2 if closed else d2 < r2


def _in_arc(theta, lo, hi):
    """Membership of angles in the circular interval [lo, hi] (may wrap)."""
    span = hi - lo
    return np.mod(theta - lo, 2 * np.pi) <= span + 1e-12


def annulus_sector(lat, r, rp, eps, side, level):
    """Discrete annulus-sector vertex set at nesting level j in {0, 1, 2}.

    At level j the set is the part of the closed ball of radius 1 - j*eps/2
    outside the open ball of radius r + j*(rp - r) - 1/n whose argument lies
    in [-(2-j)pi/8, (10-j)pi/8] (side '+') or the reflected interval
    (side '-').  Level 0 does not depend on eps, and levels nest downward.
    """
    if not (0 <= r < rp < 1 - eps):
        raise ValueError(f"need 0 <= r < rp < 1 - eps, got r={r}, rp={rp}, eps={eps}")
    if level not in (0, 1, 2):
        raise ValueError("level must be 0, 1 or 2")
    if side not in ("+", "-"):
        raise ValueError("side must be '+' or '-'")
    j = level
    outer = 1.0 - j * eps / 2.0
    inner = r + j * (rp - r) - 1.0 / lat.n
    nrm = lat.norm
    mask = (nrm <= outer) & (nrm >= inner)
    theta = np.arctan2(lat.y, lat.x)
    if side == "+":
        mask &= _in_arc(theta, -(2 - j) * np.pi / 8, (10 - j) * np.pi / 8)
    else:
        mask &= _in_arc(theta, -(10 - j) * np.pi / 8, (2 - j) * np.pi / 8)
    return mask
