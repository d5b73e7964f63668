"""Excursion-cloud samplers.

Three equivalent samplers for the discrete cloud at intensity u:

* direct: Poisson(u * #boundary edges) excursions, each entering through a
  uniform boundary edge and walking until killed outside;
* hitting-set: only the trajectories meeting a set K, Poisson(u * cap(K))
  walks started from the normalized equilibrium measure of K;
* single-walk: excursions of the collapsed-boundary walk, emitted while the
  accumulated exponential holding time at the glued boundary vertex is < u.

Walk simulation is batched: all live walkers advance together with one
2-bit draw per step, and trajectories are only stored on request (the
occupied bitmap is updated on the fly).  The continuum sampler realizes the
ball-local picture with Gaussian steps for the forward part and an
h-transformed Euler scheme for the part conditioned to avoid the ball.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


from .rng import as_generator


@dataclass
class DiscreteExcursion:
    start: np.ndarray        # boundary lattice point (outside the disk)
    end: np.ndarray          # boundary lattice point
    trace: np.ndarray        # interior vertex sequence
    label: float
    lifetime: int            # boundary-to-boundary step count


@dataclass
class ExcursionCloud:
    u: float
    count: int
    occupied: np.ndarray            # (N,) bool, union of interior traces
    entry_vertices: np.ndarray      # first interior vertex per excursion
    labels: np.ndarray              # point-process labels, <= u
    start_edges: Optional[np.ndarray] = None   # (count, 2) (vertex, dir) start boundary edge
    exit_edges: Optional[np.ndarray] = None    # (count, 2) (vertex, dir) final boundary edge
    hit_first: Optional[np.ndarray] = None     # first vertex in the tracked set, -1 if missed
    lifetimes: Optional[np.ndarray] = None     # boundary-to-boundary step count per excursion
    paths: Optional[list] = None               # interior vertex sequences, on request

    def vacant(self):
        return ~self.occupied

    def excursion(self, lat, k):
        """Materialize excursion k; needs paths and a start edge."""
        if self.paths is None or self.start_edges is None:
            raise ValueError("cloud was sampled without paths")
        start = lat.exit_point[self.start_edges[k, 0], self.start_edges[k, 1]]
        end = lat.exit_point[self.exit_edges[k, 0], self.exit_edges[k, 1]]
        return DiscreteExcursion(start=start, end=end, trace=self.paths[k],
                                 label=float(self.labels[k]) if self.labels.size else 0.0,
                                 lifetime=int(self.lifetimes[k]))


def vacant_set(cloud, lat=None):
    """Complement of the union of interior traces."""
    return ~cloud.occupied


def run_walks(lat, entries, rng, *, occupied=None, rep_ids=None, hit_mask=None,
              keep_paths=False):
    """Advance simple random walks from `entries` until each is killed outside.

    Returns exit edges (last interior vertex, direction of the killing step),
    interior step counts, first hit of `hit_mask` if given, and optionally the
    full interior paths.  When `occupied` is given, visited vertices are
    marked; with `rep_ids`, marking goes into the flat per-replica bitmap
    occupied[rep * N + vertex].
    """
    nbr = lat.nbr
    N = lat.num_vertices
    W = entries.shape[0]
    pos = entries.astype(np.int32, copy=True)
    idx = np.arange(W, dtype=np.int64)
    exit_v = np.zeros(W, dtype=np.int32)
    exit_d = np.zeros(W, dtype=np.int8)
    steps = np.zeros(W, dtype=np.int64)
    hit_first = None
    if hit_mask is not None:
        hit_first = np.where(hit_mask[pos], pos, -1).astype(np.int64)
    paths = [[entries.copy()], [idx.copy()]] if keep_paths else None

    def mark(vertices, which):
        if occupied is None:
            return
        if rep_ids is None:
            occupied[vertices] = True
        else:
            occupied[rep_ids[which] * N + vertices] = True

    mark(pos, idx)
    nstep = 0
    while pos.size:
        nstep += 1
        dirs = rng.integers(0, 4, size=pos.size, dtype=np.int8)
        nxt = nbr[pos, dirs]
        dead = nxt < 0
        if dead.any():
            di = idx[dead]
            exit_v[di] = pos[dead]
            exit_d[di] = dirs[dead]
            steps[di] = nstep - 1
        alive = ~dead
        pos = nxt[alive]
        idx = idx[alive]
        if pos.size:
            mark(pos, idx)
            if hit_first is not None:
                fresh = (hit_first[idx] < 0) & hit_mask[pos]
                hit_first[idx[fresh]] = pos[fresh]
            if keep_paths:
                paths[0].append(pos.copy())
                paths[1].append(idx.copy())
    out = {"exit_vertex": exit_v, "exit_dir": exit_d, "steps": steps,
           "hit_first": hit_first}
    if keep_paths:
        verts = np.concatenate(paths[0])
        owner = np.concatenate(paths[1])
        order = np.argsort(owner, kind="stable")
        verts, owner = verts[order], owner[order]
        cuts = np.searchsorted(owner, np.arange(1, W))
        out["paths"] = np.split(verts, cuts)
    return out


def sample_cloud_direct(lat, u, rng, *, hit_mask=None, keep_paths=False,
                        count=None):
    """Direct sampler: Poisson(u * #boundary edges) excursions from uniform
    boundary edges."""
    rng = as_generator(rng)
    if u <= 0:
        raise ValueError("intensity u must be positive")
    B = lat.boundary_edges.shape[0]
    n_exc = int(rng.poisson(u * B)) if count is None else int(count)
    edge_ids = rng.integers(0, B, size=n_exc)
    start_edges = lat.boundary_edges[edge_ids]
    # boundary edges are stored from the interior side: the entry vertex is the
    # edge's vertex, the boundary start point is vertex + dir
    entries = start_edges[:, 0].astype(np.int32)
    occupied = np.zeros(lat.num_vertices, dtype=bool)
    res = run_walks(lat, entries, rng, occupied=occupied, hit_mask=hit_mask,
                    keep_paths=keep_paths)
    labels = np.sort(rng.uniform(0.0, u, size=n_exc)) if n_exc else np.zeros(0)
    return ExcursionCloud(
        u=u, count=n_exc, occupied=occupied, entry_vertices=entries,
        labels=labels, start_edges=start_edges,
        exit_edges=np.stack([res["exit_vertex"], res["exit_dir"].astype(np.int32)], axis=1),
        hit_first=res["hit_first"], lifetimes=res["steps"] + 2,
        paths=res.get("paths"))


def sample_hitting_K(lat, u, K, solver, rng, *, keep_paths=False):
    """Forward parts of the cloud on the set K: Poisson(u * cap(K)) walks from
    the normalized equilibrium measure, killed outside."""
    rng = as_generator(rng)
    K = np.asarray(K, dtype=bool)
    if not K.any():
        raise ValueError("hitting sampler needs a nonempty set")
    em = solver.equilibrium_measure(K)
    n_exc = int(rng.poisson(u * em.cap))
    probs = em.weights / em.weights.sum()
    entries = em.support[rng.choice(em.weights.size, size=n_exc, p=probs)].astype(np.int32)
    occupied = np.zeros(lat.num_vertices, dtype=bool)
    res = run_walks(lat, entries, rng, occupied=occupied, keep_paths=keep_paths)
    labels = np.sort(rng.uniform(0.0, u, size=n_exc)) if n_exc else np.zeros(0)
    return ExcursionCloud(
        u=u, count=n_exc, occupied=occupied, entry_vertices=entries,
        labels=labels,
        exit_edges=np.stack([res["exit_vertex"], res["exit_dir"].astype(np.int32)], axis=1),
        lifetimes=res["steps"] + 2, paths=res.get("paths"))


def sample_cloud_single_walk(lat, u, rng, *, hit_mask=None, keep_paths=False):
    """Collapsed-boundary description: one continuous-time walk from the glued
    vertex, run until its local time there reaches u.

    Holding times at the glued vertex are Exp(#boundary edges); the jump chain
    enters through a uniform boundary edge and is the killed walk inside, so
    only the local-time bookkeeping differs from the direct sampler.
    """
    rng = as_generator(rng)
    if u <= 0:
        raise ValueError("intensity u must be positive")
    B = lat.boundary_edges.shape[0]
    labels = []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / B)
        if t >= u:
            break
        labels.append(t)
    n_exc = len(labels)
    edge_ids = rng.integers(0, B, size=n_exc)
    start_edges = lat.boundary_edges[edge_ids]
    entries = start_edges[:, 0].astype(np.int32)
    occupied = np.zeros(lat.num_vertices, dtype=bool)
    res = run_walks(lat, entries, rng, occupied=occupied, hit_mask=hit_mask,
                    keep_paths=keep_paths)
    return ExcursionCloud(
        u=u, count=n_exc, occupied=occupied, entry_vertices=entries,
        labels=np.asarray(labels), start_edges=start_edges,
        exit_edges=np.stack([res["exit_vertex"], res["exit_dir"].astype(np.int32)], axis=1),
        hit_first=res["hit_first"], lifetimes=res["steps"] + 2,
        paths=res.get("paths"))


def thin_mask(cloud, u_new):
    """Excursions surviving the thinning to level u_new (labels <= u_new)."""
    if u_new > cloud.u:
        raise ValueError("can only thin downward")
    return cloud.labels <= u_new


def occupancy_of(lat, cloud, mask=None):
    """Occupied bitmap of a subset of a cloud's excursions (needs paths)."""
    if cloud.paths is None:
        raise ValueError("cloud was sampled without paths")
    occ = np.zeros(lat.num_vertices, dtype=bool)
    for k, p in enumerate(cloud.paths):
        if mask is None or mask[k]:
            occ[p] = True
    return occ


def sample_occupancy_batch(lat, u, reps, rng):
    """Occupied bitmaps of `reps` independent direct clouds, as a (reps, N)
    boolean array; used by the percolation Monte Carlo."""
    rng = as_generator(rng)
    B = lat.boundary_edges.shape[0]
    N = lat.num_vertices
    counts = rng.poisson(u * B, size=reps)
    total = int(counts.sum())
    rep_ids = np.repeat(np.arange(reps, dtype=np.int64), counts)
    edge_ids = rng.integers(0, B, size=total)
    entries = lat.boundary_edges[edge_ids, 0].astype(np.int32)
    occ = np.zeros(reps * N, dtype=bool)
    run_walks(lat, entries, rng, occupied=occ, rep_ids=rep_ids)
    return occ.reshape(reps, N)


# continuum ball-local sampler ------------------------------------------------

@dataclass
class ContinuumPath:
    samples: np.ndarray      # complex positions at the time grid
    absorbed: bool           # reached the unit circle
    start: complex = field(default=0j)
    min_abs: float = np.inf  # closest approach to the origin along the path

    @property
    def end(self):
        return complex(self.samples[-1])


def _advance_batch(z0, rng, dt, drift_fn=None, reflect_r=None, keep_samples=True,
                   max_steps=None):
    """Euler paths from z0 (complex array), absorbed at the unit circle.

    Steps landing outside are truncated at the chord-circle intersection;
    with reflect_r, steps landing inside that radius are reflected radially
    (entrance boundary of the conditioned diffusion).  Tracks min |z| per
    path; samples are stored only on request.
    """
    W = z0.shape[0]
    z = z0.astype(np.complex128, copy=True)
    idx = np.arange(W)
    endpoints = z0.copy()
    absorbed = np.zeros(W, dtype=bool)
    min_abs = np.abs(z0)
    samples = [[z0.copy()], [idx.copy()]] if keep_samples else None
    sqdt = np.sqrt(dt)
    cap = max_steps if max_steps is not None else int(100.0 / dt)
    for _ in range(cap):
        if z.size == 0:
            break
        dz = sqdt * (rng.standard_normal(z.size) + 1j * rng.standard_normal(z.size))
        if drift_fn is not None:
            b = drift_fn(z)
            mag = np.abs(b)
            scale = np.where(mag > 1.0 / sqdt, 1.0 / (sqdt * np.maximum(mag, 1e-300)), 1.0)
            dz = dz + b * scale * dt
        znew = z + dz
        if reflect_r is not None:
            az = np.abs(znew)
            inside = az < reflect_r
            if inside.any():
                zn = znew[inside]
                azn = az[inside]
                znew[inside] = zn * ((2.0 * reflect_r - azn) / np.maximum(azn, 1e-300))
        out = np.abs(znew) >= 1.0
        if out.any():
            d = znew[out] - z[out]
            a = np.abs(d) ** 2
            bq = 2 * (z[out].real * d.real + z[out].imag * d.imag)
            c = np.abs(z[out]) ** 2 - 1.0
            disc = np.maximum(bq * bq - 4 * a * c, 0.0)
            t = np.clip((-bq + np.sqrt(disc)) / (2 * a), 0.0, 1.0)
            znew[out] = z[out] + t * d
            endpoints[idx[out]] = znew[out]
            absorbed[idx[out]] = True
        min_abs[idx] = np.minimum(min_abs[idx], np.abs(znew))
        if keep_samples:
            samples[0].append(znew.copy())
            samples[1].append(idx.copy())
        keep = ~out
        z = znew[keep]
        idx = idx[keep]
    if idx.size:
        endpoints[idx] = z
    out = dict(endpoints=endpoints, absorbed=absorbed, min_abs=min_abs)
    if keep_samples:
        verts = np.concatenate(samples[0])
        owner = np.concatenate(samples[1])
        order = np.argsort(owner, kind="stable")
        verts, owner = verts[order], owner[order]
        cuts = np.searchsorted(owner, np.arange(1, W))
        out["samples"] = np.split(verts, cuts)
    return out


def sample_continuum_cloud_ball(u, r, dt, rng, *, keep_paths=True, count=None,
                                keep_samples=None):
    """Trajectory pairs of the Brownian cloud through the centered r-ball.

    Count is Poisson(u * 2*pi / log(1/r)); starts are uniform on the circle
    of radius r.  The forward part is Brownian motion absorbed at the unit
    circle.  The avoid-ball part uses the Doob transform of the radial
    harmonic function log(|z|/r)/log(1/r): Euler steps with drift
    z / (|z|^2 log(|z|/r)), drift magnitude capped at 1/sqrt(dt), started a
    sqrt(dt) offset outward (the drift diverges on the circle), and radially
    reflected at radius r, which enforces the avoidance the transform only
    approximates at finite dt.

    Returns (count, start angles, pairs) where pairs is a list of
    (forward, backward) ContinuumPath objects; with keep_paths=False only
    the count and angles are produced.
    """
    rng = as_generator(rng)
    if not 0 < r < 1:
        raise ValueError("need 0 < r < 1")
    if dt > (1.0 - r) ** 2 / 100.0:
        raise ValueError("time step too coarse for this radius: "
                         f"need dt <= {(1.0 - r) ** 2 / 100.0:.3g}")
    mean = u * 2 * np.pi / np.log(1.0 / r)
    n_traj = int(rng.poisson(mean)) if count is None else int(count)
    thetas = rng.uniform(0.0, 2 * np.pi, size=n_traj)
    if not keep_paths:
        return n_traj, thetas, []
    if keep_samples is None:
        keep_samples = True

    def h_drift(z):
        az = np.abs(z)
        return z / (az * az * np.log(az / r))

    sqdt = np.sqrt(dt)
    fwd = _advance_batch(r * np.exp(1j * thetas), rng, dt, keep_samples=keep_samples)
    bwd = _advance_batch((r + sqdt) * np.exp(1j * thetas), rng, dt, drift_fn=h_drift,
                         reflect_r=r, keep_samples=keep_samples)
    pairs = []
    for k in range(n_traj):
        fs = fwd["samples"][k] if keep_samples else np.array([r * np.exp(1j * thetas[k]),
                                                              fwd["endpoints"][k]])
        bs = bwd["samples"][k] if keep_samples else np.array([(r + sqdt) * np.exp(1j * thetas[k]),
                                                              bwd["endpoints"][k]])
        pairs.append((ContinuumPath(fs, bool(fwd["absorbed"][k]), start=complex(fs[0]),
                                    min_abs=float(fwd["min_abs"][k])),
                      ContinuumPath(bs, bool(bwd["absorbed"][k]), start=complex(bs[0]),
                                    min_abs=float(bwd["min_abs"][k]))))
    return n_traj, thetas, pairs
