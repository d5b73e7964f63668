"""Loewner-chain numerics for boundary-force-point SLE.

The driving pair (W, V) with force point 0^- is simulated through the gap
process D = W - V >= 0, a Bessel-type process of dimension
1 + 2(rho+2)/kappa.  Two step schemes are provided: exact-in-law squared
Bessel transitions (noncentral chi-square via the Poisson mixture) and
truncated Euler with reflection; both must reproduce the boundary-hitting
dichotomy.  W is recovered from dW = dD - 2 dt / D.

Traces come from the backward composition of vertical-slit maps (the zipper
discretization).  Boundary hitting is detected without traces: the image
Y_t = W_t - g_t(-delta) of a marked point -delta < 0 shrinks to zero exactly
when the curve closes over that point, so dY = dW + 2 dt / Y is tracked
alongside the driving and a swallow is a zero crossing of Y.
"""
from dataclasses import dataclass


import numpy as np

from .rng import as_generator, substream

KAPPA_RANGE = (8.0 / 3.0, 4.0)


def rho_kappa_alpha(kappa, alpha):
    """Force-point weight for one-sided restriction exponent alpha."""
    if not KAPPA_RANGE[0] - 1e-12 <= kappa <= KAPPA_RANGE[1] + 1e-12:
        raise ValueError("kappa must lie in [8/3, 4]")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    disc = 16.0 + kappa * (16.0 * alpha - 8.0) + kappa * kappa
    return (-8.0 + kappa + np.sqrt(disc)) / 2.0


def alpha_from_rho(kappa, rho):
    """Inverse of rho_kappa_alpha on the admissible branch."""
    return ((2 * rho + 8 - kappa) ** 2 - 16 + 8 * kappa - kappa * kappa) / (16.0 * kappa)


def lambda_kappa(kappa):
    """Loop-soup intensity paired with kappa (half the central charge)."""
    if not KAPPA_RANGE[0] - 1e-12 <= kappa <= KAPPA_RANGE[1] + 1e-12:
        raise ValueError("kappa must lie in [8/3, 4]")
    return (8.0 - 3.0 * kappa) * (kappa - 6.0) / (4.0 * kappa)


def bessel_dimension(kappa, rho):
    return 1.0 + 2.0 * (rho + 2.0) / kappa


@dataclass
class DrivingPath:
    kappa: float
    rho: float
    dt: float
    W: np.ndarray
    V: np.ndarray

    @property
    def times(self):
        return self.dt * np.arange(self.W.shape[0])


def _drive_step(D, kappa, rho, dt, rng, scheme, noise=None):
    """One vectorized transition of the gap, returning (D_next, dW).

    The euler branch recovers dW exactly from the identity
    dW = rho/(rho+2) dD + 2/(rho+2) sqrt(kappa) dB, so no singular 1/D
    integral enters; the besq branch replaces it with a floored midpoint
    rule for -2 dt / D (the floor matches the exact near-zero integral of a
    Bessel path, 2 sqrt(dt/kappa) per step).
    """
    sqk = np.sqrt(kappa * dt)
    if scheme == "besq":
        mix = rng.poisson(D * D / (2.0 * kappa * dt))
        dim = bessel_dimension(kappa, rho)
        Dn = np.sqrt(kappa * dt * rng.chisquare(dim + 2.0 * mix))
        mid = np.maximum(0.5 * (D + Dn), 0.5 * sqk)
        dW = (Dn - D) - 2.0 * dt / mid
        return Dn, dW
    if scheme == "euler":
        eps = rng.standard_normal(D.shape) if noise is None else noise
        drift = (2.0 + rho) * dt / np.maximum(D, 0.5 * sqk)
        Dn = np.abs(D + drift + sqk * eps)
        dW = rho / (rho + 2.0) * (Dn - D) + 2.0 / (rho + 2.0) * sqk * eps
        return Dn, dW
    raise ValueError(f"unknown scheme {scheme!r}")


def sample_driving(kappa, rho, T, dt, rng, scheme="euler"):
    """Driving and force-point path on [0, T] with force point 0^-."""
    if rho <= -2:
        raise ValueError("need rho > -2")
    rng = as_generator(rng)
    steps = int(round(T / dt))
    D = np.zeros(1)
    W = np.zeros(steps + 1)
    V = np.zeros(steps + 1)
    w = 0.0
    for k in range(1, steps + 1):
        Dn, dW = _drive_step(D, kappa, rho, dt, rng, scheme)
        w += dW[0]
        W[k] = w
        V[k] = w - Dn[0]
        D = Dn
    return DrivingPath(kappa=kappa, rho=rho, dt=dt, W=W, V=V)


@dataclass
class LoewnerTrace:
    times: np.ndarray
    points: np.ndarray      # complex trace points in the closed half-plane
    min_dist_neg_axis: float


def _inverse_slit(w, u, dt):
    """Inverse of one vertical-slit step with driving u and duration dt."""
    val = (w - u) ** 2 - 4.0 * dt
    s = np.sqrt(val.astype(np.complex128))
    s = np.where(s.imag < 0, -s, s)
    real_edge = (s.imag == 0) & ((w - u).real < 0)
    return u + np.where(real_edge, -s, s)


def _forward_slit(z, u, dt):
    val = (z - u) ** 2 + 4.0 * dt
    s = np.sqrt(val.astype(np.complex128))
    s = np.where(s.imag < 0, -s, s)
    real_edge = (s.imag == 0) & ((z - u).real < 0)
    return u + np.where(real_edge, -s, s)


def solve_trace(driving, stride=1):
    """Trace via backward slit-map composition; O(K^2 / stride)."""
    W = driving.W
    dt = driving.dt
    K = W.shape[0] - 1
    sel = np.arange(stride, K + 1, stride)
    z = W[sel].astype(np.complex128) + 2j * np.sqrt(dt)
    for j in range(K, 0, -1):
        active = sel > j
        if not active.any() and sel[0] <= j:
            continue
        z[active] = _inverse_slit(z[active], W[j], dt)
    pts = np.concatenate([[0j], z])
    tms = np.concatenate([[0.0], driving.times[sel]])
    re, im = pts.real, pts.imag
    d = np.where(re < 0, np.abs(im), np.abs(pts))
    return LoewnerTrace(times=tms, points=pts, min_dist_neg_axis=float(d[1:].min()) if len(pts) > 1 else np.inf)


def halfplane_capacity(driving, z_probe=2000j):
    """Half-plane capacity of the hull (g_T(z) = z + hcap/z + ...), estimated
    from the composed forward maps at a distant probe; equals 2T exactly for
    the continuous chain."""
    z = np.array([z_probe], dtype=np.complex128)
    W = driving.W
    for j in range(1, W.shape[0]):
        z = _forward_slit(z, W[j], driving.dt)
    return float((z_probe * (z[0] - z_probe)).real)


def recover_driving(trace, dt):
    """Welding: map each trace point down with forward slit steps and read the
    driving off the landing position (round-trip consistency check)."""
    pts = trace.points[1:].astype(np.complex128)
    K = pts.shape[0]
    W = np.zeros(K + 1)
    z = pts.copy()
    for j in range(K):
        tip = z[j]
        u = tip.real
        W[j + 1] = u
        z[j + 1:] = _forward_slit(z[j + 1:], u, dt)
    return W


def boundary_hit_statistic(kappa, alpha, T, dt, delta, reps, rng, scheme="besq",
                           alphas=None, swallow_c=0.1):
    """Fraction of paths whose trace closes over the point -delta before
    capacity time T.

    The point is swallowed exactly when its Loewner image meets the driving,
    so the gap Y_t = W_t - g_t(-delta) is advanced with the driving and a
    swallow is a downward crossing of (numerical) zero, declared at
    swallow_c * sqrt(kappa * step).  `dt` is the relative step of the
    geometric clock (see below), not an absolute duration.  With `alphas`,
    all values share the same Gaussian noise (common-noise coupling, euler
    scheme) and a fraction per alpha is returned.
    """
    rng = as_generator(rng)
    alpha_list = [alpha] if alphas is None else list(alphas)
    rhos = [rho_kappa_alpha(kappa, a) for a in alpha_list]
    n_a = len(alpha_list)
    D = np.zeros((n_a, reps))
    Y = np.full((n_a, reps), float(delta))
    alive = np.ones((n_a, reps), dtype=bool)
    shared = alphas is not None
    # geometric clock: step duration dt * max(t, delta^2) keeps the per-step
    # noise a fixed fraction of the running scale, so the delta-neighborhood
    # of the start and the large-time behavior are resolved equally
    t = 0.0
    base = delta * delta
    while t < T:
        if not alive.any():
            break
        step = dt * max(t, base)
        eps = rng.standard_normal(reps) if shared else None
        for ia, rho in enumerate(rhos):
            if not alive[ia].any():
                continue
            if shared:
                Dn, dW = _drive_step(D[ia], kappa, rho, step, None, "euler", noise=eps)
            else:
                Dn, dW = _drive_step(D[ia], kappa, rho, step, rng, scheme)
            floor_y = 0.25 * np.sqrt(kappa * step)
            Yn = Y[ia] + dW + 2.0 * step / np.maximum(Y[ia], floor_y)
            swallowed = alive[ia] & (Yn <= swallow_c * np.sqrt(kappa * step))
            alive[ia] &= ~swallowed
            Y[ia] = np.where(alive[ia], Yn, Y[ia])
            D[ia] = Dn
        t += step
    fracs = 1.0 - alive.mean(axis=1)
    return float(fracs[0]) if alphas is None else fracs


def restriction_formula(alpha, x0, delta):
    """Exact avoidance probability of the semidisk at x0 with radius delta."""
    if not 0 < delta < x0:
        raise ValueError("need 0 < delta < x0")
    return (1.0 - delta * delta / (x0 * x0)) ** alpha


def restriction_check(alpha, x0, delta, reps, seed, n=128, chunk=512, lat=None):
    """Monte Carlo one-sided restriction test against the exact formula.

    Disk excursion clouds at intensity pi*alpha are pushed to the half-plane
    by z -> i(1-z)/(1+z), which carries the lower semicircle onto the
    negative axis.  A cloud fails when one of its lower-to-lower excursions
    meets the semidisk around x0; the avoidance frequency is compared with
    (1 - delta^2/x0^2)^alpha.  Returns (p_mc, stderr, p_exact).
    """
    from . import excursions
    from .lattice import build_lattice

    if not 0 < delta < x0:
        raise ValueError("need 0 < delta < x0")
    if lat is None:
        lat = build_lattice(n)
    z = lat.x + 1j * lat.y
    w = 1j * (1.0 - z) / (1.0 + z)
    in_A = np.abs(w - x0) <= delta
    # boundary edges whose outside endpoint lies on the open lower semicircle
    exit_j = lat.exit_point[lat.boundary_edges[:, 0], lat.boundary_edges[:, 1], 1]
    gamma_edges = lat.boundary_edges[exit_j < 0]
    exits_gamma = lat.exit_point[:, :, 1] < 0
    u = np.pi * alpha
    mean_gamma = u * gamma_edges.shape[0]
    survived = 0
    done = 0
    cid = 0
    while done < reps:
        creps = min(chunk, reps - done)
        rng = substream(seed, cid)
        counts = rng.poisson(mean_gamma, size=creps)
        total = int(counts.sum())
        rep_ids = np.repeat(np.arange(creps), counts)
        eids = rng.integers(0, gamma_edges.shape[0], size=total)
        entries = gamma_edges[eids, 0].astype(np.int32)
        res = excursions.run_walks(lat, entries, rng, hit_mask=in_A)
        hit = res["hit_first"] >= 0
        end_gamma = exits_gamma[res["exit_vertex"], res["exit_dir"]]
        bad = hit & end_gamma
        killed = np.bincount(rep_ids[bad], minlength=creps) > 0
        survived += int((~killed).sum())
        done += creps
        cid += 1
    p = survived / reps
    se = np.sqrt(p * (1 - p) / reps)
    return p, float(se), restriction_formula(alpha, x0, delta)
