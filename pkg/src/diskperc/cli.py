"""Experiment runner: argparse subcommands over the library.

Every stochastic subcommand takes --seed and is bit-reproducible; results go
to stdout as JSON for single-shot queries or as CSV rows with a schema
header.  A flat key=value config file (# comments allowed) can stand in for
command-line parameters, which keeps experiment logs diff-friendly.
"""
import argparse
import csv

import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

CSV_SCHEMA = "# diskperc-results v1: experiment,params,statistic,value,stderr,seed,wall_s"


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    out: str = "-"

    def to_file(self, path):
        with open(path, "w") as fh:
            fh.write("# diskperc experiment config\n")
            fh.write(f"experiment = {self.experiment}\n")
            fh.write(f"seed = {self.seed}\n")
            fh.write(f"workers = {self.workers}\n")
            fh.write(f"out = {self.out}\n")
            for k, v in sorted(self.params.items()):
                fh.write(f"{k} = {v}\n")

    @staticmethod
    def from_file(path):
        fields = {}
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                k, _, v = line.partition("=")
                fields[k.strip()] = v.strip()
        cfg = ExperimentConfig(experiment=fields.pop("experiment"),
                               seed=int(fields.pop("seed", 0)),
                               workers=int(fields.pop("workers", 1)),
                               out=fields.pop("out", "-"))
        cfg.params = {k: _parse_scalar(v) for k, v in fields.items()}
        return cfg


def _parse_scalar(v):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


@dataclass
class ResultRow:
    experiment: str
    params: str
    statistic: str
    value: float
    stderr: float
    seed: int
    wall_s: float


class ResultWriter:
    def __init__(self, out):
        self._own = out not in ("-", None)
        self._fh = open(out, "w", newline="") if self._own else sys.stdout
        self._fh.write(CSV_SCHEMA + "\n")
        self._csv = csv.writer(self._fh)
        self._csv.writerow(["experiment", "params", "statistic", "value",
                            "stderr", "seed", "wall_s"])

    def row(self, r):
        self._csv.writerow([r.experiment, r.params, r.statistic,
                            repr(float(r.value)), repr(float(r.stderr)),
                            r.seed, f"{r.wall_s:.3f}"])

    def close(self):
        if self._own:
            self._fh.close()


def _emit_json(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True, default=float)
    if out in ("-", None):
        print(text)
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")


def run(config):
    """Dispatch a config to its experiment; yields ResultRow objects."""
    handler = _EXPERIMENTS.get(config.experiment)
    if handler is None:
        raise ValueError(f"unknown experiment {config.experiment!r}")
    reps = config.params.get("reps")
    if reps is not None and int(reps) == 0:
        return
    yield from handler(config)


def _params_str(p):
    return json.dumps(p, sort_keys=True, default=float)


def _exp_crossing(cfg):
    from .percolation import CrossingSpec, crossing_probability

    p = cfg.params
    t0 = time.time()
    spec = CrossingSpec(model=p["model"], param=float(p["param"]),
                        lam=float(p.get("lam", 0.0)), r=float(p.get("r", 0.3)),
                        eps=float(p.get("eps", 0.1)), target=p.get("target", "annulus"))
    est = crossing_probability(spec, int(p["n"]), int(p["reps"]), cfg.seed,
                               workers=cfg.workers)
    yield ResultRow("crossing", _params_str(p), "p_hat", est.p_hat, est.stderr,
                    cfg.seed, time.time() - t0)


def _exp_sweep(cfg):
    from .percolation import threshold_sweep

    p = cfg.params
    t0 = time.time()
    ns = [int(x) for x in str(p["n_list"]).split(",")]
    grid = [float(x) for x in str(p["grid"]).split(",")]
    res = threshold_sweep(p["model"], grid, ns, int(p["reps"]), cfg.seed,
                          r=float(p.get("r", 0.3)), eps=float(p.get("eps", 0.1)),
                          lam=float(p.get("lam", 0.0)), workers=cfg.workers)
    for row in res.rows:
        yield ResultRow("sweep", _params_str({**p, "n": row["n"], "param": row["param"]}),
                        "p_hat", row["p"], (row["hi"] - row["lo"]) / 2, row["seed"],
                        time.time() - t0)
    for n, fit in res.fits.items():
        yield ResultRow("sweep", _params_str({**p, "n": n}), "midpoint",
                        fit.midpoint, fit.midpoint_se, cfg.seed, time.time() - t0)


_EXPERIMENTS = {"crossing": _exp_crossing, "sweep": _exp_sweep}


# ---------------------------------------------------------------------------

def cmd_lattice_info(args):
    from .lattice import build_lattice

    lat = build_lattice(args.n)
    _emit_json(dict(
        n=lat.n, vertices=lat.num_vertices,
        interior_edges=int(lat.interior_edges.shape[0]),
        boundary_edges=int(lat.boundary_edges.shape[0]),
        inner_boundary=int(lat.inner_boundary.shape[0]),
        outer_boundary=int(lat.outer_boundary.shape[0]),
        area_ratio=lat.num_vertices / args.n ** 2,
    ), args.out)
    return 0


def cmd_potential(args):
    from .lattice import ball_vertices, build_lattice
    from .potential import DirichletSolver, continuum_cap_ball

    if args.op == "cap-sweep":
        writer = ResultWriter(args.out)
        target = continuum_cap_ball(args.r)
        for n in (16, 32, 64, 128):
            t0 = time.time()
            s = DirichletSolver(build_lattice(n))
            cap = s.capacity(ball_vertices(s.lattice, (0, 0), args.r))
            for stat, val in (("cap_discrete", cap), ("cap_continuum", target),
                              ("cap_error", abs(cap - target))):
                writer.row(ResultRow("cap-sweep", _params_str(dict(n=n, r=args.r)),
                                     stat, val, 0.0, 0, time.time() - t0))
        writer.close()
        return 0
    lat = build_lattice(args.n)
    s = DirichletSolver(lat)
    if args.op == "cap":
        K = ball_vertices(lat, (0, 0), args.r)
        _emit_json(dict(n=args.n, r=args.r, cap=s.capacity(K),
                        cap_continuum=continuum_cap_ball(args.r)), args.out)
    elif args.op == "green":
        x = lat.index_of(*args.x)
        y = lat.index_of(*args.y)
        if x < 0 or y < 0:
            raise SystemExit("green: point outside the lattice disk")
        _emit_json(dict(n=args.n, x=args.x, y=args.y, green=s.green(x, y)), args.out)
    elif args.op == "equilibrium":
        K = ball_vertices(lat, (0, 0), args.r)
        em = s.equilibrium_measure(K)
        _emit_json(dict(n=args.n, r=args.r, cap=em.cap,
                        support_size=int(em.support.size),
                        max_weight=float(em.weights.max())), args.out)
    return 0


def cmd_excursions(args):
    from . import excursions
    from .lattice import build_lattice
    from .rng import substream

    lat = build_lattice(args.n)
    rng = substream(args.seed)
    if args.sampler == "direct":
        cloud = excursions.sample_cloud_direct(lat, args.u, rng)
    elif args.sampler == "single":
        cloud = excursions.sample_cloud_single_walk(lat, args.u, rng)
    elif args.sampler == "local":
        from .lattice import ball_vertices
        from .potential import DirichletSolver
        K = ball_vertices(lat, (0, 0), args.r)
        cloud = excursions.sample_hitting_K(lat, args.u, K, DirichletSolver(lat), rng)
    else:
        raise SystemExit(f"unknown sampler {args.sampler}")
    out = dict(n=args.n, u=args.u, sampler=args.sampler, count=cloud.count,
               occupied_fraction=float(cloud.occupied.mean()),
               vacant_fraction=float(1.0 - cloud.occupied.mean()), seed=args.seed)
    if args.render:
        from .render import render_occupied
        render_occupied(lat, cloud.occupied, args.render, interface_arc="lower")
        out["render"] = args.render
    _emit_json(out, args.out)
    return 0


def cmd_loopsoup(args):
    from . import loopsoup
    from .lattice import build_lattice
    from .rng import substream

    lat = build_lattice(args.n)
    soup = loopsoup.sample_loop_soup(lat, args.lam, substream(args.seed))
    writer = ResultWriter(args.out)
    t0 = time.time()
    lens, counts = np.unique(soup.lengths, return_counts=True)
    for l, c in zip(lens, counts):
        writer.row(ResultRow("loopsoup", _params_str(dict(n=args.n, lam=args.lam)),
                             f"length_{l}", float(c), 0.0, args.seed, time.time() - t0))
    labels = soup.cluster_labels(lat.num_vertices)
    if soup.count:
        _, sizes = np.unique(labels[labels >= 0], return_counts=True)
        hist, edges = np.histogram(sizes, bins=[1, 2, 4, 8, 16, 32, 64, 1 << 30])
        for lo, c in zip(edges[:-1], hist):
            writer.row(ResultRow("loopsoup", _params_str(dict(n=args.n, lam=args.lam)),
                                 f"cluster_size_ge_{lo}", float(c), 0.0, args.seed,
                                 time.time() - t0))
    writer.close()
    return 0


def cmd_gff(args):
    from .percolation import CrossingSpec, crossing_probability

    target = "inner-boundary" if args.event == "boundary" else "annulus"
    spec = CrossingSpec("gff-level", args.level, r=args.r, eps=args.eps, target=target)
    t0 = time.time()
    est = crossing_probability(spec, args.n, args.reps, args.seed, workers=args.workers)
    writer = ResultWriter(args.out)
    writer.row(ResultRow("gff", _params_str(dict(n=args.n, h=args.level, event=args.event,
                                                 r=args.r, eps=args.eps, reps=args.reps)),
                         "p_hat", est.p_hat, est.stderr, args.seed, time.time() - t0))
    writer.close()
    if args.render:
        from .gff import FieldSampler
        from .lattice import build_lattice
        from .potential import DirichletSolver
        from .render import render_field
        from .rng import substream
        lat = build_lattice(args.n)
        phi = FieldSampler(DirichletSolver(lat)).sample(substream(args.seed))
        render_field(lat, phi, args.level, args.render)
    return 0


def cmd_crossing(args):
    cfg = ExperimentConfig("crossing", dict(model=args.model, n=args.n, param=args.param,
                                            lam=args.lam, r=args.r, eps=args.eps,
                                            reps=args.reps, target=args.target),
                           seed=args.seed, workers=args.workers, out=args.out)
    writer = ResultWriter(args.out)
    for row in run(cfg):
        writer.row(row)
    writer.close()
    return 0


def cmd_sweep(args):
    cfg = ExperimentConfig("sweep", dict(model=args.model, n_list=args.n_list,
                                         grid=args.grid, reps=args.reps, lam=args.lam,
                                         r=args.r, eps=args.eps),
                           seed=args.seed, workers=args.workers, out=args.out)
    writer = ResultWriter(args.out)
    for row in run(cfg):
        writer.row(row)
    writer.close()
    return 0


def cmd_sle(args):
    from . import sle
    from .rng import substream

    writer = ResultWriter(args.out)
    t0 = time.time()
    if args.stat == "hit":
        frac = sle.boundary_hit_statistic(args.kappa, args.alpha, args.T, args.dt,
                                          args.delta, args.reps, substream(args.seed),
                                          scheme=args.scheme)
        se = float(np.sqrt(frac * (1 - frac) / args.reps))
        writer.row(ResultRow("sle-hit", _params_str(vars_subset(args, "kappa alpha T dt delta reps scheme")),
                             "hit_fraction", frac, se, args.seed, time.time() - t0))
    elif args.stat == "restriction":
        p, se, pex = sle.restriction_check(args.alpha, args.x0, args.delta_a, args.reps,
                                           args.seed, n=args.n)
        writer.row(ResultRow("sle-restriction", _params_str(vars_subset(args, "alpha x0 delta_a reps n")),
                             "p_mc", p, se, args.seed, time.time() - t0))
        writer.row(ResultRow("sle-restriction", _params_str(vars_subset(args, "alpha x0 delta_a reps n")),
                             "p_exact", pex, 0.0, args.seed, time.time() - t0))
    writer.close()
    if args.render:
        from .rng import substream as ss
        drv = sle.sample_driving(args.kappa, sle.rho_kappa_alpha(args.kappa, args.alpha),
                                 min(args.T, 1.0), max(args.dt, 1e-4), ss(args.seed))
        tr = sle.solve_trace(drv, stride=max(1, drv.W.shape[0] // 800))
        _render_trace(tr, args.render)
    return 0


def _render_trace(trace, path):
    from PIL import Image

    pts = trace.points
    size = 512
    img = np.full((size, size, 3), 255, dtype=np.uint8)
    w = max(1.0, np.abs(pts.real).max() * 1.1)
    hmax = max(1.0, pts.imag.max() * 1.1)
    xs = ((pts.real + w) / (2 * w) * (size - 1)).astype(int)
    ys = (size - 1 - pts.imag / hmax * (size - 1)).astype(int)
    img[np.clip(ys, 0, size - 1), np.clip(xs, 0, size - 1)] = (220, 30, 30)
    Image.fromarray(img, "RGB").save(path, format="PNG")


def vars_subset(args, names):
    return {k: getattr(args, k) for k in names.split()}


def cmd_coupling(args):
    from . import coupling
    from .rng import substream

    writer = ResultWriter(args.out)
    t0 = time.time()
    exp = args.experiment
    if exp == "kmt":
        for n in (16, 32, 64):
            sups, _ = coupling.kmt_deviation_stats(n, args.reps, substream(args.seed, n))
            writer.row(ResultRow("coupling-kmt", _params_str(dict(n=n, reps=args.reps)),
                                 "median_sup_deviation", float(np.median(sups)), 0.0,
                                 args.seed, time.time() - t0))
    elif exp == "last-exit":
        gaps, exceed, _ = coupling.last_exit_gap(args.r, args.n, args.reps, substream(args.seed))
        for s, e in zip((5.0, 10.0, 20.0, 40.0), exceed):
            writer.row(ResultRow("coupling-last-exit", _params_str(dict(n=args.n, r=args.r, s=s)),
                                 "exceed_rate", float(e), 0.0, args.seed, time.time() - t0))
    elif exp == "capacity":
        for row in coupling.capacity_convergence_table((16, 32, 64, 128)):
            writer.row(ResultRow("coupling-capacity", _params_str(dict(shape=row["shape"], n=row["n"])),
                                 "abs_error", row["err"], 0.0, 0, time.time() - t0))
    elif exp == "beurling":
        probs, slope = coupling.beurling_check(args.n, args.reps, substream(args.seed))
        for d, p in zip((2, 4, 8, 16), probs):
            writer.row(ResultRow("coupling-beurling", _params_str(dict(n=args.n, d=d)),
                                 "escape_prob", float(p), 0.0, args.seed, time.time() - t0))
        writer.row(ResultRow("coupling-beurling", _params_str(dict(n=args.n)),
                             "fitted_exponent", slope, 0.0, args.seed, time.time() - t0))
    elif exp == "excursion-match":
        sups, exceed, mism = coupling.excursion_match(args.r, args.n, args.u, args.reps,
                                                      substream(args.seed))
        writer.row(ResultRow("coupling-excursion-match", _params_str(dict(n=args.n, r=args.r, u=args.u)),
                             "median_sup", float(np.median(sups)) if sups.size else float("nan"),
                             0.0, args.seed, time.time() - t0))
        for s, e in zip((5.0, 10.0, 20.0, 40.0), exceed):
            writer.row(ResultRow("coupling-excursion-match", _params_str(dict(n=args.n, s=s)),
                                 "exceed_rate", float(e), 0.0, args.seed, time.time() - t0))
        writer.row(ResultRow("coupling-excursion-match", _params_str(dict(n=args.n)),
                             "count_mismatch_rate", mism, 0.0, args.seed, time.time() - t0))
    else:
        raise SystemExit(f"unknown experiment {exp}")
    writer.close()
    return 0


def cmd_render(args):
    from . import excursions
    from .lattice import build_lattice
    from .render import render_occupied
    from .rng import substream

    lat = build_lattice(args.n)
    cloud = excursions.sample_cloud_direct(lat, args.u, substream(args.seed))
    render_occupied(lat, cloud.occupied, args.path, interface_arc="lower")
    print(args.path)
    return 0


def cmd_validate(args):
    from . import acceptance

    selected = None
    if args.only:
        selected = {int(x) for x in args.only.split(",")}
    records = acceptance.run_all(selected=selected)
    failed = [r for r in records if not r["passed"]]
    print(f"{len(records) - len(failed)}/{len(records)} criteria passed")
    return 1 if failed else 0


def build_parser():
    p = argparse.ArgumentParser(prog="diskperc",
                                description="simulation lab for disk excursion/field percolation")
    p.add_argument("--config", help="flat key=value config file replacing subcommand flags")
    sub = p.add_subparsers(dest="cmd", required=False)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", default="-")

    sp = sub.add_parser("lattice-info")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--out", default="-")
    sp.set_defaults(fn=cmd_lattice_info)

    sp = sub.add_parser("potential")
    sp.add_argument("--n", type=int, default=32)
    sp.add_argument("--op", choices=["cap", "green", "equilibrium", "cap-sweep"], required=True)
    sp.add_argument("--r", type=float, default=0.5)
    sp.add_argument("--x", type=int, nargs=2, default=(0, 0))
    sp.add_argument("--y", type=int, nargs=2, default=(0, 0))
    sp.add_argument("--out", default="-")
    sp.set_defaults(fn=cmd_potential)

    sp = sub.add_parser("excursions")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--u", type=float, required=True)
    sp.add_argument("--sampler", choices=["direct", "local", "single"], default="direct")
    sp.add_argument("--r", type=float, default=0.3)
    sp.add_argument("--render")
    common(sp)
    sp.set_defaults(fn=cmd_excursions)

    sp = sub.add_parser("loopsoup")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--stats", action="store_true")
    common(sp)
    sp.set_defaults(fn=cmd_loopsoup)

    sp = sub.add_parser("gff")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--h", dest="level", type=float, required=True)
    sp.add_argument("--event", choices=["disk-crossing", "boundary"], default="disk-crossing")
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--r", type=float, default=0.3)
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--render")
    common(sp)
    sp.set_defaults(fn=cmd_gff)

    sp = sub.add_parser("crossing")
    sp.add_argument("--model", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--param", type=float, required=True)
    sp.add_argument("--lam", type=float, default=0.0)
    sp.add_argument("--r", type=float, default=0.3)
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--target", default="annulus")
    sp.add_argument("--reps", type=int, required=True)
    common(sp)
    sp.set_defaults(fn=cmd_crossing)

    sp = sub.add_parser("sweep")
    sp.add_argument("--model", required=True)
    sp.add_argument("--n-list", required=True)
    sp.add_argument("--grid", required=True)
    sp.add_argument("--reps", type=int, required=True)
    sp.add_argument("--lam", type=float, default=0.0)
    sp.add_argument("--r", type=float, default=0.3)
    sp.add_argument("--eps", type=float, default=0.1)
    common(sp)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("sle")
    sp.add_argument("--kappa", type=float, default=8 / 3)
    sp.add_argument("--alpha", type=float, default=1 / 3)
    sp.add_argument("--dt", type=float, default=5e-5)
    sp.add_argument("--T", type=float, default=50.0)
    sp.add_argument("--delta", type=float, default=0.01)
    sp.add_argument("--x0", type=float, default=1.0)
    sp.add_argument("--delta-a", dest="delta_a", type=float, default=0.5)
    sp.add_argument("--n", type=int, default=128)
    sp.add_argument("--reps", type=int, default=400)
    sp.add_argument("--stat", choices=["hit", "restriction"], required=True)
    sp.add_argument("--scheme", choices=["besq", "euler"], default="besq")
    sp.add_argument("--render")
    common(sp)
    sp.set_defaults(fn=cmd_sle)

    sp = sub.add_parser("coupling")
    sp.add_argument("--experiment", required=True,
                    choices=["kmt", "last-exit", "capacity", "beurling", "excursion-match"])
    sp.add_argument("--n", type=int, default=64)
    sp.add_argument("--r", type=float, default=0.6)
    sp.add_argument("--u", type=float, default=1.0)
    sp.add_argument("--reps", type=int, default=300)
    common(sp)
    sp.set_defaults(fn=cmd_coupling)

    sp = sub.add_parser("render")
    sp.add_argument("--n", type=int, default=64)
    sp.add_argument("--u", type=float, default=1.0)
    sp.add_argument("--path", required=True)
    common(sp)
    sp.set_defaults(fn=cmd_render)

    sp = sub.add_parser("validate")
    sp.add_argument("--only", help="comma-separated criterion numbers")
    sp.set_defaults(fn=cmd_validate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        writer = ResultWriter(cfg.out)
        for row in run(cfg):
            writer.row(row)
        writer.close()
        return 0
    if not getattr(args, "cmd", None):
        parser.print_help()
        return 2
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
