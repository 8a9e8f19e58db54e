"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 estimation failure.

A ``--config`` file is INI-style: an ``[experiment]`` section (n, B,
estimators, master_seed), one section per subcommand (``[table1]``,
``[table2]``, ``[noise]``), and one per estimator (``[pw]``, ``[cd]``, ...)
whose keys become estimator overrides. Command-line flags win over the file.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import sys
from pathlib import Path

from . import bench, volfit
from . import estimators as est
from .errors import EstimationError, InputError
from .generators import KINDS, GeneratorSpec, NoiseSpec, sample
from .pointcloud import load_csv, save_csv

EXIT_OK, EXIT_USAGE, EXIT_ESTIMATION = 0, 1, 2

log = logging.getLogger("dimest")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text, conv=str):
    return [conv(t.strip()) for t in str(text).split(",") if t.strip()]


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="parallel replicates")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="where artifacts go")
    p.add_argument("--config", type=Path, default=None, help="INI file with defaults")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="dimest", description="Estimate intrinsic dimension from samples.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="sample a synthetic set to CSV")
    g.add_argument("--kind", choices=KINDS, required=True)
    g.add_argument("--d", type=int, required=True, help="ambient dimension")
    g.add_argument("--k", type=int, required=True, help="intrinsic dimension")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--sigma", type=float, default=0.0, help="Gaussian noise level")
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    g.add_argument("--output", "--out", "-o", type=Path, default=None,
                   help="CSV path (default: <out-dir>/<kind>_d<d>_k<k>.csv)")
    g.add_argument("--header", action="store_true")

    e = sub.add_parser("estimate", parents=[common], help="estimate dimension of a CSV sample")
    e.add_argument("input", type=Path, nargs="?", default=None)
    e.add_argument("--input", "-i", dest="input_flag", type=Path, default=None)
    e.add_argument("--estimator", "-e", action="append", default=[],
                   help=f"one of {est.METHODS}; repeat or comma-separate (default: pw)")
    e.add_argument("--r", type=float, default=None, help="single radius (ratio form)")
    e.add_argument("--r2", type=float, default=None, help="fine radius for two-scale capacity")
    e.add_argument("--grid", type=float, nargs=3, metavar=("RMIN", "RMAX", "M"), default=None)
    e.add_argument("--schedule", choices=est.SCHEDULES[:-1], default=None,
                   help="rate formula giving a single radius from n")
    e.add_argument("--d-prime", type=float, default=None)
    e.add_argument("--beta", type=float, default=None)
    e.add_argument("--C", type=float, default=None)
    e.add_argument("--delta", type=float, default=None)
    e.add_argument("--dim-guess", type=float, default=None)
    e.add_argument("--quantile", type=float, default=est.POINTWISE_QUANTILE)
    e.add_argument("--M", type=int, default=volfit.DEFAULT_MC_SAMPLES, help="Monte-Carlo budget")
    e.add_argument("--R", type=float, default=None, help="polynomial fit interval")
    e.add_argument("--r0", type=float, default=None, help="polynomial evaluation radius")
    e.add_argument("--profile", type=Path, default=None,
                   help="also write a V_n profile CSV (r, V_n, std_error) on the --grid radii")

    for name, helptext in (("table1", "hypercube study"), ("table2", "manifold subset"),
                           ("noise", "noise sweep")):
        t = sub.add_parser(name, parents=[common], help=helptext)
        t.add_argument("--B", type=int, default=None)
        t.add_argument("--n", type=int, default=None)
        t.add_argument("--estimators", default=None, help="comma-separated")
        t.add_argument("--timing", action="store_true", help="add seconds to raw CSVs")
        if name == "table1":
            t.add_argument("--dims", default=None, help="ambient dims, e.g. 2,3 (default 2..7)")
        elif name == "table2":
            t.add_argument("--manifolds", default=None,
                           help=f"subset of {','.join(bench.MANIFOLDS)}")
        else:
            t.add_argument("--d", type=int, default=None)
            t.add_argument("--k", type=int, default=None)
            t.add_argument("--sigmas", default=None, help="comma-separated noise levels")

    lm = sub.add_parser("lemma1-check", parents=[common],
                        help="volume vs capacity sandwich at one radius")
    lm.add_argument("input", type=Path, nargs="?", default=None)
    lm.add_argument("--input", "-i", dest="input_flag", type=Path, default=None)
    lm.add_argument("--r", type=float, required=True)
    lm.add_argument("--M", type=int, default=volfit.DEFAULT_MC_SAMPLES)
    lm.add_argument("--method", choices=("auto", "monte_carlo", "exact_1d"), default="auto")

    ci = sub.add_parser("cd-invariance", parents=[common],
                        help="correlation dimension under uniform vs triangular density")
    ci.add_argument("--n", type=int, default=2500)
    ci.add_argument("--B", type=int, default=10)
    ci.add_argument("--scale", type=float, default=1.0)
    return parser


# --- config --------------------------------------------------------------------

def _load_config(path: Path | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path is not None:
        if not path.exists():
            raise UsageError(f"no such config file: {path}")
        cfg.read(path, encoding="utf-8")
    return cfg


def _coerce(value: str):
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    if "," in value:
        return [_coerce(v.strip()) for v in value.split(",") if v.strip()]
    return value


def _overrides(cfg: configparser.ConfigParser) -> dict:
    return {name: {k: _coerce(v) for k, v in cfg[name].items()}
            for name in est.METHODS if cfg.has_section(name)}


def _pick(flag, cfg, section, key, default, conv=str):
    if flag is not None:
        return flag
    for sec in (section, "experiment"):
        if cfg.has_option(sec, key):
            return conv(cfg.get(sec, key))
    return default


def _seed(args, cfg) -> int:
    return _pick(args.seed, cfg, args.command, "master_seed", 0, int)


# --- commands ------------------------------------------------------------------

def cmd_generate(args, cfg) -> int:
    params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        params[key] = float(value)
    seed = _seed(args, cfg)
    spec = GeneratorSpec(args.kind, args.d, args.k, params, seed)
    cloud = sample(spec, args.n)
    if args.sigma:
        from .generators import add_noise
        cloud = add_noise(cloud, NoiseSpec(args.sigma), bench.replicate_seed(seed, 0, "noise"))
    out = args.output or args.out_dir / f"{args.kind}_d{args.d}_k{args.k}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(cloud, out, header=args.header)
    log.info("wrote %d points to %s", cloud.n, out)
    print(out)
    return EXIT_OK


def _estimate_schedule(args, cloud):
    if args.schedule:
        params = {k: v for k, v in (("d_prime", args.d_prime), ("beta", args.beta),
                                    ("C", args.C), ("delta", args.delta),
                                    ("dim_guess", args.dim_guess)) if v is not None}
        params["d"] = cloud.ambient_dim
        if args.schedule == "correlation_rate":
            params.pop("d")
        return est.schedule(args.schedule, cloud.n, **params)
    if args.grid:
        rmin, rmax, m = args.grid
        return est.loglog_grid(rmin, rmax, int(m))
    if args.r is not None:
        return est.ScaleSchedule((args.r,))
    return None


def _input_cloud(args):
    path = args.input_flag or args.input
    if path is None:
        raise UsageError("an input CSV is required")
    if not path.exists():
        raise UsageError(f"no such input: {path}")
    return load_csv(path)


def cmd_estimate(args, cfg) -> int:
    cloud = _input_cloud(args)
    names = [n for item in (args.estimator or ["pw"]) for n in _csv_list(item)]
    bad = [n for n in names if n not in est.METHODS]
    if bad:
        raise UsageError(f"unknown estimator(s) {bad}; choose from {est.METHODS}")
    sched = _estimate_schedule(args, cloud)
    seed = _seed(args, cfg)
    out = []
    for name in names:
        if name == "cap":
            if args.r2 is not None:
                r1 = args.r if args.r is not None else None
                res = est.est_capacity_two_scale(cloud, r1, args.r2)
            elif sched is not None and len(sched) == 1:
                res = est.est_capacity(cloud, sched.radii[0])
            else:
                res = est.est_capacity_two_scale(cloud)
        elif name == "bc":
            res = est.est_boxcount(cloud, sched)
        elif name == "cd":
            res = est.est_correlation(cloud, sched)
        elif name == "pw":
            res = est.est_pointwise_global(cloud, sched, args.quantile)
        elif name == "vol":
            r = sched.radii[0] if sched is not None else est.volume_rate(
                cloud.n, cloud.ambient_dim + 1, cloud.ambient_dim).radii[0]
            res = volfit.est_volume_dim(cloud, r, args.M, seed)
        else:
            poly = volfit.fit_volume_polynomial(cloud, args.R, M=args.M, seed=seed)
            res = volfit.est_polyvol_dim(poly, args.r0)
            res.info["coeffs"] = list(poly.coeffs)
        out.append(res.to_dict())
    if args.profile is not None:
        radii = sched.radii if sched is not None else est.default_grid(cloud).radii
        volfit.write_volume_profile(volfit.volume_profile(cloud, radii, args.M, seed),
                                    args.profile)
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def _experiment_params(args, cfg, section):
    B = _pick(args.B, cfg, section, "B", 20, int)
    n = _pick(args.n, cfg, section, "n", 2500, int)
    names = _pick(args.estimators, cfg, section, "estimators", "bc,cap,cd,pw")
    return B, n, tuple(_csv_list(names)), _seed(args, cfg), _overrides(cfg)


def _persist(results, args, stem: str, x: str, labels) -> int:
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    for label, res in zip(labels, results):
        bench.write_raw_csv(res, out_dir / f"{stem}_raw_{label}.csv", timing=args.timing)
    keyed = dict(zip(labels, results))
    bench.write_aggregate_json(keyed, out_dir / f"{stem}.json")
    bench.write_plot_csv(keyed, out_dir / f"{stem}_plot.csv", x)
    for label, res in keyed.items():
        for name, s in res.summaries.items():
            log.info("%s %s: mean=%.3f prop_correct=%.2f", label, name, s.mean,
                     s.proportion_correct)
    failed = [(label, r.failed_estimators) for label, r in keyed.items() if r.failed_estimators]
    if failed:
        print(f"estimators failed: {failed}", file=sys.stderr)
        return EXIT_ESTIMATION
    print(out_dir / f"{stem}.json")
    return EXIT_OK


def cmd_table1(args, cfg) -> int:
    B, n, names, seed, ov = _experiment_params(args, cfg, "table1")
    dims = _csv_list(_pick(args.dims, cfg, "table1", "dims", "2,3,4,5,6,7"), int)
    specs = bench.hypercube_specs(dims, B, n, names, seed, ov)
    results = [bench.run_experiment(s, args.threads) for s in specs]
    labels = [f"d{s.generator.ambient_dim}_k{s.generator.intrinsic_dim}" for s in specs]
    return _persist(results, args, "table1", "dim", labels)


def cmd_table2(args, cfg) -> int:
    B, n, names, seed, ov = _experiment_params(args, cfg, "table2")
    manifolds = _csv_list(_pick(args.manifolds, cfg, "table2", "manifolds",
                                ",".join(bench.MANIFOLDS)))
    specs = bench.manifold_specs(manifolds, B, n, names, seed, ov)
    results = [bench.run_experiment(s, args.threads) for s in specs.values()]
    return _persist(results, args, "table2", "dim", list(specs))


def cmd_noise(args, cfg) -> int:
    B, n, names, seed, ov = _experiment_params(args, cfg, "noise")
    d = _pick(args.d, cfg, "noise", "d", 5, int)
    k = _pick(args.k, cfg, "noise", "k", 2, int)
    sigmas = _csv_list(_pick(args.sigmas, cfg, "noise", "sigmas",
                             ",".join(str(s) for s in bench.NOISE_SIGMAS)), float)
    spec = bench.ExperimentSpec(GeneratorSpec("hypercube", d, k), NoiseSpec(), n, B, names,
                                seed, ov)
    results = bench.noise_sweep(spec, sigmas, args.threads)
    labels = [f"sigma{s:g}" for s in sigmas]
    return _persist(results, args, "noise", "sigma", labels)


def cmd_sandwich_check(args, cfg) -> int:
    cloud = _input_cloud(args)
    report = volfit.lemma1_check(cloud, args.r, args.M, _seed(args, cfg), args.method)
    json.dump(report.to_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_cd_invariance(args, cfg) -> int:
    report = bench.cd_invariance_check(args.n, args.B, _seed(args, cfg), args.scale)
    json.dump(report.to_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate, "estimate": cmd_estimate, "table1": cmd_table1,
    "table2": cmd_table2, "noise": cmd_noise, "lemma1-check": cmd_sandwich_check,
    "cd-invariance": cmd_cd_invariance,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and EXIT_USAGE (via _Parser.error) otherwise
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, InputError, FileNotFoundError) as exc:
        print(f"dimest: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EstimationError as exc:
        print(f"dimest: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
