"""Replicate experiments: generate, perturb, estimate, aggregate, persist.

Every random stream is derived from ``(master_seed, replicate, stage)`` with
:class:`numpy.random.SeedSequence`, so results do not depend on thread count
or execution order.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import estimators as est
from . import volfit
from .errors import EstimationError, InputError
from .generators import GeneratorSpec, NoiseSpec, add_noise, sample
from .pointcloud import PointCloud

log = logging.getLogger(__name__)

_STAGES = {"sample": 0, "noise": 1, "estimate": 2, "uniform": 3, "triangular": 4}
FAILURE_BUDGET = 0.20

HYPERCUBE_ROWS = tuple((d, k) for d in range(2, 8) for k in range(d, 1, -1))
MANIFOLDS = {
    "M1": ("sphere", 11, 10),
    "M2": ("affine", 5, 3),
    "M5": ("helix", 3, 2),
    "M7": ("swiss_roll", 3, 2),
    "M9": ("affine", 20, 20),
}
NOISE_SIGMAS = (0.0, 0.005, 0.01, 0.02, 0.05)


def replicate_seed(master_seed: int, replicate: int, stage: str) -> int:
    """64-bit seed for one stage of one replicate."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replicate), _STAGES[stage]))
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


@dataclass(frozen=True)
class ExperimentSpec:
    generator: GeneratorSpec
    noise: NoiseSpec = NoiseSpec()
    n: int = 2500
    B: int = 20
    estimators: tuple = ("bc", "cap", "cd", "pw")
    master_seed: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.B < 1:
            raise InputError("need at least one replicate (B >= 1)")
        if self.n < 2:
            raise InputError("need n >= 2")
        names = tuple(self.estimators)
        if not names:
            raise InputError("estimator set is empty")
        bad = [e for e in names if e not in est.METHODS]
        if bad:
            raise InputError(f"unknown estimators {bad}; choose from {est.METHODS}")
        object.__setattr__(self, "estimators", names)


@dataclass(frozen=True)
class EstimatorSummary:
    estimator: str
    truth: int
    values: tuple           # NaN marks a failed replicate
    seconds: tuple
    errors: tuple = ()      # (replicate, message) pairs

    @property
    def ok_values(self) -> np.ndarray:
        v = np.asarray(self.values, dtype=float)
        return v[np.isfinite(v)]

    @property
    def failures(self) -> int:
        return len(self.values) - self.ok_values.size

    @property
    def failed(self) -> bool:
        return self.failures > FAILURE_BUDGET * len(self.values)

    @property
    def rounded(self) -> tuple:
        return tuple(est.nearest_integer(v) if math.isfinite(v) else None for v in self.values)

    @property
    def mean(self) -> float:
        v = self.ok_values
        return float(np.mean(v)) if v.size and not self.failed else math.nan

    @property
    def std(self) -> float:
        v = self.ok_values
        return float(np.std(v)) if v.size and not self.failed else math.nan

    @property
    def proportion_correct(self) -> float:
        if self.failed:
            return math.nan
        hits = sum(1 for r in self.rounded if r == self.truth)
        return hits / len(self.values)

    def aggregate(self) -> dict:
        return _aggregate_dict(self.mean, self.std, self.proportion_correct, self.failures,
                               self.errors[0][1] if self.failed and self.errors else None)


def _aggregate_dict(mean, std, prop, failures, error=None) -> dict:
    def clean(x):
        return None if x is None or (isinstance(x, float) and math.isnan(x)) else x
    out = {"mean": clean(mean), "std": clean(std), "proportion_correct": clean(prop),
           "failures": failures}
    if error:
        out["error"] = error
    return out


@dataclass(frozen=True)
class ExperimentResult:
    spec: ExperimentSpec
    summaries: dict

    def __getitem__(self, name) -> EstimatorSummary:
        return self.summaries[name]

    @property
    def failed_estimators(self) -> list[str]:
        return [k for k, s in self.summaries.items() if s.failed]

    def aggregate(self) -> dict:
        g = self.spec.generator
        return {
            "kind": g.kind, "d": g.ambient_dim, "intrinsic_dim": g.intrinsic_dim,
            "sigma": self.spec.noise.sigma, "n": self.spec.n, "B": self.spec.B,
            "master_seed": self.spec.master_seed,
            "estimators": {k: s.aggregate() for k, s in self.summaries.items()},
        }

    def timings(self) -> dict:
        return {k: float(sum(s.seconds)) for k, s in self.summaries.items()}


# --- running -------------------------------------------------------------------

def _grid(cloud: PointCloud, opts: dict) -> est.ScaleSchedule:
    if "radii" in opts:
        radii = np.atleast_1d(np.asarray(opts["radii"], dtype=float))
        return est.ScaleSchedule(tuple(sorted(radii, reverse=True)))
    return est.default_grid(
        cloud, m=int(opts.get("m", est.GRID_POINTS)),
        lower_pct=float(opts.get("lower_pct", est.GRID_LOWER_PCT)),
        upper_pct=float(opts.get("upper_pct", est.GRID_UPPER_PCT)))


def run_estimator(name: str, cloud: PointCloud, opts: dict | None = None,
                  seed: int = 0) -> est.DimensionEstimate:
    """Run one estimator with bench defaults, adjusted by ``opts``."""
    opts = dict(opts or {})
    if name == "bc":
        return est.est_boxcount(cloud, _grid(cloud, opts))
    if name == "cd":
        return est.est_correlation(cloud, _grid(cloud, opts))
    if name == "pw":
        return est.est_pointwise_global(cloud, _grid(cloud, opts),
                                        float(opts.get("quantile", est.POINTWISE_QUANTILE)))
    if name == "cap":
        if "r" in opts:
            return est.est_capacity(cloud, float(opts["r"]))
        return est.est_capacity_two_scale(cloud, opts.get("r1"), opts.get("r2"))
    M = int(opts.get("M", volfit.DEFAULT_MC_SAMPLES))
    if name == "vol":
        d = cloud.ambient_dim
        r = opts.get("r")
        if r is None:
            r = est.volume_rate(cloud.n, float(opts.get("d_prime", d + 1)), d).radii[0]
        return volfit.est_volume_dim(cloud, float(r), M, seed)
    if name == "polyvol":
        R = opts.get("R")
        poly = volfit.fit_volume_polynomial(cloud, None if R is None else float(R),
                                            int(opts.get("m", 50)), M, seed)
        r0 = opts.get("r0")
        return volfit.est_polyvol_dim(poly, None if r0 is None else float(r0))
    raise InputError(f"unknown estimator {name!r}")


def replicate_cloud(spec: ExperimentSpec, b: int) -> PointCloud:
    gen = spec.generator.with_seed(replicate_seed(spec.master_seed, b, "sample"))
    cloud = sample(gen, spec.n)
    return add_noise(cloud, spec.noise, replicate_seed(spec.master_seed, b, "noise"))


def _run_replicate(spec: ExperimentSpec, b: int) -> dict:
    cloud = replicate_cloud(spec, b)
    seed = replicate_seed(spec.master_seed, b, "estimate")
    out = {}
    for name in spec.estimators:
        t0 = time.perf_counter()
        try:
            value, err = run_estimator(name, cloud, spec.overrides.get(name), seed).value, None
        except (EstimationError, InputError) as exc:
            value, err = math.nan, f"{type(exc).__name__}: {exc}"
            log.info("replicate %d, %s failed: %s", b, name, err)
        out[name] = (value, time.perf_counter() - t0, err)
    return out


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Run all ``B`` replicates; failures are recorded per estimator, not raised."""
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            reps = list(pool.map(lambda b: _run_replicate(spec, b), range(spec.B)))
    else:
        reps = [_run_replicate(spec, b) for b in range(spec.B)]
    truth = spec.generator.intrinsic_dim
    summaries = {}
    for name in spec.estimators:
        values = tuple(float(r[name][0]) for r in reps)
        seconds = tuple(r[name][1] for r in reps)
        errors = tuple((b, r[name][2]) for b, r in enumerate(reps) if r[name][2])
        summaries[name] = EstimatorSummary(name, truth, values, seconds, errors)
        if summaries[name].failed:
            log.warning("%s failed in %d of %d replicates", name, len(errors), spec.B)
    return ExperimentResult(spec, summaries)


def noise_sweep(spec: ExperimentSpec, sigmas, threads: int = 1) -> list[ExperimentResult]:
    """One experiment per noise level; all levels share the same base clouds."""
    sigmas = list(sigmas)
    if not sigmas:
        raise InputError("noise sweep needs at least one sigma")
    return [run_experiment(replace(spec, noise=NoiseSpec(float(s))), threads) for s in sigmas]


def hypercube_specs(dims, B=20, n=2500, estimators=("bc", "cap", "cd", "pw"), master_seed=0,
                 overrides=None) -> list[ExperimentSpec]:
    dims = set(dims)
    return [ExperimentSpec(GeneratorSpec("hypercube", d, k), NoiseSpec(), n, B,
                           tuple(estimators), master_seed, dict(overrides or {}))
            for d, k in HYPERCUBE_ROWS if d in dims]


def manifold_specs(manifolds, B=20, n=2500, estimators=("bc", "cap", "cd", "pw"), master_seed=0,
                 overrides=None) -> dict[str, ExperimentSpec]:
    out = {}
    for name in manifolds:
        if name not in MANIFOLDS:
            raise InputError(f"unknown manifold {name!r}; available: {sorted(MANIFOLDS)}")
        kind, d, k = MANIFOLDS[name]
        out[name] = ExperimentSpec(GeneratorSpec(kind, d, k), NoiseSpec(), n, B,
                                   tuple(estimators), master_seed, dict(overrides or {}))
    return out


# --- density invariance of the correlation dimension ---------------------------

@dataclass(frozen=True)
class CDInvarianceReport:
    n: int
    B: int
    uniform_values: tuple
    triangular_values: tuple
    uniform_rate: float
    triangular_rate: float
    threshold: float
    reliable: bool

    @property
    def passed(self) -> bool:
        return self.uniform_rate >= self.threshold and self.triangular_rate >= self.threshold

    def to_dict(self) -> dict:
        def clean(vals):
            return [v if math.isfinite(v) else None for v in vals]
        return {"n": self.n, "B": self.B, "uniform_values": clean(self.uniform_values),
                "triangular_values": clean(self.triangular_values),
                "uniform_rate": self.uniform_rate, "triangular_rate": self.triangular_rate,
                "threshold": self.threshold, "reliable": self.reliable, "passed": self.passed}


def cd_invariance_check(n: int = 2500, B: int = 10, seed: int = 0, scale: float = 1.0,
                        schedule=None, threshold: float = 0.9) -> CDInvarianceReport:
    """Correlation dimension of the unit square under uniform and triangular densities.

    The triangular sample has independent coordinates with density ``2x`` on
    ``[0, 1]``. Both should round to 2. ``scale`` multiplies both samples (and
    ``schedule``, when given). Runs with ``n < 500`` are flagged unreliable.
    """
    sched = None if schedule is None else est._as_schedule(schedule).scaled(scale)
    uni, tri = [], []
    for b in range(B):
        u = np.random.default_rng(replicate_seed(seed, b, "uniform")).random((n, 2))
        t = np.sqrt(np.random.default_rng(replicate_seed(seed, b, "triangular")).random((n, 2)))
        for pts, bucket in ((u, uni), (t, tri)):
            try:
                bucket.append(est.est_correlation(PointCloud(pts * scale), sched).value)
            except (EstimationError, InputError):
                bucket.append(math.nan)

    def rate(vals):
        return sum(1 for v in vals if math.isfinite(v) and est.nearest_integer(v) == 2) / B

    return CDInvarianceReport(n, B, tuple(uni), tuple(tri), rate(uni), rate(tri), threshold,
                              n >= 500)


# --- persistence ---------------------------------------------------------------

RAW_COLUMNS = ("replicate", "estimator", "value", "rounded")


def write_raw_csv(result: ExperimentResult, path, timing: bool = False) -> None:
    """Per-replicate values. Wall-clock seconds are opt-in: they vary between runs."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RAW_COLUMNS + (("seconds",) if timing else ()))
        for b in range(result.spec.B):
            for name in result.spec.estimators:
                s = result.summaries[name]
                v = s.values[b]
                row = [b, name, repr(v) if math.isfinite(v) else "",
                       s.rounded[b] if s.rounded[b] is not None else ""]
                if timing:
                    row.append(f"{s.seconds[b]:.6f}")
                writer.writerow(row)


def read_raw_csv(path) -> dict[str, list[float]]:
    values: dict[str, list[float]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            values.setdefault(row["estimator"], []).append(
                float(row["value"]) if row["value"] else math.nan)
    return values


def aggregate_from_raw(path, truth: int) -> dict:
    """Recompute the aggregate block of :meth:`ExperimentResult.aggregate` from a raw CSV."""
    out = {}
    for name, vals in read_raw_csv(path).items():
        s = EstimatorSummary(name, truth, tuple(vals), (0.0,) * len(vals))
        out[name] = _aggregate_dict(s.mean, s.std, s.proportion_correct, s.failures)
    return out


def write_aggregate_json(results, path, extra: dict | None = None) -> None:
    rows = []
    for key, res in _labelled(results):
        row = res.aggregate()
        if key is not None:
            row["label"] = key
        row["wall_clock_seconds"] = res.timings()
        rows.append(row)
    payload = {"rows": rows, **(extra or {})}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _labelled(results):
    if isinstance(results, dict):
        return list(results.items())
    return [(None, r) for r in results]


def write_plot_csv(results, path, x: str) -> None:
    """Plot-ready series: one row per (x, estimator) with the mean estimate as y."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "series", "d", "intrinsic_dim", "sigma"])
        for _, res in _labelled(results):
            g = res.spec.generator
            xval = g.intrinsic_dim if x == "dim" else res.spec.noise.sigma
            for name, s in res.summaries.items():
                mean = s.mean
                writer.writerow([xval, repr(mean) if math.isfinite(mean) else "", name,
                                 g.ambient_dim, g.intrinsic_dim, res.spec.noise.sigma])
