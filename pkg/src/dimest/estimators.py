"""Dimension estimators built on empirical counts at one or several radii.

Single-radius forms are log-ratios (``log count / log r``); multi-radius forms
are least-squares slopes on a log-log scale. The radii come from a
:class:`ScaleSchedule`, either a data-driven log-spaced grid or one of the
``(log n / n)^a`` rate formulas that make the ratio estimators consistent.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .errors import EstimationError, InputError
from .pointcloud import PointCloud

METHODS = ("cap", "bc", "cd", "pw", "vol", "polyvol")

# default log-log grid: percentiles of the pairwise-distance distribution
GRID_POINTS = 20
GRID_LOWER_PCT = 0.1
GRID_UPPER_PCT = 5.0
GRID_SUBSAMPLE = 500
# coarse/fine radii for the two-scale capacity estimator
CAPACITY_COARSE_PCT = 25.0
CAPACITY_FINE_PCT = 1.0

POINTWISE_QUANTILE = 0.9
POINTWISE_FAILURE_BUDGET = 0.10


def nearest_integer(x: float) -> int:
    """``floor(x + 1/2)``: halves round up."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


@dataclass(frozen=True)
class DimensionEstimate:
    value: float
    method: str
    scales: tuple = ()
    slope_diagnostics: SlopeFit | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown method tag {self.method!r}")
        if not math.isfinite(self.value):
            raise EstimationError(f"{self.method}: non-finite estimate {self.value}")
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "scales", tuple(float(r) for r in self.scales))

    @property
    def rounded(self) -> int:
        return nearest_integer(self.value)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rounded"] = self.rounded
        return out


@dataclass(frozen=True)
class ScaleSchedule:
    """Strictly decreasing positive radii plus a record of where they came from."""

    radii: tuple
    provenance: str = "explicit"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        radii = tuple(float(r) for r in np.atleast_1d(self.radii))
        if not radii:
            raise InputError("a scale schedule needs at least one radius")
        if not all(r > 0 and math.isfinite(r) for r in radii):
            raise InputError(f"radii must be positive and finite, got {radii}")
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise InputError("radii must be strictly decreasing")
        object.__setattr__(self, "radii", radii)

    def __len__(self):
        return len(self.radii)

    def __iter__(self):
        return iter(self.radii)

    def scaled(self, factor: float) -> "ScaleSchedule":
        return ScaleSchedule(tuple(factor * r for r in self.radii), self.provenance,
                             {**self.params, "scaled_by": factor})


def _as_schedule(schedule) -> ScaleSchedule:
    if isinstance(schedule, ScaleSchedule):
        return schedule
    return ScaleSchedule(tuple(np.atleast_1d(np.asarray(schedule, dtype=float))))


# --- schedules -----------------------------------------------------------------

def loglog_grid(r_min: float, r_max: float, m: int) -> ScaleSchedule:
    """``m`` radii geometrically spaced from ``r_max`` down to ``r_min``."""
    if m < 1:
        raise InputError("grid needs m >= 1")
    if not 0 < r_min <= r_max:
        raise InputError(f"need 0 < r_min <= r_max (got {r_min}, {r_max})")
    if m >= 2 and r_min == r_max:
        raise InputError("a grid of m >= 2 radii needs r_min < r_max")
    radii = np.geomspace(r_max, r_min, m) if m > 1 else np.array([r_max])
    return ScaleSchedule(tuple(radii), "loglog_grid", {"r_min": r_min, "r_max": r_max, "m": m})


def _log_ratio(n: int) -> float:
    if n < 2:
        raise InputError("rate schedules need n >= 2")
    return math.log(n) / n


def volume_rate(n: int, d_prime: float, d: int) -> ScaleSchedule:
    """``((log n)/n)^(1/d')`` with ``d' > d``."""
    if not d_prime > d:
        raise InputError(f"volume rate needs d' > d (got d'={d_prime}, d={d})")
    r = _log_ratio(n) ** (1.0 / d_prime)
    return ScaleSchedule((r,), "volume_rate", {"n": n, "d_prime": d_prime, "d": d})


def correlation_rate(n: int, beta: float, dim_guess: float) -> ScaleSchedule:
    """``((log n)/n)^(1/((1+beta) dim))``; ``dim`` is the very quantity being estimated,
    so a guess has to be supplied."""
    if not beta > 0:
        raise InputError(f"correlation rate needs beta > 0 (got {beta})")
    if not dim_guess > 0:
        raise InputError(f"correlation rate needs a positive dimension guess (got {dim_guess})")
    r = _log_ratio(n) ** (1.0 / ((1.0 + beta) * dim_guess))
    return ScaleSchedule((r,), "correlation_rate",
                         {"n": n, "beta": beta, "dim_guess": dim_guess})


def pointwise_rate(n: int, C: float, delta: float, d_prime: float) -> ScaleSchedule:
    """``(C log n / n)^(1/d')`` with ``C > 28/(3 delta)``."""
    if not delta > 0 or not d_prime > 0:
        raise InputError("pointwise rate needs delta > 0 and d' > 0")
    bound = 28.0 / (3.0 * delta)
    if not C > bound:
        raise InputError(f"pointwise rate needs C > 28/(3 delta) = {bound:.6g} (got C={C})")
    r = (C * _log_ratio(n)) ** (1.0 / d_prime)
    return ScaleSchedule((r,), "pointwise_rate",
                         {"n": n, "C": C, "delta": delta, "d_prime": d_prime})


def uniform_pointwise_rate(n: int, beta: float, delta: float, d_prime: float,
                           d: int) -> ScaleSchedule:
    """``(beta log n / n)^(1/(2 d'))`` with ``beta > (4d + 12)/delta^2``."""
    if not delta > 0 or not d_prime > 0:
        raise InputError("uniform pointwise rate needs delta > 0 and d' > 0")
    bound = (4.0 * d + 12.0) / delta**2
    if not beta > bound:
        raise InputError(
            f"uniform pointwise rate needs beta > (4d+12)/delta^2 = {bound:.6g} (got beta={beta})")
    r = (beta * _log_ratio(n)) ** (1.0 / (2.0 * d_prime))
    return ScaleSchedule((r,), "uniform_pointwise_rate",
                         {"n": n, "beta": beta, "delta": delta, "d_prime": d_prime, "d": d})


SCHEDULES = ("volume_rate", "correlation_rate", "pointwise_rate",
             "uniform_pointwise_rate", "loglog_grid")


def schedule(provenance: str, n: int | None = None, **params) -> ScaleSchedule:
    """Build a schedule by name.

    The standardness constants ``delta`` and ``d_prime`` default to 1 and
    ``d + 1``; these are heuristics, recorded in ``params["heuristic"]``.
    """
    heuristic = []
    if provenance in ("pointwise_rate", "uniform_pointwise_rate", "volume_rate"):
        if "d_prime" not in params:
            if "d" not in params:
                raise InputError(f"{provenance} needs d_prime or the ambient dimension d")
            params["d_prime"] = params["d"] + 1
            heuristic.append("d_prime")
    if provenance in ("pointwise_rate", "uniform_pointwise_rate") and "delta" not in params:
        params["delta"] = 1.0
        heuristic.append("delta")
    if provenance == "loglog_grid":
        sched = loglog_grid(params["r_min"], params["r_max"], int(params["m"]))
    elif provenance == "volume_rate":
        sched = volume_rate(n, params["d_prime"], params["d"])
    elif provenance == "correlation_rate":
        sched = correlation_rate(n, params["beta"], params["dim_guess"])
    elif provenance == "pointwise_rate":
        sched = pointwise_rate(n, params["C"], params["delta"], params["d_prime"])
    elif provenance == "uniform_pointwise_rate":
        sched = uniform_pointwise_rate(n, params["beta"], params["delta"], params["d_prime"],
                                       params["d"])
    else:
        raise InputError(f"unknown schedule {provenance!r}; expected one of {SCHEDULES}")
    if heuristic:
        sched.params["heuristic"] = heuristic
    return sched


def _subsample_distances(cloud: PointCloud, size: int) -> np.ndarray:
    # evenly strided indices keep the grid a pure function of the cloud
    idx = np.unique(np.linspace(0, cloud.n - 1, min(size, cloud.n)).round().astype(int))
    dist = pdist(cloud.points[idx])
    return dist[dist > 0]


def default_grid(cloud: PointCloud, m: int = GRID_POINTS, lower_pct: float = GRID_LOWER_PCT,
                 upper_pct: float = GRID_UPPER_PCT, subsample: int = GRID_SUBSAMPLE
                 ) -> ScaleSchedule:
    """Log-spaced radii between two percentiles of the pairwise distances."""
    dist = _subsample_distances(cloud, subsample)
    if dist.size == 0:
        raise EstimationError("cannot place a default grid: fewer than two distinct points")
    lo, hi = np.percentile(dist, [lower_pct, upper_pct])
    if m >= 2 and not lo < hi:
        raise EstimationError("cannot place a default grid: distance percentiles coincide")
    sched = loglog_grid(float(lo), float(hi), m)
    sched.params.update(lower_pct=lower_pct, upper_pct=upper_pct, subsample=subsample)
    return sched


def capacity_scales(cloud: PointCloud, coarse_pct: float = CAPACITY_COARSE_PCT,
                    fine_pct: float = CAPACITY_FINE_PCT,
                    subsample: int = GRID_SUBSAMPLE) -> tuple[float, float]:
    """Default ``(r_coarse, r_fine)`` for :func:`est_capacity_two_scale`."""
    dist = _subsample_distances(cloud, subsample)
    if dist.size == 0:
        raise EstimationError("cannot choose capacity scales: fewer than two distinct points")
    r1, r2 = np.percentile(dist, [coarse_pct, fine_pct])
    return float(r1), float(r2)


# --- regression ----------------------------------------------------------------

def _slopes(x: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise OLS of ``ys[i]`` on ``x``: (slope, intercept, R^2)."""
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    ym = ys.mean(axis=-1, keepdims=True)
    slope = ((ys - ym) * xc).sum(axis=-1) / sxx
    intercept = ym[..., 0] - slope * x.mean()
    resid = ys - (intercept[..., None] + slope[..., None] * x)
    ss_res = (resid**2).sum(axis=-1)
    ss_tot = ((ys - ym) ** 2).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, 1.0)
    return slope, intercept, np.clip(r2, 0.0, 1.0)


def loglog_slope(pairs) -> SlopeFit:
    """Ordinary least squares through ``(log r, log y)`` pairs."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError("pairs must be a sequence of (x, y) tuples")
    if arr.shape[0] < 2:
        raise InputError("a slope needs at least two points")
    x, y = arr[:, 0], arr[:, 1]
    if np.ptp(x) == 0:
        raise InputError("all abscissae are identical")
    slope, intercept, r2 = _slopes(x, y[None, :])
    return SlopeFit(float(slope[0]), float(intercept[0]), float(r2[0]), arr.shape[0])


def _check_ratio_radius(r: float, what: str):
    if not 0 < r < 1:
        raise InputError(f"{what}: single-scale ratio needs 0 < r < 1 (got r={r})")


def _ratio_or_slope(radii: np.ndarray, probs: np.ndarray, method: str,
                    empty_message: str, **info) -> DimensionEstimate:
    keep = probs > 0
    if not keep.any():
        raise EstimationError(empty_message)
    r, p = radii[keep], probs[keep]
    info["dropped_scales"] = int((~keep).sum())
    if r.size == 1:
        _check_ratio_radius(r[0], method)
        return DimensionEstimate(math.log(p[0]) / math.log(r[0]), method, tuple(r), None, info)
    fit = loglog_slope(np.column_stack([np.log(r), np.log(p)]))
    return DimensionEstimate(fit.slope, method, tuple(r), fit, info)


# --- estimators ----------------------------------------------------------------

def est_capacity(cloud: PointCloud, r: float) -> DimensionEstimate:
    """``-log N_sep / log r`` with ``N_sep`` from the greedy r-separated subset."""
    _check_ratio_radius(r, "capacity")
    n_sep = len(cloud.greedy_separated(r))
    return DimensionEstimate(-math.log(n_sep) / math.log(r), "cap", (r,),
                             info={"n_separated": n_sep})


def scale_dependent_dimension(n_coarse: int, n_fine: int, r_coarse: float,
                              r_fine: float) -> float:
    """Slope of ``log N`` between a coarse and a fine radius."""
    if not 0 < r_fine < r_coarse:
        raise InputError(f"need 0 < r_fine < r_coarse (got {r_fine}, {r_coarse})")
    return (math.log(n_fine) - math.log(n_coarse)) / (math.log(r_coarse) - math.log(r_fine))


def est_capacity_two_scale(cloud: PointCloud, r1: float | None = None,
                           r2: float | None = None) -> DimensionEstimate:
    """Two-scale capacity estimate between coarse ``r1`` and fine ``r2``.

    Radii default to the 25th and 1st percentiles of the pairwise distances.
    """
    if r1 is None or r2 is None:
        d1, d2 = capacity_scales(cloud)
        r1 = d1 if r1 is None else r1
        r2 = d2 if r2 is None else r2
    if not 0 < r2 < r1:
        raise InputError(f"two-scale capacity needs 0 < r2 < r1 (got r1={r1}, r2={r2})")
    n1 = len(cloud.greedy_separated(r1))
    n2 = len(cloud.greedy_separated(r2))
    value = scale_dependent_dimension(n1, n2, r1, r2)
    return DimensionEstimate(value, "cap", (r1, r2), info={"n_separated": [n1, n2]})


def est_boxcount(cloud: PointCloud, schedule=None) -> DimensionEstimate:
    """Slope of ``log N_box(r)`` against ``log(1/r)``."""
    sched = default_grid(cloud) if schedule is None else _as_schedule(schedule)
    if len(sched) < 2:
        raise InputError("box counting needs at least two radii")
    radii = np.asarray(sched.radii)
    counts = np.array([cloud.box_count(r) for r in radii])
    if np.all(counts == counts[0]):
        fit = SlopeFit(0.0, math.log(counts[0]), 1.0, len(radii))
        return DimensionEstimate(0.0, "bc", sched.radii, fit,
                                 {"degenerate": True, "counts": counts.tolist()})
    fit = loglog_slope(np.column_stack([-np.log(radii), np.log(counts)]))
    return DimensionEstimate(fit.slope, "bc", sched.radii, fit,
                             {"degenerate": False, "counts": counts.tolist()})


def p_hat(cloud: PointCloud, r: float) -> float:
    """Fraction of unordered pairs at distance strictly below ``r``."""
    if cloud.n < 2:
        raise InputError("p_hat needs at least two points")
    return cloud.count_pairs_within(r) / cloud.n_pairs


def est_correlation(cloud: PointCloud, schedule=None) -> DimensionEstimate:
    """Correlation dimension: ``log p_hat(r) / log r`` or the log-log slope over a grid."""
    if cloud.n < 2:
        raise InputError("correlation dimension needs at least two points")
    sched = default_grid(cloud) if schedule is None else _as_schedule(schedule)
    radii = np.asarray(sched.radii)
    probs = cloud.pair_counts(radii, strict=True) / cloud.n_pairs
    return _ratio_or_slope(radii, probs, "cd", "no pairs at any scale")


def est_pointwise_at(cloud: PointCloud, x, schedule=None) -> DimensionEstimate:
    """Pointwise dimension at ``x`` from the empirical mass of closed balls ``B(x, r)``."""
    sched = default_grid(cloud) if schedule is None else _as_schedule(schedule)
    radii = np.asarray(sched.radii)
    probs = np.array([cloud.count_within(x, r) for r in radii]) / cloud.n
    return _ratio_or_slope(radii, probs, "pw", "empty ball at every scale")


def _order_statistic(values: np.ndarray, q: float) -> float:
    ordered = np.sort(values)
    k = max(1, math.ceil(q * ordered.size - 1e-9))
    return float(ordered[k - 1])


def pointwise_values(cloud: PointCloud, schedule) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample-point estimates at every ``X_i`` (each ball counts its centre).

    Returns ``(values, ok)``; entries with ``ok == False`` had an empty ball at
    every scale and hold NaN.
    """
    sched = _as_schedule(schedule)
    radii = np.asarray(sched.radii)
    probs = cloud.neighbor_counts(radii) / cloud.n
    values = np.full(cloud.n, np.nan)
    full = np.all(probs > 0, axis=1)
    if radii.size == 1:
        _check_ratio_radius(radii[0], "pw")
        values[full] = np.log(probs[full, 0]) / math.log(radii[0])
    elif full.any():
        slope, _, _ = _slopes(np.log(radii), np.log(probs[full]))
        values[full] = slope
    for i in np.flatnonzero(~full):
        try:
            est = _ratio_or_slope(radii, probs[i], "pw", "empty ball at every scale")
        except (EstimationError, InputError):
            continue
        values[i] = est.value
    return values, np.isfinite(values)


def est_pointwise_global(cloud: PointCloud, schedule=None,
                         quantile: float = POINTWISE_QUANTILE) -> DimensionEstimate:
    """Upper quantile (order statistic ``ceil(q n)``) of the per-point estimates."""
    if not 0 < quantile <= 1:
        raise InputError(f"quantile must lie in (0, 1], got {quantile}")
    sched = default_grid(cloud) if schedule is None else _as_schedule(schedule)
    values, ok = pointwise_values(cloud, sched)
    failed = int((~ok).sum())
    if failed > POINTWISE_FAILURE_BUDGET * cloud.n or failed == cloud.n:
        raise EstimationError(
            f"pointwise estimate failed at {failed} of {cloud.n} points")
    value = _order_statistic(values[ok], quantile)
    return DimensionEstimate(value, "pw", sched.radii, None,
                             {"quantile": quantile, "excluded_points": failed})
