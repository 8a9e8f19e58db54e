"""Empirical volume function ``V_n(r) = mu(B(sample, r))`` and the estimators built on it.

``V_n`` is estimated by Monte-Carlo rejection sampling over the ``r``-padded
bounding box. Random points are generated in fixed-size chunks, each with its
own seed derived from ``(seed, chunk index)``, so the estimate does not depend
on how chunks are scheduled. On the line an exact interval-union formula is
available and is used by default.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EstimationError, InputError
from .estimators import DimensionEstimate, est_capacity
from .pointcloud import PointCloud

MAX_BALL_DIM = 25
MIN_MC_SAMPLES = 1000
DEFAULT_MC_SAMPLES = 200_000
MC_CHUNK = 1 << 16


def unit_ball_volume(d: int) -> float:
    """Lebesgue measure of the unit ball in ``R^d``."""
    if not (isinstance(d, (int, np.integer)) and 1 <= d <= MAX_BALL_DIM):
        raise InputError(f"unit ball volume is tabulated for 1 <= d <= {MAX_BALL_DIM}, got {d}")
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


BALL_VOLUMES = {d: unit_ball_volume(d) for d in range(1, MAX_BALL_DIM + 1)}


@dataclass(frozen=True)
class VolumeEstimate:
    r: float
    value: float
    std_error: float
    method: str
    samples: int | None = None
    seed: int | None = None


def exact_volume_1d(cloud: PointCloud, r: float) -> float:
    """Length of the union of ``[X_i - r, X_i + r]``."""
    if cloud.ambient_dim != 1:
        raise InputError("exact volume is only available on the line")
    x = np.sort(cloud.points[:, 0])
    return float(2 * r + np.minimum(np.diff(x), 2 * r).sum())


def _chunk_nearest(cloud: PointCloud, lower, widths, seed, j, size):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j,)))
    pts = lower + rng.random((size, cloud.ambient_dim)) * widths
    return cloud.nearest_distance(pts)


def _mc_nearest(cloud: PointCloud, box, M: int, seed: int, workers: int) -> np.ndarray:
    starts = range(0, M, MC_CHUNK)
    jobs = [(j, min(MC_CHUNK, M - s)) for j, s in enumerate(starts)]

    def run(job):
        return _chunk_nearest(cloud, box.lower, box.widths, seed, *job)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(job) for job in jobs]
    return np.concatenate(parts)


def _resolve_method(cloud: PointCloud, method: str) -> str:
    if method == "auto":
        return "exact_1d" if cloud.ambient_dim == 1 else "monte_carlo"
    if method not in ("monte_carlo", "exact_1d"):
        raise InputError(f"unknown volume method {method!r}")
    return method


def volume_profile(cloud: PointCloud, radii, M: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                   method: str = "auto", workers: int = 1) -> list[VolumeEstimate]:
    """``V_n`` at several radii.

    Monte-Carlo estimates share one set of random points drawn in the box for
    the largest radius, so the profile is non-decreasing in ``r``.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if radii.size == 0 or np.any(radii <= 0) or not np.all(np.isfinite(radii)):
        raise InputError("radii must be positive and finite")
    method = _resolve_method(cloud, method)
    if method == "exact_1d":
        return [VolumeEstimate(float(r), exact_volume_1d(cloud, r), 0.0, "exact_1d")
                for r in radii]
    if M < MIN_MC_SAMPLES:
        raise InputError(f"Monte-Carlo budget M must be at least {MIN_MC_SAMPLES}, got {M}")
    box = cloud.bounding_box(float(radii.max()))
    nearest = _mc_nearest(cloud, box, int(M), int(seed), workers)
    out = []
    for r in radii:
        frac = np.count_nonzero(nearest <= r) / M
        out.append(VolumeEstimate(float(r), frac * box.volume,
                                  math.sqrt(frac * (1 - frac) / M) * box.volume,
                                  "monte_carlo", int(M), int(seed)))
    return out


def empirical_volume(cloud: PointCloud, r: float, M: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                     method: str = "auto", workers: int = 1) -> VolumeEstimate:
    if not r > 0:
        raise InputError(f"radius must be positive, got {r}")
    return volume_profile(cloud, [r], M, seed, method, workers)[0]


def write_volume_profile(estimates, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["r", "V_n", "std_error"])
        for est in estimates:
            writer.writerow([repr(est.r), repr(est.value), repr(est.std_error)])


def est_volume_dim(cloud: PointCloud, r: float, M: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                   method: str = "auto") -> DimensionEstimate:
    """``d - log V_n(r) / log r``."""
    if not 0 < r < 1:
        raise InputError(f"volume estimator needs 0 < r < 1 (got r={r})")
    vol = empirical_volume(cloud, r, M, seed, method)
    if vol.value <= 0:
        raise EstimationError("no Monte-Carlo hits; increase M or r")
    value = cloud.ambient_dim - math.log(vol.value) / math.log(r)
    return DimensionEstimate(value, "vol", (r,), info={
        "volume": vol.value, "std_error": vol.std_error, "volume_method": vol.method})


@dataclass(frozen=True)
class SandwichReport:
    r: float
    lhs: float
    rhs: float
    holds: bool
    mc_margin: float
    vol_dim: float
    cap_dim: float
    volume: VolumeEstimate
    n_separated: int

    def to_dict(self) -> dict:
        return {"r": self.r, "lhs": self.lhs, "rhs": self.rhs, "holds": self.holds,
                "mc_margin": self.mc_margin, "vol_dim": self.vol_dim, "cap_dim": self.cap_dim,
                "volume": self.volume.value, "volume_std_error": self.volume.std_error,
                "volume_method": self.volume.method, "n_separated": self.n_separated}


def lemma1_check(cloud: PointCloud, r: float, M: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                 method: str = "auto") -> SandwichReport:
    """Compare the volume and capacity estimates at one radius.

    Checks ``|vol - cap + log w_d / log r| <= -d log 2 / log r``, which follows
    from ``N_sep w_d (r/2)^d <= V_n(r) <= N_sep w_d (2r)^d``. For Monte-Carlo
    volumes the right-hand side is widened by three standard errors pushed
    through the logarithm.
    """
    if not 0 < r < 1:
        raise InputError(f"need 0 < r < 1 (got r={r})")
    d = cloud.ambient_dim
    vol = empirical_volume(cloud, r, M, seed, method)
    if vol.value <= 0:
        raise EstimationError("no Monte-Carlo hits; increase M or r")
    log_r = math.log(r)
    cap = est_capacity(cloud, r)
    vol_dim = d - math.log(vol.value) / log_r
    lhs = abs(vol_dim - cap.value + math.log(unit_ball_volume(d)) / log_r)
    rhs = -d * math.log(2) / log_r
    margin = 0.0
    if vol.method == "monte_carlo":
        band = 3 * vol.std_error
        up = math.log(vol.value + band) - math.log(vol.value)
        down = math.log(vol.value) - math.log(max(vol.value - band, vol.value * 1e-12))
        margin = max(up, down) / abs(log_r)
    return SandwichReport(r, lhs, rhs, lhs <= rhs + margin, margin, vol_dim, cap.value, vol,
                        cap.info["n_separated"])


@dataclass(frozen=True)
class VolumePolynomial:
    """Least-squares polynomial ``sum_j coeffs[j] r^j`` fitted to ``V_n`` on ``[0, R]``."""

    coeffs: tuple
    fit_interval: tuple
    grid_size: int
    residual: float
    ambient_dim: int

    def __call__(self, r):
        return np.polynomial.polynomial.polyval(r, np.asarray(self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1


def fit_volume_polynomial(cloud: PointCloud, R: float | None = None, m: int = 50,
                          M: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                          method: str = "auto") -> VolumePolynomial:
    """Degree-``d`` least-squares fit of ``V_n`` on the grid ``{R i / m : i = 0..m}``.

    ``V_n(0) = 0`` (a finite set is Lebesgue-null) and is included as a grid
    point. ``R`` defaults to a tenth of the sample diameter.
    """
    d = cloud.ambient_dim
    if R is None:
        R = 0.1 * cloud.diameter()
        if R == 0:
            raise InputError("sample has zero diameter; pass the fit interval R explicitly")
    if not R > 0:
        raise InputError(f"fit interval R must be positive, got {R}")
    if m < d + 2:
        raise InputError(f"need at least d+2 = {d + 2} grid points, got m={m}")
    grid = R * np.arange(m + 1) / m
    vols = np.zeros(m + 1)
    vols[1:] = [v.value for v in volume_profile(cloud, grid[1:], M, seed, method)]
    # scaled monomials keep the design matrix well conditioned
    design = np.vander(grid / R, d + 1, increasing=True)
    scaled, *_ = np.linalg.lstsq(design, vols, rcond=None)
    coeffs = scaled / R ** np.arange(d + 1)
    resid = vols - design @ scaled
    residual = math.sqrt(float(resid @ resid) * R / (m + 1))
    return VolumePolynomial(tuple(float(c) for c in coeffs), (0.0, float(R)), m + 1, residual, d)


def est_polyvol_dim(poly: VolumePolynomial, r0: float | None = None,
                    d: int | None = None) -> DimensionEstimate:
    """``d - log P(r0) / log r0`` from a fitted volume polynomial; ``rounded`` is the verdict.

    ``r0`` defaults to a tenth of the fit interval. The diagnostic
    ``lead_term_ratio`` is ``|log(sum_{j>=k} c_j r0^(j-k)) / log r0|`` with ``k``
    the first non-negligible coefficient; values below 1/4 mean ``r0`` is small
    enough for the rounding to recover ``d - k``.
    """
    d = poly.ambient_dim if d is None else d
    R = poly.fit_interval[1]
    if r0 is None:
        r0 = R / 10
    if not 0 < r0 <= R:
        raise InputError(f"need 0 < r0 <= R = {R} (got r0={r0})")
    if not r0 < 1:
        raise InputError(f"need r0 < 1 (got r0={r0})")
    value_at = float(poly(r0))
    if value_at <= 0:
        raise EstimationError("fit not positive at r0; decrease r0 or refit")
    value = d - math.log(value_at) / math.log(r0)

    coeffs = np.asarray(poly.coeffs)
    big = np.abs(coeffs) > 1e-3 * np.abs(coeffs).max()
    k_hat = int(np.argmax(big))
    lead = float(np.polynomial.polynomial.polyval(r0, coeffs[k_hat:]))
    ratio = abs(math.log(lead) / math.log(r0)) if lead > 0 else math.inf
    return DimensionEstimate(value, "polyvol", (r0,), info={
        "k_hat": k_hat, "lead_term_ratio": ratio, "lead_term_ok": ratio < 0.25,
        "poly_at_r0": value_at})
