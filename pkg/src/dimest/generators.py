"""Seeded samplers for the synthetic ground-truth sets, and Gaussian noise.

Every sampler is a pure function of ``(spec, n)``: the generator spec carries
its own seed and no global random state is touched.

Parameterizations (uniform in parameter space, not in surface measure):

* ``hypercube``: ``[0, 1]^k x {0}^(d-k)``
* ``sphere``: unit ``(d-1)``-sphere via normalized Gaussian vectors (``radius`` param)
* ``affine``: ``[0, 1]^k`` through a random orthonormal ``d x k`` frame plus offset
* ``swiss_roll``: ``(t cos t, h, t sin t)``, ``t ~ U[1.5 pi, 4.5 pi]``, ``h ~ U[0, 21]``
* ``helix``: helicoid ``(u cos v, u sin v, pitch * v)``, ``u ~ U[1, 2]``,
  ``v ~ U[0, 2 pi turns]``
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError
from .pointcloud import PointCloud

KINDS = ("hypercube", "sphere", "affine", "swiss_roll", "helix")

_DEFAULT_PARAMS = {
    "hypercube": {},
    "sphere": {"radius": 1.0},
    "affine": {},
    "swiss_roll": {"t_min": 1.5 * np.pi, "t_max": 4.5 * np.pi, "height": 21.0},
    "helix": {"u_min": 1.0, "u_max": 2.0, "turns": 2.0, "pitch": 1.0 / (2 * np.pi)},
}

# independent streams derived from one seed
_STREAM_POINTS = 0
_STREAM_FRAME = 1


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    ambient_dim: int
    intrinsic_dim: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        d, k = self.ambient_dim, self.intrinsic_dim
        if not (isinstance(d, (int, np.integer)) and isinstance(k, (int, np.integer))):
            raise InputError("ambient_dim and intrinsic_dim must be integers")
        if not 1 <= k <= d:
            raise InputError(f"need 1 <= k <= d (got d={d}, k={k})")
        if self.kind == "sphere" and k != d - 1:
            raise InputError(f"sphere requires k = d-1 (got d={d}, k={k})")
        if self.kind in ("swiss_roll", "helix") and (d, k) != (3, 2):
            raise InputError(f"{self.kind} requires d=3 and k=2 (got d={d}, k={k})")
        if not 0 <= int(self.seed) < 2**64:
            raise InputError("seed must be a 64-bit unsigned integer")
        unknown = set(self.params) - set(_DEFAULT_PARAMS[self.kind])
        if unknown:
            raise InputError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = {**_DEFAULT_PARAMS[self.kind], **{k_: float(v) for k_, v in self.params.items()}}
        object.__setattr__(self, "params", merged)

    def with_seed(self, seed: int) -> "GeneratorSpec":
        return replace(self, params=dict(self.params), seed=int(seed))


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0

    def __post_init__(self):
        if not (self.sigma >= 0 and np.isfinite(self.sigma)):
            raise InputError(f"noise sigma must be a finite nonnegative number, got {self.sigma}")


def affine_frame(spec: GeneratorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal ``d x k`` frame and offset used by the ``affine`` kind."""
    d, k = spec.ambient_dim, spec.intrinsic_dim
    rng = _rng(int(spec.seed), _STREAM_FRAME)
    q, r = np.linalg.qr(rng.standard_normal((d, k)))
    # sign fix makes the frame Haar-distributed
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    offset = rng.standard_normal(d)
    return q, offset


def sample(spec: GeneratorSpec, n: int, return_latent: bool = False):
    """Draw ``n`` points uniformly (in parameter space) on the set described by ``spec``.

    With ``return_latent`` the parameter values (``n x k``) are returned as well.
    """
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise InputError(f"sample size must be a positive integer, got {n!r}")
    d, k, p = spec.ambient_dim, spec.intrinsic_dim, spec.params
    rng = _rng(int(spec.seed), _STREAM_POINTS)

    if spec.kind == "hypercube":
        latent = rng.random((n, k))
        pts = np.zeros((n, d))
        pts[:, :k] = latent
    elif spec.kind == "sphere":
        latent = rng.standard_normal((n, d))
        pts = p["radius"] * latent / np.linalg.norm(latent, axis=1, keepdims=True)
    elif spec.kind == "affine":
        latent = rng.random((n, k))
        frame, offset = affine_frame(spec)
        pts = latent @ frame.T + offset
    elif spec.kind == "swiss_roll":
        t = rng.uniform(p["t_min"], p["t_max"], n)
        h = rng.uniform(0.0, p["height"], n)
        latent = np.column_stack([t, h])
        pts = np.column_stack([t * np.cos(t), h, t * np.sin(t)])
    else:
        u = rng.uniform(p["u_min"], p["u_max"], n)
        v = rng.uniform(0.0, 2 * np.pi * p["turns"], n)
        latent = np.column_stack([u, v])
        pts = np.column_stack([u * np.cos(v), u * np.sin(v), p["pitch"] * v])

    cloud = PointCloud(pts)
    return (cloud, latent) if return_latent else cloud


def add_noise(cloud: PointCloud, noise: NoiseSpec, seed: int) -> PointCloud:
    """Perturb every coordinate by independent ``N(0, sigma^2)`` noise."""
    if noise.sigma == 0:
        return PointCloud(cloud.points)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    return PointCloud(cloud.points + rng.normal(0.0, noise.sigma, size=cloud.points.shape))
