"""Intrinsic dimension estimation from finite samples."""
from .errors import EstimationError, InputError
from .pointcloud import BoundingBox, PointCloud, load_csv, save_csv
from .generators import GeneratorSpec, NoiseSpec, add_noise, sample
from .estimators import (
    DimensionEstimate, ScaleSchedule, SlopeFit, default_grid, est_boxcount, est_capacity,
    est_capacity_two_scale, est_correlation, est_pointwise_at, est_pointwise_global,
    loglog_grid, loglog_slope, nearest_integer, p_hat, schedule,
)
from .volfit import (
    VolumeEstimate, VolumePolynomial, empirical_volume, est_polyvol_dim, est_volume_dim,
    fit_volume_polynomial, lemma1_check, unit_ball_volume, volume_profile,
)
from .bench import (
    ExperimentResult, ExperimentSpec, cd_invariance_check, noise_sweep, run_experiment,
)

__version__ = "0.1.0"
