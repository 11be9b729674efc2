"""Distance between image time series, split into shape and path parts."""

from .alignment import AlignedPair, align_pair, common_interval
from .grid import (
    DISPLACEMENT,
    VELOCITY,
    GeometryError,
    GridGeom,
    Mask,
    RoleError,
    ScalarImage,
    VectorField,
    compose_disp,
    foreground_mask,
    gaussian_smooth,
    interp_scalar,
    interp_vector,
    magnitude_map,
    mean_over_mask,
    warp_image,
)
from .metric import DistanceReport, path_distance, shape_distance, total_distance
from .phantom import SimConfig, build_sim_set, shepp_logan, synth_svf
from .registration import RegParams, mse, register_svf
from .svf import TransportMethod, bch_combine, exp_svf, invert_svf, jacobian, parallel_transport
from .tsmodel import GammaCurve, PathModel, TsModel, evaluate, fit_path, fit_ts_model, gamma_eval, select_shape

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
