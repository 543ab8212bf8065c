"""High-resolution depth video from single-photon LiDAR histograms and intensity frames."""

from .errors import (
    DimensionMismatch,
    EmptyInput,
    EmptyMask,
    OutOfRange,
    PluginExit,
    PluginFormat,
    PluginRange,
    SRFailure,
)
from .metrics import pct_correct, rmse, sweep_grid
from .motion import align_and_sum, estimate_depth_motion, estimate_flow_tvl1, warp_histogram
from .simulator import MotionSpec, NoiseSpec, SceneTruth, simulate_sequence
from .solver import SolverConfig, denoise_update, forward_project, naive_baseline, run_pnp
from .superres import BuiltinSuperResolver, ExternalSuperResolver
from .types import (
    DepthMap,
    HistogramVolume,
    ImagingModel,
    IntensityFrame,
    MotionField,
    bin_to_depth,
    depth_to_bin,
    pair_check,
)

__version__ = "0.1.0"
