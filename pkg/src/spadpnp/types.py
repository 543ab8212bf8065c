"""Array-backed domain types shared by every stage of the pipeline.

All arrays are copied on construction and marked read-only, so instances can be
handed to worker threads without defensive copies.  Spatial axes are ordered
``(x, y)``; histograms carry time bins on the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidValue, OutOfRange


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise InvalidValue(f"{what} contains NaN or Inf")


@dataclass(frozen=True, eq=False)
class HistogramVolume:
    """Photon counts over ``(x, y, time-bin)``."""

    counts: np.ndarray
    bin_width_m: float
    t_index: int = 0

    def __post_init__(self):
        counts = _frozen(self.counts)
        if counts.ndim != 3 or min(counts.shape) < 1:
            raise DimensionMismatch(f"histogram must be a non-empty 3D array, got shape {counts.shape}")
        _check_finite(counts, "histogram")
        if np.any(counts < 0):
            raise InvalidValue("histogram has negative counts")
        if not (self.bin_width_m > 0 and np.isfinite(self.bin_width_m)):
            raise InvalidValue(f"bin width must be positive, got {self.bin_width_m}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "bin_width_m", float(self.bin_width_m))
        object.__setattr__(self, "t_index", int(self.t_index))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.counts.shape

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return self.counts.shape[:2]

    @property
    def nbins(self) -> int:
        return self.counts.shape[2]

    def total(self) -> float:
        return float(self.counts.sum())

    def replace(self, counts: np.ndarray | None = None, t_index: int | None = None) -> "HistogramVolume":
        return HistogramVolume(
            self.counts if counts is None else counts,
            self.bin_width_m,
            self.t_index if t_index is None else t_index,
        )


@dataclass(frozen=True, eq=False)
class IntensityFrame:
    """High-resolution single-channel guide image."""

    values: np.ndarray
    t_index: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 3:
            # RGB(-like) input: channel mean
            values = values.mean(axis=2)
        values = _frozen(values)
        if values.ndim != 2 or min(values.shape) < 1:
            raise DimensionMismatch(f"intensity must be a non-empty 2D array, got shape {values.shape}")
        _check_finite(values, "intensity")
        if np.any(values < 0):
            raise InvalidValue("intensity has negative values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "t_index", int(self.t_index))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel range in meters.

    ``max_depth_m`` (the range gate, ``nbins * bin_width``) is optional; when
    given, values outside ``[0, max_depth_m]`` are rejected.  ``valid`` marks
    pixels carrying an actual estimate.
    """

    depth_m: np.ndarray
    t_index: int = 0
    max_depth_m: float | None = None
    valid: np.ndarray | None = None

    def __post_init__(self):
        depth = _frozen(self.depth_m)
        if depth.ndim != 2 or min(depth.shape) < 1:
            raise DimensionMismatch(f"depth map must be a non-empty 2D array, got shape {depth.shape}")
        _check_finite(depth, "depth map")
        hi = np.inf if self.max_depth_m is None else float(self.max_depth_m)
        if depth.min() < 0 or depth.max() > hi:
            raise OutOfRange(f"depth values must lie in [0, {hi}], got [{depth.min()}, {depth.max()}]")
        object.__setattr__(self, "depth_m", depth)
        object.__setattr__(self, "t_index", int(self.t_index))
        if self.valid is not None:
            valid = _frozen(self.valid, dtype=bool)
            if valid.shape != depth.shape:
                raise DimensionMismatch("validity mask shape differs from depth map")
            object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth_m.shape

    def mask(self) -> np.ndarray:
        if self.valid is None:
            return np.ones(self.shape, dtype=bool)
        return self.valid


@dataclass(frozen=True, eq=False)
class MotionField:
    """Per-pixel displacement from frame ``t-1`` to frame ``t``.

    ``dx``/``dy`` are in pixels of the grid they live on (axis 0 / axis 1),
    ``dz`` is in meters.  Content at ``p`` in the earlier frame is found at
    ``p + (dx, dy)`` in the later one.
    """

    dx: np.ndarray
    dy: np.ndarray
    dz: np.ndarray | None = None

    def __post_init__(self):
        dx, dy = _frozen(self.dx), _frozen(self.dy)
        dz = np.zeros_like(dx) if self.dz is None else np.asarray(self.dz, dtype=np.float64)
        dz = _frozen(dz)
        if dx.ndim != 2 or dx.shape != dy.shape or dx.shape != dz.shape:
            raise DimensionMismatch(f"motion components differ in shape: {dx.shape}, {dy.shape}, {dz.shape}")
        for name, arr in (("dx", dx), ("dy", dy), ("dz", dz)):
            _check_finite(arr, f"motion {name}")
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)
        object.__setattr__(self, "dz", dz)

    @classmethod
    def zeros(cls, shape: tuple[int, int]) -> "MotionField":
        z = np.zeros(shape)
        return cls(z, z, z)

    @property
    def shape(self) -> tuple[int, int]:
        return self.dx.shape

    def is_zero(self) -> bool:
        return not (self.dx.any() or self.dy.any() or self.dz.any())

    def with_dz(self, dz: np.ndarray) -> "MotionField":
        return MotionField(self.dx, self.dy, dz)


@dataclass(frozen=True)
class ImagingModel:
    """Acquisition parameters: IRF, binning, spatial blur/decimation, background.

    The spatial blur is a uniform ``f x f`` box followed by ``f``-fold
    decimation, i.e. a block mean.
    """

    nbins: int
    bin_width_m: float
    irf_sigma_m: float
    upsample_factor: int = 16
    background_per_bin: float = 0.0

    def __post_init__(self):
        if int(self.nbins) < 1:
            raise InvalidValue("nbins must be >= 1")
        if not self.bin_width_m > 0:
            raise InvalidValue("bin_width_m must be positive")
        if not self.irf_sigma_m > 0:
            raise InvalidValue("irf_sigma_m must be positive")
        if int(self.upsample_factor) < 1:
            raise InvalidValue("upsample_factor must be >= 1")
        if not (self.background_per_bin >= 0 and np.isfinite(self.background_per_bin)):
            raise InvalidValue("background_per_bin must be a nonnegative finite number")
        object.__setattr__(self, "nbins", int(self.nbins))
        object.__setattr__(self, "upsample_factor", int(self.upsample_factor))

    @property
    def f(self) -> int:
        return self.upsample_factor

    @property
    def downsample_s(self) -> int:
        return self.upsample_factor

    @property
    def kernel(self) -> tuple[str, int]:
        return ("uniform", self.upsample_factor)

    @property
    def max_depth_m(self) -> float:
        return self.nbins * self.bin_width_m

    @property
    def irf_sigma_bins(self) -> float:
        return self.irf_sigma_m / self.bin_width_m

    def bin_centers_m(self) -> np.ndarray:
        return (np.arange(self.nbins) + 0.5) * self.bin_width_m

    def irf(self, depth_m) -> np.ndarray:
        """Gaussian IRF sampled at bin centers, normalized to unit sum per depth.

        Returns an array of shape ``depth.shape + (nbins,)``.
        """
        d = np.asarray(depth_m, dtype=np.float64)[..., None]
        expo = -0.5 * ((self.bin_centers_m() - d) / self.irf_sigma_m) ** 2
        # shift by the max exponent so the nearest bin never underflows
        g = np.exp(expo - expo.max(axis=-1, keepdims=True))
        return g / g.sum(axis=-1, keepdims=True)

    def with_background(self, b: float) -> "ImagingModel":
        return ImagingModel(self.nbins, self.bin_width_m, self.irf_sigma_m, self.upsample_factor, b)


def bin_to_depth(z, model: ImagingModel):
    """Depth in meters of fractional bin index ``z`` (bin-center convention)."""
    out = (np.asarray(z, dtype=np.float64) + 0.5) * model.bin_width_m
    return out if np.ndim(z) else float(out)


def depth_to_bin(d, model: ImagingModel):
    """Fractional bin index of depth ``d``; inverse of :func:`bin_to_depth`."""
    arr = np.asarray(d, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > model.max_depth_m):
        raise OutOfRange(f"depth outside [0, {model.max_depth_m}] m")
    out = arr / model.bin_width_m - 0.5
    return out if np.ndim(d) else float(out)


def pair_check(h: HistogramVolume, r: IntensityFrame, model: ImagingModel) -> None:
    """Raise :class:`DimensionMismatch` unless ``r`` is exactly ``f`` times ``h`` spatially."""
    f = model.upsample_factor
    for axis, name in enumerate("xy"):
        if r.shape[axis] != f * h.spatial_shape[axis]:
            raise DimensionMismatch(
                f"intensity {name}-extent {r.shape[axis]} != {f} * histogram {name}-extent {h.spatial_shape[axis]}",
                axis=name,
            )
    if h.nbins != model.nbins:
        raise DimensionMismatch(f"histogram has {h.nbins} bins, model expects {model.nbins}", axis="z")
    if not np.isclose(h.bin_width_m, model.bin_width_m, rtol=1e-12, atol=0):
        raise DimensionMismatch(
            f"histogram bin width {h.bin_width_m} differs from model {model.bin_width_m}", axis="z"
        )
