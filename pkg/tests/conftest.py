import numpy as np
import pytest
from scipy import ndimage

from spadpnp.types import ImagingModel

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def full_model():
    """100 bins of 5.52 cm, 4 cm Gaussian IRF, 16x factor."""
    return ImagingModel(nbins=100, bin_width_m=0.0552, irf_sigma_m=0.04, upsample_factor=16)


@pytest.fixture
def small_model():
    return ImagingModel(nbins=100, bin_width_m=0.0552, irf_sigma_m=0.04, upsample_factor=4)


def textured(shape, seed=0, sigma=2.0, pad=0):
    rng = np.random.default_rng(seed)
    big = ndimage.gaussian_filter(rng.random((shape[0] + 2 * pad, shape[1] + 2 * pad)), sigma)
    big = (big - big.min()) / (big.max() - big.min())
    return big


def pink_texture(shape, seed=0):
    """1/f noise in [0, 1]; has structure at every scale, unlike blurred white noise."""
    rng = np.random.default_rng(seed)
    k = np.sqrt(np.fft.fftfreq(shape[0])[:, None] ** 2 + np.fft.fftfreq(shape[1])[None, :] ** 2)
    spec = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.maximum(k, 1.0 / max(shape))
    im = np.real(np.fft.ifft2(spec))
    return (im - im.min()) / (im.max() - im.min())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
