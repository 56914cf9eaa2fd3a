"""Gabor wavelet filter bank, image convolution, and observation sampling.

A bank of complex kernels (default 5 frequencies x 8 orientations = 40)
is convolved with a normalized image; per-pixel response magnitudes form
a 40-channel field that is subsampled on a regular grid into observation
vectors for mixture modeling.

Each kernel is a Gaussian-enveloped complex harmonic with the envelope-
weighted mean of the harmonic subtracted, so the kernel has exactly zero
response to a constant image.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EmptyBank, InvalidParams


@dataclass(frozen=True)
class GaborParams:
    """Bank geometry. k_max is the peak frequency (radians/pixel) of scale 0;
    successive scales divide it by freq_spacing."""

    num_frequencies: int = 5
    num_orientations: int = 8
    k_max: float = math.pi / 2.0
    freq_spacing: float = math.sqrt(2.0)
    sigma: float = 2.0 * math.pi
    kernel_radius: int = 16

    def validate(self) -> None:
        if self.num_frequencies < 1 or self.num_orientations < 1:
            raise InvalidParams("bank needs at least one frequency and orientation")
        if self.k_max <= 0.0:
            raise InvalidParams("k_max must be positive")
        if self.freq_spacing <= 1.0:
            raise InvalidParams("freq_spacing must exceed 1")
        if self.sigma <= 0.0:
            raise InvalidParams("sigma must be positive")
        if self.kernel_radius < 1:
            raise InvalidParams("kernel_radius must be at least 1")

    @property
    def bank_size(self) -> int:
        return self.num_frequencies * self.num_orientations

    def cache_key(self) -> str:
        """Stable textual key for on-disk observation caching."""
        return (f"nf={self.num_frequencies};no={self.num_orientations};"
                f"kmax={self.k_max!r};spacing={self.freq_spacing!r};"
                f"sigma={self.sigma!r};radius={self.kernel_radius}")


@dataclass(frozen=True)
class GaborKernel:
    scale_index: int
    orientation_index: int
    taps: np.ndarray  # complex128, (2*radius+1, 2*radius+1)


def build_bank(params: GaborParams = GaborParams()) -> list:
    """Sample every (scale, orientation) kernel of the bank.

    Kernel (nu, mu) has center frequency k_max / freq_spacing**nu at
    orientation pi * mu / num_orientations. DC-corrected on its sampled
    support: sum of taps is zero to machine precision.
    """
    params.validate()
    r = params.kernel_radius
    coords = np.arange(-r, r + 1, dtype=np.float64)
    xs, ys = np.meshgrid(coords, coords)  # xs varies along columns
    rsq = xs * xs + ys * ys

    kernels = []
    for nu in range(params.num_frequencies):
        k = params.k_max / params.freq_spacing ** nu
        envelope = (k * k / (params.sigma ** 2)) * np.exp(
            -k * k * rsq / (2.0 * params.sigma ** 2))
        env_total = envelope.sum()
        for mu in range(params.num_orientations):
            phi = math.pi * mu / params.num_orientations
            harmonic = np.exp(1j * k * (xs * math.cos(phi) + ys * math.sin(phi)))
            dc = np.sum(envelope * harmonic) / env_total
            taps = envelope * (harmonic - dc)
            kernels.append(GaborKernel(nu, mu, taps))
    return kernels


@lru_cache(maxsize=None)
def _fft_size(n: int) -> int:
    """Smallest 5-smooth integer >= n (keeps numpy FFTs fast)."""
    while True:
        m = n
        for p in (2, 3, 5):
            while m % p == 0:
                m //= p
        if m == 1:
            return n
        n += 1


def _convolve_fft(padded_fft, fft_shape, taps, out_shape):
    kh, kw = taps.shape
    spectrum = padded_fft * np.fft.fft2(taps, fft_shape)
    full = np.fft.ifft2(spectrum)
    return full[kh - 1:kh - 1 + out_shape[0], kw - 1:kw - 1 + out_shape[1]]


def _convolve_direct(padded, taps, out_shape):
    h, w = out_shape
    flipped = taps[::-1, ::-1]
    acc = np.zeros(out_shape, dtype=np.complex128)
    for u in range(taps.shape[0]):
        for v in range(taps.shape[1]):
            acc += flipped[u, v] * padded[u:u + h, v:v + w]
    return acc


def convolve(img: np.ndarray, bank, method: str = "fft") -> np.ndarray:
    """Complex-convolve img with every kernel; return magnitude planes.

    Output shape is (height, width, len(bank)). Boundaries are handled by
    symmetric reflection. method selects the FFT or the direct route; the
    two agree within 1e-6 relative tolerance.
    """
    if not bank:
        raise EmptyBank("no kernels to convolve with")
    if method not in ("fft", "direct"):
        raise ValueError(f"unknown method {method!r}")
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a 2D grayscale image")
    h, w = a.shape

    out = np.empty((h, w, len(bank)), dtype=np.float64)
    pad_cache = {}
    for c, kernel in enumerate(bank):
        kh, kw = kernel.taps.shape
        ry, rx = kh // 2, kw // 2
        key = (ry, rx)
        if key not in pad_cache:
            padded = np.pad(a, ((ry, ry), (rx, rx)), mode="symmetric")
            if method == "fft":
                shape = (_fft_size(padded.shape[0] + kh - 1),
                         _fft_size(padded.shape[1] + kw - 1))
                pad_cache[key] = (padded, shape, np.fft.fft2(padded, shape))
            else:
                pad_cache[key] = (padded, None, None)
        padded, fft_shape, padded_fft = pad_cache[key]
        if method == "fft":
            resp = _convolve_fft(padded_fft, fft_shape, kernel.taps, (h, w))
        else:
            resp = _convolve_direct(padded, kernel.taps, (h, w))
        out[:, :, c] = np.abs(resp)
    return out


@dataclass(frozen=True)
class ObservationSet:
    """Feature vectors sampled from a response field on a regular grid.

    observations is (n, dim) float64; components are response magnitudes,
    hence nonnegative.
    """

    observations: np.ndarray
    stride: int

    @property
    def dim(self) -> int:
        return self.observations.shape[1]

    def __len__(self) -> int:
        return self.observations.shape[0]

    def save(self, path) -> None:
        # write through a handle so numpy cannot append a suffix
        with open(path, "wb") as fh:
            np.savez(fh, format_version=1, stride=self.stride,
                     observations=self.observations)

    @classmethod
    def load(cls, path) -> "ObservationSet":
        with np.load(path) as npz:
            if int(npz["format_version"]) != 1:
                raise ValueError("unsupported observation-set format version")
            return cls(observations=npz["observations"],
                       stride=int(npz["stride"]))


def downsample(field: np.ndarray, stride: int) -> ObservationSet:
    """Keep the channel vector at every (i*stride, j*stride) grid point.

    Yields ceil(height/stride) * ceil(width/stride) observations, scanned
    row-major.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 3:
        raise ValueError("expected a (height, width, channels) response field")
    grid = f[::stride, ::stride, :]
    obs = grid.reshape(-1, f.shape[2]).copy()
    return ObservationSet(observations=obs, stride=stride)


@dataclass(frozen=True)
class ChannelScaler:
    """Per-channel standardization fitted on training observations.

    Mixtures with diagonal covariance are scale-sensitive, so observation
    channels are shifted to zero mean and unit variance before fitting.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray, std_floor: float = 1e-6) -> "ChannelScaler":
        x = np.asarray(data, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("need a nonempty (n, dim) observation matrix")
        return cls(mean=x.mean(axis=0),
                   std=np.maximum(x.std(axis=0), std_floor))

    def transform(self, data: np.ndarray) -> np.ndarray:
        x = np.asarray(data, dtype=np.float64)
        return (x - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelScaler":
        mean = np.asarray(d["mean"], dtype=np.float64)
        std = np.asarray(d["std"], dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1 or np.any(std <= 0):
            raise ValueError("invalid scaler payload")
        return cls(mean=mean, std=std)
