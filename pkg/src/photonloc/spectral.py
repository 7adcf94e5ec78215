"""Gaussian spectral amplitudes and their time/position transforms.

Transform convention used throughout the package::

    psi~(t, r) = integral d(omega) d2k  psi(omega, k) exp(i (omega t + k . r))

with no 2*pi prefactor, so that integral |psi~|^2 dt d2r = (2 pi)^3 when
integral |psi|^2 d(omega) d2k = 1.

Widths are *amplitude* widths: a Gaussian amplitude with width ``a`` is
proportional to ``exp(-(x - x0)**2 / (2 a**2))`` and its modulus squared is a
normal density with standard deviation ``a / sqrt(2)``.  Under the convention
above an amplitude of width ``a`` transforms to one of width ``1 / a``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
GAUSSIAN = "gaussian"
SUPPORTED_KINDS = frozenset({GAUSSIAN})

_SQRT2 = math.sqrt(2.0)


class UnsupportedFamilyError(ValueError):
    """Raised for amplitude families without a closed-form transform."""


class ResolutionError(ValueError):
    """Raised when a numerical grid cannot resolve the requested amplitude."""


def _check_kind(kind: str) -> None:
    if kind not in SUPPORTED_KINDS:
        raise UnsupportedFamilyError(
            f"amplitude family {kind!r} is not supported (known: {sorted(SUPPORTED_KINDS)})"
        )


def gaussian_amplitude(x, center: float, width: float):
    """Normalized 1D Gaussian amplitude, ``integral |f|^2 dx = 1``."""
    x = np.asarray(x, dtype=float)
    return (math.pi * width**2) ** -0.25 * np.exp(-((x - center) ** 2) / (2.0 * width**2))


def gaussian_transform(t, center: float, width: float):
    """Closed-form transform of :func:`gaussian_amplitude` (kernel ``exp(+i x t)``)."""
    t = np.asarray(t, dtype=float)
    prefactor = (math.pi * width**2) ** -0.25 * math.sqrt(2.0 * math.pi) * width
    return prefactor * np.exp(-0.5 * (width * t) ** 2) * np.exp(1j * center * t)


@dataclass(frozen=True)
class FrequencyAmplitude:
    """Gaussian amplitude over angular frequency (rad/s)."""

    center_omega: float
    sigma_omega: float
    kind: str = GAUSSIAN

    def __post_init__(self):
        if not self.sigma_omega > 0:
            raise ValueError(f"sigma_omega must be positive, got {self.sigma_omega}")

    @property
    def density_sigma(self) -> float:
        return self.sigma_omega / _SQRT2

    def __call__(self, omega):
        _check_kind(self.kind)
        return gaussian_amplitude(omega, self.center_omega, self.sigma_omega)

    def transform(self, t):
        _check_kind(self.kind)
        return gaussian_transform(t, self.center_omega, self.sigma_omega)

    def scaled(self, factor: float) -> "FrequencyAmplitude":
        return replace(self, sigma_omega=self.sigma_omega * factor)


@dataclass(frozen=True)
class TransverseAmplitude:
    """Separable Gaussian amplitude over the transverse wave vector (rad/m)."""

    center_k: tuple[float, float] = (0.0, 0.0)
    sigma_k: tuple[float, float] = (1.0, 1.0)
    kind: str = GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "center_k", tuple(float(v) for v in self.center_k))
        object.__setattr__(self, "sigma_k", tuple(float(v) for v in self.sigma_k))
        if len(self.center_k) != 2 or len(self.sigma_k) != 2:
            raise ValueError("center_k and sigma_k need two components")
        if not all(s > 0 for s in self.sigma_k):
            raise ValueError(f"sigma_k components must be positive, got {self.sigma_k}")

    @property
    def density_sigma(self) -> tuple[float, float]:
        return (self.sigma_k[0] / _SQRT2, self.sigma_k[1] / _SQRT2)

    def __call__(self, kx, ky):
        _check_kind(self.kind)
        return gaussian_amplitude(kx, self.center_k[0], self.sigma_k[0]) * gaussian_amplitude(
            ky, self.center_k[1], self.sigma_k[1]
        )

    def transform(self, x, y):
        _check_kind(self.kind)
        return gaussian_transform(x, self.center_k[0], self.sigma_k[0]) * gaussian_transform(
            y, self.center_k[1], self.sigma_k[1]
        )

    def scaled(self, factor: float) -> "TransverseAmplitude":
        return replace(self, sigma_k=(self.sigma_k[0] * factor, self.sigma_k[1] * factor))


@dataclass(frozen=True)
class SpectralAmplitude:
    """Separable amplitude psi(omega, k) = f(omega) g(k)."""

    freq: FrequencyAmplitude
    trans: TransverseAmplitude = field(default_factory=TransverseAmplitude)

    @property
    def amplitude_widths(self) -> tuple[float, float, float]:
        """Direct-domain amplitude widths ``(sigma_omega, sigma_kx, sigma_ky)``."""
        return (self.freq.sigma_omega, *self.trans.sigma_k)

    def __call__(self, omega, kx, ky):
        return self.freq(omega) * self.trans(kx, ky)

    def transform(self, t, x, y):
        return self.freq.transform(t) * self.trans.transform(x, y)

    def scaled(self, factor: float) -> "SpectralAmplitude":
        return SpectralAmplitude(self.freq.scaled(factor), self.trans.scaled(factor))

    @classmethod
    def isotropic(cls, center_omega: float, sigma_omega: float, sigma_k: float,
                  center_k: tuple[float, float] = (0.0, 0.0)) -> "SpectralAmplitude":
        return cls(FrequencyAmplitude(center_omega, sigma_omega),
                   TransverseAmplitude(center_k, (sigma_k, sigma_k)))


def evaluate_amplitude(a: SpectralAmplitude, omega, k):
    """Evaluate ``a`` at ``omega`` and ``k = (kx, ky)``; broadcasts over arrays."""
    kx, ky = k
    return a(omega, kx, ky)


@dataclass(frozen=True)
class FourierPair:
    """A spectral amplitude together with the widths of its transform.

    ``time_width`` and ``position_widths`` are amplitude widths of psi~.  The
    standard deviations of the detection density |psi~|^2 are exposed as
    ``time_density_sigma`` / ``position_density_sigma``.
    """

    direct: SpectralAmplitude
    time_width: float
    position_widths: tuple[float, float]

    @property
    def time_density_sigma(self) -> float:
        return self.time_width / _SQRT2

    @property
    def position_density_sigma(self) -> tuple[float, float]:
        return (self.position_widths[0] / _SQRT2, self.position_widths[1] / _SQRT2)

    @property
    def density_sigmas(self) -> np.ndarray:
        """Standard deviations of |psi~|^2 along (t, x, y)."""
        return np.array([self.time_density_sigma, *self.position_density_sigma])


def fourier_pair(a: SpectralAmplitude) -> FourierPair:
    _check_kind(a.freq.kind)
    _check_kind(a.trans.kind)
    sx, sy = a.trans.sigma_k
    return FourierPair(a, 1.0 / a.freq.sigma_omega, (1.0 / sx, 1.0 / sy))


def density_sigmas(a: SpectralAmplitude) -> np.ndarray:
    """Shorthand for ``fourier_pair(a).density_sigmas``."""
    return fourier_pair(a).density_sigmas


# --- numerical transform oracle -------------------------------------------------

MIN_GRID_POINTS = 2**8
MIN_EXTENT_SIGMAS = 6.0


@dataclass(frozen=True)
class GridSpec:
    """Per-axis sampling for the numerical transform.

    ``extent_sigmas`` is the half-width of both the direct and the conjugate
    grid in units of the respective amplitude width.
    """

    n_points: int = 512
    extent_sigmas: float = 8.0

    def validate(self) -> None:
        if self.n_points < MIN_GRID_POINTS or self.extent_sigmas < MIN_EXTENT_SIGMAS:
            raise ResolutionError(
                f"grid under-resolved: need n_points >= {MIN_GRID_POINTS} and "
                f"extent_sigmas >= {MIN_EXTENT_SIGMAS:g}, got n_points={self.n_points}, "
                f"extent_sigmas={self.extent_sigmas:g}"
            )

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "GridSpec":
        known = {"n_points": int, "extent_sigmas": float}
        unknown = set(values) - set(known)
        if unknown:
            raise KeyError(f"unknown grid keys: {sorted(unknown)}")
        return cls(**{k: known[k](v) for k, v in values.items()})


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.full(x.shape, x[1] - x[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@dataclass(frozen=True)
class AxisTransform:
    """One axis of a numerically transformed amplitude."""

    direct_grid: np.ndarray
    direct_values: np.ndarray
    conj_grid: np.ndarray
    conj_values: np.ndarray

    @property
    def direct_norm(self) -> float:
        return float(np.sum(_trapezoid_weights(self.direct_grid) * np.abs(self.direct_values) ** 2))

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.conj_values) ** 2

    @property
    def conj_norm(self) -> float:
        return float(np.sum(_trapezoid_weights(self.conj_grid) * self.density))

    def density_mean(self) -> float:
        w = _trapezoid_weights(self.conj_grid) * self.density
        return float(np.sum(w * self.conj_grid) / np.sum(w))

    def density_variance(self) -> float:
        w = _trapezoid_weights(self.conj_grid) * self.density
        mu = np.sum(w * self.conj_grid) / np.sum(w)
        return float(np.sum(w * (self.conj_grid - mu) ** 2) / np.sum(w))


def _numeric_axis(func, center: float, width: float, grid: GridSpec) -> AxisTransform:
    half = grid.extent_sigmas * width
    direct = np.linspace(center - half, center + half, grid.n_points)
    values = func(direct)
    conj_half = grid.extent_sigmas / width
    conj = np.linspace(-conj_half, conj_half, grid.n_points)
    kernel = np.exp(1j * np.outer(conj, direct))
    transformed = kernel @ (_trapezoid_weights(direct) * values)
    return AxisTransform(direct, values, conj, transformed)


@dataclass(frozen=True)
class NumericTransform:
    """Gridded transform of a separable amplitude, one :class:`AxisTransform` per axis."""

    axes: tuple[AxisTransform, AxisTransform, AxisTransform]

    @property
    def t(self) -> AxisTransform:
        return self.axes[0]

    @property
    def x(self) -> AxisTransform:
        return self.axes[1]

    @property
    def y(self) -> AxisTransform:
        return self.axes[2]

    def direct_norm(self) -> float:
        return math.prod(ax.direct_norm for ax in self.axes)

    def conj_norm(self) -> float:
        return math.prod(ax.conj_norm for ax in self.axes)

    def density_variances(self) -> np.ndarray:
        return np.array([ax.density_variance() for ax in self.axes])

    def density(self) -> np.ndarray:
        """Full |psi~|^2 on the (t, x, y) product grid."""
        t, x, y = (ax.density for ax in self.axes)
        return t[:, None, None] * x[None, :, None] * y[None, None, :]


def numeric_ft_oracle(a: SpectralAmplitude, grid: GridSpec = GridSpec()) -> NumericTransform:
    """Transform ``a`` by direct quadrature, independent of the closed forms."""
    grid.validate()
    _check_kind(a.freq.kind)
    _check_kind(a.trans.kind)
    (cx, cy), (sx, sy) = a.trans.center_k, a.trans.sigma_k
    return NumericTransform((
        _numeric_axis(a.freq, a.freq.center_omega, a.freq.sigma_omega, grid),
        _numeric_axis(lambda k: gaussian_amplitude(k, cx, sx), cx, sx, grid),
        _numeric_axis(lambda k: gaussian_amplitude(k, cy, sy), cy, sy, grid),
    ))
