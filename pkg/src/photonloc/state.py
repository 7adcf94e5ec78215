"""Probe states, the target scene and the joint detection densities.

Event tuples are arrays of shape ``(..., N, 3)`` whose last axis holds
``(t, x, y)`` for each photon.  Internally everything is expressed as
deviations from the noiseless arrival ``(t0, r_p)``.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .spectral import (
    SPEED_OF_LIGHT,
    FrequencyAmplitude,
    SpectralAmplitude,
    TransverseAmplitude,
    density_sigmas,
)

AXES = ("t", "x", "y")
DEFAULT_WINDOW_FACTOR = 20.0


class Limit(enum.Enum):
    MAXIMAL = "maximal"


MAXIMAL = Limit.MAXIMAL


class UnsupportedConfigurationError(ValueError):
    """The requested operation has no exact form for this state."""


@dataclass(frozen=True)
class Scene:
    """Point target at ``target_pos`` illuminated by a state emitted at ``emission_time``.

    ``reflectivity`` only rescales the coincidence rate.  With ``monostatic``
    set, reported path lengths are halved to give a range.
    """

    target_pos: tuple[float, float] = (0.0, 0.0)
    emission_time: float = 0.0
    reflectivity: float = 1.0
    monostatic: bool = False
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        object.__setattr__(self, "target_pos", tuple(float(v) for v in self.target_pos))
        if not 0 < abs(self.reflectivity) <= 1:
            raise ValueError(f"reflectivity magnitude must lie in (0, 1], got {self.reflectivity}")
        if not self.speed_of_light > 0:
            raise ValueError("speed_of_light must be positive")

    @property
    def origin(self) -> np.ndarray:
        """Noiseless arrival ``(t0, x_p, y_p)``."""
        return np.array([self.emission_time, *self.target_pos])

    def path_length(self, mean_time: float) -> float:
        z = self.speed_of_light * (mean_time - self.emission_time)
        return 0.5 * z if self.monostatic else z


@dataclass(frozen=True)
class StateSpec:
    """An N-photon probe state.

    ``gamma`` and ``xi`` are either both :data:`MAXIMAL` (the ideal state,
    regularized by a uniform window on the difference coordinates) or both
    finite amplitudes for the frequency difference and transverse wave
    vector divergence.
    """

    n_photons: int
    psi: SpectralAmplitude
    gamma: FrequencyAmplitude | Limit = MAXIMAL
    xi: TransverseAmplitude | Limit = MAXIMAL
    difference_window: tuple[float, float, float] | None = None
    window_factor: float = DEFAULT_WINDOW_FACTOR

    def __post_init__(self):
        if int(self.n_photons) != self.n_photons or self.n_photons < 1:
            raise ValueError(f"n_photons must be a positive integer, got {self.n_photons}")
        if (self.gamma is MAXIMAL) != (self.xi is MAXIMAL):
            raise ValueError("gamma and xi must both be maximal or both finite")
        if self.difference_window is not None:
            window = tuple(float(w) for w in self.difference_window)
            if len(window) != 3 or not all(w > 0 for w in window):
                raise ValueError("difference_window needs three positive entries (t, x, y)")
            object.__setattr__(self, "difference_window", window)
        if not self.window_factor > 0:
            raise ValueError("window_factor must be positive")

    @property
    def is_maximal(self) -> bool:
        return self.gamma is MAXIMAL

    @property
    def window(self) -> np.ndarray:
        """Difference window (t, x, y); defaults to ``window_factor`` single-photon widths."""
        if self.difference_window is not None:
            return np.array(self.difference_window)
        return self.window_factor * density_sigmas(self.psi)

    @property
    def psi_widths(self) -> np.ndarray:
        return np.array(self.psi.amplitude_widths)

    @property
    def difference_widths(self) -> np.ndarray:
        """Direct-domain amplitude widths of (gamma, xi_x, xi_y)."""
        if self.is_maximal:
            raise UnsupportedConfigurationError("maximal state has no difference amplitudes")
        return np.array([self.gamma.sigma_omega, *self.xi.sigma_k])

    @property
    def zero_centered(self) -> bool:
        return self.is_maximal or (self.gamma.center_omega == 0 and self.xi.center_k == (0.0, 0.0))

    def bandwidth_ratio(self) -> np.ndarray:
        """Per-axis ratio of the gamma~/xi~ widths to the psi~ widths."""
        return self.psi_widths / self.difference_widths

    @classmethod
    def maximal(cls, n_photons: int, psi: SpectralAmplitude, *, window_factor=DEFAULT_WINDOW_FACTOR,
                difference_window=None) -> "StateSpec":
        return cls(n_photons, psi, MAXIMAL, MAXIMAL, difference_window, window_factor)

    @classmethod
    def partial(cls, n_photons: int, psi: SpectralAmplitude, bandwidth_ratio: float) -> "StateSpec":
        """Zero-centered gamma, xi whose transforms are ``bandwidth_ratio`` times wider than psi~."""
        if not bandwidth_ratio > 0:
            raise ValueError("bandwidth_ratio must be positive")
        gamma = FrequencyAmplitude(0.0, psi.freq.sigma_omega / bandwidth_ratio)
        xi = TransverseAmplitude((0.0, 0.0), tuple(s / bandwidth_ratio for s in psi.trans.sigma_k))
        return cls(n_photons, psi, gamma, xi)


def _deviations(events, scene: Scene) -> np.ndarray:
    events = np.asarray(events, dtype=float)
    if events.shape[-1] != 3:
        raise ValueError("events must have a trailing (t, x, y) axis")
    return events - scene.origin


def _check_count(spec: StateSpec, dev: np.ndarray) -> None:
    if dev.ndim < 2 or dev.shape[-2] != spec.n_photons:
        raise ValueError(f"expected {spec.n_photons} photons per event, got shape {dev.shape}")


def density_single(psi: SpectralAmplitude, scene: Scene, t, r) -> np.ndarray:
    """Normalized single-photon detection density |psi~(t - t0, r - r_p)|^2 / (2 pi)^3."""
    x, y = r
    dt = np.asarray(t, dtype=float) - scene.emission_time
    dx = np.asarray(x, dtype=float) - scene.target_pos[0]
    dy = np.asarray(y, dtype=float) - scene.target_pos[1]
    return np.abs(psi.transform(dt, dx, dy)) ** 2 / (2.0 * math.pi) ** 3


def _sum_density(psi: SpectralAmplitude, dev: np.ndarray) -> np.ndarray:
    total = dev.sum(axis=-2)
    return np.abs(psi.transform(total[..., 0], total[..., 1], total[..., 2])) ** 2


def inside_window(spec: StateSpec, dev: np.ndarray) -> np.ndarray:
    """True where every photon lies within half a window of the photon average."""
    spread = np.abs(dev - dev.mean(axis=-2, keepdims=True))
    return np.all(spread <= 0.5 * spec.window, axis=(-2, -1))


def density_maximal(spec: StateSpec, scene: Scene, events) -> np.ndarray:
    """Unnormalized |psi~(sum t_j - N t0, sum r_j - N r_p)|^2 inside the difference window."""
    if not spec.is_maximal:
        raise UnsupportedConfigurationError("density_maximal needs a maximal state")
    dev = _deviations(events, scene)
    _check_count(spec, dev)
    return np.where(inside_window(spec, dev), _sum_density(spec.psi, dev), 0.0)


def _photon_factors(spec: StateSpec, dev: np.ndarray) -> np.ndarray:
    """gamma~(t_n - t0) xi~(r_n - r_p) for each photon n."""
    return spec.gamma.transform(dev[..., 0]) * spec.xi.transform(dev[..., 1], dev[..., 2])


def _leave_one_out_products(factors: np.ndarray) -> np.ndarray:
    n = factors.shape[-1]
    out = np.empty(factors.shape, dtype=complex)
    for j in range(n):
        out[..., j] = np.prod(np.delete(factors, j, axis=-1), axis=-1)
    return out


def partial_amplitude_sq(spec: StateSpec, scene: Scene, events) -> np.ndarray:
    """Unnormalized |psi~(sum)|^2 |sum_j prod_{n != j} gamma~ xi~|^2."""
    if spec.is_maximal:
        raise UnsupportedConfigurationError("partial density needs finite gamma and xi")
    dev = _deviations(events, scene)
    _check_count(spec, dev)
    cross = _leave_one_out_products(_photon_factors(spec, dev)).sum(axis=-1)
    return _sum_density(spec.psi, dev) * np.abs(cross) ** 2


def density_partial(spec: StateSpec, scene: Scene, events) -> np.ndarray:
    """Normalized joint density of the partially entangled state."""
    if spec.n_photons < 2:
        raise ValueError("the partially entangled density needs N >= 2")
    raw = partial_amplitude_sq(spec, scene, events)
    return raw / _partial_scale(spec)


def _partial_scale(spec: StateSpec) -> float:
    # peak values of the closed forms times the mixture's shape-unit mass
    psi0 = abs(complex(spec.psi.transform(0.0, 0.0, 0.0))) ** 2
    g0 = abs(complex(spec.gamma.transform(0.0) * spec.xi.transform(0.0, 0.0))) ** 2
    return psi0 * g0 ** (spec.n_photons - 1) * math.exp(_mixture_parts(spec)[1])


# --- Gaussian mixture -------------------------------------------------------------


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: np.ndarray  # (3, N)
    cov: np.ndarray  # (3, N, N)
    label: tuple[int, int] = (-1, -1)

    @cached_property
    def _chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.cov)

    def logpdf(self, events: np.ndarray) -> np.ndarray:
        # events (..., N, 3) -> per-axis (..., 3, N)
        dev = np.swapaxes(events, -1, -2) - self.mean
        sol = np.linalg.solve(self._chol, dev[..., None])[..., 0]
        n = self.mean.shape[-1]
        logdet = 2.0 * np.log(np.diagonal(self._chol, axis1=-2, axis2=-1)).sum(axis=-1)
        per_axis = -0.5 * (sol**2).sum(axis=-1) - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi)
        return per_axis.sum(axis=-1)


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture over the 3N event coordinates, block-diagonal across the t, x, y axes.

    Each component carries an N x N covariance per axis; coordinates of
    different axes are independent within a component.
    """

    components: tuple[MixtureComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("mixture needs at least one component")
        total = sum(c.weight for c in self.components)
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"mixture weights sum to {total}, not 1")
        for c in self.components:
            if c.weight < 0:
                raise ValueError(f"negative weight in component {c.label}")
            if np.any(np.diagonal(c.cov, axis1=-2, axis2=-1) <= 0):
                raise ValueError(f"non-positive variance in component {c.label}")

    @property
    def n_photons(self) -> int:
        return self.components[0].mean.shape[-1]

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def pdf(self, events) -> np.ndarray:
        events = np.asarray(events, dtype=float)
        logs = np.stack([c.logpdf(events) for c in self.components], axis=-1)
        peak = logs.max(axis=-1, keepdims=True)
        return np.exp(peak[..., 0]) * (np.exp(logs - peak) @ self.weights)

    def _moment(self, vec: np.ndarray, axis: int) -> tuple[float, float]:
        means = np.array([vec @ c.mean[axis] for c in self.components])
        variances = np.array([vec @ c.cov[axis] @ vec for c in self.components])
        w = self.weights
        mu = float(w @ means)
        return mu, float(w @ (variances + (means - mu) ** 2))

    def average_variance(self, axis: int) -> float:
        """Variance of the photon-averaged coordinate along ``axis``."""
        n = self.n_photons
        return self._moment(np.full(n, 1.0 / n), axis)[1]

    def photon_variance(self, photon: int, axis: int) -> float:
        vec = np.zeros(self.n_photons)
        vec[photon] = 1.0
        return self._moment(vec, axis)[1]

    def conditional(self, photon: int, value) -> "GaussianMixture":
        """Mixture over the other photons given photon ``photon`` at ``value`` (t, x, y)."""
        value = np.asarray(value, dtype=float)
        keep = [i for i in range(self.n_photons) if i != photon]
        parts, logw = [], []
        for c in self.components:
            means, covs, lw = [], [], math.log(c.weight) if c.weight > 0 else -np.inf
            for ax in range(3):
                cov = c.cov[ax]
                s_kk = cov[np.ix_(keep, keep)]
                s_kp = cov[keep, photon]
                s_pp = cov[photon, photon]
                resid = value[ax] - c.mean[ax, photon]
                means.append(c.mean[ax, keep] + s_kp * resid / s_pp)
                covs.append(s_kk - np.outer(s_kp, s_kp) / s_pp)
                lw += -0.5 * resid**2 / s_pp - 0.5 * math.log(2 * math.pi * s_pp)
            parts.append((np.array(means), np.array(covs), c.label))
            logw.append(lw)
        logw = np.array(logw)
        w = np.exp(logw - logw.max())
        w /= w.sum()
        return GaussianMixture(tuple(MixtureComponent(float(wi), m, s, lab)
                                     for wi, (m, s, lab) in zip(w, parts)))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` event tuples, shape ``(count, N, 3)``."""
        n = self.n_photons
        which = rng.choice(len(self.components), size=count, p=self.weights)
        normals = rng.standard_normal((count, 3, n))
        out = np.empty((count, 3, n))
        for idx, comp in enumerate(self.components):
            sel = which == idx
            if not sel.any():
                continue
            out[sel] = comp.mean + np.einsum("aij,saj->sai", comp._chol, normals[sel])
        return np.swapaxes(out, -1, -2)

    def to_dict(self) -> dict:
        return {"components": [
            {"label": list(c.label), "weight": c.weight, "mean": c.mean.tolist(), "cov": c.cov.tolist()}
            for c in self.components
        ]}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianMixture":
        return cls(tuple(
            MixtureComponent(float(c["weight"]), np.array(c["mean"], dtype=float),
                             np.array(c["cov"], dtype=float), tuple(c["label"]))
            for c in data["components"]
        ))

    @classmethod
    def from_json(cls, text: str) -> "GaussianMixture":
        return cls.from_dict(json.loads(text))


def _precisions(spec: StateSpec, j: int, jp: int) -> np.ndarray:
    """Per-axis precision matrices of the (j, j') cross term, shape (3, N, N).

    |psi~(S)|^2 contributes 2 a_psi^2 11^T; each gamma~/xi~ factor of photon n
    contributes a_g^2 on the diagonal, once per occurrence in A_j A_j'.
    """
    n = spec.n_photons
    a_psi = spec.psi_widths
    a_g = spec.difference_widths
    mult = np.ones(n) * 2.0
    mult[j] -= 1.0
    mult[jp] -= 1.0
    ones = np.ones((n, n))
    return np.stack([2.0 * a_psi[ax] ** 2 * ones + np.diag(mult * a_g[ax] ** 2) for ax in range(3)])


def _mixture_parts(spec: StateSpec):
    if spec.is_maximal:
        raise UnsupportedConfigurationError("maximal state has no finite mixture expansion")
    if spec.n_photons < 2:
        raise ValueError("mixture expansion needs N >= 2")
    if not spec.zero_centered:
        raise UnsupportedConfigurationError(
            "mixture expansion needs zero-centered gamma and xi; off-center difference "
            "amplitudes give oscillating cross terms (use the rejection sampler)"
        )
    return _mixture_cache(spec)


_MIXTURE_CACHE: dict = {}


def _mixture_cache(spec: StateSpec):
    key = (spec.n_photons, tuple(spec.psi_widths), tuple(spec.difference_widths))
    hit = _MIXTURE_CACHE.get(key)
    if hit is not None:
        return hit
    n = spec.n_photons
    labels, covs, logz = [], [], []
    for j in range(n):
        for jp in range(n):
            prec = _precisions(spec, j, jp)
            _, logdet = np.linalg.slogdet(prec)
            labels.append((j, jp))
            covs.append(np.linalg.inv(prec))
            logz.append(float(np.sum(0.5 * n * math.log(2 * math.pi) - 0.5 * logdet)))
    logz = np.array(logz)
    peak = logz.max()
    log_total = peak + math.log(np.exp(logz - peak).sum())
    result = (labels, covs, logz - log_total), log_total
    if len(_MIXTURE_CACHE) > 256:
        _MIXTURE_CACHE.clear()
    _MIXTURE_CACHE[key] = result
    return result


def mixture_decompose(spec: StateSpec, scene: Scene) -> GaussianMixture:
    """Exact N^2-term Gaussian expansion of the partially entangled density."""
    (labels, covs, logw), _ = _mixture_parts(spec)
    mean = np.repeat(scene.origin[:, None], spec.n_photons, axis=1)
    return GaussianMixture(tuple(
        MixtureComponent(float(math.exp(lw)), mean.copy(), cov, lab)
        for lab, cov, lw in zip(labels, covs, logw)
    ))


# --- far-field validity -----------------------------------------------------------


@dataclass(frozen=True)
class FarFieldReport:
    ratio: float
    threshold: float

    @property
    def valid(self) -> bool:
        return self.ratio <= self.threshold


def far_field_check(spec: StateSpec, threshold: float = 1e-2, *,
                    speed_of_light: float = SPEED_OF_LIGHT, n_sigma: float = 3.0) -> FarFieldReport:
    """Largest |k_perp|^2 / |k|^2 over the n_sigma support of every photon's spectrum.

    |k| = omega / c.  The ratio is capped at 1, which marks components that
    are not propagating at all.
    """
    freq, trans = spec.psi.freq, spec.psi.trans
    omega_spread = n_sigma * freq.density_sigma
    k_spread = np.array([n_sigma * s for s in trans.density_sigma])
    if not spec.is_maximal:
        omega_spread += n_sigma * spec.gamma.density_sigma + abs(spec.gamma.center_omega)
        k_spread += np.array([n_sigma * s for s in spec.xi.density_sigma]) + np.abs(spec.xi.center_k)
    omega_min = freq.center_omega - omega_spread
    k_max = np.abs(trans.center_k) + k_spread
    if omega_min <= 0:
        return FarFieldReport(1.0, threshold)
    k_mag = omega_min / speed_of_light
    return FarFieldReport(min(float(np.sum(k_max**2) / k_mag**2), 1.0), threshold)


def single_photon_sigmas(psi: SpectralAmplitude) -> np.ndarray:
    """Standard deviations (t, x, y) of the single-photon density |psi~|^2."""
    return density_sigmas(psi)


def event_array(times: Sequence[float], positions: Sequence[Sequence[float]]) -> np.ndarray:
    """Pack one event tuple into the ``(N, 3)`` layout."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    return np.column_stack([np.asarray(times, dtype=float), positions])
