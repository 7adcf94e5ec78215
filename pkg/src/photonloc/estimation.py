"""Target estimates and precision statistics from detection events.

Per shot the surviving photons are averaged into ``(t_bar, x_bar, y_bar)``;
across shots the mean locates the target and the standard deviation is the
single-shot precision.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .sampler import (
    STREAM_BOOTSTRAP,
    EventBatch,
    SamplerConfig,
    apply_loss,
    block_rng,
    lose_photons,
    sample_events,
    sample_unentangled,
)
from .spectral import SpectralAmplitude, density_sigmas
from .state import AXES, Scene, StateSpec

REPORT_COLUMNS = ("axis", "std", "lambda", "ratio", "ci_low", "ci_high", "n_shots", "seed")


@dataclass(frozen=True)
class Moments:
    """Count, mean and centered second moment, merged pairwise (Chan et al.)."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def from_array(cls, x: np.ndarray) -> "Moments":
        mean = x.mean(axis=0)
        return cls(len(x), mean, ((x - mean) ** 2).sum(axis=0))

    def merge(self, other: "Moments") -> "Moments":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        return Moments(n, mean, self.m2 + other.m2 + delta**2 * self.n * other.n / n)

    def std(self, ddof: int = 1) -> np.ndarray:
        return np.sqrt(self.m2 / (self.n - ddof))


def tree_moments(x: np.ndarray, block_size: int = 8192) -> Moments:
    """Moments of ``x`` accumulated per block and merged in a fixed binary tree."""
    parts = [Moments.from_array(x[i:i + block_size]) for i in range(0, len(x), block_size)]
    while len(parts) > 1:
        parts = [parts[i].merge(parts[i + 1]) if i + 1 < len(parts) else parts[i]
                 for i in range(0, len(parts), 2)]
    return parts[0]


def shot_averages(events: EventBatch) -> tuple[np.ndarray, np.ndarray]:
    """Photon-averaged arrivals over surviving photons, and the mask of usable shots."""
    keep = ~events.lost
    counts = keep.sum(axis=1)
    usable = counts > 0
    sums = np.einsum("sn,sna->sa", keep[usable].astype(float), events.arrivals[usable])
    return sums / counts[usable, None], usable


@dataclass(frozen=True)
class TargetEstimate:
    """Across-shot statistics of the photon-averaged arrival.

    ``per_axis_std`` reports the time axis as a length (``c * std(t_bar)``);
    ``time_std`` keeps it in seconds.
    """

    r_hat: np.ndarray
    t_hat: float
    z_hat: float
    per_axis_std: np.ndarray
    time_std: float
    n_shots: int
    n_photons: int
    n_photons_used: int
    n_dropped: int = 0
    psi: SpectralAmplitude | None = field(default=None, repr=False, compare=False)
    averages: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def stds(self) -> np.ndarray:
        """Standard deviations of (t_bar, x_bar, y_bar) in native units (s, m, m)."""
        return np.array([self.time_std, *self.per_axis_std[1:]])

    def to_dict(self) -> dict:
        return {
            "r_hat": list(map(float, self.r_hat)), "t_hat": self.t_hat, "z_hat": self.z_hat,
            "per_axis_std": list(map(float, self.per_axis_std)), "time_std": self.time_std,
            "n_shots": self.n_shots, "n_photons": self.n_photons,
            "n_photons_used": self.n_photons_used, "n_dropped": self.n_dropped,
        }


def estimate_target(events: EventBatch, scene: Scene, *, psi: SpectralAmplitude | None = None,
                    block_size: int = 8192) -> TargetEstimate:
    if len(events) == 0:
        raise ValueError("no events to estimate from")
    averages, usable = shot_averages(events)
    if not usable.any():
        raise ValueError("every shot lost all of its photons")
    mom = tree_moments(averages, block_size)
    std = mom.std() if mom.n > 1 else np.zeros(3)
    c = scene.speed_of_light
    return TargetEstimate(
        r_hat=mom.mean[1:].copy(),
        t_hat=float(mom.mean[0]),
        z_hat=scene.path_length(float(mom.mean[0])),
        per_axis_std=np.array([c * std[0], std[1], std[2]]),
        time_std=float(std[0]),
        n_shots=int(mom.n),
        n_photons=events.n_photons,
        n_photons_used=int((~events.lost[usable]).sum()),
        n_dropped=int((~usable).sum()),
        psi=psi,
        averages=averages,
    )


def baseline_unentangled(psi: SpectralAmplitude, scene: Scene, n_photons: int, n_shots: int,
                         seed: int, *, block_size: int = 8192, workers: int = 1) -> TargetEstimate:
    cfg = SamplerConfig(seed=seed, block_size=block_size, workers=workers)
    events = sample_unentangled(psi, scene, n_photons, cfg, n_shots)
    return estimate_target(events, scene, psi=psi)


def bootstrap_stds(averages: np.ndarray, n_boot: int = 200, seed: int = 0,
                   chunk: int = 16) -> np.ndarray:
    """Standard deviations per axis over ``n_boot`` shot resamples, shape (n_boot, 3)."""
    n = len(averages)
    out = np.empty((n_boot, averages.shape[1]))
    for b, start in enumerate(range(0, n_boot, chunk)):
        stop = min(start + chunk, n_boot)
        idx = block_rng(seed, STREAM_BOOTSTRAP, b).integers(0, n, (stop - start, n))
        out[start:stop] = averages[idx].std(axis=1, ddof=1)
    return out


def _percentile_ci(samples: np.ndarray, confidence: float) -> tuple[np.ndarray, np.ndarray]:
    tail = 50.0 * (1.0 - confidence)
    return np.percentile(samples, tail, axis=0), np.percentile(samples, 100.0 - tail, axis=0)


@dataclass(frozen=True)
class LambdaReport:
    """std(average arrival) / std(|psi~|^2) per axis with a bootstrap interval."""

    lambdas: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    baseline: str = "single_photon_width"

    @property
    def lambda_t(self) -> float:
        return float(self.lambdas[0])

    @property
    def lambda_x(self) -> float:
        return float(self.lambdas[1])

    @property
    def lambda_y(self) -> float:
        return float(self.lambdas[2])

    @property
    def mc_ci(self) -> np.ndarray:
        """Half-widths of the confidence interval."""
        return 0.5 * (self.ci_high - self.ci_low)


def compute_lambda(estimate: TargetEstimate, psi: SpectralAmplitude, *, n_boot: int = 200,
                   seed: int = 0, confidence: float = 0.95) -> LambdaReport:
    if estimate.psi is not None and estimate.psi != psi:
        raise ValueError("estimate was produced with a different psi")
    sigma = density_sigmas(psi)
    lambdas = estimate.stds / sigma
    if estimate.averages is None:
        return LambdaReport(lambdas, lambdas.copy(), lambdas.copy())
    lo, hi = _percentile_ci(bootstrap_stds(estimate.averages, n_boot, seed) / sigma, confidence)
    return LambdaReport(lambdas, lo, hi)


@dataclass(frozen=True)
class AdvantageReport:
    """Baseline std over entangled std per axis, and their product (volume ratio)."""

    ratios: np.ndarray
    volume_ratio: float
    ci_low: np.ndarray
    ci_high: np.ndarray
    volume_ci: tuple[float, float]


def advantage_ratio(entangled: TargetEstimate, baseline: TargetEstimate, *, n_boot: int = 200,
                    seed: int = 0, confidence: float = 0.95) -> AdvantageReport:
    if entangled.n_photons != baseline.n_photons:
        raise ValueError("entangled and baseline estimates use different photon numbers")
    if entangled.n_shots != baseline.n_shots:
        raise ValueError("entangled and baseline estimates use different shot counts")
    if entangled.psi is not None and baseline.psi is not None and entangled.psi != baseline.psi:
        raise ValueError("entangled and baseline estimates use different psi")
    if np.any(baseline.stds == 0):
        raise ZeroDivisionError("baseline standard deviation is zero (degenerate baseline)")
    ratios = baseline.stds / entangled.stds
    volume = float(np.prod(ratios))
    if entangled.averages is None or baseline.averages is None:
        return AdvantageReport(ratios, volume, ratios.copy(), ratios.copy(), (volume, volume))
    boot = (bootstrap_stds(baseline.averages, n_boot, seed + 1)
            / bootstrap_stds(entangled.averages, n_boot, seed))
    lo, hi = _percentile_ci(boot, confidence)
    vlo, vhi = _percentile_ci(np.prod(boot, axis=1), confidence)
    return AdvantageReport(ratios, volume, lo, hi, (float(vlo), float(vhi)))


@dataclass(frozen=True)
class LossReport:
    """Estimator spread with and without photon loss, in native units (s, m, m).

    ``std_degraded`` is the spread over shots that lost some but not all
    photons, estimated from the survivors alone.
    """

    loss_prob: float
    std_lossless: np.ndarray
    std_complete: np.ndarray
    std_degraded: np.ndarray
    std_all: np.ndarray
    n_complete: int
    n_degraded: int
    n_dropped: int
    single_photon_sigma: np.ndarray
    window_variance: np.ndarray | None

    @property
    def degraded_exceeds_single(self) -> np.ndarray:
        return self.std_degraded > self.single_photon_sigma

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        out["degraded_exceeds_single"] = self.degraded_exceeds_single.tolist()
        return out


def _std_or_nan(averages: np.ndarray) -> np.ndarray:
    return averages.std(axis=0, ddof=1) if len(averages) > 1 else np.full(3, np.nan)


def loss_impact(spec: StateSpec, scene: Scene, loss_prob: float, n_shots: int, seed: int, *,
                lost_photons=None, cfg: SamplerConfig | None = None) -> LossReport:
    """Compare the photon-average estimator with and without loss.

    ``lost_photons`` additionally marks fixed photon indices lost in every shot.
    """
    if not 0 <= loss_prob < 1:
        raise ValueError("loss_prob must lie in [0, 1)")
    cfg = cfg or SamplerConfig(seed=seed)
    events = sample_events(spec, scene, cfg, n_shots)
    lossless, _ = shot_averages(events)
    lossy = apply_loss(events, loss_prob, seed)
    if lost_photons is not None:
        lossy = lose_photons(lossy, lost_photons)
    averages, usable = shot_averages(lossy)
    n_lost = lossy.lost[usable].sum(axis=1)
    complete = averages[n_lost == 0] - scene.origin
    degraded = averages[n_lost > 0] - scene.origin
    window_var = spec.window**2 / 12.0 if spec.is_maximal and spec.n_photons > 1 else None
    return LossReport(
        loss_prob=float(loss_prob),
        std_lossless=_std_or_nan(lossless),
        std_complete=_std_or_nan(complete),
        std_degraded=_std_or_nan(degraded),
        std_all=_std_or_nan(averages),
        n_complete=int(len(complete)),
        n_degraded=int(len(degraded)),
        n_dropped=int((~usable).sum()),
        single_photon_sigma=density_sigmas(spec.psi),
        window_variance=window_var,
    )


# --- report serialization ------------------------------------------------------------


def report_rows(estimate: TargetEstimate, lam: LambdaReport, adv: AdvantageReport | None,
                seed: int) -> list[dict]:
    rows = []
    for i, axis in enumerate(AXES):
        rows.append({
            "axis": axis,
            "std": float(estimate.stds[i]),
            "lambda": float(lam.lambdas[i]),
            "ratio": float(adv.ratios[i]) if adv is not None else math.nan,
            "ci_low": float(lam.ci_low[i]),
            "ci_high": float(lam.ci_high[i]),
            "n_shots": estimate.n_shots,
            "seed": int(seed),
        })
    return rows


def rows_to_csv(rows: list[dict], columns=REPORT_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def rows_to_json(rows: list[dict], **kwargs) -> str:
    return json.dumps(rows, **kwargs)
