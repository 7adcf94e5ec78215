"""Monte Carlo draws of N-fold coincidence events.

Random streams: a root seed is split into independent Philox streams keyed
by ``(seed, stream, block)``, where shots are grouped into fixed-size blocks.
Every block is generated from its own stream, so results do not depend on
the order (or the number of workers) in which blocks are produced.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .spectral import SpectralAmplitude, density_sigmas
from .state import Scene, StateSpec, mixture_decompose

EXACT_MIXTURE = "exact_mixture"
REJECTION = "rejection"
METHODS = (EXACT_MIXTURE, REJECTION)

STREAM_EVENTS = 0
STREAM_LOSS = 1
STREAM_BASELINE = 2
STREAM_BOOTSTRAP = 3

MIN_ACCEPTANCE = 1e-4


class EnvelopeError(RuntimeError):
    """Rejection sampling acceptance rate fell below the usable floor."""


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    """Counter-based generator for one (stream, block) pair."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    method: str = EXACT_MIXTURE
    rejection_envelope_inflation: float = 1.5
    max_rejection_iters: int = 10_000
    block_size: int = 8192
    workers: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown sampling method {self.method!r}; choose from {METHODS}")
        if self.rejection_envelope_inflation < 1:
            raise ValueError("rejection_envelope_inflation must be >= 1")
        if self.max_rejection_iters < 1000:
            raise ValueError("max_rejection_iters must be >= 1000")
        if self.block_size < 1 or self.workers < 1:
            raise ValueError("block_size and workers must be positive")


@dataclass(frozen=True)
class DetectionEvent:
    shot_id: int
    times: np.ndarray  # (N,)
    positions: np.ndarray  # (N, 2)
    lost_mask: np.ndarray  # (N,)

    @property
    def n_photons(self) -> int:
        return len(self.times)


BINARY_DTYPE = np.dtype([
    ("shot", "<u8"), ("index", "<u2"), ("t", "<f8"), ("x", "<f8"), ("y", "<f8"), ("lost", "u1"),
])
CSV_COLUMNS = ("shot_id", "photon_index", "t", "x", "y", "lost")


@dataclass(frozen=True)
class EventBatch:
    """A run of shots stored column-wise.

    ``arrivals`` has shape ``(n_shots, N, 3)`` with ``(t, x, y)`` per photon.
    Lost photons keep their sampled values; ``lost`` flags them.
    """

    shot_id: np.ndarray
    arrivals: np.ndarray
    lost: np.ndarray

    def __post_init__(self):
        if self.arrivals.ndim != 3 or self.arrivals.shape[-1] != 3:
            raise ValueError("arrivals must have shape (n_shots, N, 3)")
        if self.lost.shape != self.arrivals.shape[:2] or self.shot_id.shape != self.arrivals.shape[:1]:
            raise ValueError("shot_id / lost shapes do not match arrivals")

    @classmethod
    def from_arrivals(cls, arrivals: np.ndarray, first_shot: int = 0) -> "EventBatch":
        n = arrivals.shape[0]
        return cls(np.arange(first_shot, first_shot + n, dtype=np.int64), arrivals,
                   np.zeros(arrivals.shape[:2], dtype=bool))

    @property
    def n_photons(self) -> int:
        return self.arrivals.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.arrivals[..., 0]

    @property
    def positions(self) -> np.ndarray:
        return self.arrivals[..., 1:]

    def __len__(self) -> int:
        return self.arrivals.shape[0]

    def __getitem__(self, i: int) -> DetectionEvent:
        return DetectionEvent(int(self.shot_id[i]), self.arrivals[i, :, 0],
                              self.arrivals[i, :, 1:], self.lost[i])

    def __iter__(self) -> Iterator[DetectionEvent]:
        return (self[i] for i in range(len(self)))

    def with_lost(self, lost: np.ndarray) -> "EventBatch":
        return EventBatch(self.shot_id, self.arrivals, np.asarray(lost, dtype=bool))

    def equals(self, other: "EventBatch") -> bool:
        return (np.array_equal(self.shot_id, other.shot_id) and np.array_equal(self.lost, other.lost)
                and self.arrivals.tobytes() == other.arrivals.tobytes())

    # --- export ---

    def to_records(self) -> np.ndarray:
        n, k = self.lost.shape
        rec = np.empty(n * k, dtype=BINARY_DTYPE)
        rec["shot"] = np.repeat(self.shot_id, k)
        rec["index"] = np.tile(np.arange(k), n)
        flat = self.arrivals.reshape(-1, 3)
        rec["t"], rec["x"], rec["y"] = flat[:, 0], flat[:, 1], flat[:, 2]
        rec["lost"] = self.lost.reshape(-1)
        return rec

    @classmethod
    def from_records(cls, rec: np.ndarray) -> "EventBatch":
        k = int(rec["index"].max()) + 1 if len(rec) else 0
        if k == 0 or len(rec) % k:
            raise ValueError("record count is not a multiple of the photon count")
        n = len(rec) // k
        if not np.array_equal(rec["index"], np.tile(np.arange(k), n)):
            raise ValueError("records are not ordered shot-major with contiguous photon indices")
        arrivals = np.column_stack([rec["t"], rec["x"], rec["y"]]).reshape(n, k, 3)
        return cls(rec["shot"][::k].astype(np.int64), arrivals, rec["lost"].reshape(n, k).astype(bool))

    def to_binary(self, path) -> None:
        """Write packed little-endian records: u64 shot, u16 index, f64 t, x, y, u8 lost."""
        Path(path).write_bytes(self.to_records().tobytes())

    @classmethod
    def from_binary(cls, path) -> "EventBatch":
        return cls.from_records(np.frombuffer(Path(path).read_bytes(), dtype=BINARY_DTYPE))

    def to_csv(self, path) -> None:
        rec = self.to_records()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in rec:
                writer.writerow([int(r["shot"]), int(r["index"]), repr(float(r["t"])),
                                 repr(float(r["x"])), repr(float(r["y"])), int(r["lost"])])

    @classmethod
    def from_csv(cls, path) -> "EventBatch":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        rec = np.empty(len(rows), dtype=BINARY_DTYPE)
        for i, row in enumerate(rows):
            rec[i] = (int(row["shot_id"]), int(row["photon_index"]), float(row["t"]),
                      float(row["x"]), float(row["y"]), int(row["lost"]))
        return cls.from_records(rec)


def concat(batches: list[EventBatch]) -> EventBatch:
    return EventBatch(np.concatenate([b.shot_id for b in batches]),
                      np.concatenate([b.arrivals for b in batches]),
                      np.concatenate([b.lost for b in batches]))


# --- per-block samplers (deviations from the noiseless arrival) ----------------------


def _single_block(sigmas: np.ndarray, rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    return rng.standard_normal((count, n, 3)) * sigmas


def _centered_uniform(rng: np.random.Generator, count: int, n: int, width: float) -> np.ndarray:
    """Uniform draws on {e : sum(e) = 0, |e_j| <= width / 2}."""
    half = 0.5 * width
    if n == 2:
        e = rng.uniform(-half, half, count)
        return np.column_stack([e, -e])
    out = np.empty((0, n))
    while len(out) < count:
        need = count - len(out)
        free = rng.uniform(-half, half, (2 * need + 16, n - 1))
        last = -free.sum(axis=1)
        ok = np.abs(last) <= half
        out = np.concatenate([out, np.column_stack([free[ok], last[ok]])])
    return out[:count]


def _maximal_block(spec: StateSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    n = spec.n_photons
    sigmas = density_sigmas(spec.psi)
    window = spec.window
    sums = rng.standard_normal((count, 3)) * sigmas
    out = np.empty((count, n, 3))
    for ax in range(3):
        out[:, :, ax] = sums[:, ax, None] / n + _centered_uniform(rng, count, n, window[ax])
    return out


def _log_accept_ratio(spec: StateSpec, dev: np.ndarray, inflation: float) -> np.ndarray:
    """log f(c) - log e(c) for the partial state, both in peak-normalized units."""
    n = spec.n_photons
    a_psi2 = spec.psi_widths**2
    a_g2 = spec.difference_widths**2
    centers = np.array([spec.gamma.center_omega, *spec.xi.center_k])
    sums = dev.sum(axis=1)  # (m, 3)
    sum_term = (sums**2 * a_psi2).sum(axis=1)
    photon_log = -0.5 * (dev**2 * a_g2).sum(axis=2)  # (m, N): log|G_n|
    photon_phase = (dev * centers).sum(axis=2)
    log_a = photon_log.sum(axis=1, keepdims=True) - photon_log  # leave-one-out
    phase = photon_phase.sum(axis=1, keepdims=True) - photon_phase
    peak = log_a.max(axis=1, keepdims=True)
    cross = np.abs(np.sum(np.exp(log_a - peak + 1j * phase), axis=1))
    with np.errstate(divide="ignore"):
        log_f = -sum_term + 2.0 * (peak[:, 0] + np.log(cross))
    env = (-sum_term[:, None] + 2.0 * log_a) / inflation**2
    env_peak = env.max(axis=1)
    log_e = math.log(n) + env_peak + np.log(np.exp(env - env_peak[:, None]).sum(axis=1))
    return log_f - log_e


def _propose(spec: StateSpec, rng: np.random.Generator, m: int, inflation: float) -> np.ndarray:
    n = spec.n_photons
    sum_sd = inflation / (np.sqrt(2.0) * spec.psi_widths)
    diff_sd = inflation / (np.sqrt(2.0) * spec.difference_widths)
    which = rng.integers(0, n, m)
    dev = rng.standard_normal((m, n, 3)) * diff_sd
    dev[np.arange(m), which] = 0.0
    sums = rng.standard_normal((m, 3)) * sum_sd
    dev[np.arange(m), which] = sums - dev.sum(axis=1)
    return dev


def _rejection_block(spec: StateSpec, cfg: SamplerConfig, rng: np.random.Generator,
                     count: int) -> np.ndarray:
    infl = cfg.rejection_envelope_inflation
    accepted: list[np.ndarray] = []
    have, proposed, taken = 0, 0, 0
    batch = max(4 * count, 4096)
    for _ in range(cfg.max_rejection_iters):
        dev = _propose(spec, rng, batch, infl)
        keep = np.log(rng.random(batch)) < _log_accept_ratio(spec, dev, infl)
        proposed += batch
        taken += int(keep.sum())
        if proposed >= 10_000 and taken / proposed < MIN_ACCEPTANCE:
            n = spec.n_photons
            needed = (1.0 / (n * MIN_ACCEPTANCE)) ** (1.0 / (3 * n))
            raise EnvelopeError(
                f"rejection acceptance {taken / proposed:.2e} below {MIN_ACCEPTANCE:g}; "
                f"reduce rejection_envelope_inflation to <= {max(needed, 1.0):.3f} "
                f"or use the exact_mixture method"
            )
        accepted.append(dev[keep])
        have += int(keep.sum())
        if have >= count:
            return np.concatenate(accepted)[:count]
        rate = max(taken / proposed, MIN_ACCEPTANCE)
        batch = min(int(1.2 * (count - have) / rate) + 64, 2_000_000)
    raise EnvelopeError(f"rejection sampler exhausted {cfg.max_rejection_iters} iterations")


def _state_block(spec: StateSpec, scene: Scene, cfg: SamplerConfig, rng: np.random.Generator,
                 count: int) -> np.ndarray:
    if spec.n_photons == 1:
        return _single_block(density_sigmas(spec.psi), rng, count, 1)
    if spec.is_maximal:
        return _maximal_block(spec, rng, count)
    if cfg.method == EXACT_MIXTURE:
        return mixture_decompose(spec, scene).sample(rng, count) - scene.origin
    return _rejection_block(spec, cfg, rng, count)


def _run_blocks(make_block, cfg: SamplerConfig, count: int, stream: int, origin: np.ndarray,
                first_shot: int = 0) -> EventBatch:
    if count < 1:
        raise ValueError("count must be positive")
    n_blocks = -(-count // cfg.block_size)

    def job(b: int) -> np.ndarray:
        size = min(cfg.block_size, count - b * cfg.block_size)
        return make_block(block_rng(cfg.seed, stream, b), size)

    if cfg.workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            blocks = list(pool.map(job, range(n_blocks)))
    else:
        blocks = [job(b) for b in range(n_blocks)]
    return EventBatch.from_arrivals(np.concatenate(blocks) + origin, first_shot)


def sample_events(spec: StateSpec, scene: Scene, cfg: SamplerConfig, count: int) -> EventBatch:
    """Draw ``count`` i.i.d. coincidence events from the state's joint density.

    N = 1 and maximal states have a single exact sampler and ignore
    ``cfg.method``; partial states use the mixture expansion or the
    rejection sampler.
    """
    return _run_blocks(lambda rng, size: _state_block(spec, scene, cfg, rng, size),
                       cfg, count, STREAM_EVENTS, scene.origin)


def sample_unentangled(psi: SpectralAmplitude, scene: Scene, n_photons: int, cfg: SamplerConfig,
                       count: int) -> EventBatch:
    """N independent single photons per shot, each with density |psi~|^2."""
    sigmas = density_sigmas(psi)
    return _run_blocks(lambda rng, size: _single_block(sigmas, rng, size, n_photons),
                       cfg, count, STREAM_BASELINE, scene.origin)


def apply_loss(events: EventBatch, loss_prob: float, seed: int, block_size: int = 8192) -> EventBatch:
    """Mark each photon lost independently with probability ``loss_prob``."""
    if not 0 <= loss_prob < 1:
        raise ValueError("loss_prob must lie in [0, 1)")
    if loss_prob == 0:
        return events
    lost = events.lost.copy()
    for b, start in enumerate(range(0, len(events), block_size)):
        part = lost[start:start + block_size]
        part |= block_rng(seed, STREAM_LOSS, b).random(part.shape) < loss_prob
    return events.with_lost(lost)


def lose_photons(events: EventBatch, photons) -> EventBatch:
    """Mark the given photon indices lost in every shot."""
    lost = events.lost.copy()
    lost[:, list(photons)] = True
    return events.with_lost(lost)
