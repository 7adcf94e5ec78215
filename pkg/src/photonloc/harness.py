"""Sweeps, oracle cross-checks and their gates."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .config import MAXIMAL_WORD, ExperimentConfig
from .estimation import (
    advantage_ratio,
    compute_lambda,
    estimate_target,
    loss_impact,
)
from .sampler import apply_loss, sample_events, sample_unentangled
from .spectral import density_sigmas
from .state import AXES, GaussianMixture, StateSpec, density_partial, mixture_decompose

# default gate tolerances (relative unless noted)
TOLERANCES = {
    "lambda_rel": 0.02,
    "advantage_rel": 0.03,
    "volume_rel": 0.08,
    "oracle_sampler_rel": 1e-2,
    "oracle_mixture_rel": 1e-3,
    "oracle_weight_abs": 1e-6,
    "oracle_pointwise_rel": 1e-10,
}


def row_seed(root: int, index: int) -> int:
    ss = np.random.SeedSequence(int(root), spawn_key=(0x5EED, int(index)))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _beta_label(beta) -> str | float:
    return MAXIMAL_WORD if beta is None else float(beta)


def sweep_points(cfg: ExperimentConfig) -> list[tuple[int, float | None, float]]:
    return [(n, beta, loss) for n in cfg.sweep.n_photons for beta in cfg.sweep.bandwidth_ratios
            for loss in cfg.sweep.loss]


STAT_KEYS = (
    "std_t", "std_x", "std_y", "lambda_t", "lambda_x", "lambda_y",
    "lambda_ci_low_t", "lambda_ci_low_x", "lambda_ci_low_y",
    "lambda_ci_high_t", "lambda_ci_high_x", "lambda_ci_high_y",
    "ratio_t", "ratio_x", "ratio_y", "ratio_ci_low_t", "ratio_ci_low_x", "ratio_ci_low_y",
    "ratio_ci_high_t", "ratio_ci_high_x", "ratio_ci_high_y",
    "volume_ratio", "volume_ci_low", "volume_ci_high", "r_hat_x", "r_hat_y", "z_hat",
    "n_shots", "n_dropped",
)


def run_point(cfg: ExperimentConfig, index: int, n: int, beta, loss: float, seed: int) -> dict:
    """Entangled and unentangled runs for one sweep point with matched seeds."""
    start = time.perf_counter()
    psi, scene = cfg.build_psi(), cfg.build_scene()
    spec = cfg.build_state(n, beta)
    scfg = cfg.sampler_config(seed)
    shots = cfg.run.shots
    entangled = apply_loss(sample_events(spec, scene, scfg, shots), loss, seed)
    baseline = apply_loss(sample_unentangled(psi, scene, n, scfg, shots), loss, seed)
    est = estimate_target(entangled, scene, psi=psi)
    base = estimate_target(baseline, scene, psi=psi)
    lam = compute_lambda(est, psi, n_boot=cfg.run.n_boot, seed=seed, confidence=cfg.run.confidence)
    adv = advantage_ratio(est, base, n_boot=cfg.run.n_boot, seed=seed, confidence=cfg.run.confidence)
    row = {"index": index, "n_photons": n, "bandwidth_ratio": _beta_label(beta), "loss_prob": loss}
    for i, ax in enumerate(AXES):
        row[f"std_{ax}"] = float(est.stds[i])
        row[f"lambda_{ax}"] = float(lam.lambdas[i])
        row[f"lambda_ci_low_{ax}"] = float(lam.ci_low[i])
        row[f"lambda_ci_high_{ax}"] = float(lam.ci_high[i])
        row[f"ratio_{ax}"] = float(adv.ratios[i])
        row[f"ratio_ci_low_{ax}"] = float(adv.ci_low[i])
        row[f"ratio_ci_high_{ax}"] = float(adv.ci_high[i])
    row.update(volume_ratio=adv.volume_ratio, volume_ci_low=adv.volume_ci[0],
               volume_ci_high=adv.volume_ci[1], r_hat_x=float(est.r_hat[0]),
               r_hat_y=float(est.r_hat[1]), z_hat=est.z_hat, n_shots=est.n_shots,
               n_dropped=est.n_dropped, seed=seed)
    row["config_hash"] = point_hash(cfg, n, beta, loss, seed)
    row["runtime_s"] = time.perf_counter() - start
    return row


def point_hash(cfg: ExperimentConfig, n: int, beta, loss: float, seed: int) -> str:
    payload = json.dumps([cfg.config_hash(), n, _beta_label(beta), loss, seed])
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _run_point_from_dict(args):
    cfg_dict, index, n, beta, loss, seed = args
    return run_point(ExperimentConfig.from_dict(cfg_dict), index, n, beta, loss, seed)


@dataclass
class Gate:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ScalingReport:
    rows: list[dict]
    config_hash: str
    gates: list[Gate] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "rows": self.rows,
                "gates": [dataclasses.asdict(g) for g in self.gates]}


def run_scaling_sweep(cfg: ExperimentConfig, *, check: bool = False) -> ScalingReport:
    """One report row per (N, bandwidth ratio, loss) point, ordered by sweep index."""
    cfg.validate()
    points = [(i, n, beta, loss, row_seed(cfg.sampler.seed, i))
              for i, (n, beta, loss) in enumerate(sweep_points(cfg))]
    workers = cfg.sampler.workers
    if workers > 1 and len(points) > 1:
        cfg_dict = cfg.to_dict()
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_run_point_from_dict, [(cfg_dict, *p) for p in points]))
    else:
        rows = [run_point(cfg, *p) for p in points]
    rows.sort(key=lambda r: r["index"])
    report = ScalingReport(rows, cfg.config_hash())
    if check:
        report.gates = scaling_gates(cfg, rows)
    return report


def rerun_row(cfg: ExperimentConfig, row: dict) -> dict:
    beta = None if row["bandwidth_ratio"] == MAXIMAL_WORD else row["bandwidth_ratio"]
    return run_point(cfg, row["index"], row["n_photons"], beta, row["loss_prob"], row["seed"])


def rows_match(a: dict, b: dict) -> bool:
    """Bitwise equality of every statistic (runtime excluded)."""
    return all(np.float64(a[k]).tobytes() == np.float64(b[k]).tobytes() for k in STAT_KEYS) \
        and a["config_hash"] == b["config_hash"]


def scaling_gates(cfg: ExperimentConfig, rows: list[dict]) -> list[Gate]:
    tol = {k: cfg.tolerance(k, v) for k, v in TOLERANCES.items()}
    gates = []
    partial_n2 = []
    for row in rows:
        n, beta, loss = row["n_photons"], row["bandwidth_ratio"], row["loss_prob"]
        tag = f"row {row['index']} (N={n}, beta={beta}, loss={loss})"
        if loss:
            continue
        if beta == MAXIMAL_WORD or n == 1:
            for ax in AXES:
                lam = row[f"lambda_{ax}"]
                ok = abs(lam * n - 1) <= tol["lambda_rel"]
                gates.append(Gate(f"{tag} lambda_{ax} = 1/N", ok, f"{lam:.5f} vs {1 / n:.5f}"))
                ratio = row[f"ratio_{ax}"]
                ok = abs(ratio / math.sqrt(n) - 1) <= tol["advantage_rel"]
                gates.append(Gate(f"{tag} advantage_{ax} = sqrt(N)", ok,
                                  f"{ratio:.5f} vs {math.sqrt(n):.5f}"))
            vol = row["volume_ratio"]
            ok = abs(vol / n**1.5 - 1) <= tol["volume_rel"]
            gates.append(Gate(f"{tag} volume = N^1.5", ok, f"{vol:.5f} vs {n**1.5:.5f}"))
        elif n == 2:
            partial_n2.append(row)
            for ax in AXES:
                lam = row[f"lambda_{ax}"]
                lo, hi = row[f"lambda_ci_low_{ax}"], row[f"lambda_ci_high_{ax}"]
                ok = hi >= 0.5 and lo <= 1.0
                gates.append(Gate(f"{tag} lambda_{ax} in [1/2, 1]", ok, f"{lam:.5f} CI [{lo:.5f}, {hi:.5f}]"))
                if beta > 1:
                    ok = lo <= 1 / math.sqrt(2)
                    gates.append(Gate(f"{tag} lambda_{ax} <= 1/sqrt2", ok, f"{lam:.5f}"))
    partial_n2.sort(key=lambda r: r["bandwidth_ratio"])
    for prev, cur in zip(partial_n2, partial_n2[1:]):
        for ax in AXES:
            ok = cur[f"lambda_ci_low_{ax}"] <= prev[f"lambda_ci_high_{ax}"]
            gates.append(Gate(
                f"lambda_{ax} non-increasing beta {prev['bandwidth_ratio']} -> {cur['bandwidth_ratio']}",
                ok, f"{prev[f'lambda_{ax}']:.5f} -> {cur[f'lambda_{ax}']:.5f}"))
    return gates


# --- oracle cross-check --------------------------------------------------------------


@dataclass
class OracleCheck:
    name: str
    max_rel: float
    tolerance: float
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_rel <= self.tolerance)


@dataclass
class OracleReport:
    checks: list[OracleCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_discrepancy(self) -> float:
        return max(c.max_rel for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [
            {"name": c.name, "max_rel": c.max_rel, "tolerance": c.tolerance, "passed": c.passed,
             "detail": c.detail} for c in self.checks]}


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def run_oracle_check(cfg: ExperimentConfig, *, bandwidth_ratio: float | None = None,
                     mixture: GaussianMixture | None = None, shots: int | None = None,
                     n_points: int | None = None) -> OracleReport:
    """Pairwise comparison of closed-form, mixture, grid and sampled moments at N = 2."""
    tol = {k: cfg.tolerance(k, v) for k, v in TOLERANCES.items()}
    psi, scene = cfg.build_psi(), cfg.build_scene()
    shots = shots or cfg.run.shots
    n_points = n_points or cfg.grid.n_points
    budget = cfg.grid.memory_budget_mib * 2**20
    beta = bandwidth_ratio or cfg.state.bandwidth_ratio or 2.0
    sigma = density_sigmas(psi)
    checks = []

    # maximal N = 2: closed form vs grid vs sampler
    spec = StateSpec.maximal(2, psi, window_factor=cfg.state.window_factor)
    grid = oracle.pair_grid(spec, n_points=n_points, extent=cfg.grid.extent_sigmas, memory_budget=budget)
    grid_std = np.sqrt([grid.average_variance(ax) for ax in range(3)])
    events = sample_events(spec, scene, cfg.sampler_config(), shots)
    sample_std = (events.arrivals.mean(axis=1)).std(axis=0, ddof=1)
    closed = sigma / 2
    rel = max(_rel(grid_std, closed), _rel(sample_std, closed), _rel(sample_std, grid_std))
    checks.append(OracleCheck("maximal N=2 std(avg): closed/grid/sampler", rel, tol["oracle_sampler_rel"],
                              {"closed": closed.tolist(), "grid": grid_std.tolist(),
                               "sampler": sample_std.tolist()}))

    # partial N = 2: mixture vs grid (variances, weights, pointwise) and sampler vs grid
    spec = StateSpec.partial(2, psi, beta)
    mix = mixture if mixture is not None else mixture_decompose(spec, scene)
    grid = oracle.pair_grid(spec, n_points=n_points, extent=cfg.grid.extent_sigmas, memory_budget=budget)
    grid_var = np.array([grid.average_variance(ax) for ax in range(3)])
    mix_var = np.array([mix.average_variance(ax) for ax in range(3)])
    checks.append(OracleCheck(f"partial N=2 beta={beta:g} var(avg): mixture vs grid",
                              _rel(mix_var, grid_var), tol["oracle_mixture_rel"],
                              {"mixture": mix_var.tolist(), "grid": grid_var.tolist()}))

    grid_w = np.real(grid.term_masses()) / grid.total_mass()
    weights = {c.label: c.weight for c in mix.components}
    errors = {str(lab): abs(weights.get(tuple(lab), 0.0) - gw) for lab, gw in zip(grid.labels, grid_w)}
    worst = max(errors, key=errors.get)
    checks.append(OracleCheck("partial N=2 component weights: mixture vs grid", errors[worst],
                              tol["oracle_weight_abs"],
                              {"worst_component": worst, "errors": errors}))

    rng = np.random.default_rng(cfg.sampler.seed)
    points = scene.origin + rng.standard_normal((100, 2, 3)) * (1.5 * sigma)
    direct = density_partial(spec, scene, points)
    checks.append(OracleCheck("partial N=2 pointwise: mixture vs direct density",
                              _rel(mix.pdf(points), direct), tol["oracle_pointwise_rel"]))

    events = sample_events(spec, scene, cfg.sampler_config(), shots)
    sample_var = (events.arrivals.mean(axis=1)).var(axis=0, ddof=1)
    checks.append(OracleCheck(f"partial N=2 beta={beta:g} var(avg): sampler vs grid",
                              _rel(sample_var, grid_var), tol["oracle_sampler_rel"],
                              {"sampler": sample_var.tolist(), "grid": grid_var.tolist()}))
    return OracleReport(checks)


# --- loss sweep ----------------------------------------------------------------------


def run_loss_sweep(cfg: ExperimentConfig) -> list[dict]:
    cfg.validate()
    scene = cfg.build_scene()
    rows = []
    for i, (n, beta, loss) in enumerate(sweep_points(cfg)):
        seed = row_seed(cfg.sampler.seed, i)
        spec = cfg.build_state(n, beta)
        rep = loss_impact(spec, scene, loss, cfg.run.shots, seed, cfg=cfg.sampler_config(seed))
        row = {"index": i, "n_photons": n, "bandwidth_ratio": _beta_label(beta), "loss_prob": loss,
               "seed": seed}
        for k, ax in enumerate(AXES):
            sig = rep.single_photon_sigma[k]
            row[f"std_lossless_{ax}"] = float(rep.std_lossless[k])
            row[f"std_complete_{ax}"] = float(rep.std_complete[k])
            row[f"std_degraded_{ax}"] = float(rep.std_degraded[k])
            row[f"degraded_over_single_{ax}"] = float(rep.std_degraded[k] / sig)
        row.update(n_complete=rep.n_complete, n_degraded=rep.n_degraded, n_dropped=rep.n_dropped)
        rows.append(row)
    return rows
