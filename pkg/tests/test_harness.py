import dataclasses

import numpy as np
import pytest

from photonloc import harness
from photonloc.config import ExperimentConfig
from photonloc.estimation import estimate_target
from photonloc.oracle import GridBudgetError
from photonloc.sampler import sample_events
from photonloc.state import GaussianMixture, StateSpec, mixture_decompose


def small_config(**sweep):
    cfg = ExperimentConfig()
    cfg.run.shots = 5000
    cfg.run.n_boot = 20
    for k, v in sweep.items():
        setattr(cfg.sweep, k, v)
    return cfg


def test_row_seeds_are_stable_and_distinct():
    seeds = [harness.row_seed(42, i) for i in range(100)]
    assert seeds == [harness.row_seed(42, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert harness.row_seed(43, 0) != seeds[0]


def test_sweep_rows_reproduce_bitwise():
    cfg = small_config(n_photons=[1, 2], bandwidth_ratios=[None, 2.0], loss=[0.0, 0.2])
    report = harness.run_scaling_sweep(cfg)
    assert [r["index"] for r in report.rows] == list(range(8))
    for row in report.rows:
        assert harness.rows_match(row, harness.rerun_row(cfg, row))


def test_worker_pool_matches_serial():
    cfg = small_config(n_photons=[2, 3], bandwidth_ratios=[None], loss=[0.0])
    serial = harness.run_scaling_sweep(cfg).rows
    cfg.sampler.workers = 2
    pooled = harness.run_scaling_sweep(cfg).rows
    assert all(harness.rows_match(a, b) for a, b in zip(serial, pooled))


def test_single_point_sweep_matches_direct_estimate():
    cfg = small_config(n_photons=[2], bandwidth_ratios=[None], loss=[0.0])
    row = harness.run_scaling_sweep(cfg).rows[0]
    scene = cfg.build_scene()
    ev = sample_events(cfg.build_state(2, None), scene, cfg.sampler_config(row["seed"]), cfg.run.shots)
    est = estimate_target(ev, scene)
    assert np.float64(row["std_x"]).tobytes() == np.float64(est.stds[1]).tobytes()
    assert row["z_hat"] == est.z_hat


def test_gates_catch_wrong_scaling():
    cfg = small_config(n_photons=[2], bandwidth_ratios=[None], loss=[0.0])
    row = dict(harness.run_scaling_sweep(cfg).rows[0])
    row["lambda_t"] = 0.7
    gates = harness.scaling_gates(cfg, [row])
    failed = [g.name for g in gates if not g.passed]
    assert failed == ["row 0 (N=2, beta=maximal, loss=0.0) lambda_t = 1/N"]


def test_oracle_check_passes():
    cfg = ExperimentConfig()
    report = harness.run_oracle_check(cfg, shots=200_000, n_points=801)
    assert report.passed, report.to_dict()
    assert report.max_discrepancy < 1e-2


def test_oracle_check_names_corrupted_component():
    cfg = ExperimentConfig()
    scene = cfg.build_scene()
    mix = mixture_decompose(StateSpec.partial(2, cfg.build_psi(), 2.0), scene)
    comps = list(mix.components)
    comps[1] = dataclasses.replace(comps[1], weight=comps[1].weight + 0.01)
    comps[0] = dataclasses.replace(comps[0], weight=comps[0].weight - 0.01)
    bad = GaussianMixture(tuple(comps))
    report = harness.run_oracle_check(cfg, bandwidth_ratio=2.0, mixture=bad, shots=20_000, n_points=401)
    assert not report.passed
    weights = next(c for c in report.checks if "weights" in c.name)
    assert not weights.passed
    assert weights.detail["worst_component"] in ("(0, 0)", "(0, 1)")


def test_oracle_refuses_oversized_grid():
    cfg = ExperimentConfig()
    cfg.grid.memory_budget_mib = 1
    with pytest.raises(GridBudgetError, match="MiB"):
        harness.run_oracle_check(cfg, shots=1000)


def test_loss_sweep_rows():
    cfg = small_config(n_photons=[2], bandwidth_ratios=[None, 2.0], loss=[0.0, 0.5])
    rows = harness.run_loss_sweep(cfg)
    assert len(rows) == 4
    lossy_maximal = rows[1]
    assert lossy_maximal["degraded_over_single_x"] > 1.0
