"""Command-line entry point.

Exit codes: 0 success, 1 a ``--check`` gate failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import harness, spdc
from .config import ConfigError, ExperimentConfig
from .estimation import compute_lambda, estimate_target, report_rows, rows_to_csv
from .oracle import GridBudgetError
from .sampler import apply_loss, sample_events

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.sampler.seed = args.seed
    if args.shots is not None:
        cfg.run.shots = args.shots
    if args.format is not None:
        cfg.output.format = args.format
    if args.out is not None:
        cfg.output.path = args.out
    return cfg


def _table(rows: list[dict]) -> str:
    if not rows:
        return ""
    columns = list(rows[0])
    return rows_to_csv(rows, columns)


def _emit(cfg: ExperimentConfig, payload: dict, rows: list[dict]) -> None:
    text = json.dumps(payload, indent=2) if cfg.output.format == "json" else _table(rows)
    if cfg.output.path:
        Path(cfg.output.path).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    cfg.validate()
    psi, scene = cfg.build_psi(), cfg.build_scene()
    spec = cfg.build_state()
    events = sample_events(spec, scene, cfg.sampler_config(), cfg.run.shots)
    if args.loss:
        events = apply_loss(events, args.loss, cfg.sampler.seed)
    if args.events_out:
        if args.events_out.endswith(".csv"):
            events.to_csv(args.events_out)
        else:
            events.to_binary(args.events_out)
    est = estimate_target(events, scene, psi=psi)
    lam = compute_lambda(est, psi, n_boot=cfg.run.n_boot, seed=cfg.sampler.seed)
    rows = report_rows(est, lam, None, cfg.sampler.seed)
    _emit(cfg, {"estimate": est.to_dict(), "rows": rows, "config_hash": cfg.config_hash()}, rows)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    report = harness.run_scaling_sweep(cfg, check=args.check)
    _emit(cfg, report.to_dict(), report.rows)
    if args.check:
        for gate in report.gates:
            print(f"{'PASS' if gate.passed else 'FAIL'}  {gate.name}  {gate.detail}", file=sys.stderr)
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _load_config(args)
    report = harness.run_oracle_check(cfg, bandwidth_ratio=args.bandwidth_ratio)
    rows = [{"name": c.name, "max_rel": c.max_rel, "tolerance": c.tolerance, "passed": c.passed}
            for c in report.checks]
    _emit(cfg, report.to_dict(), rows)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_loss(args) -> int:
    cfg = _load_config(args)
    rows = harness.run_loss_sweep(cfg)
    _emit(cfg, {"config_hash": cfg.config_hash(), "rows": rows}, rows)
    return EXIT_OK


def cmd_feasibility(args) -> int:
    if args.wavelength is None and args.wavevector is None:
        if args.chi is None:
            raise ConfigError("give --wavelength, --wavevector or --chi")
        k_p = spdc.pump_wavevector_for(args.chi, args.length, args.waist)
        cfg = spdc.PumpCrystalConfig(args.length, args.waist, pump_wavevector=k_p)
    else:
        cfg = spdc.PumpCrystalConfig(args.length, args.waist, args.wavelength, args.wavevector)
    chi = spdc.focal_parameter(cfg)
    out = {
        "crystal_length_m": cfg.crystal_length,
        "beam_waist_m": cfg.beam_waist,
        "pump_wavevector_rad_per_m": cfg.k_p,
        "pump_wavelength_m": 2 * math.pi / cfg.k_p,
        "confocal_length_m": cfg.confocal_length,
        "chi": chi,
        "regime": spdc.classify_regime(chi, args.threshold).value,
    }
    if args.format == "csv":
        print(_table([out]), end="")
    else:
        print(json.dumps(out, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photonloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, check=False):
        p.add_argument("--config", help="INI or JSON experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--shots", type=int)
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        if check:
            p.add_argument("--check", action="store_true", help="exit 1 if an acceptance gate fails")

    p = sub.add_parser("simulate", help="sample one state and report the estimate")
    common(p)
    p.add_argument("--loss", type=float, default=0.0)
    p.add_argument("--events-out", help="write events (.csv, otherwise packed binary)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="scaling sweep over N, bandwidth ratio and loss")
    common(p, check=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="closed form / mixture / grid / sampler agreement")
    common(p, check=True)
    p.add_argument("--bandwidth-ratio", type=float, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("loss-sweep", help="estimator spread with photon loss")
    common(p)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("feasibility", help="focal parameter of a focused-pump source")
    p.add_argument("--length", type=float, required=True, help="crystal length (m)")
    p.add_argument("--waist", type=float, required=True, help="pump waist radius (m)")
    p.add_argument("--wavelength", type=float, help="pump wavelength (m)")
    p.add_argument("--wavevector", type=float, help="pump wave vector (rad/m)")
    p.add_argument("--chi", type=float, help="back-solve the pump wave vector for this chi")
    p.add_argument("--threshold", type=float, default=spdc.DEFAULT_THRESHOLD)
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.set_defaults(func=cmd_feasibility)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GridBudgetError, ValueError, OSError) as exc:
        print(f"photonloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
