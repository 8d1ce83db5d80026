"""Command-line entry point: ``leoprecode run ...`` and ``leoprecode validate ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import yaml

from .harness import ExperimentKind, ExperimentSpec, emit_results, run_experiment
from .model import Architecture, ConfigError, PowerModel, SystemConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

_EXPERIMENT_KEYS = {"sweep", "architectures", "resolutions", "seeds", "trials_per_point",
                    "methods", "mc_samples"}


def _allowed_keys() -> set:
    names = {f.name for f in fields(SystemConfig)} | {f.name for f in fields(PowerModel)}
    names |= {f"{n}_db" for n in ("rician_kappa", "gain_sat", "gain_ut")}
    names |= {"power_budget_dbw", "experiment"}
    return names


def load_scenario(path, small: bool = False):
    """Read a flat YAML scenario into ``(SystemConfig, PowerModel, experiment overrides)``.

    Unknown keys are rejected. ``small`` swaps in the 4x4-array, 4-user
    geometry and keeps the remaining keys. ``p_ps_<res>_mw`` keys override single
    phase-shifter power entries; an optional ``experiment`` mapping
    overrides sweep settings.
    """
    try:
        text = Path(path).read_text() if path is not None else ""
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    allowed = _allowed_keys()
    unknown = [k for k in data if k not in allowed and not (k.startswith("p_ps_") and k.endswith("_mw"))]
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    exp = data.pop("experiment", None) or {}
    if not isinstance(exp, dict) or set(exp) - _EXPERIMENT_KEYS:
        raise ConfigError(f"{path}: experiment must map a subset of {sorted(_EXPERIMENT_KEYS)}")
    if small:
        # the preset replaces the array geometry; other scenario keys are kept
        ref = SystemConfig.small()
        d0 = (data.get("distances_m") or [1.0e6])[0]
        data = {**data, "n_tx_x": ref.n_tx_x, "n_tx_y": ref.n_tx_y, "k_users": ref.k_users,
                "m_rf": ref.m_rf, "distances_m": [d0] * ref.k_users}
    try:
        cfg = SystemConfig.from_mapping(data)
        pm = PowerModel.from_mapping(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, pm, exp


def _validate_all(cfg: SystemConfig, pm: PowerModel) -> None:
    cfg.validate()
    pm.validate()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leoprecode", description="Energy-efficient LEO precoding experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment sweep")
    run.add_argument("--config", type=Path, default=None, help="flat YAML scenario file")
    run.add_argument("--experiment", required=True, choices=[k.value for k in ExperimentKind])
    run.add_argument("--seed", type=int, default=0, help="seed group")
    run.add_argument("--trials", type=int, default=None,
                     help="channel drops per grid point (default: config file, else 1)")
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--format", choices=["csv", "json"], default="csv")
    run.add_argument("--small", action="store_true", help="4x4 array, 4 users, reduced RF-chain grid")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--no-runtime", action="store_true",
                     help="write 0 in the runtime column so repeated runs are byte-identical")

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("--config", type=Path, required=True)
    val.add_argument("--small", action="store_true")
    return p


def _run(args) -> int:
    cfg, pm, exp = load_scenario(args.config, small=args.small)
    _validate_all(cfg, pm)
    overrides = dict(exp)
    overrides.setdefault("seeds", (args.seed,))
    if args.trials is not None:
        overrides["trials_per_point"] = args.trials
    try:
        spec = ExperimentSpec.default(args.experiment, small=args.small, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    table = run_experiment(spec, cfg, pm, workers=args.workers, record_runtime=not args.no_runtime)
    emit_results(table, args.format, args.out)
    if table.has_errors:
        for r in table.rows:
            if r.error:
                print(f"error: {r.architecture} res={r.resolution} M_t={r.m_rf}: {r.error}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            cfg, pm, _ = load_scenario(args.config, small=args.small)
            _validate_all(cfg, pm)
            if cfg.n_tx % cfg.m_rf:
                print(f"note: M_t={cfg.m_rf} does not divide N_t={cfg.n_tx}; "
                      f"the {Architecture.PARTIALLY_CONNECTED.value} architecture is unavailable")
            print(f"ok: N_t={cfg.n_tx} K={cfg.k_users} M_t={cfg.m_rf} P={cfg.power_budget_w:g} W")
            return EXIT_OK
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
