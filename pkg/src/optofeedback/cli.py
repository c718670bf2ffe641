"""Command-line entry point: presets, config files and parameter sweeps.

Verbs: ``run``, ``validate``, ``verify-oracle``, ``pi-search`` and
``semiclassical``. A run is fully determined by its config and seed; every
output directory gets a ``manifest.json`` listing the inputs and code version.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__
from .dense import OracleSizeError, oracle_deviation, random_toy_case
from .dynamics import DiscardedWeightExceeded, ProtocolParams
from .protocol import (
    BracketError,
    pi_gate_search,
    run_protocol,
    write_entropy_profile_csv,
    write_pi_search_json,
    write_records_csv,
)
from .semiclassical import (
    loss_penalty,
    parasitic_dephasing_fidelity,
    phi1,
    semiclassical_conditional_phase,
    semiclassical_pi_curve,
    semiclassical_table,
)
from .state_prep import LayoutError, WaveguideLayout

logger = logging.getLogger(__name__)

WORKERS_ENV = "OPTOFEEDBACK_WORKERS"
MANIFEST_SCHEMA_VERSION = 1
SUMMARY_COLUMNS = [
    "g0_over_kappa", "n_rep", "phase", "phase_ideal", "phase_semiclassical",
    "fidelity_4F", "fidelity_4F_one_bounce", "s_oo", "s_om",
    "discarded_weight", "max_bond",
]
# wall time per bin per bounce for one chain at the bond dimensions the
# protocol reaches (measured on the scaled preset, single core)
SECONDS_PER_BIN_STEP = 4e-4

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3

PRESETS: dict[str, dict[str, Any]] = {
    "toy": {
        "params": dict(g0=0.1, omega_m=2 * math.pi / 8, tau=1.0, d_mech=4,
                       svd_threshold=0.0, max_bond=None),
        "sweep": {"g0": [0.1], "n_rep": [2]},
    },
    "scaled": {
        "params": dict(g0=0.05, omega_m=1e-3, tau=200.0),
        "sweep": {"g0": [0.05], "n_rep": [1]},
    },
    "fig2c-scaled": {
        "params": dict(g0=0.05, omega_m=1e-3, tau=200.0),
        "sweep": {"g0": [0.01, 0.02, 0.03, 0.05, 0.07, 0.1], "n_rep": [1]},
    },
    "paper": {
        "params": dict(g0=0.1, omega_m=1.5e-4, tau=1000.0),
        "sweep": {"g0": [0.1], "n_rep": [1]},
        "long_run": True,
    },
}
PARAM_NAMES = {f.name for f in fields(ProtocolParams)}


class ConfigError(ValueError):
    pass


# --- configuration -----------------------------------------------------------


def _coerce(value: Any) -> Any:
    """YAML 1.1 reads ``1e-4`` (no dot) as a string; recover such numbers."""
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    if isinstance(value, list):
        return [_coerce(v) for v in value]
    return value


def _parse_value(text: str) -> Any:
    return _coerce(yaml.safe_load(text))


def _parse_list(text: str) -> list:
    if text.strip() == "":
        return []
    return [_parse_value(t) for t in text.split(",")]


def load_config(args: argparse.Namespace) -> dict:
    """Merge preset, config file and command-line flags (later wins)."""
    cfg: dict[str, Any] = {"params": {}, "sweep": {}, "seed": 0, "long_run": False}
    file_cfg: dict[str, Any] = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = yaml.safe_load(fh) or {}
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a mapping")
        unknown = set(file_cfg) - {"preset", "params", "sweep", "seed", "output", "workers", "long_run"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    preset = getattr(args, "preset", None) or file_cfg.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        p = PRESETS[preset]
        cfg["params"].update(p["params"])
        cfg["sweep"].update(p["sweep"])
        cfg["long_run"] = p.get("long_run", False)
    cfg["preset"] = preset
    cfg["params"].update(file_cfg.get("params") or {})
    cfg["sweep"].update(file_cfg.get("sweep") or {})
    for key in ("seed", "output", "workers"):
        if key in file_cfg:
            cfg[key] = file_cfg[key]
    if file_cfg.get("long_run"):
        cfg["long_run"] = True

    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg["params"][key.strip()] = _parse_value(value)
    for axis in ("g0", "n_rep", "eta", "sigma"):
        value = getattr(args, axis, None)
        if value is not None:
            cfg["sweep"][axis] = _parse_list(value)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "output", None):
        cfg["output"] = args.output
    if getattr(args, "long_run", False):
        cfg["long_run"] = True

    unknown = set(cfg["params"]) - PARAM_NAMES
    if unknown:
        raise ConfigError(f"unknown parameters: {sorted(unknown)}")
    bad_axes = set(cfg["sweep"]) - {"g0", "n_rep", "eta", "sigma"}
    if bad_axes:
        raise ConfigError(f"unknown sweep axes: {sorted(bad_axes)}")
    cfg["params"] = {k: _coerce(v) for k, v in cfg["params"].items()}
    for axis, values in cfg["sweep"].items():
        cfg["sweep"][axis] = _coerce(values if isinstance(values, list) else [values])
    return cfg


def base_params(cfg: dict) -> ProtocolParams:
    params = dict(cfg["params"])
    params.setdefault("g0", 0.0)
    missing = {"omega_m", "tau"} - set(params)
    if missing:
        raise ConfigError(f"missing parameters {sorted(missing)}; give a preset or set them")
    try:
        return ProtocolParams(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def resolve_workers(cfg: dict, args: argparse.Namespace) -> int:
    if getattr(args, "workers", None):
        return args.workers
    if cfg.get("workers"):
        return int(cfg["workers"])
    return int(os.environ.get(WORKERS_ENV, "1"))


def is_long_run(p: ProtocolParams) -> bool:
    return p.waveguide_bins > 20000


def write_manifest(out: Path, command: str, cfg: dict, params: ProtocolParams | None,
                   outputs: list[dict], extra: dict | None = None) -> None:
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "code_version": __version__,
        "command": command,
        "preset": cfg.get("preset"),
        "seed": cfg.get("seed"),
        "params": params.as_dict() if params is not None else cfg.get("params"),
        "sweep": cfg.get("sweep"),
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    with open(out / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _tag(g0: float, n_rep: int) -> str:
    return f"g0-{g0:.6g}_nrep-{n_rep}"


# --- run ---------------------------------------------------------------------


def _run_point(params: ProtocolParams) -> dict:
    """Worker task: one (g0, n_rep) point. Must be picklable and pure."""
    try:
        records = run_protocol(params)
    except DiscardedWeightExceeded as exc:
        return {"params": params, "error": "budget", "message": str(exc)}
    return {"params": params, "records": records}


def _map(func, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))


def cmd_run(args, cfg) -> int:
    base = base_params(cfg)
    out = Path(cfg.get("output") or "results")
    out.mkdir(parents=True, exist_ok=True)
    points = [
        base.with_(g0=float(g), n_rep=int(n))
        for g, n in itertools.product(cfg["sweep"].get("g0", []), cfg["sweep"].get("n_rep", []))
    ]
    if points and is_long_run(points[0]) and not cfg["long_run"]:
        logger.error("%d-bin waveguide needs --long-run", points[0].waveguide_bins)
        return EXIT_USAGE
    results = _map(_run_point, points, resolve_workers(cfg, args))

    # single collector: everything is written here, in sweep order
    outputs, summary, status = [], [], EXIT_OK
    for res in results:
        p = res["params"]
        if "error" in res:
            logger.error("g0=%g n_rep=%d: %s", p.g0, p.n_rep, res["message"])
            status = EXIT_BUDGET
            continue
        recs = res["records"]
        tag = _tag(p.g0, p.n_rep)
        rec_file = f"records_{tag}.csv"
        prof_file = f"entropy_{tag}.csv"
        write_records_csv(recs, out / rec_file)
        write_entropy_profile_csv(recs[-1], out / prof_file)
        outputs.append({"file": rec_file, "params": p.as_dict()})
        outputs.append({"file": prof_file, "params": p.as_dict(), "rep": recs[-1].rep_index})
        last = recs[-1]
        one_bounce = recs[-2] if len(recs) >= 2 else last
        summary.append([
            p.g0, p.n_rep, last.phase, p.n_rep * phi1(p.g0),
            semiclassical_conditional_phase(p.g0, p.n_rep), 4 * last.fidelity_F,
            4 * one_bounce.fidelity_F, last.s_oo, last.s_om, last.discarded_weight,
            last.max_bond,
        ])
    if summary:
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_COLUMNS)
            for row in summary:
                w.writerow([_fmt(x) for x in row])
        outputs.insert(0, {"file": "summary.csv", "columns": SUMMARY_COLUMNS})
    write_manifest(out, "run", cfg, base, outputs)
    return status


# --- validate ----------------------------------------------------------------


def validation_report(p: ProtocolParams) -> dict:
    n_bins = p.waveguide_bins
    chi = p.max_bond or 64
    # protocol state plus three evolving references
    n_states = 4
    worst_bytes = n_states * n_bins * chi * chi * p.bin_dim * 16
    typical_bytes = n_states * n_bins * 4 * 4 * p.bin_dim * 16
    bounces = 2 * max(p.n_rep, 1)
    report = {
        "n_bins": n_bins,
        "mech_period": p.mech_period,
        "omega_m_tau": p.omega_m * p.tau,
        "kappa_tau": p.kappa * p.tau,
        "warnings": p.warnings(),
        "memory_bytes_typical": typical_bytes,
        "memory_bytes_worst": worst_bytes,
        "runtime_seconds_estimate": n_states * bounces * n_bins * SECONDS_PER_BIN_STEP,
        "long_run": is_long_run(p),
    }
    try:
        layout = WaveguideLayout.for_params(p)
        report["mode_centers"] = layout.mode_centers
        report["warnings"] += layout.check_physical(p)
    except (LayoutError, ValueError) as exc:
        report["warnings"].append(f"layout: {exc}")
    return report


def cmd_validate(args, cfg) -> int:
    p = base_params(cfg)
    if cfg["sweep"].get("n_rep"):
        p = p.with_(n_rep=int(max(cfg["sweep"]["n_rep"])))
    report = validation_report(p)
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(f"n_bins: {report['n_bins']:,}")
        print(f"omega_m*tau = {report['omega_m_tau']:g}, kappa*tau = {report['kappa_tau']:g}")
        print(f"memory: ~{report['memory_bytes_typical'] / 2**20:.1f} MiB typical, "
              f"{report['memory_bytes_worst'] / 2**30:.2f} GiB at max bond")
        print(f"runtime: ~{report['runtime_seconds_estimate']:.0f} s per point (single core)")
        for w in report["warnings"]:
            print(f"warning: {w}")
        if not report["warnings"]:
            print("no warnings")
    return EXIT_ERROR if (args.strict and report["warnings"]) else EXIT_OK


# --- verify-oracle -----------------------------------------------------------


def cmd_verify_oracle(args, cfg) -> int:
    rng = np.random.default_rng(cfg["seed"])
    worst = 0.0
    for i in range(args.trials):
        case = random_toy_case(rng, max_bins=args.max_bins)
        try:
            dev = oracle_deviation(case)
        except OracleSizeError as exc:
            logger.error("%s", exc)
            return EXIT_ERROR
        worst = max(worst, dev)
        logger.info("case %d: %d bins, d_mech %d, deviation %.2e",
                    i, case.params.waveguide_bins, case.params.d_mech, dev)
    ok = worst < args.tolerance
    print(f"{args.trials} cases, max amplitude deviation {worst:.3e} "
          f"({'ok' if ok else 'FAILED'}, tolerance {args.tolerance:g})")
    return EXIT_OK if ok else EXIT_ERROR


# --- pi-search ---------------------------------------------------------------


def cmd_pi_search(args, cfg) -> int:
    base = base_params(cfg)
    out = Path(cfg.get("output") or "results")
    out.mkdir(parents=True, exist_ok=True)
    n_reps = [int(n) for n in cfg["sweep"].get("n_rep", [])]
    if n_reps and is_long_run(base) and not cfg["long_run"]:
        logger.error("%d-bin waveguide needs --long-run", base.waveguide_bins)
        return EXIT_USAGE
    points, status = [], EXIT_OK
    for n in n_reps:
        try:
            points += pi_gate_search(base, [n], target_phase=args.target, tolerance=args.tolerance)
        except BracketError as exc:
            logger.warning("n_rep=%d: %s", n, exc)
        except DiscardedWeightExceeded as exc:
            logger.error("n_rep=%d: %s", n, exc)
            status = EXIT_BUDGET
    outputs = []
    if n_reps:
        write_pi_search_json(points, out / "pi_search.json", params=base.as_dict(),
                             target_phase=args.target, tolerance=args.tolerance)
        outputs.append({"file": "pi_search.json"})
    write_manifest(out, "pi-search", cfg, base, outputs)
    return status


# --- semiclassical -----------------------------------------------------------


def cmd_semiclassical(args, cfg) -> int:
    out = Path(cfg.get("output") or "results")
    out.mkdir(parents=True, exist_ok=True)
    sweep = cfg["sweep"]
    g0s = [float(g) for g in sweep.get("g0", [])]
    n_reps = [int(n) for n in sweep.get("n_rep", [])]
    etas = [float(e) for e in sweep.get("eta", [])]
    sigmas = [float(s) for s in sweep.get("sigma", [])]
    outputs = []

    if g0s and n_reps:
        with open(out / "semiclassical_table.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["g0_over_kappa", "n_rep", "phase", "beta_sq", "fidelity"])
            for row in semiclassical_table(g0s, n_reps):
                w.writerow([_fmt(row.g0_over_kappa), row.n_rep, _fmt(row.phase),
                            _fmt(row.beta_sq), _fmt(row.fidelity)])
        outputs.append({"file": "semiclassical_table.csv"})

    if n_reps and args.pi_curve:
        curve = semiclassical_pi_curve(n_reps)
        with open(out / "pi_curve.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n_rep", "g0_over_kappa", "fidelity"] + [f"fidelity_eta_{e:g}" for e in etas])
            for pt in curve:
                w.writerow([pt.n_rep, _fmt(pt.g0_over_kappa), _fmt(pt.fidelity)]
                           + [_fmt(loss_penalty(pt.fidelity, e, pt.n_rep)) for e in etas])
        outputs.append({"file": "pi_curve.csv"})

    if sigmas:
        root = np.random.SeedSequence(cfg["seed"])
        with open(out / "parasitic.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sigma_over_kappa", "monte_carlo", "closed_form", "standard_error"])
            for s, child in zip(sigmas, root.spawn(len(sigmas))):
                mc, closed, se = parasitic_dephasing_fidelity(s, args.samples, child)
                w.writerow([_fmt(s), _fmt(mc), _fmt(closed), _fmt(se)])
        outputs.append({"file": "parasitic.csv", "samples": args.samples})

    write_manifest(out, "semiclassical", cfg, None, outputs)
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optofeedback", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sweep=True):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one ProtocolParams field (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("-o", "--output", help="output directory")
        p.add_argument("--long-run", action="store_true",
                       help="allow full-scale (over 20000-bin) waveguides")
        if sweep:
            p.add_argument("--g0", help="comma-separated g0/kappa values")
            p.add_argument("--n-rep", dest="n_rep", help="comma-separated repetition counts")

    p = sub.add_parser("run", help="simulate the protocol over a sweep")
    common(p)
    p.add_argument("-j", "--workers", type=int,
                   help=f"worker processes (default ${WORKERS_ENV} or 1)")

    p = sub.add_parser("validate", help="check parameters and estimate cost")
    common(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("--strict", action="store_true", help="exit 1 on any warning")

    p = sub.add_parser("verify-oracle", help="compare MPS and dense evolution on toy chains")
    common(p, sweep=False)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--max-bins", type=int, default=8)
    p.add_argument("--tolerance", type=float, default=1e-8)

    p = sub.add_parser("pi-search", help="coupling giving a pi phase per repetition count")
    common(p)
    p.add_argument("--target", type=float, default=math.pi, help="target phase (radians)")
    p.add_argument("--tolerance", type=float, default=1e-3)

    p = sub.add_parser("semiclassical", help="semiclassical tables, pi curve and dephasing")
    common(p)
    p.add_argument("--eta", help="comma-separated transmission values")
    p.add_argument("--sigma", help="comma-separated sigma/kappa values")
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--pi-curve", action="store_true")
    return parser


COMMANDS = {
    "run": cmd_run,
    "validate": cmd_validate,
    "verify-oracle": cmd_verify_oracle,
    "pi-search": cmd_pi_search,
    "semiclassical": cmd_semiclassical,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    logging.captureWarnings(True)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, LayoutError, yaml.YAMLError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, (ConfigError, yaml.YAMLError)) else EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
