"""Batch driver turning one JSON config into CSV/JSON artifacts.

Subcommands cover the pipelines end to end: ``geodesic`` sweeps the
epsilon ladder and writes one path CSV per epsilon plus a convergence
report; ``fiberwise`` solves the Monge-Ampere family along the weak
geodesic and writes the uniform-bound evidence; ``mabuchi`` writes
functional traces (variants ``exact``, ``k``, ``epsA``); ``verify`` runs
the theorem-check suites; ``study`` chains all of the above into one
summary.

Exit codes: 0 success, 1 configuration error, 2 solver or pipeline
failure (a diagnostic JSON is written when the output directory is
already known), 3 verification or bound-check failure.

Reports are deterministic for a fixed config: keys are sorted, floats
use shortest round-trip formatting, and embedded file references are
bare names so the bytes do not depend on the output location.  The one
non-reproducible field is the top-level "timestamp" key.  All files are
written atomically (temp file in the target directory, then rename).

Environment overrides, the only two honored: KGEOLAB_OUT_DIR supplies
the output directory when --out is absent, KGEOLAB_THREADS the
parallelism cap when --threads is absent.  Threads parallelize
independent verify suites; each solver run is itself sequential.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config, validate_against_schema
from .errors import ConfigError
from .functionals import TruncationSpec, mabuchi, mabuchi_eps_A, mabuchi_k
from .geodesic import EpsGeodesicProblem, legendre_oracle, solve_eps_geodesic, weak_geodesic
from .ma_fiber import (
    check_bounds,
    density_convergence,
    eps_phi_vanishing,
    family_report,
    solve_family,
)
from .model import PathField, _format_float
from .verify import (
    SUITES,
    SuiteData,
    _jsonable,
    density_limit_report,
    omega_mask_report,
    run_suite,
)

SUBCOMMANDS = ("geodesic", "fiberwise", "mabuchi", "verify", "study")
VARIANTS = ("exact", "k", "epsA")

#: attributes re-solved once before suites are dispatched to worker threads,
#: so the cached lazy solves are never computed twice
_SHARED_SOLVES = ("weak_path", "weak_path_fine", "family", "eps_geodesic", "levels", "curved_geodesics")


# ---------------------------------------------------------------------------
# artifact writing


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(out_dir: Path, name: str, doc: dict, schema: str) -> None:
    doc = _jsonable(doc)
    validate_against_schema(doc, schema)
    text = json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
    _atomic_write_text(out_dir / name, text + "\n")


def _write_csv_via(out_dir: Path, name: str, to_csv) -> None:
    """Atomic wrapper around the to_csv(path) writers of the field types."""
    target = out_dir / name
    tmp = target.with_name(f".{name}.{os.getpid()}.tmp")
    to_csv(tmp)
    os.replace(tmp, target)


def _write_csv_rows(out_dir: Path, name: str, header: str, rows: list[str]) -> None:
    _atomic_write_text(out_dir / name, "\n".join([header] + rows) + "\n")


# ---------------------------------------------------------------------------
# subcommand pipelines


def run_geodesic(config: ExperimentConfig, out_dir: Path) -> int:
    """Epsilon sweep with warm starts; one path CSV per epsilon."""
    config.require("epsilons")
    if config.n_time < 8:
        raise ConfigError("geodesic runs need time.n_time >= 8")
    bg = config.bg
    oracle = legendre_oracle(bg, config.endpoint_0, config.endpoint_1, config.n_time)
    files = []
    increments: list[float] = []
    residual_sups = []
    newton_iters = []
    oracle_distance = []
    prev = None
    for i, eps in enumerate(config.epsilons):
        problem = EpsGeodesicProblem(bg, config.endpoint_0, config.endpoint_1, eps, config.n_time)
        sol = solve_eps_geodesic(problem, tol=config.tolerances["geodesic"], path0=prev)
        if prev is not None:
            increments.append(float(np.max(np.abs(sol.path.values - prev))))
        prev = sol.path.values
        name = f"geodesic_path_eps{i:02d}.csv"
        _write_csv_via(out_dir, name, sol.path.to_csv)
        files.append({"epsilon": eps, "path_csv": name})
        residual_sups.append(sol.residual_sup)
        newton_iters.append(sol.newton_iters)
        oracle_distance.append(float(np.max(np.abs(sol.path.values - oracle.values))))
    report = {
        "timestamp": _timestamp(),
        "config": config.raw,
        "n_time": config.n_time,
        "epsilons": list(config.epsilons),
        "increments": increments,
        "residual_sups": residual_sups,
        "newton_iters": newton_iters,
        "oracle_distance": oracle_distance,
        "files": files,
    }
    _write_json(out_dir, "geodesic_report.json", report, "geodesic_report")
    print(f"geodesic: wrote {len(files)} path CSVs and geodesic_report.json to {out_dir}")
    return 0


def run_fiberwise(config: ExperimentConfig, out_dir: Path) -> int:
    """Family solve along the weak geodesic plus the three family checks."""
    config.require("epsilons", "deltas")
    if len(config.epsilons) < 3:
        raise ConfigError("fiberwise needs at least 3 epsilons (continuation and trend checks)")
    if config.n_time < 8:
        raise ConfigError("fiberwise runs need time.n_time >= 8")
    bg = config.bg
    path = weak_geodesic(bg, config.endpoint_0, config.endpoint_1, config.epsilons, n_time=config.n_time)
    family = solve_family(bg, path, config.epsilons, config.deltas, tol=config.tolerances["fiber"])
    bounds = check_bounds(family)
    convergence = density_convergence(family, path)
    vanishing = eps_phi_vanishing(family)

    rows = []
    for i, eps in enumerate(family.epsilons):
        for k, delta in enumerate(family.deltas):
            stats = family.bound_samples[i, k]
            rows.append(",".join(_format_float(v) for v in (eps, delta, *stats)))
    _write_csv_rows(
        out_dir,
        "fiber_bound_samples.csv",
        "epsilon,delta,sup_phi,neg_eps_inf_phi,eps_d2_phi",
        rows,
    )
    phi_files = []
    phi = family.phi_matrix()
    for i, eps in enumerate(family.epsilons):
        name = f"fiber_phi_eps{i:02d}.csv"
        _write_csv_via(out_dir, name, PathField(bg.grid, phi[i]).to_csv)
        phi_files.append({"epsilon": eps, "path_csv": name})

    passed = bool(bounds.passed and convergence.passed and vanishing.passed)
    report = {
        "timestamp": _timestamp(),
        "config": config.raw,
        "n_time": config.n_time,
        "family": family_report(family),
        "convergence": convergence.to_dict(),
        "vanishing": vanishing.to_dict(),
        "density_limit": density_limit_report(family, path),
        "files": {"bound_samples_csv": "fiber_bound_samples.csv", "phi_csvs": phi_files},
        "passed": passed,
    }
    _write_json(out_dir, "fiberwise_report.json", report, "fiberwise_report")
    print(f"fiberwise: bounds={bounds.passed} convergence={convergence.passed} "
          f"vanishing={vanishing.passed}; report in {out_dir}")
    return 0 if passed else 3


def run_mabuchi(config: ExperimentConfig, out_dir: Path, variant: str) -> int:
    """Functional traces along solved paths; no pass/fail judgement here."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {list(VARIANTS)}")
    config.require("epsilons")
    if config.n_time < 8:
        raise ConfigError("mabuchi runs need time.n_time >= 8")
    bg = config.bg
    traces = []
    extra: dict = {}
    if variant in ("exact", "k"):
        if len(config.epsilons) < 3:
            raise ConfigError(f"variant={variant} needs >= 3 epsilons for the weak-geodesic continuation")
        path = weak_geodesic(bg, config.endpoint_0, config.endpoint_1, config.epsilons, n_time=config.n_time)
        if variant == "exact":
            traces.append(("mabuchi_trace.csv", mabuchi(bg, path)))
        else:
            config.require("deltas", "k_list")
            if max(config.k_list) > len(config.epsilons):
                raise ConfigError(
                    f"k_list entries cannot exceed the number of epsilons ({len(config.epsilons)})"
                )
            family = solve_family(bg, path, config.epsilons, config.deltas, tol=config.tolerances["fiber"])
            check_bounds(family)
            for k in config.k_list:
                traces.append((f"mabuchi_k{k}_trace.csv", mabuchi_k(bg, path, family, k)))
            extra["family"] = family_report(family)
    else:
        config.require("a_values")
        prev = None
        for i, eps in enumerate(config.epsilons):
            problem = EpsGeodesicProblem(bg, config.endpoint_0, config.endpoint_1, eps, config.n_time)
            sol = solve_eps_geodesic(problem, tol=config.tolerances["geodesic"], path0=prev)
            prev = sol.path.values
            for j, a in enumerate(config.a_values):
                spec = TruncationSpec(float(a), chi=config.chi)
                traces.append((f"mabuchi_epsA_e{i:02d}_a{j:02d}.csv", mabuchi_eps_A(bg, sol, spec)))

    trace_docs = []
    for name, trace in traces:
        _write_csv_via(out_dir, name, trace.to_csv)
        trace_docs.append(
            {
                "trace_csv": name,
                "meta": trace.meta,
                "min_second_difference": float(np.nanmin(trace.second_differences)),
            }
        )
    report = {
        "timestamp": _timestamp(),
        "config": config.raw,
        "variant": variant,
        "n_time": config.n_time,
        "traces": trace_docs,
        **extra,
    }
    _write_json(out_dir, f"mabuchi_{variant.lower()}_report.json", report, "mabuchi_report")
    print(f"mabuchi[{variant}]: wrote {len(trace_docs)} trace CSVs to {out_dir}")
    return 0


def _suite_data(config: ExperimentConfig) -> SuiteData:
    """Suite inputs from the config: geometry, time grid, seed, fiber tol.

    The sweep ladders (epsilon, delta, A, k) stay at the suite's calibrated
    defaults; the artifact subcommands are the place where the config's own
    ladders run.
    """
    data = SuiteData(
        bg=config.bg,
        endpoint_0=config.endpoint_0,
        endpoint_1=config.endpoint_1,
        n_time=config.n_time,
        seeds=tuple(range(config.seed, config.seed + 20)),
    )
    fiber_override = config.raw.get("tolerances", {}).get("fiber")
    if fiber_override is not None:
        data.family_tol = float(fiber_override)
    return data


def run_verify(config: ExperimentConfig, out_dir: Path, suite: str, threads: int) -> int:
    """Theorem-check suites; exit 0 iff every result row passes.

    Negative controls are inverted into their rows (a control row passes
    exactly when the underlying check rejects the tampered input), so the
    uniform all-rows rule covers them too.
    """
    if suite != "all" and suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; expected one of {sorted(SUITES)} or 'all'")
    names = ("entropy", "convexity", "curvature", "bounds") if suite == "all" else (suite,)
    data = _suite_data(config)
    if threads > 1 and len(names) > 1:
        for attr in _SHARED_SOLVES:
            getattr(data, attr)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(SUITES[name], data) for name in names]
            results = [res for fut in futures for res in fut.result()]
    else:
        results = [res for name in names for res in run_suite(data, name)]

    for res in results:
        print(f"[{'PASS' if res.passed else 'FAIL'}] {res.name} (margin={res.margin:.3e})")
    _write_csv_rows(
        out_dir,
        "verify_results.csv",
        "name,pass,margin",
        [f"{r.name},{'true' if r.passed else 'false'},{_format_float(r.margin)}" for r in results],
    )
    n_controls = sum(1 for r in results if r.details.get("control"))
    passed = all(r.passed for r in results)
    report = {
        "timestamp": _timestamp(),
        "config": config.raw,
        "suite": suite,
        "results": [r.to_dict() for r in results],
        "counts": {
            "total": len(results),
            "passed": sum(1 for r in results if r.passed),
            "failed": sum(1 for r in results if not r.passed),
            "controls": n_controls,
        },
        "passed": passed,
    }
    if "bounds" in names:
        report["measured"] = {
            "omega_mask": omega_mask_report(config.bg, data.eps_geodesic, TruncationSpec(10.0)),
            "density_limit": density_limit_report(data.family, data.weak_path),
        }
    _write_json(out_dir, "verify_report.json", report, "verify_report")
    print(f"verify[{suite}]: {report['counts']['passed']}/{len(results)} checks passed")
    return 0 if passed else 3


def run_study(config: ExperimentConfig, out_dir: Path, threads: int) -> int:
    """Full pipeline: geodesic, fiberwise, all mabuchi variants, verify all."""
    config.require("epsilons", "deltas", "k_list", "a_values")
    if len(config.epsilons) < 3:
        raise ConfigError("study needs >= 3 epsilons")
    if max(config.k_list) > len(config.epsilons):
        raise ConfigError(f"k_list entries cannot exceed the number of epsilons ({len(config.epsilons)})")
    stages = {}
    rcs = []

    def stage(name: str, report_name: str, rc: int) -> None:
        stages[name] = {"report": report_name, "passed": rc == 0}
        rcs.append(rc)
        print(f"study stage {name}: {'ok' if rc == 0 else f'exit {rc}'}")

    stage("geodesic", "geodesic_report.json", run_geodesic(config, out_dir))
    stage("fiberwise", "fiberwise_report.json", run_fiberwise(config, out_dir))
    stage("mabuchi_exact", "mabuchi_exact_report.json", run_mabuchi(config, out_dir, "exact"))
    stage("mabuchi_k", "mabuchi_k_report.json", run_mabuchi(config, out_dir, "k"))
    stage("mabuchi_epsa", "mabuchi_epsa_report.json", run_mabuchi(config, out_dir, "epsA"))
    stage("verify", "verify_report.json", run_verify(config, out_dir, "all", threads))

    passed = all(rc == 0 for rc in rcs)
    report = {
        "timestamp": _timestamp(),
        "config": config.raw,
        "stages": stages,
        "passed": passed,
    }
    _write_json(out_dir, "study_report.json", report, "study_report")
    print(f"study: {'all stages passed' if passed else 'some stage failed'}; summary in {out_dir}")
    return 0 if passed else 3


# ---------------------------------------------------------------------------
# entry point


def _resolve_out_dir(config: ExperimentConfig, cli_out: str | None) -> Path:
    if cli_out:
        return Path(cli_out)
    env = os.environ.get("KGEOLAB_OUT_DIR")
    if env:
        return Path(env)
    return Path(config.out_dir)


def _resolve_threads(cli_threads: int | None) -> int:
    if cli_threads is not None:
        if cli_threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {cli_threads}")
        return cli_threads
    env = os.environ.get("KGEOLAB_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"KGEOLAB_THREADS must be an integer, got {env!r}") from exc
        if value < 1:
            raise ConfigError(f"KGEOLAB_THREADS must be >= 1, got {value}")
        return value
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgeolab",
        description="Drive the epsilon-geodesic / Monge-Ampere pipelines from one JSON config.",
    )
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    helps = {
        "geodesic": "epsilon-geodesic sweep: path CSV per epsilon + convergence report",
        "fiberwise": "fiber family solve: uniform bounds, density convergence, vanishing",
        "mabuchi": "functional traces along solved paths (--variant exact|k|epsA)",
        "verify": "theorem-check suites (--suite entropy|convexity|curvature|bounds|all)",
        "study": "run every pipeline and summarize",
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", metavar="PATH", help="experiment config JSON (required)")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides config and env)")
        sp.add_argument("--threads", type=int, metavar="N", help="parallelism cap (default 1)")
        if name == "mabuchi":
            sp.add_argument("--variant", default="exact", metavar="NAME", help="exact | k | epsA")
        if name == "verify":
            sp.add_argument("--suite", default="all", metavar="NAME",
                            help="entropy | convexity | curvature | bounds | all")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("kgeolab: a subcommand is required", file=sys.stderr)
        return 1
    stage = args.command
    if args.command == "mabuchi":
        stage = f"mabuchi:{args.variant}"
    elif args.command == "verify":
        stage = f"verify:{args.suite}"
    out_dir = None
    try:
        config = load_config(args.config)
        threads = _resolve_threads(args.threads)
        out_dir = _resolve_out_dir(config, args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "geodesic":
            return run_geodesic(config, out_dir)
        if args.command == "fiberwise":
            return run_fiberwise(config, out_dir)
        if args.command == "mabuchi":
            return run_mabuchi(config, out_dir, args.variant)
        if args.command == "verify":
            return run_verify(config, out_dir, args.suite, threads)
        return run_study(config, out_dir, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # the contract is exit 2 plus a diagnostic artifact
        if out_dir is not None:
            try:
                _write_json(
                    out_dir,
                    "diagnostic.json",
                    {
                        "timestamp": _timestamp(),
                        "stage": stage,
                        "error_type": type(exc).__name__,
                        "message": str(exc),
                    },
                    "diagnostic",
                )
            except Exception:
                pass
        traceback.print_exc(file=sys.stderr)
        print(f"error in {stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
