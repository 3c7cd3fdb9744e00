"""``anneal-lab`` command line.

Exit codes: 0 success, 1 usage or validation error, 2 fit did not converge
(outputs still written), 3 some simulated runs diverged.

With ``--format json`` each subcommand writes exactly one JSON document to
stdout.  Progress and human-readable messages go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .ingest import IngestError, RunManifest, export_loss_csv, format_loss_csv, load_curves, write_manifest
from .lawfit import VARIANTS, FitConfig, FitDataError, FitReport, fit, predict_curve
from .recommend import PRESET_ALIASES, PRESETS, default_ratio_grid, recommend_from_preset, sweep_ratio
from .schedule import ScheduleError, ScheduleSpec, build_constant, build_cosine, build_wsd
from .terms import MomentumConfig, compensated_cumsum, momentum_from_lr
from .schedule import lr_series
from .toytrain import BenchmarkConfig, DivergenceError, execute_plans, plan_runs

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_PARTIAL = 3

THREADS_ENV = "ANNEAL_LAB_THREADS"

log = logging.getLogger("anneal_lab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def worker_count(requested: int | None = None) -> int:
    """Worker pool size: the request (default: CPU count) capped by ``ANNEAL_LAB_THREADS``."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            cap_n = int(cap)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {cap!r}") from None
        if cap_n < 1:
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {cap!r}")
        n = min(n, cap_n)
    return max(1, n)


def _emit(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _unit_interval(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {v}")
    return v


def _momentum_from_args(args) -> MomentumConfig:
    return MomentumConfig(
        variant=args.momentum,
        beta1=args.beta1,
        beta2=args.beta2,
        epsilon=args.epsilon,
        lambda_decay=args.lambda_decay,
    )


def _fit_config(args, momentum: MomentumConfig) -> FitConfig:
    return FitConfig(
        huber_delta=args.huber_delta,
        max_iter=args.max_iter,
        warmup_exclusion=not args.keep_warmup,
        momentum=momentum,
        smoothing_window=args.window if args.window and args.window > 1 else None,
    )


def _load_report(path: str) -> FitReport:
    try:
        return FitReport.from_json(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read report {path}: {exc.strerror or exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: not a valid fit report ({exc})") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    if not args.manifest:
        raise UsageError("fit needs at least one --manifest")
    curves = load_curves(args.manifest)
    config = _fit_config(args, _momentum_from_args(args))
    _say(f"fitting {args.variant} to {len(curves)} curve(s)")
    report = fit(curves, args.variant, config)
    text = report.to_json()
    out = Path(args.output)
    out.write_text(text)
    _say(f"mean MAPE {report.mean_mape_percent:.4f}% ; converged={report.converged} ; report -> {out}")
    if args.format == "json":
        _emit(text)
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "mape_percent", "n_points"])
        for c in report.curves:
            w.writerow([c.label, repr(c.mape_percent), c.n_points])
        _emit(buf.getvalue())
    if not report.converged:
        _say(f"warning: optimizer did not converge ({report.optimizer_trace['message']})")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _schedule_from_args(args) -> ScheduleSpec:
    if args.schedule_json:
        return ScheduleSpec.from_json(Path(args.schedule_json).read_text())
    if args.schedule is None or args.eta_max is None or args.steps is None:
        raise UsageError("give --schedule-json, or --schedule with --eta-max and --steps")
    if args.schedule == "constant":
        return build_constant(args.eta_max, args.steps, args.warmup)
    if args.schedule == "cosine":
        return build_cosine(args.eta_max, args.steps, args.warmup, args.final_lr_divisor)
    if args.ratio is None:
        raise UsageError("--schedule wsd needs --ratio")
    return build_wsd(args.eta_max, args.steps, args.warmup, args.ratio, args.decay_exponent)


def cmd_predict(args) -> int:
    report = _load_report(args.report)
    spec = _schedule_from_args(args)
    momentum = report.momentum
    curve = predict_curve(report.coefficients, spec, args.N, momentum, label="predicted")
    text = format_loss_csv(curve.steps.tolist(), curve.losses.tolist(), header=("step", "predicted_loss"))
    Path(args.output).write_text(text)
    lr = lr_series(spec)
    summary = {
        "final_loss": float(curve.losses[-1]),
        "S_final": float(compensated_cumsum(lr)[-1]),
        "M_final": float(momentum_from_lr(lr, momentum)[-1]),
        "n_points": len(curve),
        "schedule": spec.to_dict(),
        "N": args.N,
        "momentum": momentum.to_dict(),
        "coefficients": report.coefficients.to_dict(),
        "curve_csv": str(args.output),
    }
    summary_text = _dump_json(summary)
    summary_path = Path(args.summary) if args.summary else Path(args.output).with_suffix(".summary.json")
    summary_path.write_text(summary_text)
    _say(f"predicted {len(curve)} points; final loss {summary['final_loss']:.6g} -> {args.output}")
    if args.format == "json":
        _emit(summary_text)
    elif args.format == "csv":
        _emit(text)
    return EXIT_OK


def _sweep_from_report(args, report: FitReport):
    if args.eta_max is None:
        raise UsageError("sweeping a fitted report needs --eta-max")
    grid = np.asarray(args.ratios, dtype=np.float64) if args.ratios else default_ratio_grid(args.grid_points)
    rec = sweep_ratio(report.coefficients, args.steps, args.eta_max, args.N, grid, report.momentum, args.warmup)
    return rec


def _write_recommendation(args, payload: dict, csv_text: str | None) -> None:
    text = _dump_json(payload)
    out = Path(args.output)
    out.write_text(text)
    if csv_text is not None:
        csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
        csv_path.write_text(csv_text)
    if args.format == "json":
        _emit(text)
    elif args.format == "csv":
        _emit(csv_text or "")
    else:
        _emit(f"{payload['r_opt']!r}\n")


def cmd_recommend(args) -> int:
    if args.preset and args.report:
        raise UsageError("give either --preset or --report, not both (ambiguous source)")
    if not args.preset and not args.report:
        raise UsageError("recommend needs --preset or --report")
    if args.preset:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            payload = recommend_from_preset(args.preset, args.steps, args.eta_max)
        for w in payload["warnings"]:
            _say(f"warning: {w}")
        _say(f"r_opt {payload['r_opt']:.6g} from {payload['provenance']}")
        _write_recommendation(args, payload, None)
        return EXIT_OK
    rec = _sweep_from_report(args, _load_report(args.report))
    rec.context["report"] = Path(args.report).name
    _say(f"r_opt {rec.r_opt:.6g} over {len(rec.grid)} grid points (fitted law)")
    _write_recommendation(args, rec.to_dict(), rec.to_csv())
    return EXIT_OK


def cmd_sweep(args) -> int:
    rec = _sweep_from_report(args, _load_report(args.report))
    rec.context["report"] = Path(args.report).name
    _say(f"r_opt {rec.r_opt:.6g} over {len(rec.grid)} grid points")
    _write_recommendation(args, rec.to_dict(), rec.to_csv())
    return EXIT_OK


def cmd_compare_momentum(args) -> int:
    if not args.manifest:
        raise UsageError("compare-momentum needs at least one --manifest")
    curves = load_curves(args.manifest)
    base = _momentum_from_args(args)
    lambdas = args.lambdas or [0.99, 0.999]
    variants = [MomentumConfig(variant="asmt", beta1=base.beta1, beta2=base.beta2, epsilon=base.epsilon)]
    variants += [MomentumConfig(variant="cmmt", lambda_decay=lam) for lam in lambdas]

    def run(mc: MomentumConfig) -> FitReport:
        return fit(curves, args.variant, _fit_config(args, mc))

    workers = min(worker_count(args.workers), len(variants))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run, variants))
    else:
        reports = [run(mc) for mc in variants]

    labels = [c.label for c in reports[0].curves]
    rows = []
    for mc, rep in zip(variants, reports):
        name = "ASMT" if mc.variant == "asmt" else f"CMMT(lambda={mc.lambda_decay:g})"
        rows.append(
            {
                "momentum": name,
                "lambda_decay": None if mc.variant == "asmt" else mc.lambda_decay,
                "mean_mape_percent": rep.mean_mape_percent,
                "converged": rep.converged,
                "per_curve": {c.label: c.mape_percent for c in rep.curves},
            }
        )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["momentum", "lambda_decay", "mean_mape_percent", "converged", *labels])
    for r in rows:
        w.writerow(
            [r["momentum"], "" if r["lambda_decay"] is None else repr(r["lambda_decay"]), repr(r["mean_mape_percent"]),
             str(r["converged"]).lower(), *(repr(r["per_curve"][lab]) for lab in labels)]
        )
    table = buf.getvalue()
    Path(args.output).write_text(table)
    for r in rows:
        _say(f"{r['momentum']:>22s}  MAPE {r['mean_mape_percent']:.4f}%")
    if args.format == "json":
        _emit(_dump_json({"variant": args.variant, "rows": rows, "table_csv": str(args.output)}))
    elif args.format == "csv":
        _emit(table)
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NOT_CONVERGED


def cmd_simulate(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise UsageError(f"{args.config}: config must be a JSON object")
    raw.setdefault("seeds", [args.seed])
    config = BenchmarkConfig.from_dict(raw)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    plans = plan_runs(config)
    problem = config.problem()
    results = execute_plans(problem, plans, worker_count(args.workers))

    runs: list[RunManifest] = []
    failures = []
    for plan, res in zip(plans, results):
        if isinstance(res, DivergenceError):
            failures.append({"label": plan.label, "step": res.step, "error": str(res)})
            _say(f"error: {res}")
            continue
        path = outdir / f"{plan.label}.csv"
        export_loss_csv(res.curve, path)
        meta = res.curve.meta
        runs.append(
            RunManifest(
                curve_path=path,
                model_size_params=meta.model_size,
                schedule=meta.schedule,
                max_lr=meta.max_lr,
                seed=meta.seed,
                label=plan.label,
            )
        )
    manifest_path = outdir / "manifest.json"
    write_manifest(runs, manifest_path)
    _say(f"{len(runs)} curve(s) written to {outdir}; {len(failures)} diverged")
    if args.format == "json":
        _emit(_dump_json({"manifest": str(manifest_path), "curves": [r.label for r in runs], "failures": failures}))
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "status", "path"])
        status = {f["label"]: f["error"] for f in failures}
        for plan in plans:
            if plan.label in status:
                w.writerow([plan.label, "diverged", ""])
            else:
                w.writerow([plan.label, "ok", (outdir / f"{plan.label}.csv").as_posix()])
        _emit(buf.getvalue())
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("json", "csv", "text"), default="text", help="stdout format")
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_momentum(p: argparse.ArgumentParser) -> None:
    p.add_argument("--momentum", choices=("asmt", "cmmt"), default="asmt")
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.95)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--lambda-decay", type=_unit_interval, default=0.999)


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", nargs="+", action="extend", default=[], metavar="PATH")
    p.add_argument("--variant", choices=VARIANTS, default="forward_momentum_reduced")
    p.add_argument("--huber-delta", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--window", type=int, default=50, help="moving-average window; 1 disables smoothing")
    p.add_argument("--keep-warmup", action="store_true", help="fit warmup-phase points too")


def _add_sweep_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, required=True, help="total training steps T")
    p.add_argument("--eta-max", type=float)
    p.add_argument("--N", type=float, help="model size for laws with a size term")
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--grid-points", type=int, default=20)
    p.add_argument("--ratios", type=float, nargs="+", help="explicit annealing-ratio grid")
    p.add_argument("--output", default="recommendation.json")
    p.add_argument("--csv", help="plot CSV path (default: output with .csv suffix)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="anneal-lab", description="Fit and apply forward-momentum loss-curve laws.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a law to loss curves listed in manifests")
    _add_common(p)
    _add_fit_flags(p)
    _add_momentum(p)
    p.add_argument("--output", default="fit_report.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict a loss curve under a schedule from a fit report")
    _add_common(p)
    p.add_argument("--report", required=True)
    p.add_argument("--schedule", choices=("constant", "cosine", "wsd"))
    p.add_argument("--schedule-json", help="ScheduleSpec JSON file instead of schedule flags")
    p.add_argument("--eta-max", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--ratio", type=float)
    p.add_argument("--decay-exponent", type=float, default=1.0)
    p.add_argument("--final-lr-divisor", type=float, default=10.0)
    p.add_argument("--N", type=float)
    p.add_argument("--output", default="predicted.csv")
    p.add_argument("--summary", help="summary JSON path (default: output with .summary.json suffix)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("recommend", help="optimal annealing ratio from a preset or a fitted report")
    _add_common(p)
    p.add_argument("--preset", choices=sorted(PRESETS) + sorted(PRESET_ALIASES))
    p.add_argument("--report")
    _add_sweep_flags(p)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("sweep", help="annealing-ratio sweep under a fitted report")
    _add_common(p)
    p.add_argument("--report", required=True)
    _add_sweep_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare-momentum", help="MAPE of ASMT against CMMT at several decay factors")
    _add_common(p)
    _add_fit_flags(p)
    _add_momentum(p)
    p.add_argument("--lambda", dest="lambdas", type=_unit_interval, action="append", metavar="LAMBDA")
    p.add_argument("--workers", type=int)
    p.add_argument("--output", default="momentum_comparison.csv")
    p.set_defaults(func=cmd_compare_momentum)

    p = sub.add_parser("simulate", help="generate toy SGD loss curves and a manifest")
    _add_common(p)
    p.add_argument("--config", required=True)
    p.add_argument("--output", default="simulated")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        _say(f"anneal-lab {args.command}: error: {exc}")
        return EXIT_USAGE
    except (IngestError, FitDataError, ScheduleError, ValueError, KeyError, IndexError, TypeError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        _say(f"anneal-lab {args.command}: error: {msg}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
