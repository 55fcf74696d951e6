"""Command-line pipeline: simulate, fit, interpolate, tune, benchmark.

Every subcommand accepts an optional JSON config file; flags given on the
command line override config-file values, and the effective configuration is
echoed into each output artifact (as `# config:` comment lines in CSVs, as
the `config` field in model JSON).  Exit codes: 0 success, 1 usage error,
2 data error, 3 divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import (
    PanelFormatError,
    UnknownCellError,
    destandardize,
    fmt_float,
    read_panel_csv,
    standardize,
    write_panel_csv,
)
from .evaluation import METHODS, run_benchmark, write_benchmark_csv, write_summary_markdown
from .model import load_model, predict_curve, save_model
from .optim import DivergenceError, FitConfig, fit
from .simgen import SCENARIOS, ScenarioSpec, desk_scale, generate, write_truth_csv
from .tuning import AllCandidatesDivergedError, TuneGrid, tune, write_tune_csv

__all__ = ["main", "entry_point"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

# Calibrated defaults for the two benchmark scales.  The loss is an
# unnormalized sum, so the stable step size shrinks as the panel grows.
DESK_FIT_DEFAULTS = dict(rank=3, penalty=0.1, step_size=2e-4, num_basis=60, max_iters=3000)
FULL_FIT_DEFAULTS = dict(rank=3, penalty=0.1, step_size=4e-5, num_basis=300, max_iters=5000)

_FIT_KEYS = (
    "rank",
    "penalty",
    "step_size",
    "stop_tol",
    "max_iters",
    "num_basis",
    "degree",
    "init_scale",
    "seed",
)
_GRID_KEYS = (
    "lambda_candidates",
    "rank_candidates",
    "step_candidates",
    "validation_fraction",
)
_SCENARIO_KEYS = (
    "num_subjects",
    "num_series",
    "grid_length",
    "noise_sd",
    "observe_prob",
)


class _UsageError(Exception):
    pass


class _DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _read_json_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise _DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise _DataError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise _DataError(f"{path}: config must be a JSON object")
    return doc


def _validate_keys(file_cfg: dict, allowed) -> None:
    for key in file_cfg:
        if key not in allowed:
            raise _UsageError(f"unknown config key {key!r}")


def _merge(defaults: dict, file_cfg: dict, flags: dict, allowed) -> dict:
    _validate_keys(file_cfg, allowed)
    out = dict(defaults)
    out.update({k: v for k, v in file_cfg.items() if v is not None})
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _fit_config(args, file_cfg: dict, scale_defaults: dict | None = None) -> FitConfig:
    defaults = FitConfig().to_dict()
    if scale_defaults:
        defaults.update(scale_defaults)
    flags = {k: getattr(args, k, None) for k in _FIT_KEYS}
    merged = _merge(defaults, {k: v for k, v in file_cfg.items() if k in _FIT_KEYS}, flags, _FIT_KEYS)
    try:
        return FitConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise _UsageError(str(exc)) from None


def _echo(payload: dict) -> str:
    return "config: " + json.dumps(payload, sort_keys=True)


def _add_fit_flags(parser, include_seed=True):
    parser.add_argument("--rank", type=int)
    parser.add_argument("--penalty", type=float, help="L2 penalty weight")
    parser.add_argument("--step-size", dest="step_size", type=float)
    parser.add_argument("--stop-tol", dest="stop_tol", type=float)
    parser.add_argument("--max-iters", dest="max_iters", type=int)
    parser.add_argument("--num-basis", dest="num_basis", type=int)
    parser.add_argument("--degree", type=int)
    parser.add_argument("--init-scale", dest="init_scale", type=float)
    if include_seed:
        parser.add_argument("--seed", type=int)


def _scenario_spec(args, file_cfg: dict) -> ScenarioSpec:
    base = ScenarioSpec(scenario_id=args.scenario, seed=0)
    defaults = base.to_dict()
    defaults["num_series"] = None  # keep the per-scenario default unless overridden
    del defaults["scenario_id"]
    del defaults["seed"]
    flags = {
        "num_subjects": args.subjects,
        "num_series": args.series,
        "grid_length": args.grid_length,
        "noise_sd": args.noise_sd,
        "observe_prob": args.observe_prob,
    }
    merged = _merge(
        defaults,
        {k: v for k, v in file_cfg.items() if k in _SCENARIO_KEYS},
        flags,
        _SCENARIO_KEYS,
    )
    try:
        spec = ScenarioSpec(scenario_id=args.scenario, seed=args.seed, **merged)
        if args.desk_scale:
            spec = desk_scale(spec)
            if args.subjects is not None:
                spec = replace(spec, num_subjects=args.subjects)
            if args.grid_length is not None:
                spec = replace(spec, grid_length=args.grid_length)
        return spec
    except ValueError as exc:
        raise _UsageError(str(exc)) from None


def _load_panel(path, domain_end=None):
    try:
        return read_panel_csv(path, domain_end=domain_end)
    except FileNotFoundError:
        raise _DataError(f"file not found: {path}") from None
    except (PanelFormatError, ValueError) as exc:
        raise _DataError(str(exc)) from None


def _cmd_simulate(args) -> int:
    file_cfg = _read_json_config(args.config)
    _validate_keys(file_cfg, _SCENARIO_KEYS)
    spec = _scenario_spec(args, file_cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test, truth = generate(spec)
    echo = _echo({"command": "simulate", **spec.to_dict()})
    write_panel_csv(train, out_dir / "train.csv", header_comments=[echo])
    write_panel_csv(test, out_dir / "test.csv", header_comments=[echo])
    write_truth_csv(truth, train, out_dir / "truth.csv", header_comments=[echo])
    print(f"wrote {out_dir}/train.csv, test.csv, truth.csv", file=sys.stderr)
    return EXIT_OK


def _cmd_fit(args) -> int:
    file_cfg = _read_json_config(args.config)
    _validate_keys(file_cfg, _FIT_KEYS + ("domain_end", "standardize"))
    config = _fit_config(args, file_cfg)
    domain_end = args.domain_end if args.domain_end is not None else file_cfg.get("domain_end")
    do_standardize = not args.no_standardize and file_cfg.get("standardize", True)

    panel = _load_panel(args.train, domain_end=domain_end)
    stats = None
    if do_standardize:
        panel, stats = standardize(panel)
    try:
        params, report = fit(panel, config)
    except ValueError as exc:
        raise _DataError(str(exc)) from None

    echo_payload = {
        "command": "fit",
        "standardize": bool(do_standardize),
        "domain_end": panel.domain_end,
        **config.to_dict(),
    }
    model_path = Path(args.model_out)
    save_model(
        model_path,
        params,
        subject_ids=panel.subject_ids,
        series_ids=panel.series_ids,
        stats=stats,
        seed=config.seed,
        config=echo_payload,
    )
    trace_path = Path(args.trace_out) if args.trace_out else model_path.with_suffix(".trace.csv")
    with open(trace_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {_echo(echo_payload)}\n")
        fh.write("iteration,loss\n")
        for k, value in enumerate(report.loss_trace):
            fh.write(f"{k},{fmt_float(value)}\n")
    status = "converged" if report.converged else "max_iters reached"
    print(
        f"fit {status} after {report.iterations_run} iterations, "
        f"final loss {report.final_loss:.6g}; model -> {model_path}",
        file=sys.stderr,
    )
    return EXIT_OK


def _read_queries(path):
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header_seen = False
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                fields = [f.strip() for f in stripped.split(",")]
                if not header_seen:
                    if fields != ["subject", "series", "time"]:
                        raise _DataError(f"{path} line {lineno}: expected header subject,series,time")
                    header_seen = True
                    continue
                if len(fields) != 3:
                    raise _DataError(f"{path} line {lineno}: expected 3 fields")
                try:
                    rows.append((fields[0], fields[1], float(fields[2])))
                except ValueError:
                    raise _DataError(f"{path} line {lineno}: bad time {fields[2]!r}") from None
    except FileNotFoundError:
        raise _DataError(f"file not found: {path}") from None
    if not rows:
        raise _DataError(f"{path}: no queries")
    return rows


def _cmd_interpolate(args) -> int:
    try:
        loaded = load_model(args.model)
    except FileNotFoundError:
        raise _DataError(f"file not found: {args.model}") from None
    except (ValueError, KeyError) as exc:
        raise _DataError(f"{args.model}: {exc}") from None
    params = loaded.params
    sub_index = {s: i for i, s in enumerate(loaded.subject_ids)}
    ser_index = {s: j for j, s in enumerate(loaded.series_ids)}

    if args.queries is None and args.grid is None:
        raise _UsageError("need --queries FILE or --grid N")
    if args.queries is not None:
        queries = _read_queries(args.queries)
    else:
        if args.grid < 2:
            raise _UsageError("--grid must be at least 2")
        times = np.linspace(0.0, params.basis.domain_end, args.grid)
        subjects = args.subject or list(loaded.subject_ids)
        series = args.series or list(loaded.series_ids)
        queries = [(s, y, float(t)) for s in subjects for y in series for t in times]

    # Group by cell so the basis is evaluated once per cell's query times.
    by_cell: dict[tuple[str, str], list[int]] = {}
    for k, (sub, ser, _) in enumerate(queries):
        if sub not in sub_index:
            raise _DataError(f"unknown subject {sub!r}")
        if ser not in ser_index:
            raise _DataError(f"unknown series {ser!r}")
        by_cell.setdefault((sub, ser), []).append(k)
    preds = np.empty(len(queries))
    for (sub, ser), idx in by_cell.items():
        i, j = sub_index[sub], ser_index[ser]
        t = np.asarray([queries[k][2] for k in idx])
        try:
            values = predict_curve(params, i, j, t)
        except ValueError as exc:
            raise _DataError(str(exc)) from None
        if loaded.stats is not None:
            values = destandardize(values, loaded.stats, i, j)
        preds[idx] = values

    echo = _echo({"command": "interpolate", "model": str(args.model)})
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {echo}\n")
        fh.write("subject,series,time,prediction\n")
        for (sub, ser, t), value in zip(queries, preds):
            fh.write(f"{sub},{ser},{fmt_float(t)},{fmt_float(value)}\n")
    print(f"wrote {len(queries)} predictions -> {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_tune(args) -> int:
    file_cfg = _read_json_config(args.config)
    _validate_keys(file_cfg, _FIT_KEYS + _GRID_KEYS + ("domain_end", "standardize"))
    config = _fit_config(args, {k: v for k, v in file_cfg.items() if k in _FIT_KEYS})

    def parse_list(text, cast):
        return tuple(cast(x) for x in text.split(",") if x.strip())

    grid_kwargs = {k: file_cfg[k] for k in _GRID_KEYS if k in file_cfg}
    if args.lambdas:
        grid_kwargs["lambda_candidates"] = parse_list(args.lambdas, float)
    if args.ranks:
        grid_kwargs["rank_candidates"] = parse_list(args.ranks, int)
    if args.steps:
        grid_kwargs["step_candidates"] = parse_list(args.steps, float)
    if args.validation_fraction is not None:
        grid_kwargs["validation_fraction"] = args.validation_fraction
    grid_kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in grid_kwargs.items()}
    try:
        grid = TuneGrid(seed=args.seed if args.seed is not None else 0, **grid_kwargs)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None

    domain_end = args.domain_end if args.domain_end is not None else file_cfg.get("domain_end")
    panel = _load_panel(args.train, domain_end=domain_end)
    if not args.no_standardize and file_cfg.get("standardize", True):
        panel, _ = standardize(panel)
    try:
        result = tune(panel, grid, config)
    except AllCandidatesDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        raise _DataError(str(exc)) from None
    echo = _echo(
        {
            "command": "tune",
            "lambda_candidates": list(grid.lambda_candidates),
            "rank_candidates": list(grid.rank_candidates),
            "step_candidates": list(grid.step_candidates),
            "validation_fraction": grid.validation_fraction,
            "seed": grid.seed,
            **config.to_dict(),
        }
    )
    write_tune_csv(result, args.out, header_comments=[echo])
    print(
        f"best: lambda={result.best_lambda} rank={result.best_rank} "
        f"step={result.best_step} val_mse={result.best_val_mse:.6g}",
        file=sys.stdout,
    )
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    file_cfg = _read_json_config(args.config)
    _validate_keys(file_cfg, _FIT_KEYS + _SCENARIO_KEYS)
    if args.scenario not in SCENARIOS:
        raise _UsageError(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}")
    spec = _scenario_spec(args, file_cfg)
    scale_defaults = DESK_FIT_DEFAULTS if args.desk_scale else FULL_FIT_DEFAULTS
    config = _fit_config(args, {k: v for k, v in file_cfg.items() if k in _FIT_KEYS}, scale_defaults)
    reps = args.reps if args.reps is not None else (5 if args.desk_scale else 50)
    if reps < 1:
        raise _UsageError("--reps must be >= 1")
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise _UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_benchmark(spec, methods, reps, config, jobs=args.jobs)
    echo = _echo(
        {
            "command": "benchmark",
            "methods": list(methods),
            "replications": reps,
            "jobs": args.jobs,
            "scenario": spec.to_dict(),
            "fit": config.to_dict(),
        }
    )
    write_benchmark_csv(report, out_dir / "benchmark.csv", header_comments=[echo])
    write_summary_markdown(report, out_dir / "summary.md", header_comments=[f"`{echo}`"])
    for agg in report.aggregates:
        print(
            f"{agg.method}: train {agg.train_mean:.3f} ({agg.train_se:.3f}) "
            f"test {agg.test_mean:.3f} ({agg.test_se:.3f})"
        )
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="idlfm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a scenario's train/test/truth CSVs")
    p.add_argument("--scenario", required=True, choices=SCENARIOS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="JSON file with scenario fields")
    p.add_argument("--desk-scale", action="store_true")
    p.add_argument("--subjects", type=int)
    p.add_argument("--series", type=int)
    p.add_argument("--grid-length", dest="grid_length", type=int)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--observe-prob", dest="observe_prob", type=float)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit the factor model to a training CSV")
    p.add_argument("--train", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--trace-out")
    p.add_argument("--config", help="JSON file with fit fields")
    p.add_argument("--domain-end", dest="domain_end", type=float)
    p.add_argument("--no-standardize", action="store_true")
    _add_fit_flags(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("interpolate", help="predict from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--queries", help="CSV with header subject,series,time")
    p.add_argument("--grid", type=int, help="evaluate on N evenly spaced times")
    p.add_argument("--subject", action="append", help="restrict --grid output (repeatable)")
    p.add_argument("--series", action="append", help="restrict --grid output (repeatable)")
    p.set_defaults(func=_cmd_interpolate)

    p = sub.add_parser("tune", help="two-phase hyperparameter search")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with grid and fit fields")
    p.add_argument("--lambdas", help="comma list of penalty candidates")
    p.add_argument("--ranks", help="comma list of rank candidates")
    p.add_argument("--steps", help="comma list of step-size candidates")
    p.add_argument("--validation-fraction", dest="validation_fraction", type=float)
    p.add_argument("--domain-end", dest="domain_end", type=float)
    p.add_argument("--no-standardize", action="store_true")
    _add_fit_flags(p)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("benchmark", help="multi-replication method comparison")
    p.add_argument("--scenario", required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", help="JSON file with scenario and fit fields")
    p.add_argument("--desk-scale", action="store_true")
    p.add_argument("--subjects", type=int)
    p.add_argument("--series", type=int)
    p.add_argument("--grid-length", dest="grid_length", type=int)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--observe-prob", dest="observe_prob", type=float)
    _add_fit_flags(p, include_seed=False)
    p.set_defaults(func=_cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PanelFormatError, UnknownCellError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
