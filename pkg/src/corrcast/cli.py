"""Command-line entry points: generate, train, predict, evaluate, compare, bench."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .calibration import rolling_forecast
from .data import load_csv
from .errors import ConfigError, NumericalError, SingularCovarianceError
from .experiment import (
    bench_structured_vs_dense,
    config_hash,
    format_comparison_table,
    load_config,
    prepare,
    run_experiment,
    train_model,
)
from .metrics import EvaluationReport, ForecastSamples, evaluate_instance
from .model import load_checkpoint, save_checkpoint
from .synth import generate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _cmd_generate(args) -> int:
    config = load_config(args.config)
    sidecar = args.sidecar or Path(args.out).with_suffix(".json")
    generate(config.generator, config.seed, args.out, sidecar)
    print(f"wrote {args.out} and {sidecar}")
    return EXIT_OK


def _cmd_train(args) -> int:
    config = load_config(args.config)
    prepared = prepare(config, load_csv(args.data))
    model, trace = train_model(config, prepared, identity_corr=args.baseline)
    save_checkpoint(
        model,
        args.out,
        extra={
            "seed": config.seed,
            "config_hash": config_hash(config),
            "scaler": prepared.scaler.to_dict(),
            "updates": trace.n_updates,
            "best_val_nll": trace.best_val,
            "stop_reason": trace.stop_reason,
        },
    )
    print(
        f"trained {'baseline' if args.baseline else 'correlated'} model: "
        f"{trace.n_updates} updates, best val NLL {trace.best_val:.4f} -> {args.out}"
    )
    return EXIT_OK


def _cmd_predict(args) -> int:
    config = load_config(args.config)
    model, extra = load_checkpoint(args.model)
    dataset = load_csv(args.data)
    prepared = prepare(config, dataset)
    series_idx = np.arange(dataset.n_series)
    origin = args.origin if args.origin is not None else prepared.split.val_end
    sampled = rolling_forecast(
        model,
        prepared.standardized,
        prepared.covariates,
        series_idx,
        origin=origin,
        horizon=config.horizon,
        n_paths=config.n_sample_paths,
        seed=config.seed,
        calibrate=config.calibrate and not model.config.identity_corr,
    )
    raw = prepared.scaler.inverse(sampled, series_idx)
    truth = dataset.values[origin:origin + config.horizon]
    np.savez(args.out, samples=raw, truth=truth, origin=origin, seed=config.seed)
    print(f"wrote {raw.shape[0]} paths x {raw.shape[1]} steps to {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    payload = np.load(args.samples)
    forecast = ForecastSamples(
        samples=payload["samples"],
        truth=payload["truth"],
        instance=f"origin-{int(payload['origin'])}",
    )
    report = EvaluationReport.from_instances(
        [evaluate_instance(forecast)],
        n_samples=forecast.samples.shape[0],
        seed=int(payload["seed"]),
    )
    Path(args.out).write_text(report.to_json())
    for key, value in sorted(report.aggregate.items()):
        print(f"{key:<20}{value:.6f}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = load_config(args.config)
    dataset = load_csv(args.data) if args.data else None
    result = run_experiment(config, dataset)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "comparison.json").write_text(result.to_json())
    table = format_comparison_table(result)
    (outdir / "comparison.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def _cmd_bench(args) -> int:
    stats = bench_structured_vs_dense(
        n_series=args.series, window=args.window, rank=args.rank,
        repeats=args.repeats,
    )
    print(json.dumps(stats, indent=2))
    if stats["speedup"] < args.min_speedup:
        print(
            f"speedup {stats['speedup']:.1f}x below required "
            f"{args.min_speedup:.1f}x",
            file=sys.stderr,
        )
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrcast",
        description="Multivariate forecasting with cross-correlated errors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset + sidecar")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sidecar")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train a model on a CSV dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", action="store_true",
                   help="freeze the temporal correlation to identity")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="rolling forecast from a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--origin", type=int, default=None,
                   help="forecast origin (default: start of the test span)")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="score serialized forecast samples")
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare", help="paired with/without-correlation run")
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="optional CSV; default regenerates from config")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("bench", help="structured vs dense NLL timing")
    p.add_argument("--series", type=int, default=200)
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--rank", type=int, default=2)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--min-speedup", type=float, default=0.0)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularCovarianceError, NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
