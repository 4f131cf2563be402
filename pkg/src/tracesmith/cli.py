"""Command-line interface: synthesize, optimize, evaluate, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from tracesmith.bayesopt import OptimizerConfig
from tracesmith.data import parse_dataset, serialize_dataset
from tracesmith.dp import BudgetError, BudgetWeights, PrivacyLedger
from tracesmith.metrics import BUILTIN_METRICS, evaluate_all, metric_names, resolve_metric
from tracesmith.runner import optimize_run, result_document, synthesize_run


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracesmith",
        description="Differentially private location-trace synthesis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synthesize", help="one synthesis run at fixed budget weights")
    synth.add_argument("--input", required=True, help="real trace file")
    synth.add_argument("--output", required=True, help="synthetic trace file to write")
    synth.add_argument("--epsilon", type=float, required=True)
    synth.add_argument("--weights", default="0.25,0.25,0.25,0.25",
                       help="four comma-separated budget weights summing to 1")
    synth.add_argument("--grid-n", type=int, default=4)
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(handler=cmd_synthesize)

    opt = sub.add_parser("optimize", help="search budget weights minimizing a metric")
    opt.add_argument("--input", required=True)
    opt.add_argument("--output", required=True, help="directory for result.json and synthetic.txt")
    opt.add_argument("--epsilon", type=float, required=True)
    opt.add_argument("--metric", default="query", choices=sorted(BUILTIN_METRICS))
    opt.add_argument("--explorations", type=int, default=100)
    opt.add_argument("--iterations", type=int, default=100)
    opt.add_argument("--trials", type=int, default=3)
    opt.add_argument("--grid-n", type=int, default=4)
    opt.add_argument("--seed", type=int, default=0)
    opt.set_defaults(handler=cmd_optimize)

    ev = sub.add_parser("evaluate", help="error metrics between two trace files")
    ev.add_argument("--input", required=True, help="real trace file")
    ev.add_argument("--synthetic", required=True, help="synthetic trace file")
    ev.add_argument("--metric", default="all", help="metric name or 'all'")
    ev.set_defaults(handler=cmd_evaluate)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--storage", default="tracesmith-storage")
    serve.add_argument("--workers", type=int, default=2)
    serve.add_argument("--frontend", default=None, help="directory of built UI assets")
    serve.set_defaults(handler=cmd_serve)

    return parser


def cmd_synthesize(args) -> int:
    dataset = parse_dataset(Path(args.input).read_text(encoding="utf-8"))
    try:
        weights = BudgetWeights.from_iterable(args.weights.split(","))
    except ValueError as exc:
        raise BudgetError(f"invalid --weights {args.weights!r}: {exc}") from None

    ledger = PrivacyLedger()
    synthetic = synthesize_run(
        dataset, args.epsilon, weights, args.grid_n,
        np.random.default_rng(args.seed), ledger,
    )
    output = Path(args.output)
    output.write_text(serialize_dataset(synthetic), encoding="utf-8")

    report = evaluate_all(dataset, synthetic)
    sidecar = {
        "input": args.input,
        "epsilon": args.epsilon,
        "weights": list(weights.as_tuple()),
        "grid_n": args.grid_n,
        "seed": args.seed,
        "cardinality": synthetic.cardinality,
        "report": report.to_dict(),
        "ledger": {**ledger.to_dict(), "released_epsilon": args.epsilon},
    }
    sidecar_path = output.with_name(output.name + ".provenance.json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2))
    print(f"wrote {output} and {sidecar_path}")
    return 0


def cmd_optimize(args) -> int:
    dataset = parse_dataset(Path(args.input).read_text(encoding="utf-8"))
    config = OptimizerConfig(
        explorations=args.explorations,
        iterations=args.iterations,
        trials=args.trials,
        seed=args.seed,
    )

    def log_line(obs):
        weights = ",".join(f"{w:.6f}" for w in obs.weights.as_tuple())
        print(f"{obs.iteration} {obs.phase} {weights} {obs.error:.6f}", flush=True)

    state, synthetic, report, ledger = optimize_run(
        dataset, args.epsilon, args.metric, config,
        grid_n=args.grid_n, progress_sink=log_line,
    )

    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "synthetic.txt").write_text(serialize_dataset(synthetic), encoding="utf-8")
    spec = {
        "input": args.input,
        "epsilon": args.epsilon,
        "metric": args.metric,
        "grid_n": args.grid_n,
        "trials": args.trials,
        "explorations": args.explorations,
        "iterations": args.iterations,
        "seed": args.seed,
    }
    (out_dir / "result.json").write_text(
        json.dumps(result_document(spec, state, report, ledger), indent=2)
    )
    best = ",".join(f"{w:.6f}" for w in state.best.weights.as_tuple())
    print(f"best weights {best} with {args.metric} error {state.best.error:.6f}")
    return 0


def cmd_evaluate(args) -> int:
    real = parse_dataset(Path(args.input).read_text(encoding="utf-8"))
    synthetic = parse_dataset(Path(args.synthetic).read_text(encoding="utf-8"))
    if args.metric == "all":
        print(json.dumps(evaluate_all(real, synthetic).to_dict(), indent=2))
        return 0
    if args.metric not in metric_names():
        print(
            f"error: unknown metric {args.metric!r}; valid: all, {', '.join(metric_names())}",
            file=sys.stderr,
        )
        return 2
    from tracesmith.metrics import MetricConfig

    value = resolve_metric(args.metric)(real, synthetic, MetricConfig())
    print(json.dumps({args.metric: value}, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from tracesmith.service import create_app

    app = create_app(args.storage, max_workers=args.workers, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
