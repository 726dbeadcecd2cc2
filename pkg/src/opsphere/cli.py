"""Command-line entry point: simulate, experiment, analyze."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, experiments
from .engine import SimulationParams, StopRule, run
from .errors import InvalidParams, OpSphereError
from .generators import almost_orthogonal_configuration, uniform_configuration
from .io import dump_json, read_opinions, write_json, write_summary_json, write_trace_csv
from .rng import dynamics_stream_index, init_stream
from .update_rules import UpdateSpec

log = logging.getLogger("opsphere")


def parse_init(text: str):
    """uniform | file:<path> | almost-orth:<low>,<high>[,<bundles>] -> factory(n, d, rng)."""
    if text == "uniform":
        return lambda n, d, rng: uniform_configuration(n, d, rng)
    kind, _, rest = text.partition(":")
    if kind == "file" and rest:
        return lambda n, d, rng: read_opinions(rest)
    if kind == "almost-orth" and rest:
        try:
            vals = [float(x) for x in rest.split(",")]
        except ValueError:
            raise InvalidParams(f"bad almost-orth parameters {rest!r}") from None
        if len(vals) not in (2, 3):
            raise InvalidParams("almost-orth takes <low>,<high>[,<bundles>]")
        low, high = vals[0], vals[1]
        bundles = int(vals[2]) if len(vals) == 3 else 3
        return lambda n, d, rng: almost_orthogonal_configuration(n, d, rng, low, high, min(bundles, d))
    raise InvalidParams(f"unknown init {text!r}")


def parse_stop(text: str) -> StopRule:
    """polarized:<tol> | inactive:<eps> | steps."""
    if text == "steps":
        return StopRule.max_steps()
    kind, _, rest = text.partition(":")
    try:
        value = float(rest)
    except ValueError:
        raise InvalidParams(f"bad stop rule {text!r}") from None
    if kind == "polarized":
        return StopRule.polarized(value)
    if kind == "inactive":
        return StopRule.inactive(value)
    raise InvalidParams(f"unknown stop rule {text!r}")


def cmd_simulate(args) -> int:
    spec = UpdateSpec.parse(args.update)
    make = parse_init(args.init)
    cfg = make(args.n, args.d, init_stream(args.seed, 0))
    if cfg.n != args.n or cfg.d != args.d:
        raise InvalidParams(f"initial opinions are {cfg.n}x{cfg.d}, expected {args.n}x{args.d}")
    params = SimulationParams(
        n=args.n, d=args.d, update=spec, max_steps=args.steps, seed=args.seed,
        stream=dynamics_stream_index(0), stop=parse_stop(args.stop), record_every=args.record_every,
        keep_interactions=False,
    )
    trace, summary = run(params, cfg)
    if args.trace:
        write_trace_csv(args.trace, trace)
    if args.summary:
        write_summary_json(args.summary, summary)
    else:
        sys.stdout.write(dump_json(summary.to_json()))
    return 0


def cmd_experiment(args) -> int:
    out = Path(args.out)
    if args.preset == "counterexample":
        verdict = experiments.counterexample_experiment(args.eta, args.horizon, args.samples, args.epsilon,
                                                        seed=args.seed or 0)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "counterexample.json", verdict.to_json())
        sys.stdout.write(dump_json(verdict.to_json()))
        return 0 if verdict.passed else 1
    if args.preset == "concentration" and args.config is None:
        table = experiments.concentration_experiment(
            replicas=args.replicas or 400, master_seed=args.seed or 0, workers=args.workers, out_dir=out,
        )
        sys.stdout.write(dump_json(table.to_json()))
        return 0 if table.passed else 1
    if args.config is not None:
        spec = experiments.ExperimentSpec.from_file(args.config)
    elif args.preset is not None:
        spec = experiments.PRESETS[args.preset]()
    else:
        raise InvalidParams("give --preset or --config")
    spec = spec.with_overrides(replicas=args.replicas, master_seed=args.seed)
    report = experiments.run_experiment(spec, out, workers=args.workers)
    sys.stdout.write(dump_json(report.aggregates))
    return 0


def cmd_analyze(args) -> int:
    cfg = read_opinions(args.config)
    sys.stdout.write(json.dumps(analysis.summarize(cfg, args.epsilon), indent=2, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opsphere", description="Opinion dynamics on the unit sphere.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one seeded simulation")
    s.add_argument("--update", required=True, help="e.g. linear:eta=0.1 or asym-linear:eta_plus=0.9,eta_minus=0.1")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--steps", type=int, required=True, help="maximum number of steps")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--init", default="uniform", help="uniform | file:<path> | almost-orth:<low>,<high>[,<bundles>]")
    s.add_argument("--stop", default="polarized:1e-6", help="polarized:<tol> | inactive:<eps> | steps")
    s.add_argument("--record-every", type=int, default=100)
    s.add_argument("--trace", help="trace CSV output path")
    s.add_argument("--summary", help="summary JSON output path (stdout if omitted)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("experiment", help="run a batch of replicas")
    e.add_argument("--preset", choices=["figure1", "figure2", "concentration", "counterexample"])
    e.add_argument("--config", help="experiment JSON file")
    e.add_argument("--replicas", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out", required=True)
    e.add_argument("--eta", type=float, default=0.1, help="counterexample: linear rate")
    e.add_argument("--T", dest="horizon", type=int, default=6, help="counterexample: number of interventions")
    e.add_argument("--samples", type=int, help="counterexample: sample this many sequences instead of enumerating")
    e.add_argument("--epsilon", type=float, help="counterexample: override the grid-selected epsilon")
    e.set_defaults(func=cmd_experiment)

    a = sub.add_parser("analyze", help="predicates and potentials of an opinion file")
    a.add_argument("--config", required=True, help="opinion file, one opinion per line")
    a.add_argument("--epsilon", type=float, default=analysis.EPS_CLUSTER)
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except OpSphereError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
