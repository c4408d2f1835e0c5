"""Command-line entry point: ``dragrpo {adjust,analyze,simulate,bench,synth}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .adjust import DEFAULT_EPSILON, adjust_group
from .analyzer import PValueMethod, analyze_dataset
from .bench import run_bench
from .config import ConfigError, RunConfig
from .core import DraError
from .io import (
    ParseError,
    ValidationError,
    atomic_write_text,
    build_group,
    dumps,
    group_records,
    ingest_completions,
    read_records,
    write_completions,
    synth_groups,
)
from .sim import Algorithm, metrics_to_csv, train
from .smi import DEFAULT_JITTER, SmiKind

log = logging.getLogger("dragrpo")


def _reward_config(path: Optional[str]):
    return None if path is None else RunConfig.load(path).reward_config()


def cmd_adjust(args) -> int:
    kind = SmiKind.parse(args.smi, args.jitter)
    records = read_records(args.input, _reward_config(args.reward_config))
    extra: dict[int, dict] = {}
    for prompt_id, recs in group_records(records).items():
        group = build_group(prompt_id, recs)
        weights, adjusted = adjust_group(group, kind, args.epsilon)
        for k, rec in enumerate(recs):
            extra[rec.line] = {"weight": float(weights.values[k]), "adjusted_reward": float(adjusted[k])}
    lines = [dumps({**rec.data, **extra[rec.line]}) for rec in records]
    atomic_write_text(args.output, "".join(line + "\n" for line in lines))
    log.info("adjusted %d completions in %d prompts", len(records), len(group_records(records)))
    return 0


def cmd_analyze(args) -> int:
    errors: list = []
    groups = ingest_completions(args.input, errors=errors, reward_config=_reward_config(args.reward_config))
    for exc in errors:
        log.warning("skipping %s", exc)
    result = analyze_dataset(groups, alpha=args.alpha, method=args.method, seed=args.seed)
    for prompt_id, msg in result.errors:
        log.warning("skipping prompt %r: %s", prompt_id, msg)
    prefix = args.output
    rec_lines = ["prompt_id,n_completions,rho,p_value,degenerate"]
    for r in result.records:
        rec_lines.append(f"{r.prompt_id},{r.n_completions},{r.rho:.17g},{r.p_value:.17g},{int(r.degenerate)}")
    hist_lines = ["bin_left,bin_right,count"] + [f"{lo:.17g},{hi:.17g},{c}" for lo, hi, c in result.histogram]
    atomic_write_text(f"{prefix}_records.csv", "\n".join(rec_lines) + "\n")
    atomic_write_text(f"{prefix}_histogram.csv", "\n".join(hist_lines) + "\n")
    print(f"prompts={len(result.records)}")
    print(f"fraction_insignificant={result.fraction_insignificant:.6f}")
    print(f"fraction_degenerate={result.fraction_degenerate:.6f}")
    return 0


def _simulate_one(config: RunConfig, algorithm: Algorithm) -> str:
    env = config.environment()
    metrics = train(
        env,
        algorithm,
        config.steps,
        group_size=config.group_size,
        learning_rate=config.learning_rate,
        clip=config.clip_epsilon,
        seed=config.seed,
        smi=config.smi_kind,
        epsilon=config.epsilon,
        eval_interval=config.eval_interval,
        eval_batch=config.eval_batch,
        temperature=config.temperature,
    )
    return metrics_to_csv(metrics, env.n_modes)


def sweep_paths(output: str | Path) -> dict[Algorithm, Path]:
    out = Path(output)
    return {alg: out.with_name(f"{out.stem}_{alg.value}{out.suffix or '.csv'}") for alg in Algorithm}


def cmd_simulate(args) -> int:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epsilon is not None:
        overrides["epsilon"] = args.epsilon
    if args.smi is not None:
        overrides["smi"] = args.smi
    if overrides:
        config = RunConfig.from_dict({**config.to_dict(), **overrides})
    if args.sweep:
        for alg, path in sweep_paths(args.output).items():
            atomic_write_text(path, _simulate_one(config, alg))
            log.info("wrote %s", path)
    else:
        atomic_write_text(args.output, _simulate_one(config, config.algorithm_enum))
    return 0


def cmd_bench(args) -> int:
    if args.max_g < 8:
        log.error("--max-g must be >= 8")
        return 1
    result = run_bench(args.max_g, args.repetitions, args.seed)
    atomic_write_text(args.output, result.to_csv())
    for row in result.rows:
        print(f"G={row.group_size:4d}  graphcut={row.graphcut_us:10.2f}us  logdet={row.logdet_us:10.2f}us")
    print(f"graphcut_slope={result.graphcut_slope:.4f}")
    print(f"logdet_slope={result.logdet_slope:.4f}")
    return 0


def cmd_synth(args) -> int:
    groups = synth_groups(args.kind, args.prompts, args.group_size, args.dim, args.seed)
    write_completions(groups, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dragrpo", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--output", required=True)

    p = sub.add_parser("adjust", parents=[common], help="add DRA weights and adjusted rewards to a completions file")
    p.add_argument("input")
    p.add_argument("--smi", default="graphcut", choices=["graphcut", "logdet"])
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--jitter", type=float, default=DEFAULT_JITTER, help="LogDet diagonal jitter")
    p.add_argument("--reward-config", help="run config whose reward fields score lines lacking 'reward'")
    p.set_defaults(func=cmd_adjust)

    p = sub.add_parser("analyze", parents=[common], help="reward-gap vs semantic-distance Spearman study")
    p.add_argument("input")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--method", default="tapprox", choices=[m.value for m in PValueMethod])
    p.add_argument("--reward-config")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", parents=[common], help="train on the toy multi-modal environment")
    p.add_argument("--config", help="flat JSON run config (defaults used when omitted)")
    p.add_argument("--sweep", action="store_true", help="run all four algorithms with shared seeds")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--smi", default=None, choices=["graphcut", "logdet"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common], help="time Graph-Cut vs LogDet weight computation")
    p.add_argument("--max-g", type=int, default=64)
    p.add_argument("--repetitions", type=int, default=50)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic completions file")
    p.add_argument("--kind", choices=["null", "monotone"], required=True)
    p.add_argument("--prompts", type=int, default=500)
    p.add_argument("--group-size", type=int, default=6)
    p.add_argument("--dim", type=int, default=16)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command != "simulate" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except (ParseError, ValidationError, ConfigError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (DraError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
