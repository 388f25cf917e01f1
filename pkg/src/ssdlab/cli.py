"""Command-line front door.

Subcommands: ``eval`` (score a policy over seeds), ``inner`` (one inner
loop), ``search`` (outer-loop configuration search), ``replay``
(re-simulate a trajectory dump), ``metrics`` (metric table from a dump).
Output is a fixed-field table for humans or line-delimited JSON records
(``--format records``) for pipelines; all output is deterministic given
the flags and map files. The run-directory root defaults to the
``SSDLAB_RUN_ROOT`` environment variable, then ``./runs``.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from pathlib import Path

from . import outer_loop
from .errors import SsdlabError
from .games import GAMES, get_game
from .inner_loop import (EvalReport, ExternalCommandSynthesizer, PipelineConfig,
                         IterationSettings, ScriptedSynthesizer, default_config,
                         config_to_record, evaluate_policy, run_inner_loop)
from .maps import load_map
from .metrics import MetricsVector, metrics_from_episode
from .policies import PolicyRef, REGISTRY, default_ref, family_names
from .trajectory import (episode_record_from_dump, replay_lines,
                         trajectory_lines, write_trajectory)

_CLI_OBJECTIVES = {"efficiency": "utilitarian", "maximin": "maximin"}


def _parse_seeds(text: str) -> tuple:
    try:
        seeds = tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("need at least one seed")
    return seeds


def _parse_params(pairs) -> dict:
    params = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise argparse.ArgumentTypeError(f"--param needs key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        params[key.strip()] = float(value)
    return params


def _policy_ref(args) -> PolicyRef:
    ref = default_ref(args.policy)
    overrides = _parse_params(args.param)
    params = dict(ref.params)
    params.update(overrides)
    return PolicyRef(ref.name, params)


def _map_for(args, game):
    if getattr(args, "map", None):
        return load_map(args.map)
    return game.default_map()


def _print_metrics_table(metrics: MetricsVector, out) -> None:
    header = f"{'U':>10} {'E':>10} {'S':>10} {'P':>10} {'maximin':>10}"
    row = (f"{metrics.u:>10.4f} {metrics.e:>10.4f} {metrics.s:>10.2f} "
           f"{metrics.p:>10.4f} {metrics.maximin:>10.2f}")
    print(header, file=out)
    print(row, file=out)


def _print_eval(report: EvalReport, args, out) -> None:
    if args.format == "records":
        record = {
            "kind": "eval",
            "game": args.game,
            "policy": args.policy,
            "seeds": list(report.seeds),
            "mean_returns": list(report.mean_returns),
            "per_seed_returns": [list(r) for r in report.per_seed_returns],
            "metrics": report.metrics.record(),
        }
        print(json.dumps(record, sort_keys=True), file=out)
        return
    print(f"game={args.game} policy={args.policy} "
          f"seeds={','.join(str(s) for s in report.seeds)}", file=out)
    print(f"{'agent':>6} {'return':>12}", file=out)
    for i, value in enumerate(report.mean_returns):
        print(f"{i:>6} {value:>12.3f}", file=out)
    _print_metrics_table(report.metrics, out)


def cmd_eval(args, out) -> int:
    game = get_game(args.game)
    ref = _policy_ref(args)
    report = evaluate_policy(ref, game, args.seeds, _map_for(args, game))
    _print_eval(report, args, out)
    return 0


def cmd_inner(args, out) -> int:
    game = get_game(args.game)
    objective = _CLI_OBJECTIVES[args.objective]
    base = default_config(args.game)
    ref = _policy_ref(args) if args.policy else base.policy
    config = PipelineConfig(
        prompt=base.prompt,
        policy=ref,
        feedback=base.feedback,
        helpers=base.helpers,
        iteration=IterationSettings(
            inner_iterations=args.k,
            eval_seeds=args.seeds,
            retry_budget=args.retries,
        ),
    )
    synthesizer = _make_synthesizer(args)
    result = run_inner_loop(synthesizer, game, config, objective,
                            map_cfg=_map_for(args, game), log_path=args.log)
    if args.format == "records":
        record = {
            "kind": "inner-result",
            "best_policy": result.best_policy.record(),
            "best_index": result.best_index,
            "score": result.best_report.objective_score(objective),
            "metrics": result.best_report.metrics.record(),
            "iterations": [entry.record() for entry in result.log],
        }
        print(json.dumps(record, sort_keys=True), file=out)
    else:
        print(f"best iterate: {result.best_index} "
              f"policy={result.best_policy.name} "
              f"params={json.dumps(result.best_policy.params, sort_keys=True)}",
              file=out)
        for entry in result.log:
            status = "skipped" if entry.skipped else f"score={entry.score:.4f}"
            print(f"  iter {entry.index}: {status}", file=out)
        _print_metrics_table(result.best_report.metrics, out)
    return 0


def _make_synthesizer(args):
    if getattr(args, "synth_cmd", None):
        return ExternalCommandSynthesizer(shlex.split(args.synth_cmd),
                                          timeout=args.synth_timeout)
    return ScriptedSynthesizer(seed=args.synth_seed)


def _run_root() -> Path:
    return Path(os.environ.get("SSDLAB_RUN_ROOT", "runs"))


def _pick_run_dir(args) -> Path:
    if args.run_dir:
        return Path(args.run_dir)
    base = _run_root() / f"search-{args.game}-{args.objective}"
    path = base
    counter = 1
    while path.exists():
        path = Path(f"{base}-{counter}")
        counter += 1
    return path


def cmd_search(args, out) -> int:
    game = get_game(args.game)
    objective = _CLI_OBJECTIVES[args.objective]
    config = default_config(args.game)
    if args.policy:
        config = PipelineConfig(config.prompt, _policy_ref(args),
                                config.feedback, config.helpers,
                                config.iteration)
    if args.proposer_cmd:
        run_dir = _pick_run_dir(args)
        proposer = outer_loop.ExternalProposer(
            shlex.split(args.proposer_cmd), run_dir / "proposer",
            timeout=args.proposer_timeout)
    else:
        run_dir = _pick_run_dir(args)
        proposer = outer_loop.MutationProposer(seed=args.proposer_seed)
    result = outer_loop.run_outer_loop(
        proposer, _make_synthesizer(args), game, objective, config,
        max_iterations=args.iters, tau=args.tau,
        held_out_seeds=args.held_out_seeds,
        map_cfg=_map_for(args, game), run_dir=run_dir)
    if args.format == "records":
        record = {
            "kind": "search-result",
            "run_dir": str(result.run_dir),
            "best_score": result.best_score,
            "best_policy": result.best_policy.record(),
            "best_config": config_to_record(result.best_config),
            "metrics": result.best_report.metrics.record(),
            "kept": [entry.kept for entry in result.history],
        }
        print(json.dumps(record, sort_keys=True), file=out)
    else:
        print(f"run dir: {result.run_dir}", file=out)
        kept = sum(1 for entry in result.history[1:] if entry.kept)
        print(f"iterations: {len(result.history) - 1} (kept {kept})", file=out)
        print(f"best J*={result.best_score:.4f} "
              f"policy={result.best_policy.name} "
              f"params={json.dumps(result.best_policy.params, sort_keys=True)}",
              file=out)
        _print_metrics_table(result.best_report.metrics, out)
    return 0


def cmd_replay(args, out) -> int:
    if args.trajectory:
        lines = replay_lines(args.trajectory)
    else:
        if not args.policy or args.seed is None:
            print("replay needs --trajectory or both --policy and --seed",
                  file=sys.stderr)
            return 2
        game = get_game(args.game)
        lines = trajectory_lines(args.game, _map_for(args, game),
                                 _policy_ref(args), args.seed)
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {len(lines)} lines to {args.out}", file=out)
    else:
        for line in lines:
            print(line, file=out)
    return 0


def cmd_metrics(args, out) -> int:
    record = episode_record_from_dump(args.trajectory)
    metrics = metrics_from_episode(record)
    if args.format == "records":
        print(json.dumps({"kind": "metrics", "metrics": metrics.record(),
                          "returns": list(record.returns)},
                         sort_keys=True), file=out)
    else:
        _print_metrics_table(metrics, out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssdlab",
        description="Sequential social dilemma laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_policy=True):
        p.add_argument("--game", choices=sorted(GAMES), required=True)
        p.add_argument("--map", help="map config file (defaults to the "
                                     "packaged map for the game)")
        p.add_argument("--format", choices=("table", "records"),
                       default="table")
        if with_policy:
            p.add_argument("--policy", help="policy family name")
            p.add_argument("--param", action="append", metavar="KEY=VALUE",
                           help="override one policy parameter (repeatable)")

    p_eval = sub.add_parser("eval", help="evaluate a policy over seeds")
    add_common(p_eval)
    p_eval.add_argument("--seeds", type=_parse_seeds, default=(1, 2, 3, 4, 5))
    p_eval.set_defaults(func=cmd_eval, policy_required=True)

    p_inner = sub.add_parser("inner", help="run one inner loop")
    add_common(p_inner)
    p_inner.add_argument("--objective", choices=sorted(_CLI_OBJECTIVES),
                         default="efficiency")
    p_inner.add_argument("--k", type=int, default=3, help="inner iterations")
    p_inner.add_argument("--seeds", type=_parse_seeds, default=(1, 2, 3, 4, 5))
    p_inner.add_argument("--retries", type=int, default=3)
    p_inner.add_argument("--synth-seed", type=int, default=0)
    p_inner.add_argument("--synth-cmd", help="external synthesizer command")
    p_inner.add_argument("--synth-timeout", type=float, default=60.0)
    p_inner.add_argument("--log", help="append iteration records to this file")
    p_inner.set_defaults(func=cmd_inner)

    p_search = sub.add_parser("search", help="outer-loop configuration search")
    add_common(p_search)
    p_search.add_argument("--objective", choices=sorted(_CLI_OBJECTIVES),
                          required=True)
    p_search.add_argument("--iters", type=int, default=20)
    p_search.add_argument("--tau", type=float, default=0.0)
    p_search.add_argument("--held-out-seeds", type=_parse_seeds,
                          default=outer_loop.DEFAULT_HELD_OUT_SEEDS)
    p_search.add_argument("--run-dir")
    p_search.add_argument("--proposer-seed", type=int, default=0)
    p_search.add_argument("--proposer-cmd", help="external proposer command")
    p_search.add_argument("--proposer-timeout", type=float, default=300.0)
    p_search.add_argument("--synth-seed", type=int, default=0)
    p_search.add_argument("--synth-cmd")
    p_search.add_argument("--synth-timeout", type=float, default=60.0)
    p_search.set_defaults(func=cmd_search)

    p_replay = sub.add_parser("replay", help="re-simulate a trajectory dump")
    add_common(p_replay)
    p_replay.add_argument("--trajectory", help="existing dump to replay")
    p_replay.add_argument("--seed", type=int)
    p_replay.add_argument("--out", help="write the dump here instead of stdout")
    p_replay.set_defaults(func=cmd_replay)

    p_metrics = sub.add_parser("metrics", help="metrics from a trajectory dump")
    p_metrics.add_argument("--trajectory", required=True)
    p_metrics.add_argument("--format", choices=("table", "records"),
                           default="table")
    p_metrics.set_defaults(func=cmd_metrics)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "policy_required", False) and not args.policy:
        print("eval needs --policy; known families:", file=sys.stderr)
        for name in family_names():
            print(f"  {name} ({REGISTRY[name].game})", file=sys.stderr)
        return 2
    try:
        return args.func(args, sys.stdout)
    except SsdlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if "unknown policy family" in str(exc):
            print("known families:", file=sys.stderr)
            for name in family_names():
                print(f"  {name} ({REGISTRY[name].game})", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
