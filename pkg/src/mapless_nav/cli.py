"""Command-line entry point: ``mapless-nav {gen,run,bench,plot,replay}``.

Exit status is 0 on success, 1 on invalid input (bad config, unreadable
world, excluded benchmark episodes, replay mismatch) and 2 when a remote
backend fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .llm_client import ClientConfig, LLMClient, LLMError, Transcript
from .runner import (
    EpisodeAborted,
    EpisodeConfig,
    InvalidEpisode,
    ReplayMismatch,
    TrajectoryLog,
    load_config,
    load_suite,
    replay_episode,
    run_benchmark,
    run_episode,
)
from .svg import render_trajectory_svg
from .worldgen import GeneratorParams, InfeasibleParams, generate_world
from .world import InvalidWorld, dumps_world, load_world

EXIT_OK, EXIT_INVALID, EXIT_BACKEND = 0, 1, 2


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="episode config file (JSON, fields of EpisodeConfig)")
    p.add_argument("--seed", type=int, help="rng seed")
    p.add_argument("--backend", choices=("oracle", "heuristic", "remote"))
    p.add_argument("--memory", dest="memory", action="store_true", default=None, help="enable the memory queue")
    p.add_argument("--no-memory", dest="memory", action="store_false", help="disable the memory queue")
    p.add_argument("--views", type=int, choices=(6, 3))
    p.add_argument("--n", type=int, help="memory queue capacity")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="mapless-nav", description="Mapless object-goal navigation on grid worlds.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a world file")
    gen.add_argument("--params", help="generator parameters (JSON file)")
    gen.add_argument("--deceptive", action="store_true")
    gen.add_argument("--target")
    gen.add_argument("--count", type=int, default=1, help="number of consecutive seeds to generate")

    run = sub.add_parser("run", parents=[common], help="run one episode")
    run.add_argument("--world", help="world file (overrides the config)")
    run.add_argument("--world-seed", type=int, help="generate the world from this seed")
    run.add_argument("--target")
    run.add_argument("--max-steps", type=int)
    run.add_argument("--transcript", help="remote backend: transcript file to record to or replay from")
    run.add_argument("--replay-transcript", action="store_true", help="answer remote calls from --transcript only")

    bench = sub.add_parser("bench", parents=[common], help="run a benchmark suite")
    bench.add_argument("suite", help="suite file or shipped suite name (deadlock, ablation)")
    bench.add_argument("--workers", type=int, default=1)

    plot = sub.add_parser("plot", parents=[common], help="render a trajectory log as SVG")
    plot.add_argument("log", help="trajectory log (.jsonl)")
    plot.add_argument("--world", help="world file; defaults to the world named in the log")

    rep = sub.add_parser("replay", parents=[common], help="recompute metrics from trajectory logs")
    rep.add_argument("logs", nargs="+", help="trajectory logs (.jsonl)")
    rep.add_argument("--world", help="world file; defaults to the world named in each log")
    return parser


def _overrides(args) -> dict:
    out = {}
    for name in ("seed", "backend", "memory", "views", "n", "target", "max_steps", "world", "world_seed"):
        value = getattr(args, name, None)
        if value is not None:
            out[name] = value
    return out


def _episode_config(args) -> EpisodeConfig:
    base = load_config(args.config).to_dict() if args.config else {}
    cfg = {**base, **_overrides(args)}
    if "world" in _overrides(args):
        cfg["world_seed"] = None
    return EpisodeConfig.from_dict(cfg)


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _world_for_log(args, log: TrajectoryLog):
    if getattr(args, "world", None):
        return load_world(args.world)
    return EpisodeConfig.from_dict(log.header["config"]).load_world()


def cmd_gen(args) -> int:
    params = json.loads(Path(args.params).read_text()) if args.params else {}
    if args.deceptive:
        params["deceptive"] = True
    if args.target:
        params["target"] = args.target
    p = GeneratorParams.from_dict(params)
    seed = args.seed if args.seed is not None else 0
    out = _out_dir(args)
    for s in range(seed, seed + args.count):
        text = dumps_world(generate_world(s, p))
        if out is None:
            sys.stdout.write(text)
        else:
            (out / f"world_{s:04d}.json").write_text(text)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _episode_config(args)
    client = None
    if cfg.backend == "remote":
        if args.replay_transcript:
            if not args.transcript:
                raise ValueError("--replay-transcript needs --transcript")
            client = LLMClient(ClientConfig.from_env(), mode="replay", transcript=Transcript.load(args.transcript))
        else:
            path = Path(args.transcript) if args.transcript else None
            client = LLMClient(ClientConfig.from_env(), transcript=Transcript(path=path))
    world = cfg.load_world()
    try:
        result, log = run_episode(cfg, world=world, client=client)
    finally:
        if client is not None:
            client.close()
    print(json.dumps(result.to_dict(), sort_keys=True))
    out = _out_dir(args)
    if out is not None:
        log.save(out / "trajectory.jsonl")
        (out / "trajectory.svg").write_text(render_trajectory_svg(world, log))
        (out / "result.json").write_text(json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    suite = load_suite(args.suite)
    overrides = _overrides(args)
    if overrides:
        suite = replace(suite, base={**suite.base, **overrides})
    bench = run_benchmark(suite, workers=args.workers, out_dir=_out_dir(args))
    sys.stdout.write(bench.table())
    for name, cfg, error in bench.invalid:
        print(f"excluded [{name}] world_seed={cfg['world_seed']} seed={cfg['seed']}: {error}", file=sys.stderr)
    if any("EpisodeAborted" in e for _, _, e in bench.invalid):
        return EXIT_BACKEND
    return EXIT_INVALID if bench.invalid else EXIT_OK


def cmd_plot(args) -> int:
    log = TrajectoryLog.load(args.log)
    svg = render_trajectory_svg(_world_for_log(args, log), log)
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(svg)
    else:
        (out / (Path(args.log).stem + ".svg")).write_text(svg)
    return EXIT_OK


def cmd_replay(args) -> int:
    status = EXIT_OK
    for path in args.logs:
        log = TrajectoryLog.load(path)
        result = replay_episode(_world_for_log(args, log), log)
        logged = log.result()
        match = logged is not None and logged["result"] == result.to_dict()
        print(json.dumps({"log": path, "match": match, **result.to_dict()}, sort_keys=True))
        if not match:
            status = EXIT_INVALID
    return status


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "bench": cmd_bench, "plot": cmd_plot, "replay": cmd_replay}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (EpisodeAborted, LLMError) as exc:
        print(f"error: backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (InvalidEpisode, InvalidWorld, InfeasibleParams, ReplayMismatch, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
