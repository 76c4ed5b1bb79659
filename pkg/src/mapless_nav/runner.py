"""Episode loop, trajectory logs, replay and benchmark suites.

One waypoint of the loop::

    views  = capture_panorama(world, pose)
    lds,gs = parse six local descriptions + one global summary
    r_t    = decide(policy, lds, gs, queue)      # queue consulted only when full
    queue.push(gs)
    leg    = execute_leg(world, pose, r_t)

The episode ends when the controller issues Stop or the step budget runs out.
Every primitive action counts as one step.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

from .controller import LEG_LENGTH, SUCCESS_THRESHOLD, Termination, execute_leg
from .decision import DecisionResult, PriorPolicy, PriorWeights, RemotePolicy, decide, memory_penalty, oracle_policy
from .llm_client import ClientConfig, LLMClient, LLMError
from .memory import DEFAULT_CAPACITY, MemoryQueue
from .metrics import R_ESCAPE, EpisodeResult, MetricsReport, is_escape, report
from .perception import MAX_RANGE, OracleParser, RemoteParser, capture_panorama, parse_panorama
from .worldgen import GeneratorParams, generate_world
from .world import (
    HEADINGS,
    Action,
    GridWorld,
    InvalidWorld,
    Pose,
    Unreachable,
    distance_to_nearest_target,
    load_world,
    shortest_path_length,
    step,
)

logger = logging.getLogger(__name__)

LOG_SCHEMA = "mapless_nav.trajectory"
LOG_VERSION = 1
BACKENDS = ("oracle", "heuristic", "remote")


class InvalidEpisode(ValueError):
    """The episode cannot be scored (unreachable or absent target, bad config)."""


class EpisodeAborted(RuntimeError):
    """A remote backend failed; the episode is neither a success nor a navigation failure."""


@dataclass(frozen=True)
class EpisodeConfig:
    world: str | None = None
    world_seed: int | None = None
    world_params: dict | None = None
    target: str | None = None
    backend: str = "heuristic"
    memory: bool = True
    n: int = DEFAULT_CAPACITY
    views: int = 6
    k: int = LEG_LENGTH
    max_steps: int = 500
    success_threshold: float = SUCCESS_THRESHOLD
    r_escape: float = R_ESCAPE
    seed: int | None = None
    start_jitter: float = 0.75
    max_range: float = MAX_RANGE
    prompt_mode: str = "decoupled"
    weights: dict | None = None

    def __post_init__(self):
        if self.views not in (3, 6):
            raise ValueError("views must be 3 or 6")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.n < 1:
            raise ValueError("queue capacity n must be >= 1")
        if self.prompt_mode not in ("decoupled", "one_step"):
            raise ValueError("prompt_mode must be 'decoupled' or 'one_step'")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> EpisodeConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def load_world(self) -> GridWorld:
        if self.world is not None:
            world = load_world(self.world)
        elif self.world_seed is not None:
            world = generate_world(self.world_seed, GeneratorParams.from_dict(self.world_params or {}))
        else:
            raise InvalidEpisode("config names neither a world file nor a generator seed")
        if self.target and self.target != world.target_category:
            world = replace(world, target_category=self.target)
        return world


def load_config(path: str | Path) -> EpisodeConfig:
    return EpisodeConfig.from_dict(json.loads(Path(path).read_text()))


def build_backends(cfg: EpisodeConfig, target: str, client: LLMClient | None = None):
    weights = PriorWeights(**cfg.weights) if cfg.weights else None
    if cfg.backend == "oracle":
        return OracleParser(), oracle_policy(target)
    if cfg.backend == "heuristic":
        return OracleParser(), PriorPolicy(target, weights or PriorWeights())
    if client is None:
        client = LLMClient(ClientConfig.from_env())
    return RemoteParser(client), RemotePolicy(client, target, cfg.prompt_mode, fallback=PriorPolicy(target, weights or PriorWeights()))


def start_pose(world: GridWorld, cfg: EpisodeConfig) -> Pose:
    """The world's start pose, or a seeded jitter of it within the start room."""
    if cfg.seed is None:
        return world.start
    rng = random.Random(cfg.seed)
    home = world.start.cell(world.cell_size)
    room = world.room_at(home)
    targets = {o.position for o in world.instances(world.target_category)}
    reach = (cfg.start_jitter / world.cell_size) ** 2
    cells = sorted(
        (c for c in room.cells if c not in targets and (c[0] - home[0]) ** 2 + (c[1] - home[1]) ** 2 <= reach),
        key=lambda c: (c[1], c[0]),
    )
    cell = rng.choice(cells or [home])
    return Pose.at(cell, rng.choice(HEADINGS), 0, world.cell_size)


# --------------------------------------------------------------------------
# Trajectory log
# --------------------------------------------------------------------------


def _line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


@dataclass
class TrajectoryLog:
    """Line-delimited JSON: a header line, then step/waypoint records, then the result."""

    header: dict
    records: list[dict] = field(default_factory=list)

    def dumps(self) -> str:
        return "".join(_line(r) + "\n" for r in [self.header, *self.records])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> TrajectoryLog:
        lines = [json.loads(ln) for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].get("schema") != LOG_SCHEMA:
            raise ValueError("not a trajectory log")
        if lines[0].get("version") != LOG_VERSION:
            raise ValueError(f"unsupported trajectory log version {lines[0].get('version')}")
        return cls(lines[0], lines[1:])

    @classmethod
    def load(cls, path: str | Path) -> TrajectoryLog:
        return cls.loads(Path(path).read_text())

    def steps(self) -> list[dict]:
        return [r for r in self.records if r["type"] == "step"]

    def waypoints(self) -> list[dict]:
        return [r for r in self.records if r["type"] == "waypoint"]

    def result(self) -> dict | None:
        return next((r for r in self.records if r["type"] == "result"), None)

    def start(self) -> Pose:
        return Pose(*self.header["start"])

    def positions(self) -> list[tuple[float, float]]:
        pts = [tuple(self.header["start"][:2])]
        for r in self.steps():
            p = tuple(r["pose"][:2])
            if p != pts[-1]:
                pts.append(p)
        return pts


def run_episode(
    cfg: EpisodeConfig, *, world: GridWorld | None = None, client: LLMClient | None = None
) -> tuple[EpisodeResult, TrajectoryLog]:
    world = world if world is not None else cfg.load_world()
    target = cfg.target or world.target_category
    if target != world.target_category:
        world = replace(world, target_category=target)
    pose = start_pose(world, cfg)
    try:
        ell = distance_to_nearest_target(world, pose, target)
    except (Unreachable, InvalidWorld) as exc:
        raise InvalidEpisode(str(exc)) from exc
    if ell <= 0:
        raise InvalidEpisode("episode starts on a target instance")

    parser, policy = build_backends(cfg, target, client)
    queue = MemoryQueue(cfg.n)
    log = TrajectoryLog(
        {
            "schema": LOG_SCHEMA,
            "version": LOG_VERSION,
            "world_digest": world.digest(),
            "target": target,
            "start": pose.as_list(),
            "cell_size": world.cell_size,
            "success_threshold": cfg.success_threshold,
            "r_escape": cfg.r_escape,
            "config": cfg.to_dict(),
        }
    )
    steps, moves, timestep, stopped = 0, 0, 0, False
    try:
        while steps < cfg.max_steps and not stopped:
            timestep += 1
            views = capture_panorama(world, pose, max_range=cfg.max_range, views=cfg.views)
            lds, gs = parse_panorama(parser, views, target, timestep)
            decision = decide(policy, lds, gs, queue if cfg.memory else None)
            log.records.append(
                {
                    "type": "waypoint",
                    "timestep": timestep,
                    "pose": pose.as_list(),
                    "lds": [None if ld is None else ld.digest() for ld in lds],
                    "gs": gs.to_dict(),
                    "queue": [e.to_dict() for e in queue.snapshot()],
                    "full": queue.full,
                    "decision": decision.to_dict(),
                    "penalty": _chosen_penalty(lds[decision.sector - 1], queue),
                }
            )
            queue.push(gs)
            leg = execute_leg(
                world,
                pose,
                decision,
                cfg.max_steps - steps,
                target=target,
                k=cfg.k,
                threshold=cfg.success_threshold,
                max_range=cfg.max_range,
            )
            for action, p, moved in zip(leg.actions, leg.poses, leg.moved):
                steps += 1
                moves += moved
                log.records.append({"type": "step", "step": steps, "t": timestep, "action": action.value, "pose": p.as_list(), "moved": moved})
            log.records[-1 - len(leg.actions)]["leg"] = leg.terminated.value
            pose = leg.end_pose
            stopped = leg.terminated is Termination.StoppedAtTarget
    except LLMError as exc:
        raise EpisodeAborted(f"remote backend failed at waypoint {timestep}: {exc}") from exc

    result = _score(world, log.start(), pose, target, moves, steps, stopped, cfg.success_threshold, cfg.r_escape)
    log.records.append({"type": "result", "result": result.to_dict()})
    return result, log


def _chosen_penalty(ld, queue: MemoryQueue) -> float | None:
    """Memory penalty of the chosen sector once the queue is full, else None.

    Computed whether or not the policy consulted the queue, so the memory-less
    baseline is measured against the same yardstick.
    """
    if not queue.full or ld is None:
        return None
    return memory_penalty(ld, queue.snapshot())


def revisit_count(log: TrajectoryLog) -> int:
    """Decisions that picked a sector identical to a remembered waypoint (penalty 1.0)."""
    return sum(wp["penalty"] == 1.0 for wp in log.waypoints())


def mean_chosen_penalty(log: TrajectoryLog) -> float | None:
    vals = [wp["penalty"] for wp in log.waypoints() if wp["penalty"] is not None]
    return math.fsum(vals) / len(vals) if vals else None


def _score(world, start: Pose, end: Pose, target, moves, steps, stopped, threshold, r_escape) -> EpisodeResult:
    final_dts = distance_to_nearest_target(world, end, target)
    back = shortest_path_length(world, start.cell(world.cell_size), end.cell(world.cell_size))
    return EpisodeResult(
        success=bool(stopped and final_dts <= threshold),
        rho=moves * world.cell_size,
        ell=distance_to_nearest_target(world, start, target),
        final_dts=final_dts,
        start_final_geodesic=back,
        escaped=is_escape(back, r_escape),
        steps=steps,
    )


# --------------------------------------------------------------------------
# Replay
# --------------------------------------------------------------------------


class ReplayMismatch(ValueError):
    pass


def replay_episode(world: GridWorld, log: TrajectoryLog) -> EpisodeResult:
    """Recompute the episode result by re-stepping the logged actions; no policy involved."""
    if log.header["world_digest"] != world.digest():
        raise ReplayMismatch("trajectory log was recorded on a different world")
    target = log.header["target"]
    if target != world.target_category:
        world = replace(world, target_category=target)
    pose = log.start()
    moves = steps = 0
    stopped = False
    for rec in log.steps():
        pose, outcome = step(world, pose, Action(rec["action"]))
        if pose.as_list() != rec["pose"]:
            raise ReplayMismatch(f"step {rec['step']}: replayed pose {pose.as_list()} != logged {rec['pose']}")
        steps += 1
        moves += outcome.moved
        stopped = outcome.stopped
    return _score(world, log.start(), pose, target, moves, steps, stopped, log.header["success_threshold"], log.header["r_escape"])


def replay_decisions(world: GridWorld, log: TrajectoryLog) -> list[Pose]:
    """Feed the logged decisions back through the controller; returns every pose visited."""
    cfg = log.header["config"]
    target = log.header["target"]
    if target != world.target_category:
        world = replace(world, target_category=target)
    pose = log.start()
    poses, used = [], 0
    for wp in log.waypoints():
        leg = execute_leg(
            world,
            pose,
            DecisionResult.from_dict(wp["decision"]),
            cfg["max_steps"] - used,
            target=target,
            k=cfg["k"],
            threshold=cfg["success_threshold"],
            max_range=cfg["max_range"],
        )
        used += len(leg.actions)
        poses.extend(leg.poses)
        pose = leg.end_pose
    return poses


# --------------------------------------------------------------------------
# Benchmarks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Suite:
    name: str
    worlds: dict
    episode_seeds: tuple
    conditions: dict
    base: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> Suite:
        return cls(d["name"], d["worlds"], tuple(d.get("episode_seeds", [None])), d["conditions"], d.get("base", {}))

    def cells(self) -> list[tuple[str, EpisodeConfig]]:
        if "files" in self.worlds:
            sources = [{"world": f} for f in self.worlds["files"]]
        else:
            params = self.worlds.get("generator", {})
            sources = [{"world_seed": s, "world_params": params} for s in self.worlds.get("seeds", [])]
        out = []
        for name, overrides in self.conditions.items():
            for src in sources:
                for seed in self.episode_seeds:
                    out.append((name, EpisodeConfig.from_dict({**self.base, **src, **overrides, "seed": seed})))
        return out


def load_suite(name_or_path: str | Path) -> Suite:
    """Load a suite file, or one of the shipped suites by name (``deadlock``, ``ablation``)."""
    path = Path(name_or_path)
    if path.exists():
        text = path.read_text()
    else:
        text = resources.files("mapless_nav").joinpath(f"data/suites/{name_or_path}.json").read_text()
    return Suite.from_dict(json.loads(text))


@dataclass
class BenchmarkResult:
    suite: str
    reports: dict[str, MetricsReport]
    results: dict[str, list[EpisodeResult]]
    invalid: list[tuple[str, dict, str]] = field(default_factory=list)

    def table(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["condition", *MetricsReport.COLUMNS])
        for name, rep in self.reports.items():
            writer.writerow([name, *rep.row()])
        return buf.getvalue()


def _run_cell(cfg: EpisodeConfig) -> tuple[EpisodeResult | None, str | None]:
    try:
        result, _ = run_episode(cfg)
        return result, None
    except (InvalidEpisode, EpisodeAborted, InvalidWorld, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_benchmark(suite: Suite, *, workers: int = 1, out_dir: str | Path | None = None) -> BenchmarkResult:
    cells = suite.cells()
    if not cells:
        raise ValueError(f"suite {suite.name!r} has no cells")
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_run_cell, [cfg for _, cfg in cells]))
    else:
        outcomes = [_run_cell(cfg) for _, cfg in cells]
    results: dict[str, list[EpisodeResult]] = {name: [] for name in suite.conditions}
    invalid = []
    for (name, cfg), (result, error) in zip(cells, outcomes):
        if result is None:
            logger.warning("excluded %s cell %s: %s", name, cfg, error)
            invalid.append((name, cfg.to_dict(), error))
        else:
            results[name].append(result)
    reports = {name: report(rs) for name, rs in results.items() if rs}
    bench = BenchmarkResult(suite.name, reports, results, invalid)
    if out_dir is not None:
        _write_outputs(bench, cells, outcomes, Path(out_dir))
    return bench


def _write_outputs(bench: BenchmarkResult, cells, outcomes, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{bench.suite}_metrics.csv").write_text(bench.table())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = [f.name for f in fields(EpisodeResult) if f.name != "trajectory"]
    writer.writerow(["condition", "world_seed", "world", "seed", *cols, "error"])
    for (name, cfg), (result, error) in zip(cells, outcomes):
        values = [] if result is None else [getattr(result, c) for c in cols]
        values = values or [""] * len(cols)
        writer.writerow([name, cfg.world_seed, cfg.world, cfg.seed, *values, error or ""])
    (out / f"{bench.suite}_episodes.csv").write_text(buf.getvalue())
