"""Panoramic scene parsing over the symbolic simulator.

The six directional views are 60 degree wedges. Sector 1 is centred on the
agent heading and sectors advance counterclockwise, so sector ``i`` is centred
on ``heading + 60 * (i - 1)``. Entity bearings are measured clockwise from the
sector centre (negative = left of centre) and lie in ``[-30, 30)``.

Angles are handled as integer micro-degrees so that sector assignment and
bearings are bit-identical under rotations of the agent by multiples of 60.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np

from .llm_client import LLMClient, extract_json, render_parse_prompt
from .priors import UNKNOWN_ROOM, PriorTable, default_priors
from .world import GridWorld, Pose, check_pose, heading_axis

logger = logging.getLogger(__name__)

MAX_RANGE = 5.0
SCAFFOLD_SHAPE = (6, 6)
RICHNESS_CAP = 8
FORWARD_SECTORS = (6, 1, 2)
ALL_SECTORS = (1, 2, 3, 4, 5, 6)

_MICRO = 1_000_000
_FULL = 360 * _MICRO
_HALF_SECTOR = 30 * _MICRO
_SECTOR = 60 * _MICRO


@dataclass(frozen=True)
class Entity:
    category: str
    range: float
    bearing: float
    instance: int = -1


@dataclass(frozen=True)
class DirectionalView:
    sector: int
    entities: tuple[Entity, ...] = ()
    wall_distance_ahead: float | None = None
    room_cells: tuple[tuple[str, int], ...] = ()


@dataclass(frozen=True)
class ScaffoldGrid:
    rows: int
    cols: int
    anchors: dict[int, tuple[int, int]] = field(default_factory=dict)


RELATION_KINDS = ("closer_than", "farther_than", "left_of", "right_of", "above", "below")


@dataclass(frozen=True, order=True)
class Relation:
    a: int
    b: int
    kind: str
    magnitude: float | None = None


@dataclass(frozen=True)
class SpatialRelationGraph:
    nodes: tuple[int, ...] = ()
    edges: tuple[Relation, ...] = ()

    def holds(self, kind: str, a: int, b: int) -> bool:
        return any(e.kind == kind and e.a == a and e.b == b for e in self.edges)

    def triples(self) -> set[tuple[int, int, str]]:
        return {(e.a, e.b, e.kind) for e in self.edges}


@dataclass(frozen=True)
class LocalDescription:
    sector: int
    entities: tuple[Entity, ...]
    relations: SpatialRelationGraph
    room_type_guess: str
    target_likelihood: float
    richness: float
    text: str
    clearance: float | None = None
    observation: str = ""

    @property
    def categories(self) -> frozenset[str]:
        return frozenset(e.category for e in self.entities)

    def digest(self) -> dict:
        return {
            "sector": self.sector,
            "room": self.room_type_guess,
            "likelihood": self.target_likelihood,
            "richness": self.richness,
            "categories": sorted(self.categories),
        }


@dataclass(frozen=True)
class GlobalSummary:
    timestep: int
    room_type: str
    inventory: frozenset[str]
    text: str

    def to_dict(self) -> dict:
        return {"timestep": self.timestep, "room_type": self.room_type, "inventory": sorted(self.inventory), "text": self.text}

    @classmethod
    def from_dict(cls, d: dict) -> GlobalSummary:
        return cls(int(d["timestep"]), d["room_type"], frozenset(d["inventory"]), d["text"])


class ParserBackend(Protocol):
    def parse_local(self, view: DirectionalView, scaffold: ScaffoldGrid, target: str) -> LocalDescription: ...

    def summarize(self, descriptions: Sequence[LocalDescription | None], timestep: int) -> GlobalSummary: ...


# --------------------------------------------------------------------------
# Visibility
# --------------------------------------------------------------------------


def _bresenham(dx: int, dy: int) -> list[tuple[int, int]]:
    """Cells on the line from (0, 0) to (dx, dy), excluding the origin."""
    cells = []
    x, y = 0, 0
    sx, sy = (1 if dx > 0 else -1), (1 if dy > 0 else -1)
    ax, ay = abs(dx), abs(dy)
    err = ax - ay
    while (x, y) != (dx, dy):
        e2 = 2 * err
        if e2 > -ay:
            err -= ay
            x += sx
        if e2 < ax:
            err += ax
            y += sy
        cells.append((x, y))
    return cells


@lru_cache(maxsize=8)
def _ray_template(max_cells_sq: int):
    """Offsets within range, their line-of-sight paths, angles and squared lengths."""
    radius = math.isqrt(max_cells_sq)
    offsets, starts, path = [], [], []
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if (dx, dy) == (0, 0) or dx * dx + dy * dy > max_cells_sq:
                continue
            offsets.append((dx, dy))
            starts.append(len(path))
            path.extend(_bresenham(dx, dy))
    offsets_arr = np.array(offsets, dtype=np.int64)
    angles = np.array(
        [round(math.degrees(math.atan2(dy, dx)) * _MICRO) % _FULL for dx, dy in offsets], dtype=np.int64
    )
    sq = (offsets_arr**2).sum(axis=1)
    return radius, offsets_arr, np.array(starts, dtype=np.int64), np.array(path, dtype=np.int64), angles, sq


def _max_cells_sq(world: GridWorld, max_range: float) -> int:
    return int(math.floor((max_range / world.cell_size) ** 2 + 1e-9))


def _visible(world: GridWorld, cell: tuple[int, int], max_range: float):
    """Visible free cells from ``cell`` (cached per world and origin)."""
    key = ("visible", cell, max_range)
    hit = world._cache.get(key)
    if hit is not None:
        return hit
    radius, offsets, starts, path, angles, sq = _ray_template(_max_cells_sq(world, max_range))
    pad = radius + 1
    padded = np.zeros((world.height + 2 * pad, world.width + 2 * pad), dtype=np.uint8)
    padded[pad:-pad, pad:-pad] = ~world.free_mask
    ox, oy = cell[0] + pad, cell[1] + pad
    blocked = np.add.reduceat(padded[oy + path[:, 1], ox + path[:, 0]], starts) > 0
    keep = ~blocked
    xs = offsets[keep, 0] + cell[0]
    ys = offsets[keep, 1] + cell[1]
    room_ids = _room_id_grid(world)[ys, xs]
    hit = (xs, ys, angles[keep], sq[keep], room_ids)
    world._cache[key] = hit
    return hit


def _room_id_grid(world: GridWorld) -> np.ndarray:
    grid = world._cache.get("room_ids")
    if grid is None:
        grid = np.full((world.height, world.width), -1, dtype=np.int64)
        for i, room in enumerate(world.rooms):
            for x, y in room.cells:
                grid[y, x] = i
        world._cache["room_ids"] = grid
    return grid


def _sector_and_offset(angle_u: np.ndarray, heading: int) -> tuple[np.ndarray, np.ndarray]:
    """Sector index 0..5 and counterclockwise offset from the sector centre, in micro-degrees."""
    rel = (angle_u - heading * _MICRO) % _FULL
    k = -((_HALF_SECTOR - rel) // _SECTOR)  # ceil((rel - 30deg) / 60deg), in 0..6
    offset = rel - k * _SECTOR
    return k % 6, offset


def _clearance(world: GridWorld, cell: tuple[int, int], heading: int, max_range: float) -> float | None:
    dx, dy = heading_axis(heading)
    limit = int(math.floor(max_range / world.cell_size + 1e-9))
    for n in range(1, limit + 1):
        if not world.is_free((cell[0] + n * dx, cell[1] + n * dy)):
            return (n - 1) * world.cell_size
    return None


def capture_panorama(
    world: GridWorld, pose: Pose, *, max_range: float = MAX_RANGE, views: int = 6
) -> list[DirectionalView | None]:
    """Six directional views around ``pose``; with ``views=3`` only sectors 6, 1, 2 are filled."""
    if views not in (3, 6):
        raise ValueError("views must be 3 or 6")
    cell = check_pose(world, pose)
    xs, ys, angles, sq, room_ids = _visible(world, cell, max_range)
    sectors, offsets = _sector_and_offset(angles, pose.heading)

    room_types = [r.room_type for r in world.rooms]
    tallies = [Counter() for _ in range(6)]
    if len(sectors):
        counts = np.bincount(sectors * len(room_types) + room_ids, minlength=6 * len(room_types))
        for k in range(6):
            for rid, n in enumerate(counts[k * len(room_types) : (k + 1) * len(room_types)]):
                if n:
                    tallies[k][room_types[rid]] += int(n)

    by_cell = _objects_by_cell(world)
    entities: list[list[Entity]] = [[] for _ in range(6)]
    for j in np.flatnonzero([(int(x), int(y)) in by_cell for x, y in zip(xs, ys)]):
        k = int(sectors[j])
        rng = math.sqrt(int(sq[j])) * world.cell_size
        bearing = -int(offsets[j]) / _MICRO
        for idx in by_cell[(int(xs[j]), int(ys[j]))]:
            entities[k].append(Entity(world.objects[idx].category, rng, bearing, idx))

    present = ALL_SECTORS if views == 6 else FORWARD_SECTORS
    out: list[DirectionalView | None] = []
    for k in range(6):
        sector = k + 1
        if sector not in present:
            out.append(None)
            continue
        centre = (pose.heading + 60 * k) % 360
        ents = tuple(sorted(entities[k], key=lambda e: (e.range, e.bearing, e.category, e.instance)))
        out.append(
            DirectionalView(
                sector=sector,
                entities=ents,
                wall_distance_ahead=_clearance(world, cell, centre, max_range),
                room_cells=tuple(sorted(tallies[k].items())),
            )
        )
    return out


def _objects_by_cell(world: GridWorld) -> dict[tuple[int, int], list[int]]:
    index = world._cache.get("objects_by_cell")
    if index is None:
        index = {}
        for i, obj in enumerate(world.objects):
            index.setdefault(obj.position, []).append(i)
        world._cache["objects_by_cell"] = index
    return index


# --------------------------------------------------------------------------
# Scaffold and relations
# --------------------------------------------------------------------------


def scaffold(view: DirectionalView, rows: int = SCAFFOLD_SHAPE[0], cols: int = SCAFFOLD_SHAPE[1], max_range: float = MAX_RANGE) -> ScaffoldGrid:
    """Anchor every entity on a rows x cols dot matrix.

    Row 0 is the farthest range band (top of the image), column 0 the leftmost
    bearing band. Entities falling in the same band share an anchor.
    """
    anchors = {}
    for i, e in enumerate(view.entities):
        band = min(rows - 1, int(math.floor(e.range / max_range * rows)))
        col = min(cols - 1, max(0, int(math.floor((e.bearing + 30.0) / 60.0 * cols))))
        anchors[i] = (rows - 1 - band, col)
    return ScaffoldGrid(rows, cols, anchors)


def geometric_relations(view: DirectionalView) -> set[Relation]:
    out = set()
    ents = view.entities
    for i in range(len(ents)):
        for j in range(i + 1, len(ents)):
            ri, rj = ents[i].range, ents[j].range
            if ri == rj:
                continue
            near, far = (i, j) if ri < rj else (j, i)
            gap = abs(rj - ri)
            out.add(Relation(near, far, "closer_than", gap))
            out.add(Relation(far, near, "farther_than", gap))
    return out


def planar_relations(m: ScaffoldGrid) -> set[Relation]:
    """Left/right from anchor columns; above/below only for entities sharing a column."""
    out = set()
    keys = sorted(m.anchors)
    for x, i in enumerate(keys):
        for j in keys[x + 1 :]:
            (ri, ci), (rj, cj) = m.anchors[i], m.anchors[j]
            if ci != cj:
                a, b = (i, j) if ci < cj else (j, i)
                out |= {Relation(a, b, "left_of"), Relation(b, a, "right_of")}
            elif ri != rj:
                a, b = (i, j) if ri < rj else (j, i)
                out |= {Relation(a, b, "above"), Relation(b, a, "below")}
    return out


def parse_spatial_relations(view: DirectionalView, m: ScaffoldGrid) -> SpatialRelationGraph:
    edges = geometric_relations(view) | planar_relations(m)
    return SpatialRelationGraph(tuple(range(len(view.entities))), tuple(sorted(edges, key=lambda e: (e.a, e.b, e.kind))))


# --------------------------------------------------------------------------
# Descriptions
# --------------------------------------------------------------------------


def majority(labels: Counter | dict, default: str = UNKNOWN_ROOM) -> str:
    """Most frequent label; ties go to the lexicographically smallest."""
    if not labels:
        return default
    return min(labels.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def _labels(entities: Sequence[Entity]) -> list[str]:
    totals = Counter(e.category for e in entities)
    seen: Counter = Counter()
    out = []
    for e in entities:
        seen[e.category] += 1
        out.append(e.category if totals[e.category] == 1 else f"{e.category} {seen[e.category]}")
    return out


def _side(bearing: float) -> str:
    if bearing < -10:
        return "to the left"
    if bearing > 10:
        return "to the right"
    return "ahead"


def render_local_text(
    sector: int,
    entities: Sequence[Entity],
    relations: SpatialRelationGraph,
    room: str,
    target: str,
    likelihood: float,
    richness: float,
    clearance: float | None,
) -> str:
    names = _labels(entities)
    parts = [f"Direction {sector}: looks like {room.replace('_', ' ')}."]
    if entities:
        seen = ", ".join(f"{n} {e.range:.2f} m {_side(e.bearing)}" for n, e in zip(names, entities))
        parts.append(f"Visible: {seen}.")
    else:
        parts.append("No objects visible.")
    phrases = [
        f"{names[r.a]} is {r.kind.replace('_', ' ')} {names[r.b]}"
        for r in relations.edges
        if r.kind in ("closer_than", "left_of", "above")
    ]
    if phrases:
        parts.append("Relations: " + "; ".join(phrases) + ".")
    parts.append("Path ahead open." if clearance is None else f"Wall ahead at {clearance:.2f} m.")
    parts.append(f"Likelihood of {target}: {likelihood:.2f}. Information richness: {richness:.2f}.")
    return " ".join(parts)


def render_global_text(timestep: int, room: str, inventory: frozenset[str]) -> str:
    objs = ", ".join(sorted(inventory)) if inventory else "nothing notable"
    return f"Waypoint {timestep}: surroundings look like {room.replace('_', ' ')}; objects around: {objs}."


@dataclass
class OracleParser:
    """Ground-truth parser: reads room labels and objects straight from the view."""

    priors: PriorTable = field(default_factory=default_priors)
    richness_cap: int = RICHNESS_CAP

    def parse_local(self, view: DirectionalView, m: ScaffoldGrid, target: str) -> LocalDescription:
        graph = parse_spatial_relations(view, m)
        room = majority(dict(view.room_cells))
        if any(e.category == target for e in view.entities):
            likelihood = 1.0
        else:
            likelihood = self.priors(room, target)
        richness = min(1.0, len(view.entities) / self.richness_cap)
        text = render_local_text(view.sector, view.entities, graph, room, target, likelihood, richness, view.wall_distance_ahead)
        return LocalDescription(
            view.sector, view.entities, graph, room, likelihood, richness, text, view.wall_distance_ahead, render_view_text(view, m)
        )

    def summarize(self, descriptions: Sequence[LocalDescription | None], timestep: int) -> GlobalSummary:
        return summarize_global(descriptions, timestep)


def summarize_global(descriptions: Sequence[LocalDescription | None], timestep: int) -> GlobalSummary:
    """Union inventory plus a majority vote over the sectors' room guesses."""
    if len(descriptions) != 6:
        raise ValueError(f"expected 6 sector descriptions (None for absent), got {len(descriptions)}")
    present = [d for d in descriptions if d is not None]
    inventory = frozenset(c for d in present for c in d.categories)
    votes = Counter(d.room_type_guess for d in present if d.room_type_guess != UNKNOWN_ROOM)
    room = majority(votes)
    return GlobalSummary(timestep, room, inventory, render_global_text(timestep, room, inventory))


def parse_panorama(
    parser: ParserBackend, views: Sequence[DirectionalView | None], target: str, timestep: int
) -> tuple[list[LocalDescription | None], GlobalSummary]:
    lds = [None if v is None else parser.parse_local(v, scaffold(v), target) for v in views]
    return lds, parser.summarize(lds, timestep)


def render_view_text(view: DirectionalView, m: ScaffoldGrid) -> str:
    """Raw observation rendering (what a camera plus dot matrix would convey)."""
    total = sum(n for _, n in view.room_cells)
    if total:
        floor = ", ".join(f"{room.replace('_', ' ')} {100 * n / total:.0f}%" for room, n in view.room_cells)
        floor = f" Visible floor: {floor}."
    else:
        floor = " Nothing but wall in view."
    if not view.entities:
        return f"View {view.sector}: no objects detected.{floor}"
    names = _labels(view.entities)
    items = [
        f"{n} at dot (row {m.anchors[i][0]}, col {m.anchors[i][1]}), about {e.range:.2f} m away"
        for i, (n, e) in enumerate(zip(names, view.entities))
    ]
    return f"View {view.sector}: " + "; ".join(items) + "." + floor


@dataclass
class RemoteParser:
    """Asks a multimodal model to parse each view; relations stay rule-based.

    The model supplies the room guess, target likelihood and richness. A
    reply that cannot be used falls back to the oracle reading of the view
    (logged as a warning). Summaries are aggregated locally.
    """

    client: LLMClient
    model: str | None = None
    oracle: OracleParser = field(default_factory=OracleParser)

    def __post_init__(self):
        if self.model is None:
            self.model = self.client.config.mllm_model

    def parse_local(self, view: DirectionalView, m: ScaffoldGrid, target: str) -> LocalDescription:
        base = self.oracle.parse_local(view, m, target)
        reply = self.client.complete(render_parse_prompt(base.observation, target, model=self.model))
        obj = extract_json(reply) or {}
        try:
            room = str(obj["room_type"]).strip().lower().replace(" ", "_") or UNKNOWN_ROOM
            likelihood = min(1.0, max(0.0, float(obj["target_likelihood"])))
            richness = min(1.0, max(0.0, float(obj["richness"])))
        except (KeyError, TypeError, ValueError):
            logger.warning("unusable parse reply for view %d; using oracle reading", view.sector)
            return base
        text = render_local_text(view.sector, view.entities, base.relations, room, target, likelihood, richness, view.wall_distance_ahead)
        return LocalDescription(
            view.sector, view.entities, base.relations, room, likelihood, richness, text, view.wall_distance_ahead, base.observation
        )

    def summarize(self, descriptions: Sequence[LocalDescription | None], timestep: int) -> GlobalSummary:
        return summarize_global(descriptions, timestep)
