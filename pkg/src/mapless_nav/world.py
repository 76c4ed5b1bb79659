"""Deterministic multi-room grid world.

Coordinates follow ``(x, y) = (col, row)``. A pose stores metric coordinates
that are exact multiples of ``cell_size``; ``Pose.cell`` converts back to grid
indices. Headings are degrees counterclockwise from +x, restricted to
multiples of 30.

``MoveAhead`` moves exactly one cell along the dominant axis of the heading:

    heading 330, 0, 30    -> +x
    heading 60, 90, 120   -> +y
    heading 150, 180, 210 -> -x
    heading 240, 270, 300 -> -y

so every trajectory stays on the 4-connected lattice and path lengths are
directly comparable with the geodesic oracle.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

WALL = "#"
FREE = "."
CELL_SIZE = 0.25
HEADINGS = tuple(range(0, 360, 30))
PITCHES = (-30, 0, 30)
WORLD_FILE_VERSION = 1

Cell = tuple[int, int]

_AXIS_STEPS: dict[int, Cell] = {0: (1, 0), 1: (0, 1), 2: (-1, 0), 3: (0, -1)}
_NEIGHBOURS: tuple[Cell, ...] = ((1, 0), (0, 1), (-1, 0), (0, -1))


class ContractViolation(ValueError):
    """An operation was called with arguments that break its preconditions."""


class InvalidWorld(ValueError):
    """A world (or world file) violates a structural invariant."""


class Unreachable(LookupError):
    """No 4-connected path exists between two cells."""


class Action(enum.Enum):
    Stop = "Stop"
    MoveAhead = "MoveAhead"
    TurnLeft = "TurnLeft"
    TurnRight = "TurnRight"
    LookUp = "LookUp"
    LookDown = "LookDown"


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: int = 0
    pitch: int = 0

    def cell(self, cell_size: float = CELL_SIZE) -> Cell:
        return (round(self.x / cell_size), round(self.y / cell_size))

    def as_list(self) -> list:
        return [self.x, self.y, self.heading, self.pitch]

    @classmethod
    def at(cls, cell: Cell, heading: int = 0, pitch: int = 0, cell_size: float = CELL_SIZE) -> Pose:
        return cls(cell[0] * cell_size, cell[1] * cell_size, heading, pitch)


@dataclass(frozen=True)
class StepOutcome:
    moved: bool = False
    blocked: bool = False
    stopped: bool = False


@dataclass(frozen=True)
class Room:
    id: int
    room_type: str
    cells: frozenset[Cell]


@dataclass(frozen=True)
class ObjectInstance:
    category: str
    position: Cell
    room_id: int


@dataclass(frozen=True, eq=False)
class GridWorld:
    """Immutable indoor environment; validated on construction."""

    grid: tuple[str, ...]
    rooms: tuple[Room, ...]
    objects: tuple[ObjectInstance, ...]
    start: Pose
    target_category: str
    cell_size: float = CELL_SIZE
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.validate()

    @property
    def width(self) -> int:
        return len(self.grid[0])

    @property
    def height(self) -> int:
        return len(self.grid)

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and self.grid[cell[1]][cell[0]] == FREE

    @property
    def free_mask(self) -> np.ndarray:
        """Boolean array indexed ``[y, x]``; True where the cell is Free."""
        mask = self._cache.get("free_mask")
        if mask is None:
            mask = np.array([[c == FREE for c in row] for row in self.grid], dtype=bool)
            mask.setflags(write=False)
            self._cache["free_mask"] = mask
        return mask

    def free_cells(self) -> list[Cell]:
        return [(x, y) for y, row in enumerate(self.grid) for x, c in enumerate(row) if c == FREE]

    def room_at(self, cell: Cell) -> Room | None:
        index = self._cache.get("room_index")
        if index is None:
            index = {c: room for room in self.rooms for c in room.cells}
            self._cache["room_index"] = index
        return index.get(cell)

    def instances(self, category: str) -> list[ObjectInstance]:
        return [o for o in self.objects if o.category == category]

    def validate(self) -> None:
        if not self.grid or not self.grid[0]:
            raise InvalidWorld("empty grid")
        width = len(self.grid[0])
        if any(len(row) != width for row in self.grid):
            raise InvalidWorld("ragged grid rows")
        if any(c not in (WALL, FREE) for row in self.grid for c in row):
            raise InvalidWorld("grid cells must be '#' or '.'")
        if any(c != WALL for c in self.grid[0] + self.grid[-1]) or any(
            row[0] != WALL or row[-1] != WALL for row in self.grid
        ):
            raise InvalidWorld("grid boundary must be Wall")
        seen: dict[Cell, int] = {}
        ids = set()
        for room in self.rooms:
            if not room.room_type:
                raise InvalidWorld(f"room {room.id} has empty type")
            if room.id in ids:
                raise InvalidWorld(f"duplicate room id {room.id}")
            ids.add(room.id)
            if not room.cells:
                raise InvalidWorld(f"room {room.id} has no cells")
            for cell in room.cells:
                if not self.is_free(cell):
                    raise InvalidWorld(f"room {room.id} claims non-free cell {cell}")
                if cell in seen:
                    raise InvalidWorld(f"cell {cell} in rooms {seen[cell]} and {room.id}")
                seen[cell] = room.id
            if not _is_connected(room.cells):
                raise InvalidWorld(f"room {room.id} is not 4-connected")
        free = self.free_cells()
        if len(seen) != len(free):
            missing = next(c for c in free if c not in seen)
            raise InvalidWorld(f"free cell {missing} belongs to no room")
        for obj in self.objects:
            if not self.is_free(obj.position):
                raise InvalidWorld(f"object {obj} is not on a free cell")
            if seen.get(obj.position) != obj.room_id:
                raise InvalidWorld(f"object {obj} room id does not match its cell")
        if self.start.heading not in HEADINGS or self.start.pitch not in PITCHES:
            raise InvalidWorld(f"bad start orientation {self.start}")
        if not self.is_free(self.start.cell(self.cell_size)):
            raise InvalidWorld("start is not on a free cell")

    def digest(self) -> str:
        return hashlib.sha256(dumps_world(self).encode()).hexdigest()


def _is_connected(cells: Iterable[Cell]) -> bool:
    cells = set(cells)
    if not cells:
        return True
    first = next(iter(cells))
    stack, seen = [first], {first}
    while stack:
        x, y = stack.pop()
        for dx, dy in _NEIGHBOURS:
            nxt = (x + dx, y + dy)
            if nxt in cells and nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(cells)


def heading_axis(heading: int) -> Cell:
    """Unit grid step taken by MoveAhead at ``heading``."""
    return _AXIS_STEPS[((heading + 30) % 360) // 90]


def check_pose(world: GridWorld, pose: Pose) -> Cell:
    if pose.heading not in HEADINGS:
        raise ContractViolation(f"heading {pose.heading} is not a multiple of 30 in [0, 360)")
    if pose.pitch not in PITCHES:
        raise ContractViolation(f"pitch {pose.pitch} not in {PITCHES}")
    cell = pose.cell(world.cell_size)
    if not math.isclose(cell[0] * world.cell_size, pose.x) or not math.isclose(cell[1] * world.cell_size, pose.y):
        raise ContractViolation(f"pose {pose} is not on the cell lattice")
    if not world.is_free(cell):
        raise ContractViolation(f"pose {pose} is off-grid or inside a wall")
    return cell


def step(world: GridWorld, pose: Pose, action: Action) -> tuple[Pose, StepOutcome]:
    """Apply one discrete action. Pure; never places the agent on a Wall."""
    cell = check_pose(world, pose)
    if action is Action.MoveAhead:
        dx, dy = heading_axis(pose.heading)
        nxt = (cell[0] + dx, cell[1] + dy)
        if world.is_free(nxt):
            return Pose.at(nxt, pose.heading, pose.pitch, world.cell_size), StepOutcome(moved=True)
        return pose, StepOutcome(blocked=True)
    if action is Action.TurnLeft:
        return Pose(pose.x, pose.y, (pose.heading + 30) % 360, pose.pitch), StepOutcome()
    if action is Action.TurnRight:
        return Pose(pose.x, pose.y, (pose.heading - 30) % 360, pose.pitch), StepOutcome()
    if action is Action.LookUp:
        return Pose(pose.x, pose.y, pose.heading, min(pose.pitch + 30, 30)), StepOutcome()
    if action is Action.LookDown:
        return Pose(pose.x, pose.y, pose.heading, max(pose.pitch - 30, -30)), StepOutcome()
    if action is Action.Stop:
        return pose, StepOutcome(stopped=True)
    raise ContractViolation(f"unknown action {action!r}")


# --------------------------------------------------------------------------
# Geodesic oracles
# --------------------------------------------------------------------------


def geodesic_field(world: GridWorld, sources: Iterable[Cell]) -> dict[Cell, int]:
    """Dijkstra hop counts from the nearest of ``sources`` to every reachable cell.

    Results are cached on the world; callers must not mutate the returned dict.
    """
    key = ("field", tuple(sorted(set(sources))))
    cached = world._cache.get(key)
    if cached is not None:
        return cached
    dist: dict[Cell, int] = {}
    heap = [(0, c) for c in key[1] if world.is_free(c)]
    heapq.heapify(heap)
    while heap:
        d, cell = heapq.heappop(heap)
        if cell in dist:
            continue
        dist[cell] = d
        x, y = cell
        for dx, dy in _NEIGHBOURS:
            nxt = (x + dx, y + dy)
            if nxt not in dist and world.is_free(nxt):
                heapq.heappush(heap, (d + 1, nxt))
    world._cache[key] = dist
    return dist


def shortest_path_length(world: GridWorld, a: Cell, b: Cell) -> float:
    """Geodesic distance in meters between two free cells."""
    for c in (a, b):
        if not world.is_free(c):
            raise ContractViolation(f"cell {c} is not free")
    hops = geodesic_field(world, [a]).get(b)
    if hops is None:
        raise Unreachable(f"{b} is unreachable from {a}")
    return hops * world.cell_size


def distance_to_nearest_target(world: GridWorld, pose: Pose | Cell, category: str) -> float:
    """Geodesic meters from ``pose`` to the closest instance of ``category``."""
    cell = pose.cell(world.cell_size) if isinstance(pose, Pose) else pose
    positions = [o.position for o in world.instances(category)]
    if not positions:
        raise InvalidWorld(f"no instance of {category!r} in world")
    hops = geodesic_field(world, positions).get(cell)
    if hops is None:
        raise Unreachable(f"no {category!r} reachable from {cell}")
    return hops * world.cell_size


# --------------------------------------------------------------------------
# World files
# --------------------------------------------------------------------------


def _dump(value) -> str:
    return json.dumps(value, separators=(", ", ": "))


def dumps_world(world: GridWorld) -> str:
    """Serialize to the canonical world-file text (stable byte-for-byte)."""
    start = world.start
    lines = [
        "{",
        f' "version": {WORLD_FILE_VERSION},',
        f' "cell_size": {_dump(world.cell_size)},',
        f' "target": {_dump(world.target_category)},',
        f' "start": {_dump({"cell": list(start.cell(world.cell_size)), "heading": start.heading})},',
        ' "grid": [',
        ",\n".join(f"  {_dump(row)}" for row in world.grid),
        " ],",
        ' "rooms": [',
        ",\n".join(
            "  " + _dump({"id": r.id, "type": r.room_type, "cells": [list(c) for c in sorted(r.cells, key=lambda c: (c[1], c[0]))]})
            for r in world.rooms
        ),
        " ],",
        ' "objects": [',
        ",\n".join(
            "  " + _dump({"category": o.category, "cell": list(o.position), "room": o.room_id}) for o in world.objects
        ),
        " ]",
        "}",
        "",
    ]
    return "\n".join(lines)


def loads_world(text: str) -> GridWorld:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidWorld(f"world file is not valid JSON: {exc}") from exc
    if doc.get("version") != WORLD_FILE_VERSION:
        raise InvalidWorld(f"unsupported world file version {doc.get('version')!r}")
    try:
        cell_size = float(doc["cell_size"])
        rooms = tuple(
            Room(int(r["id"]), str(r["type"]), frozenset((int(x), int(y)) for x, y in r["cells"])) for r in doc["rooms"]
        )
        objects = tuple(
            ObjectInstance(str(o["category"]), (int(o["cell"][0]), int(o["cell"][1])), int(o["room"]))
            for o in doc["objects"]
        )
        sx, sy = doc["start"]["cell"]
        start = Pose.at((int(sx), int(sy)), int(doc["start"]["heading"]), 0, cell_size)
        return GridWorld(tuple(doc["grid"]), rooms, objects, start, str(doc["target"]), cell_size)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidWorld):
            raise
        raise InvalidWorld(f"malformed world file: {exc}") from exc


def save_world(world: GridWorld, path: str | Path) -> None:
    Path(path).write_text(dumps_world(world))


def load_world(path: str | Path) -> GridWorld:
    return loads_world(Path(path).read_text())


def world_from_ascii(
    rows: Iterable[str],
    *,
    target: str,
    objects: Iterable[tuple[str, Cell]] = (),
    start: Cell | None = None,
    heading: int = 0,
    room_type: str = "room",
    cell_size: float = CELL_SIZE,
) -> GridWorld:
    """Build a world from ASCII art; each connected free region becomes one room.

    Handy for tests and hand-made scenes. ``room_type`` may be a single label
    or a dict mapping a representative cell to a label.
    """
    grid = tuple(rows)
    free = {(x, y) for y, row in enumerate(grid) for x, c in enumerate(row) if c == FREE}
    rooms: list[Room] = []
    remaining = set(free)
    while remaining:
        seed = min(remaining, key=lambda c: (c[1], c[0]))
        comp, stack = {seed}, [seed]
        while stack:
            x, y = stack.pop()
            for dx, dy in _NEIGHBOURS:
                n = (x + dx, y + dy)
                if n in remaining and n not in comp:
                    comp.add(n)
                    stack.append(n)
        remaining -= comp
        if isinstance(room_type, dict):
            label = next((v for k, v in room_type.items() if k in comp), "room")
        else:
            label = room_type
        rooms.append(Room(len(rooms), label, frozenset(comp)))
    index = {c: r.id for r in rooms for c in r.cells}
    objs = tuple(ObjectInstance(cat, pos, index.get(pos, -1)) for cat, pos in objects)
    if start is None:
        start = min(free, key=lambda c: (c[1], c[0]))
    return GridWorld(grid, tuple(rooms), objs, Pose.at(start, heading, 0, cell_size), target, cell_size)
