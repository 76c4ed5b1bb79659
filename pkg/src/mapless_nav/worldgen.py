"""Procedural floor plans: binary space partition into rooms joined by doorways.

Each room is a rectangle of free cells; rooms are separated by one-cell wall
lines and connected by doorways along a random spanning tree of the room
adjacency graph (plus a few extra doors). Doorway cells are assigned to the
room on their left/top side so every free cell belongs to exactly one room.

With ``deceptive=True`` the smallest room becomes the start room and is typed
as the room where the target is most expected (``living_room`` for ``sofa``).
It is furnished with prior-consistent objects set out on the side away from
the target, while the only target instance sits deep inside the largest
neighbouring room, which gets a plausible but weaker room type.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field

from .priors import PriorTable, default_priors
from .world import CELL_SIZE, FREE, HEADINGS, WALL, GridWorld, ObjectInstance, Pose, Room, geodesic_field

ROOM_TYPES = ("living_room", "bedroom", "kitchen", "bathroom", "hallway", "dining_room", "office")


class InfeasibleParams(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorParams:
    width: int = 36
    height: int = 28
    rooms: int = 5
    min_room: int = 7
    objects_per_room: tuple[int, int] = (2, 4)
    door_width: int = 3
    extra_door_prob: float = 0.3
    deceptive: bool = False
    target: str | None = None
    room_types: tuple[str, ...] = ROOM_TYPES
    cell_size: float = CELL_SIZE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objects_per_room"] = list(self.objects_per_room)
        d["room_types"] = list(self.room_types)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorParams:
        d = dict(d)
        if "objects_per_room" in d:
            d["objects_per_room"] = tuple(d["objects_per_room"])
        if "room_types" in d:
            d["room_types"] = tuple(d["room_types"])
        return cls(**d)


@dataclass
class _Rect:
    x0: int
    y0: int
    x1: int
    y1: int
    extra: set = field(default_factory=set)

    @property
    def w(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def h(self) -> int:
        return self.y1 - self.y0 + 1

    def cells(self):
        return {(x, y) for x in range(self.x0, self.x1 + 1) for y in range(self.y0, self.y1 + 1)}

    def center(self):
        return ((self.x0 + self.x1) // 2, (self.y0 + self.y1) // 2)


def _partition(rng: random.Random, p: GeneratorParams) -> list[_Rect]:
    rects = [_Rect(1, 1, p.width - 2, p.height - 2)]
    if rects[0].w < p.min_room or rects[0].h < p.min_room:
        raise InfeasibleParams("grid too small for a single room")
    splittable = lambda r: max(r.w, r.h) >= 2 * p.min_room + 1  # noqa: E731
    while len(rects) < p.rooms:
        candidates = [r for r in rects if splittable(r)]
        if not candidates:
            raise InfeasibleParams(f"cannot fit {p.rooms} rooms of side >= {p.min_room} in {p.width}x{p.height}")
        r = max(candidates, key=lambda r: r.w * r.h)
        rects.remove(r)
        if r.w >= r.h:
            s = rng.randint(r.x0 + p.min_room, r.x1 - p.min_room)
            rects += [_Rect(r.x0, r.y0, s - 1, r.y1), _Rect(s + 1, r.y0, r.x1, r.y1)]
        else:
            s = rng.randint(r.y0 + p.min_room, r.y1 - p.min_room)
            rects += [_Rect(r.x0, r.y0, r.x1, s - 1), _Rect(r.x0, s + 1, r.x1, r.y1)]
    rects.sort(key=lambda r: (r.y0, r.x0))
    return rects


def _shared_walls(rects: list[_Rect], door_width: int):
    """Yield (i, j, wall cells) for rooms separated by a single wall line."""
    for i, a in enumerate(rects):
        for j, b in enumerate(rects):
            if i >= j:
                continue
            for lo, hi in ((a, b), (b, a)):
                if lo.x1 + 2 == hi.x0:
                    y0, y1 = max(lo.y0, hi.y0), min(lo.y1, hi.y1)
                    if y1 - y0 + 1 >= door_width + 2:
                        yield i, j, [(lo.x1 + 1, y) for y in range(y0 + 1, y1)]
                if lo.y1 + 2 == hi.y0:
                    x0, x1 = max(lo.x0, hi.x0), min(lo.x1, hi.x1)
                    if x1 - x0 + 1 >= door_width + 2:
                        yield i, j, [(x, lo.y1 + 1) for x in range(x0 + 1, x1)]


def _carve_doors(rng: random.Random, rects: list[_Rect], p: GeneratorParams) -> set[tuple[int, int]]:
    walls = list(_shared_walls(rects, p.door_width))
    rng.shuffle(walls)
    parent = list(range(len(rects)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    adjacency: dict[int, set[int]] = {i: set() for i in range(len(rects))}
    doors = set()
    for i, j, wall in walls:
        joins = find(i) != find(j)
        if not joins and rng.random() >= p.extra_door_prob:
            continue
        parent[find(i)] = find(j)
        offset = rng.randint(0, len(wall) - p.door_width)
        opening = wall[offset : offset + p.door_width]
        owner = min(i, j)
        rects[owner].extra.update(opening)
        doors.update(opening)
        adjacency[i].add(j)
        adjacency[j].add(i)
    if len({find(i) for i in range(len(rects))}) > 1:
        raise InfeasibleParams("rooms could not be connected with doorways")
    return doors


def _place(rng: random.Random, free: list, taken: set, k: int) -> list:
    pool = [c for c in free if c not in taken]
    picks = rng.sample(pool, min(k, len(pool)))
    taken.update(picks)
    return picks


def generate_world(seed: int, params: GeneratorParams | None = None, priors: PriorTable | None = None) -> GridWorld:
    """Generate a valid world; identical output for identical (seed, params)."""
    p = params or GeneratorParams()
    priors = priors or default_priors()
    if p.rooms < 1:
        raise InfeasibleParams("need at least one room")
    if p.deceptive and p.rooms < 2:
        raise InfeasibleParams("a deceptive world needs at least two rooms")
    rng = random.Random(seed)
    rects = _partition(rng, p)
    doors = _carve_doors(rng, rects, p)

    grid = [[WALL] * p.width for _ in range(p.height)]
    for r in rects:
        for x, y in r.cells() | r.extra:
            grid[y][x] = FREE
    rows = tuple("".join(row) for row in grid)

    # a compact decoy room keeps its doorways inside the panorama's range
    start_idx = min(range(len(rects)), key=lambda i: (rects[i].w * rects[i].h, i)) if p.deceptive else rng.randrange(len(rects))
    types = _assign_types(rng, rects, start_idx, p, priors)

    interiors = [sorted(r.cells() - _near(doors), key=lambda c: (c[1], c[0])) for r in rects]
    start_cell = _start_cell(rng, rects[start_idx], interiors[start_idx], p.deceptive)
    taken = {start_cell}
    target = p.target
    if p.deceptive:
        target_idx = _deceptive_target_room(rects, types, start_idx, target, priors)
        target_cell = _far_cell(rects, target_idx, start_idx, interiors[target_idx], taken)
        taken.add(target_cell)
    objects: list[ObjectInstance] = []
    for i, r in enumerate(rects):
        # sparse room types (hallway) fall back to their three likeliest objects
        palette = priors.palette(types[i]) or priors.palette(types[i], min_prior=0.0)[:3]
        if p.deceptive:
            palette = [c for c in palette if c != target]
        k = rng.randint(*p.objects_per_room)
        if p.deceptive and i == start_idx:
            # the decoy room is furnished with the target's usual companions,
            # set out on the side facing away from the real target
            anchors = [c for c in ("table", "chair") if c in palette] or palette[:2]
            rest = [c for c in palette if c not in anchors]
            cats = anchors + rng.sample(rest, max(0, min(k - len(anchors), len(rest))))
            cells = _lure_cells(rng, rects, interiors[i], taken, len(cats), target_cell)
        else:
            cats = rng.sample(palette, min(k, len(palette)))
            cells = _place(rng, interiors[i], taken, len(cats))
        for cat, cell in zip(cats, cells):
            objects.append(ObjectInstance(cat, cell, i))

    if p.deceptive:
        objects.append(ObjectInstance(target, target_cell, target_idx))
    elif target is None:
        in_start = {o.category for o in objects if o.room_id == start_idx}
        choices = sorted({o.category for o in objects} - in_start) or sorted({o.category for o in objects})
        if not choices:
            raise InfeasibleParams("no objects placed; cannot choose a target")
        target = rng.choice(choices)
    elif not any(o.category == target for o in objects):
        hosts = [i for i in range(len(rects)) if i != start_idx] or [start_idx]
        host = max(hosts, key=lambda i: (priors(types[i], target), -i))
        cell = _place(rng, interiors[host], taken, 1)[0]
        objects.append(ObjectInstance(target, cell, host))

    rooms = tuple(Room(i, types[i], frozenset(r.cells() | r.extra)) for i, r in enumerate(rects))
    heading = rng.choice(HEADINGS)
    world = GridWorld(rows, rooms, tuple(objects), Pose.at(start_cell, heading, 0, p.cell_size), target, p.cell_size)
    if start_cell not in geodesic_field(world, [o.position for o in world.instances(target)]):
        raise InfeasibleParams("target unreachable from start")
    return world


def _near(doors: set) -> set:
    """Door cells and the cells directly in front of them (kept clear of objects)."""
    out = set(doors)
    for x, y in doors:
        out.update({(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)})
    return out


def _assign_types(rng, rects, start_idx, p: GeneratorParams, priors: PriorTable) -> list[str]:
    if not p.deceptive:
        pool = list(p.room_types)
        rng.shuffle(pool)
        return [pool[i % len(pool)] for i in range(len(rects))]
    target = p.target
    if target is None:
        raise InfeasibleParams("deceptive worlds need an explicit target category")
    decoy = max(p.room_types, key=lambda t: (priors(t, target), t))
    # The target room must look plausible (moderate prior) but less so than the decoy.
    moderate = [t for t in p.room_types if t != decoy and 0.3 <= priors(t, target) < priors(decoy, target)]
    others = [t for t in p.room_types if t != decoy and t not in moderate]
    if not moderate:
        raise InfeasibleParams(f"no room type with a moderate prior for {target!r}")
    types = [""] * len(rects)
    types[start_idx] = decoy
    neighbours = _neighbours_of(rects, start_idx)
    host = min(neighbours, key=lambda i: (-(rects[i].w * rects[i].h), i)) if neighbours else None
    for i in range(len(rects)):
        if i == start_idx:
            continue
        if i == host:
            types[i] = rng.choice(moderate)
        else:
            types[i] = rng.choice(others or moderate)
    return types


def _neighbours_of(rects, idx) -> list[int]:
    """Rooms sharing a doorway with ``rects[idx]``."""
    own = rects[idx].cells() | rects[idx].extra
    out = []
    for j, r in enumerate(rects):
        if j == idx:
            continue
        other = r.cells() | r.extra
        if any((x + dx, y + dy) in other for x, y in own for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))):
            out.append(j)
    return out


def _deceptive_target_room(rects, types, start_idx, target, priors) -> int:
    neighbours = _neighbours_of(rects, start_idx)
    candidates = [i for i in neighbours if types[i] != types[start_idx]] or [
        i for i in range(len(rects)) if i != start_idx
    ]
    return max(candidates, key=lambda i: (priors(types[i], target), rects[i].w * rects[i].h, -i))


def _start_cell(rng, rect: _Rect, interior: list, centered: bool):
    if centered:
        cx, cy = rect.center()
        return min(interior, key=lambda c: (abs(c[0] - cx) + abs(c[1] - cy), c[1], c[0]))
    return rng.choice(interior)


def _walk_distances(rects, sources) -> dict:
    free = set()
    for rect in rects:
        free |= rect.cells() | rect.extra
    dist = {c: 0 for c in sources}
    queue = list(sources)
    head = 0
    while head < len(queue):
        x, y = queue[head]
        head += 1
        for nxt in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if nxt in free and nxt not in dist:
                dist[nxt] = dist[(x, y)] + 1
                queue.append(nxt)
    return dist


def _far_cell(rects, target_idx, start_idx, interior, taken):
    """Cell of the target room farthest (by walking distance) from the start room."""
    r = rects[start_idx]
    dist = _walk_distances(rects, r.cells() | r.extra)
    pool = [c for c in interior if c not in taken]
    return max(pool, key=lambda c: (dist.get(c, -1), -c[1], -c[0]))


def _lure_cells(rng, rects, interior, taken, k, target_cell) -> list:
    """``k`` cells drawn from the third of the room farthest from the target."""
    dist = _walk_distances(rects, [target_cell])
    pool = sorted((c for c in interior if c not in taken), key=lambda c: (-dist.get(c, 0), c[1], c[0]))
    picks = rng.sample(pool[: max(k, len(pool) // 3)], min(k, len(pool)))
    taken.update(picks)
    return picks
