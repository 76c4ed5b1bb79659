"""Top-down SVG plots of a trajectory log over its world.

Output is a plain string built from fixed-precision numbers, so identical
inputs always give identical bytes.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

from .runner import TrajectoryLog, replay_episode
from .world import GridWorld

CELL_PX = 16

ROOM_TINTS = {
    "living_room": "#f6e7c1",
    "bedroom": "#dfe8f7",
    "kitchen": "#e4f2dc",
    "bathroom": "#d9f0f0",
    "hallway": "#ececec",
    "dining_room": "#f7dfe0",
    "office": "#ebe1f4",
}
DEFAULT_TINT = "#f4f4f4"


def _cells(log: TrajectoryLog, cell_size: float) -> list[tuple[int, int]]:
    return [(round(x / cell_size), round(y / cell_size)) for x, y in log.positions()]


def count_self_crossings(log: TrajectoryLog, cell_size: float) -> int:
    """How often the path returns to a cell it already passed through.

    Paths move one cell at a time, so the polyline touches or crosses itself
    exactly at these returns.
    """
    seen: set = set()
    count = 0
    for c in _cells(log, cell_size):
        count += c in seen
        seen.add(c)
    return count


def render_trajectory_svg(world: GridWorld, log: TrajectoryLog) -> str:
    """Walls, tinted rooms, objects, start/stop markers and the travelled path."""
    replay_episode(world, log)  # raises on a world/log mismatch
    target = log.header["target"]
    h = world.height

    def px(c: tuple[int, int]) -> tuple[str, str]:
        # grid row 0 is drawn at the bottom
        return f"{(c[0] + 0.5) * CELL_PX:.1f}", f"{(h - c[1] - 0.5) * CELL_PX:.1f}"

    def rect(x: int, y: int, fill: str) -> str:
        return f'<rect x="{x * CELL_PX}" y="{(h - 1 - y) * CELL_PX}" width="{CELL_PX}" height="{CELL_PX}" fill="{fill}"/>'

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{world.width * CELL_PX}" height="{h * CELL_PX}" '
        f'viewBox="0 0 {world.width * CELL_PX} {h * CELL_PX}">',
        f"<title>{escape(target)} search</title>",
        '<g id="walls">',
    ]
    out += [rect(x, y, "#333333") for y, row in enumerate(world.grid) for x, ch in enumerate(row) if not world.is_free((x, y))]
    out.append("</g>")
    out.append('<g id="rooms">')
    for room in world.rooms:
        tint = ROOM_TINTS.get(room.room_type, DEFAULT_TINT)
        out += [rect(x, y, tint) for x, y in sorted(room.cells, key=lambda c: (c[1], c[0]))]
    out.append("</g>")

    out.append('<g id="objects" font-family="monospace" font-size="9" text-anchor="middle">')
    for obj in world.objects:
        x, y = px(obj.position)
        color = "#d62728" if obj.category == target else "#1f77b4"
        out.append(f'<circle cx="{x}" cy="{y}" r="{CELL_PX * 0.35:.1f}" fill="{color}"><title>{escape(obj.category)}</title></circle>')
        out.append(f'<text x="{x}" y="{y}" dy="3" fill="#ffffff">{escape(obj.category[0])}</text>')
    out.append("</g>")

    cells = _cells(log, world.cell_size)
    if len(cells) > 1:
        pts = " ".join(",".join(px(c)) for c in cells)
        out.append(f'<polyline id="path" points="{pts}" fill="none" stroke="#ff7f0e" stroke-width="2" stroke-linejoin="round"/>')
    out.append('<g id="waypoints">')
    for wp in log.waypoints():
        x, y = px((round(wp["pose"][0] / world.cell_size), round(wp["pose"][1] / world.cell_size)))
        out.append(f'<circle cx="{x}" cy="{y}" r="2.5" fill="#2ca02c"/>')
    out.append("</g>")

    sx, sy = px(cells[0])
    out.append(f'<rect id="start" x="{float(sx) - 5:.1f}" y="{float(sy) - 5:.1f}" width="10" height="10" fill="none" stroke="#2ca02c" stroke-width="2"/>')
    if log.steps():
        ex, ey = px(cells[-1])
        out.append(
            f'<path id="stop" d="M{float(ex) - 5:.1f},{float(ey) - 5:.1f} L{float(ex) + 5:.1f},{float(ey) + 5:.1f} '
            f'M{float(ex) - 5:.1f},{float(ey) + 5:.1f} L{float(ex) + 5:.1f},{float(ey) - 5:.1f}" stroke="#d62728" stroke-width="2"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
