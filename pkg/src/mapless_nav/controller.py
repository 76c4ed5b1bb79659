"""Waypoint controller: turns a decision into primitive actions.

Exploration legs rotate to the chosen sector's centre heading with the fewest
30 degree turns (a 180 degree turn goes left) and then advance up to ``k``
cells, ending early when blocked. Target legs walk greedily down the geodesic
distance field of the sighted instance and issue ``Stop`` once within the
success threshold.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .decision import DecisionResult
from .perception import MAX_RANGE, capture_panorama
from .world import Action, GridWorld, Pose, check_pose, geodesic_field, heading_axis, step

LEG_LENGTH = 5
SUCCESS_THRESHOLD = 1.0


class Termination(enum.Enum):
    WaypointReached = "WaypointReached"
    Blocked = "Blocked"
    StoppedAtTarget = "StoppedAtTarget"
    Budget = "Budget"


@dataclass(frozen=True)
class LegResult:
    end_pose: Pose
    actions: tuple[Action, ...]
    poses: tuple[Pose, ...]
    moved: tuple[bool, ...]
    terminated: Termination

    @property
    def forward_moves(self) -> int:
        return sum(self.moved)

    def path_length(self, cell_size: float) -> float:
        return self.forward_moves * cell_size


def turns_to(heading: int, goal: int) -> list[Action]:
    """Minimal turn sequence from ``heading`` to ``goal``; ties (180 degrees) turn left."""
    ccw = (goal - heading) % 360
    if ccw <= 180:
        return [Action.TurnLeft] * (ccw // 30)
    return [Action.TurnRight] * ((360 - ccw) // 30)


class _Leg:
    def __init__(self, world: GridWorld, pose: Pose, budget: int):
        self.world = world
        self.pose = pose
        self.budget = budget
        self.actions: list[Action] = []
        self.poses: list[Pose] = []
        self.moved: list[bool] = []

    @property
    def exhausted(self) -> bool:
        return len(self.actions) >= self.budget

    def do(self, action: Action):
        self.pose, outcome = step(self.world, self.pose, action)
        self.actions.append(action)
        self.poses.append(self.pose)
        self.moved.append(outcome.moved)
        return outcome

    def result(self, why: Termination) -> LegResult:
        return LegResult(self.pose, tuple(self.actions), tuple(self.poses), tuple(self.moved), why)


def sector_heading(pose: Pose, sector: int) -> int:
    return (pose.heading + 60 * (sector - 1)) % 360


def execute_leg(
    world: GridWorld,
    pose: Pose,
    decision: DecisionResult,
    budget: int,
    *,
    target: str | None = None,
    k: int = LEG_LENGTH,
    threshold: float = SUCCESS_THRESHOLD,
    max_range: float = MAX_RANGE,
) -> LegResult:
    if budget < 1:
        raise ValueError("budget must be >= 1")
    check_pose(world, pose)
    target = target or world.target_category
    leg = _Leg(world, pose, budget)
    if decision.found:
        instance = _sighted_instance(world, pose, decision.sector, target, max_range)
        if instance is not None:
            return _approach(leg, instance, target, threshold, max_range)
    for turn in turns_to(pose.heading, sector_heading(pose, decision.sector)):
        if leg.exhausted:
            return leg.result(Termination.Budget)
        leg.do(turn)
    for _ in range(k):
        if leg.exhausted:
            return leg.result(Termination.Budget)
        if leg.do(Action.MoveAhead).blocked:
            return leg.result(Termination.Blocked)
    return leg.result(Termination.WaypointReached)


def _sighted_instance(world: GridWorld, pose: Pose, sector: int, target: str, max_range: float) -> int | None:
    """Nearest visible target instance, preferring the chosen sector."""
    views = capture_panorama(world, pose, max_range=max_range)
    hits = [(view.sector != sector, e.range, e.instance) for view in views if view for e in view.entities if e.category == target]
    return min(hits)[2] if hits else None


def _approach(leg: _Leg, instance: int, target: str, threshold: float, max_range: float) -> LegResult:
    world = leg.world
    while True:
        cell = leg.pose.cell(world.cell_size)
        if leg.actions:
            # re-sight: switch to a nearer instance if one came into view
            seen = _sighted_instance(world, leg.pose, 0, target, max_range)
            instance = instance if seen is None else seen
        dist = geodesic_field(world, [world.objects[instance].position])
        if dist[cell] * world.cell_size <= threshold:
            if leg.exhausted:
                return leg.result(Termination.Budget)
            leg.do(Action.Stop)
            return leg.result(Termination.StoppedAtTarget)
        # neighbour one step closer that needs the fewest turns
        options = []
        for goal in range(0, 360, 30):
            dx, dy = heading_axis(goal)
            nxt = (cell[0] + dx, cell[1] + dy)
            if dist.get(nxt, dist[cell]) < dist[cell]:
                options.append((len(turns_to(leg.pose.heading, goal)), goal))
        _, goal = min(options)
        for turn in turns_to(leg.pose.heading, goal):
            if leg.exhausted:
                return leg.result(Termination.Budget)
            leg.do(turn)
        if leg.exhausted:
            return leg.result(Termination.Budget)
        leg.do(Action.MoveAhead)
