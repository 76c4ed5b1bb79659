"""Bounded FIFO of waypoint summaries with a full flag."""

from __future__ import annotations

from collections import deque

from .perception import GlobalSummary

DEFAULT_CAPACITY = 5


class MemoryQueue:
    """Holds the last ``capacity`` global summaries, oldest first.

    ``full`` flips to True when the queue first reaches capacity and, since
    every removal is paired with an insertion, stays True afterwards.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if not isinstance(capacity, int) or capacity < 1:
            raise ValueError(f"capacity must be a positive integer, got {capacity!r}")
        self.capacity = capacity
        self._entries: deque[GlobalSummary] = deque()

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        return f"MemoryQueue(capacity={self.capacity}, timesteps={[e.timestep for e in self._entries]})"

    @property
    def full(self) -> bool:
        return len(self._entries) == self.capacity

    def push(self, summary: GlobalSummary) -> GlobalSummary | None:
        """Append ``summary``; return the evicted oldest entry when at capacity."""
        if self._entries and summary.timestep <= self._entries[-1].timestep:
            raise ValueError(
                f"timestep {summary.timestep} does not advance past newest entry {self._entries[-1].timestep}"
            )
        evicted = self._entries.popleft() if self.full else None
        self._entries.append(summary)
        return evicted

    def snapshot(self) -> list[GlobalSummary]:
        return list(self._entries)
