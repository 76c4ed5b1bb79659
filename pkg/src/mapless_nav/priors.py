"""Object/room co-occurrence priors.

The table is a delimited text file with rows ``room_type,category,prior``.
Lines starting with ``#`` are comments; the first non-comment line is the
header. Any (room_type, category) pair missing from the table, including every
pair for the ``unknown`` room, resolves to :data:`DEFAULT_PRIOR`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

DEFAULT_PRIOR = 0.05
UNKNOWN_ROOM = "unknown"


@dataclass(frozen=True)
class PriorTable:
    entries: dict[tuple[str, str], float] = field(default_factory=dict)
    default: float = DEFAULT_PRIOR

    def __call__(self, room_type: str, category: str) -> float:
        return self.entries.get((room_type, category), self.default)

    def room_types(self) -> list[str]:
        return sorted({room for room, _ in self.entries})

    def palette(self, room_type: str, min_prior: float = 0.4) -> list[str]:
        """Categories that plausibly furnish ``room_type``, most likely first."""
        rows = [(cat, p) for (room, cat), p in self.entries.items() if room == room_type and p >= min_prior]
        return [cat for cat, _ in sorted(rows, key=lambda r: (-r[1], r[0]))]

    @classmethod
    def parse(cls, text: str, default: float = DEFAULT_PRIOR) -> PriorTable:
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        entries: dict[tuple[str, str], float] = {}
        for row in csv.DictReader(io.StringIO("\n".join(lines))):
            prior = float(row["prior"])
            if not 0.0 <= prior <= 1.0:
                raise ValueError(f"prior out of [0, 1]: {row}")
            entries[(row["room_type"].strip(), row["category"].strip())] = prior
        return cls(entries=entries, default=default)

    @classmethod
    def load(cls, path: str | Path) -> PriorTable:
        return cls.parse(Path(path).read_text())


_DEFAULT_TABLE: PriorTable | None = None


def default_priors() -> PriorTable:
    """The prior table shipped with the package (loaded once)."""
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        text = resources.files("mapless_nav").joinpath("data/priors.csv").read_text()
        _DEFAULT_TABLE = PriorTable.parse(text)
    return _DEFAULT_TABLE
