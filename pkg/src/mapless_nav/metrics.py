"""Episode metrics: SR, SPL, DTS over failures, escape rate.

SPL and SR are accumulated in exact rational arithmetic and rounded to float
once, so results do not depend on episode order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

R_ESCAPE = 3.0


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    rho: float
    ell: float
    final_dts: float
    start_final_geodesic: float
    escaped: bool
    steps: int
    trajectory: str | None = None

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("agent path length must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> EpisodeResult:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class MetricsReport:
    n: int
    sr: float
    spl: float
    dts_f: float | None
    er: float

    COLUMNS = ("N", "SR", "SPL", "DTS_f", "ER")

    def row(self) -> list[str]:
        dts = "" if self.dts_f is None else f"{self.dts_f:.1f}"
        return [str(self.n), f"{self.sr:.1f}", f"{self.spl:.1f}", dts, f"{self.er:.1f}"]

    def to_text(self) -> str:
        dts = "n/a" if self.dts_f is None else f"{self.dts_f:.1f} m"
        return f"N={self.n} SR={self.sr:.1f}% SPL={self.spl:.1f}% DTS(f)={dts} ER={self.er:.1f}%"

    def to_dict(self) -> dict:
        return {"N": self.n, "SR": self.sr, "SPL": self.spl, "DTS_f": self.dts_f, "ER": self.er}


def _require(results: Sequence[EpisodeResult]) -> None:
    if not results:
        raise ValueError("metrics need at least one episode")


def spl_term(r: EpisodeResult) -> Fraction:
    if not r.ell > 0:
        raise ValueError(f"shortest path length must be positive, got {r.ell}")
    if not r.success:
        return Fraction(0)
    ell = Fraction(r.ell)
    return ell / max(Fraction(r.rho), ell)


def spl(results: Sequence[EpisodeResult]) -> float:
    """Success weighted by path length, in percent."""
    _require(results)
    total = sum((spl_term(r) for r in results), Fraction(0))
    return float(100 * total / len(results))


def success_rate(results: Sequence[EpisodeResult]) -> float:
    _require(results)
    return float(Fraction(100 * sum(1 for r in results if r.success), len(results)))


def dts_failures(results: Sequence[EpisodeResult]) -> float | None:
    """Mean distance-to-success over failed episodes, or None if nothing failed."""
    failed = [r.final_dts for r in results if not r.success]
    if not failed:
        return None
    return math.fsum(failed) / len(failed)


def escape_rate(results: Sequence[EpisodeResult]) -> float:
    _require(results)
    return float(Fraction(100 * sum(1 for r in results if r.escaped), len(results)))


def is_escape(start_final_geodesic: float, r_escape: float = R_ESCAPE) -> bool:
    return start_final_geodesic > r_escape


def report(results: Sequence[EpisodeResult]) -> MetricsReport:
    return MetricsReport(len(results), success_rate(results), spl(results), dts_failures(results), escape_rate(results))
