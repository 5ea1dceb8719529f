"""Decoded SSDP solutions and their cost breakdown."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .instance import TERMS


@dataclass(frozen=True)
class CostBreakdown:
    establish: float
    serve: float
    wait: float
    travel: float

    @property
    def total(self) -> float:
        return self.establish + self.serve + self.wait + self.travel

    def as_dict(self) -> dict[str, float]:
        return {t: getattr(self, t) for t in TERMS}

    def percentages(self) -> dict[str, float]:
        """Share of each term in the total, in percent.

        An all-zero breakdown yields zeros; an infinite total yields NaN.
        """
        tot = self.total
        if tot == 0:
            return {t: 0.0 for t in TERMS}
        if not math.isfinite(tot):
            return {t: math.nan for t in TERMS}
        return {t: 100.0 * getattr(self, t) / tot for t in TERMS}


@dataclass(frozen=True)
class Solution:
    """Open flags, zone-to-facility assignment and service rates.

    ``assign[j]`` is the facility index serving zone ``j``; ``mu[i]`` is zero
    for closed facilities. Indices are positions in the instance, not ids.
    """

    open: tuple[bool, ...]
    assign: tuple[int, ...]
    mu: tuple[float, ...]
    breakdown: CostBreakdown | None = None

    @property
    def objective(self) -> float:
        return self.breakdown.total if self.breakdown is not None else math.nan

    @property
    def open_indices(self) -> list[int]:
        return [i for i, o in enumerate(self.open) if o]
