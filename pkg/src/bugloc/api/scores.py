#  Copyright 2024 Christopher Barber
#
#  Licensed under the Apache License, Version 2.0 (the "License");
#  you may not use this file except in compliance with the License.
#  You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
#  Unless required by applicable law or agreed to in writing, software
#  distributed under the License is distributed on an "AS IS" BASIS,
#  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#  See the License for the specific language governing permissions and
#  limitations under the License.
#
"""
Per-unit confidence scores and localization verdicts.
"""

from __future__ import annotations

# standard
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

# this project
from ..errors import EmptyInput
from .traces import UnitLabel

__all__ = [
    "Localization",
    "ScoreVector",
    "rank_units",
    "sum_scores",
]


def rank_units(scores: Mapping[UnitLabel, float]) -> list[UnitLabel]:
    """
    Units by descending score.

    Equal scores keep the fixed [UnitLabel][bugloc.api.traces.] order.
    """
    return sorted(scores, key=lambda u: (-scores[u], u.order))


@dataclass(frozen=True)
class ScoreVector:
    """Non-negative confidence score per class"""

    scores: Mapping[UnitLabel, float]
    normalized: bool = False
    fallback: bool = False
    """Set when normalization fell back to uniform scores"""

    def __post_init__(self) -> None:
        converted: dict[UnitLabel, float] = {}
        for k, v in self.scores.items():
            value = float(v)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"score for {k} must be finite and >= 0: {v}")
            converted[UnitLabel.from_string(k)] = value
        object.__setattr__(self, "scores", converted)

    @property
    def units(self) -> frozenset[UnitLabel]:
        return frozenset(self.scores)

    @property
    def total(self) -> float:
        return float(math.fsum(self.scores.values()))

    def __getitem__(self, unit: UnitLabel) -> float:
        return self.scores[unit]

    def ranking(self) -> list[UnitLabel]:
        """Units by descending score, ties in fixed unit order"""
        return rank_units(self.scores)

    def top(self, k: int) -> list[UnitLabel]:
        return self.ranking()[:k]

    def rank_of(self, unit: UnitLabel) -> int:
        """One based rank of unit"""
        return self.ranking().index(unit) + 1

    def to_dict(self) -> dict[str, float]:
        units = sorted(self.scores, key=lambda u: u.order)
        return {u.value: self.scores[u] for u in units}


def sum_scores(
    per_workload: Mapping[str, Mapping[UnitLabel, float]],
) -> dict[UnitLabel, float]:
    """
    Sum per-workload score maps.

    Workloads are added in sorted id order so the result does not depend on
    the order of the input mapping.

    Raises:
        EmptyInput: no workloads
    """
    if not per_workload:
        raise EmptyInput("no workload scores to aggregate")
    total: dict[UnitLabel, float] = {}
    for workload in sorted(per_workload):
        for unit, score in per_workload[workload].items():
            total[unit] = total.get(unit, 0.0) + float(score)
    return total


@dataclass
class Localization:
    """Localization verdict for one design"""

    method: str
    scores: ScoreVector
    per_workload: dict[str, dict[UnitLabel, float]] = field(default_factory=dict)
    zero_filled_counters: list[str] = field(default_factory=list)
    missing_workloads: list[str] = field(default_factory=list)
    components: dict[str, ScoreVector] = field(default_factory=dict)
    """Normalized component vectors of an ensemble verdict"""

    @property
    def ranking(self) -> list[UnitLabel]:
        return self.scores.ranking()

    def to_dict(self, topk: Optional[int] = None) -> dict[str, Any]:
        d: dict[str, Any] = {
            "method": self.method,
            "scores": self.scores.to_dict(),
            "ranking": [u.value for u in self.ranking],
            "normalized": self.scores.normalized,
            "zero_filled_counters": sorted(self.zero_filled_counters),
        }
        if topk is not None:
            d["topk"] = [u.value for u in self.ranking[:topk]]
        if self.missing_workloads:
            d["missing_workloads"] = sorted(self.missing_workloads)
        if self.per_workload:
            d["per_workload"] = {
                w: {u.value: s for u, s in sorted(v.items(), key=lambda i: i[0].order)}
                for w, v in sorted(self.per_workload.items())
            }
        for name, vec in sorted(self.components.items()):
            d[f"{name}_normalized"] = vec.to_dict()
        if self.scores.fallback or any(v.fallback for v in self.components.values()):
            d["fallback"] = True
        return d

    def save(self, path: Union[Path, str], topk: Optional[int] = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(topk), indent=2) + "\n", "utf8")
        return path
