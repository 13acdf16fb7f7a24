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
Equal weight combination of counter based and prediction error based verdicts.

Each method's scores are normalized to sum to one, the normalized vectors are
averaged per unit, and the average is ranked.
"""

from __future__ import annotations

# standard
import logging
import math
from dataclasses import dataclass

# this project
from ..errors import AllZeroScores, KeyMismatch
from .scores import Localization, ScoreVector
from .traces import UnitLabel

__all__ = ["EnsembleVerdict", "combine", "normalize"]

logger = logging.getLogger(__name__)


def normalize(scores: ScoreVector, *, strict: bool = False) -> ScoreVector:
    """
    Scale scores to sum to one.

    All-zero input falls back to uniform scores with the `fallback` flag set.

    Args:
        scores: non-negative scores
        strict: raise AllZeroScores instead of falling back

    Raises:
        AllZeroScores: all scores zero and `strict`
    """
    if not scores.scores:
        raise AllZeroScores("cannot normalize empty score vector")
    total = scores.total
    if total <= 0.0:
        if strict:
            raise AllZeroScores("all scores are zero")
        logger.warning("All scores are zero; using uniform scores")
        uniform = 1.0 / len(scores.scores)
        return ScoreVector(
            {u: uniform for u in scores.scores}, normalized=True, fallback=True
        )
    if scores.normalized and math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-12):
        return scores
    return ScoreVector(
        {u: v / total for u, v in scores.scores.items()},
        normalized=True,
        fallback=scores.fallback,
    )


@dataclass(frozen=True)
class EnsembleVerdict:
    cbc_normalized: ScoreVector
    p2bc_normalized: ScoreVector
    combined: ScoreVector

    @property
    def ranking(self) -> list[UnitLabel]:
        return self.combined.ranking()

    def to_localization(self) -> Localization:
        return Localization(
            method="ensemble",
            scores=self.combined,
            components={"cbc": self.cbc_normalized, "p2bc": self.p2bc_normalized},
        )


def combine(cbc: ScoreVector, p2bc: ScoreVector) -> EnsembleVerdict:
    """
    Average of the two normalized score vectors.

    Raises:
        KeyMismatch: the vectors cover different units
    """
    if cbc.units != p2bc.units:
        only_cbc = sorted(u.value for u in cbc.units - p2bc.units)
        only_p2bc = sorted(u.value for u in p2bc.units - cbc.units)
        raise KeyMismatch(
            f"score units differ: only in cbc {only_cbc}, only in p2bc {only_p2bc}"
        )
    a = normalize(cbc)
    b = normalize(p2bc)
    combined = ScoreVector(
        {u: 0.5 * (a[u] + b[u]) for u in a.scores},
        normalized=True,
    )
    return EnsembleVerdict(cbc_normalized=a, p2bc_normalized=b, combined=combined)
