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
Unit tests for bugloc.api.scores module
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from bugloc.api.scores import Localization, ScoreVector, rank_units, sum_scores
from bugloc.api.traces import UnitLabel
from bugloc.errors import EmptyInput

F, D, M, C = UnitLabel.FETCH, UnitLabel.DECODE, UnitLabel.MEMORY, UnitLabel.COMMIT


def test_rank_units() -> None:
    """Ties keep the fixed unit order"""
    assert rank_units({C: 0.5, M: 0.5, F: 0.1, D: 0.9}) == [D, M, C, F]
    assert rank_units({C: 0.0, F: 0.0}) == [F, C]
    assert rank_units({}) == []


def test_ScoreVector() -> None:
    """Unit test for ScoreVector"""
    vec = ScoreVector({"Memory": 2, F: 1.5, "decode": 0.0})
    assert vec.units == {M, F, D}
    assert vec[M] == 2.0
    assert vec.total == 3.5
    assert vec.ranking() == [M, F, D]
    assert vec.top(2) == [M, F]
    assert vec.rank_of(D) == 3
    assert list(vec.to_dict()) == ["Fetch", "Decode", "Memory"]
    assert not vec.normalized and not vec.fallback

    with pytest.raises(ValueError, match="finite"):
        ScoreVector({F: float("nan")})
    with pytest.raises(ValueError, match=">= 0"):
        ScoreVector({F: -1.0})


def test_sum_scores() -> None:
    """Unit test for sum_scores"""
    total = sum_scores({"b": {F: 0.25, M: 1.0}, "a": {F: 0.5, C: 0.125}})
    assert total == {F: 0.75, M: 1.0, C: 0.125}
    with pytest.raises(EmptyInput):
        sum_scores({})

    # insertion order of the workloads does not matter
    rng = np.random.default_rng(9)
    units = UnitLabel.units()
    per_workload = {
        f"w{i}": dict(zip(units, rng.uniform(0, 1, len(units)).tolist()))
        for i in range(12)
    }
    expected = sum_scores(per_workload)
    names = list(per_workload)
    for _ in range(10):
        shuffled = {names[i]: per_workload[names[i]] for i in rng.permutation(12)}
        assert sum_scores(shuffled) == expected


def test_Localization(tmp_path: Path) -> None:
    """Unit test for Localization"""
    loc = Localization(
        method="cbc",
        scores=ScoreVector({F: 0.2, M: 0.7, C: 0.1}),
        per_workload={"w2": {M: 0.7}, "w1": {F: 0.2, C: 0.1}},
        zero_filled_counters=["z", "a"],
        missing_workloads=["w3"],
    )
    assert loc.ranking == [M, F, C]
    d = loc.to_dict(topk=2)
    assert d["method"] == "cbc"
    assert d["ranking"] == ["Memory", "Fetch", "Commit"]
    assert d["topk"] == ["Memory", "Fetch"]
    assert d["zero_filled_counters"] == ["a", "z"]
    assert d["missing_workloads"] == ["w3"]
    assert list(d["per_workload"]) == ["w1", "w2"]
    assert d["per_workload"]["w1"] == {"Fetch": 0.2, "Commit": 0.1}
    assert "fallback" not in d
    assert "topk" not in loc.to_dict()

    out = loc.save(tmp_path / "sub" / "verdict.json", topk=1)
    assert json.loads(out.read_text("utf8"))["topk"] == ["Memory"]
