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
Unit tests for bugloc.impl.cpimodel and bugloc.impl.bugfamilies modules
"""

from __future__ import annotations

import numpy as np
import pytest

from bugloc.api.traces import UnitLabel
from bugloc.errors import ConfigError
from bugloc.impl.bugfamilies import (
    FAMILIES,
    calibrate_knob,
    families_for,
    get_family,
    relative_impact,
)
from bugloc.impl.cpimodel import (
    COUNTER_NAMES,
    LIMITS,
    ArchConfig,
    Phase,
    WorkloadProfile,
    derive_counters,
    window_state,
)

WINDOW = 100_000


def _workload() -> WorkloadProfile:
    return WorkloadProfile(
        "w",
        [
            Phase(4, dict(branch=0.2, load=0.3, store=0.1, int=0.3, fp=0.1), 0.9),
            Phase(3, dict(branch=0.1, load=0.2, store=0.2, int=0.2, fp=0.3), 0.7),
        ],
    )


def _state(arch: ArchConfig = ArchConfig("a")):
    mix, locality = _workload().per_window()
    return window_state(arch, mix, locality)


def _per_inst(matrix: np.ndarray, name: str) -> np.ndarray:
    cols = list(COUNTER_NAMES)
    return matrix[:, cols.index(name)] / matrix[:, cols.index("commit.insts")]


def test_ArchConfig() -> None:
    """Unit test for ArchConfig"""
    arch = ArchConfig("a1", pipeline_width=6, fu_latency={"fp": 5})
    assert arch.fu_latency == {"int": 1.0, "fp": 5.0, "mem": 2.0}
    assert arch.pipeline_depth == 16.0
    assert ArchConfig.from_dict(arch.to_dict()) == arch

    with pytest.raises(ConfigError, match="arch_id"):
        ArchConfig("")
    with pytest.raises(ConfigError, match="rob_size"):
        ArchConfig("a", rob_size=4)
    with pytest.raises(ConfigError, match="latency"):
        ArchConfig("a", fu_latency={"int": 0})
    with pytest.raises(ConfigError, match="bad architecture config"):
        ArchConfig.from_dict({"arch_id": "a", "cores": 2})


def test_WorkloadProfile() -> None:
    """Unit test for Phase and WorkloadProfile"""
    wl = _workload()
    assert wl.length == 7
    mix, locality = wl.per_window()
    assert np.allclose(mix["fp"], [0.1] * 4 + [0.3] * 3)
    assert np.allclose(locality, [0.9] * 4 + [0.7] * 3)
    assert WorkloadProfile.from_dict(wl.to_dict()).to_dict() == wl.to_dict()

    # missing classes are zero
    assert Phase(1, dict(int=1.0), 0.5).mix["fp"] == 0.0
    with pytest.raises(ConfigError, match="sums to"):
        Phase(1, dict(int=0.5), 0.5)
    with pytest.raises(ConfigError, match="unknown instruction classes"):
        Phase(1, dict(simd=1.0), 0.5)
    with pytest.raises(ConfigError, match="locality"):
        Phase(1, dict(int=1.0), 1.0)
    with pytest.raises(ConfigError, match="no phases"):
        WorkloadProfile("w", [])


def test_derive_counters() -> None:
    """Bug-free counters follow the model state"""
    state = _state()
    assert state.length == 7
    assert np.all(state.extra == 0)
    assert np.allclose(state.cpi, state.base_cpi)
    assert np.all(state.cpi >= 1.0 / state.arch.pipeline_width)

    matrix, ipc = derive_counters(state, WINDOW)
    assert matrix.shape == (7, len(COUNTER_NAMES))
    assert len(set(COUNTER_NAMES)) == len(COUNTER_NAMES) == 44
    assert np.all(matrix >= 0)
    assert np.allclose(ipc, 1.0 / state.cpi)
    cols = list(COUNTER_NAMES)
    assert np.all(matrix[:, cols.index("cycles")] == WINDOW)
    assert np.allclose(matrix[:, cols.index("commit.insts")], WINDOW * ipc)
    assert np.allclose(
        _per_inst(matrix, "fetch.stall_cycles"), state.stalls[UnitLabel.FETCH]
    )

    # wider machines are faster unless memory bound
    wide = _state(ArchConfig("b", pipeline_width=8))
    assert np.all(wide.cpi <= state.cpi)
    assert np.all(wide.cpi[:4] < state.cpi[:4])
    assert np.allclose(wide.cpi[4:], state.cpi[4:])


def test_window_state_bottleneck() -> None:
    """Bug-free IPC is the smallest of the width, memory and branch limits"""
    state = _state()
    assert set(state.throughputs) == set(LIMITS)
    expected = np.minimum(
        np.minimum(state.throughputs["width"], state.throughputs["memory"]),
        state.throughputs["branch"],
    )
    assert np.array_equal(state.base_ipc, expected)
    _, ipc = derive_counters(state, WINDOW)
    assert np.allclose(ipc, expected)

    # first phase is width bound, second phase memory bound
    assert list(state.bottleneck) == ["width"] * 4 + ["memory"] * 3
    assert np.allclose(state.base_ipc[:4], 4.0)
    memory_cpi = (0.036 * 12.0 + 0.0054 * 150.0) / 2.0
    assert np.allclose(state.base_ipc[4:], 1.0 / memory_cpi)
    assert np.allclose(state.throughputs["branch"][:4], 1.0 / (0.2 * 0.05 * 14.0))

    # stall terms of other units do not lower a width bound window
    assert sum(s[0] for s in state.stalls.values()) > 0.05
    assert state.base_cpi[0] == pytest.approx(0.25)

    # a poor predictor makes every window branch bound
    poor = _state(ArchConfig("p", branch_accuracy=0.5))
    assert list(poor.bottleneck) == ["branch"] * 7
    assert np.allclose(poor.base_ipc[:4], 1.0 / (0.2 * 0.5 * 14.0))

    # no memory traffic leaves the memory limit unbound
    mix = {c: np.zeros(2) for c in ("branch", "load", "store", "fp")}
    mix["int"] = np.ones(2)
    alu = window_state(ArchConfig("a"), mix, np.full(2, 0.5))
    assert np.all(np.isfinite(alu.throughputs["memory"]))
    assert np.allclose(alu.base_ipc, 4.0)


def test_bug_apply() -> None:
    """Bugs add CPI and show up in their unit's counters"""
    state = _state()
    clean, clean_ipc = derive_counters(state, WINDOW)

    family = get_family("fetch_width_drop")
    params = {"N": 2}
    buggy_state = family.apply(state, params)
    extra = family.extra_cpi(state, params)
    assert np.all(extra > 0)
    assert np.allclose(buggy_state.cpi, state.cpi + extra)
    assert state.extra.sum() == 0  # input untouched
    buggy, buggy_ipc = derive_counters(buggy_state, WINDOW)
    assert np.all(buggy_ipc < clean_ipc)
    assert np.allclose(
        _per_inst(buggy, "fetch.stall_cycles") - _per_inst(clean, "fetch.stall_cycles"),
        extra,
    )
    assert np.allclose(
        _per_inst(buggy, "commit.idle_cycles"), _per_inst(clean, "commit.idle_cycles")
    )
    impact = float(np.mean(1.0 - buggy_ipc / clean_ipc))
    assert impact == pytest.approx(relative_impact(state.cpi, extra))

    # low observability: most extra cycles land in commit idle time
    btb = get_family("btb_alias_delay")
    assert btb.low_observability
    params = {"T": 10}
    extra = btb.extra_cpi(state, params)
    buggy, _ = derive_counters(btb.apply(state, params), WINDOW)
    assert np.allclose(
        _per_inst(buggy, "branch.squash_cycles")
        - _per_inst(clean, "branch.squash_cycles"),
        0.25 * extra,
    )
    assert np.allclose(
        _per_inst(buggy, "commit.idle_cycles") - _per_inst(clean, "commit.idle_cycles"),
        0.75 * extra,
    )


def test_families() -> None:
    """Family table and lookup"""
    assert len(FAMILIES) == 22
    for unit in UnitLabel.units():
        families = families_for(unit)
        assert len(families) == 2
        assert all(f.unit is unit for f in families)
    branch = families_for(UnitLabel.BRANCH)
    assert [f.name for f in branch] == ["predictor_table_shrink", "btb_alias_delay"]
    assert families_for(UnitLabel.BUGFREE) == []

    with pytest.raises(ConfigError, match="unknown bug family"):
        get_family("cosmic_ray")

    family = get_family("serializing_opcode")
    family.check_params({"T": 3, "X": "fp"})
    with pytest.raises(ConfigError, match="needs parameter 'T'"):
        family.check_params({"X": "fp"})
    with pytest.raises(ConfigError, match="opcode class"):
        family.check_params({"T": 3, "X": "load"})
    with pytest.raises(ConfigError, match="outside"):
        family.check_params({"T": -1, "X": "int"})
    with pytest.raises(ConfigError, match="takes no opcode class"):
        get_family("int_latency").check_params({"T": 1, "X": "int"})
    with pytest.raises(ConfigError, match="unknown parameters"):
        get_family("int_latency").check_params({"T": 1, "Y": 2})


def test_calibrate_knob() -> None:
    """Bisection finds the knob for a target impact"""
    states = [_state(ArchConfig("a")), _state(ArchConfig("b", pipeline_width=2))]
    family = get_family("commit_opcode_stall")
    for target in (0.01, 0.03):
        knob = calibrate_knob(family, states, target, opclass="store")
        impacts = [
            relative_impact(s.cpi, family.extra_cpi(s, {"T": knob, "X": "store"}))
            for s in states
        ]
        assert np.mean(impacts) == pytest.approx(target, rel=1e-6)

    with pytest.raises(ConfigError, match="unreachable"):
        calibrate_knob(get_family("phys_reg_shrink"), states, 0.99)
    with pytest.raises(ConfigError, match="must be in"):
        calibrate_knob(family, states, 0.0)
    with pytest.raises(ConfigError, match="unknown opcode class"):
        calibrate_knob(family, states, 0.01, opclass="simd")
