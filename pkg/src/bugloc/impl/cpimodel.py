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
Analytic per-window bottleneck model of an out-of-order core.

The bug-free IPC of a window is the minimum of three throughput limits:

* width: the pipeline width
* memory: the inverse of the L1 and L2 miss latency per instruction, reduced
  by the memory level parallelism of the load/store queue
* branch: the inverse of the mispredict refill cycles per instruction

Bugs add cycles per instruction on top of the bottleneck. Every unit also
has a stall term in cycles per instruction that drives its stall counters
but not the bug-free IPC. Counters are derived deterministically from the
instruction mix, the architecture, the stall terms and the IPC.
"""

from __future__ import annotations

# standard
from dataclasses import dataclass, field
from typing import Any, Mapping

# third party
import numpy as np

# this project
from ..api.traces import UnitLabel
from ..errors import ConfigError

__all__ = [
    "ARCH_RANGES",
    "ArchConfig",
    "COUNTER_NAMES",
    "LIMITS",
    "MIX_CLASSES",
    "Phase",
    "WindowState",
    "WorkloadProfile",
    "derive_counters",
    "window_state",
]

MEMORY_LATENCY = 150.0
LIMITS = ("width", "memory", "branch")
# floor of a latency term, keeps unbound limits finite
MIN_LATENCY_CPI = 1e-9
MIX_CLASSES = ("branch", "load", "store", "int", "fp")

ARCH_RANGES: dict[str, tuple[float, float]] = {
    "pipeline_width": (1, 16),
    "rob_size": (16, 512),
    "lsq_size": (8, 256),
    "iq_size": (8, 256),
    "phys_regs": (32, 1024),
    "branch_accuracy": (0.5, 0.999),
    "cache_latency_cycles": (1, 100),
}
FU_LATENCY_RANGE = (1, 64)
DEFAULT_FU_LATENCY = {"int": 1.0, "fp": 4.0, "mem": 2.0}


@dataclass
class ArchConfig:
    """Latent parameters of one synthetic architecture"""

    arch_id: str
    pipeline_width: int = 4
    rob_size: int = 128
    lsq_size: int = 32
    iq_size: int = 32
    phys_regs: int = 256
    branch_accuracy: float = 0.95
    cache_latency_cycles: float = 12.0
    fu_latency: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_FU_LATENCY)
    )

    def __post_init__(self) -> None:
        if not self.arch_id:
            raise ConfigError("architecture needs an arch_id")
        for name, (lo, hi) in ARCH_RANGES.items():
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise ConfigError(
                    f"{self.arch_id}: {name} {value} outside [{lo}, {hi}]"
                )
        latency = dict(DEFAULT_FU_LATENCY)
        latency.update({str(k): float(v) for k, v in self.fu_latency.items()})
        for name, value in latency.items():
            if not FU_LATENCY_RANGE[0] <= value <= FU_LATENCY_RANGE[1]:
                raise ConfigError(
                    f"{self.arch_id}: {name} latency {value} out of range"
                )
        self.fu_latency = latency

    @property
    def pipeline_depth(self) -> float:
        return 10.0 + self.pipeline_width

    def to_dict(self) -> dict[str, Any]:
        return dict(
            arch_id=self.arch_id,
            pipeline_width=self.pipeline_width,
            rob_size=self.rob_size,
            lsq_size=self.lsq_size,
            iq_size=self.iq_size,
            phys_regs=self.phys_regs,
            branch_accuracy=self.branch_accuracy,
            cache_latency_cycles=self.cache_latency_cycles,
            fu_latency=dict(self.fu_latency),
        )

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> ArchConfig:
        try:
            return cls(**obj)
        except TypeError as ex:
            raise ConfigError(f"bad architecture config: {ex}") from ex


@dataclass
class Phase:
    """Stretch of windows with a fixed instruction mix"""

    length_windows: int
    mix: dict[str, float]
    locality: float

    def __post_init__(self) -> None:
        if self.length_windows < 1:
            raise ConfigError(f"phase length must be positive: {self.length_windows}")
        unknown = set(self.mix) - set(MIX_CLASSES)
        if unknown:
            raise ConfigError(f"unknown instruction classes {sorted(unknown)}")
        self.mix = {c: float(self.mix.get(c, 0.0)) for c in MIX_CLASSES}
        if any(v < 0 for v in self.mix.values()):
            raise ConfigError("instruction mix fractions must be non-negative")
        if abs(sum(self.mix.values()) - 1.0) > 1e-9:
            raise ConfigError(f"instruction mix sums to {sum(self.mix.values())}")
        if not 0.0 < self.locality < 1.0:
            raise ConfigError(f"locality must be in (0,1): {self.locality}")


@dataclass
class WorkloadProfile:
    """Phase sequence of one workload"""

    workload_id: str
    phases: list[Phase]

    def __post_init__(self) -> None:
        self.phases = [p if isinstance(p, Phase) else Phase(**p) for p in self.phases]
        if not self.phases:
            raise ConfigError(f"workload '{self.workload_id}' has no phases")

    @property
    def length(self) -> int:
        return sum(p.length_windows for p in self.phases)

    def per_window(self) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Instruction mix and locality of every window"""
        mix = {
            c: np.concatenate(
                [np.full(p.length_windows, p.mix[c]) for p in self.phases]
            )
            for c in MIX_CLASSES
        }
        locality = np.concatenate(
            [np.full(p.length_windows, p.locality) for p in self.phases]
        )
        return mix, locality

    def to_dict(self) -> dict[str, Any]:
        return dict(
            workload_id=self.workload_id,
            phases=[
                dict(
                    length_windows=p.length_windows,
                    mix=dict(p.mix),
                    locality=p.locality,
                )
                for p in self.phases
            ],
        )

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> WorkloadProfile:
        try:
            return cls(workload_id=str(obj["workload_id"]), phases=list(obj["phases"]))
        except (KeyError, TypeError) as ex:
            raise ConfigError(f"bad workload profile: {ex}") from ex


@dataclass
class WindowState:
    """
    Per-window model state before counters are derived.

    `throughputs` holds the IPC limit of each of [LIMITS][(m).], `stalls` the
    stall cycles per instruction of each unit as seen by its counters.
    `extra` holds additional CPI injected by a bug, `attributed` the part of
    it visible in the owning unit's stall counter.
    """

    arch: ArchConfig
    mix: dict[str, np.ndarray]
    locality: np.ndarray
    rates: dict[str, np.ndarray]
    throughputs: dict[str, np.ndarray]
    stalls: dict[UnitLabel, np.ndarray]
    extra: np.ndarray
    attributed: dict[UnitLabel, np.ndarray] = field(default_factory=dict)
    counter_deltas: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return int(self.locality.shape[0])

    @property
    def base_ipc(self) -> np.ndarray:
        """Bug-free IPC, the smallest throughput limit"""
        return np.minimum.reduce([self.throughputs[k] for k in LIMITS])

    @property
    def bottleneck(self) -> np.ndarray:
        """Name of the binding limit of each window"""
        stack = np.vstack([self.throughputs[k] for k in LIMITS])
        return np.asarray(LIMITS)[np.argmin(stack, axis=0)]

    @property
    def base_cpi(self) -> np.ndarray:
        return 1.0 / self.base_ipc

    @property
    def cpi(self) -> np.ndarray:
        return self.base_cpi + self.extra


def window_state(
    arch: ArchConfig,
    mix: Mapping[str, np.ndarray],
    locality: np.ndarray,
) -> WindowState:
    """Bug-free model state for the given per-window mix and locality"""
    br, ld, st = mix["branch"], mix["load"], mix["store"]
    it, fp = mix["int"], mix["fp"]
    lat = arch.fu_latency
    miss = 1.0 - locality

    rates = {
        "icache_miss": 0.02 * miss,
        "mispredict": br * (1.0 - arch.branch_accuracy),
        "l1_miss": (ld + st) * miss * 0.3,
    }
    rates["l2_miss"] = rates["l1_miss"] * miss * 0.5
    rates["wrong_path"] = rates["mispredict"] * arch.pipeline_width * 0.5

    memory = (
        rates["l1_miss"] * arch.cache_latency_cycles + rates["l2_miss"] * MEMORY_LATENCY
    ) / (1.0 + arch.lsq_size / 32.0)
    branch = rates["mispredict"] * arch.pipeline_depth
    ones = np.ones_like(locality)
    throughputs = {
        "width": arch.pipeline_width * ones,
        "memory": 1.0 / np.maximum(memory, MIN_LATENCY_CPI),
        "branch": 1.0 / np.maximum(branch, MIN_LATENCY_CPI),
    }
    stalls = {
        UnitLabel.FETCH: rates["icache_miss"] * arch.cache_latency_cycles * 0.5,
        UnitLabel.DECODE: 0.01 * ones,
        UnitLabel.RENAME: 0.005 * arch.pipeline_width * ones,
        UnitLabel.ISSUE: 0.04 * (32.0 / arch.iq_size) * (1.0 + fp),
        UnitLabel.EXECUTE: it * (lat["int"] - 1.0) * 0.1
        + fp * (lat["fp"] - 1.0) * 0.15
        + ld * (lat["mem"] - 1.0) * 0.05,
        UnitLabel.BRANCH: branch,
        UnitLabel.REGISTERS: 0.02 * (128.0 / arch.phys_regs) * ones,
        UnitLabel.LOADSTOREQUEUE: (ld + st) * 0.03 * (32.0 / arch.lsq_size),
        UnitLabel.MEMORY: memory,
        UnitLabel.REORDERBUFFER: memory * 0.3 * (64.0 / arch.rob_size),
        UnitLabel.COMMIT: 0.005 * ones,
    }
    return WindowState(
        arch=arch,
        mix={c: np.asarray(mix[c], dtype=np.float64) for c in MIX_CLASSES},
        locality=np.asarray(locality, dtype=np.float64),
        rates=rates,
        throughputs=throughputs,
        stalls=stalls,
        extra=np.zeros_like(locality),
    )


COUNTER_NAMES: tuple[str, ...] = (
    "fetch.insts",
    "fetch.cycles",
    "fetch.icache_misses",
    "fetch.stall_cycles",
    "fetch.branches",
    "decode.insts",
    "decode.stall_cycles",
    "decode.idle_cycles",
    "rename.insts",
    "rename.serialize_stall_cycles",
    "rename.rob_full_events",
    "rename.iq_full_events",
    "rename.lsq_full_events",
    "iq.insts_issued",
    "iq.int_issued",
    "iq.fp_issued",
    "iq.mem_issued",
    "iq.occupancy",
    "iq.stall_cycles",
    "exec.int_ops",
    "exec.fp_ops",
    "exec.fu_busy_cycles",
    "branch.predicted",
    "branch.mispredicted",
    "branch.btb_lookups",
    "branch.squash_cycles",
    "regs.int_writes",
    "regs.fp_writes",
    "regs.full_cycles",
    "lsq.loads",
    "lsq.stores",
    "lsq.full_cycles",
    "lsq.forwarded_loads",
    "mem.l1d_accesses",
    "mem.l1d_misses",
    "mem.l2_misses",
    "mem.stall_cycles",
    "mem.writebacks",
    "rob.occupancy",
    "rob.full_cycles",
    "commit.insts",
    "commit.squashed_insts",
    "commit.idle_cycles",
    "cycles",
)


def derive_counters(
    state: WindowState, window_cycles: int
) -> tuple[np.ndarray, np.ndarray]:
    """
    Counter deltas and IPC of each window.

    Returns:
        T x len(COUNTER_NAMES) matrix and the T IPC values, both noise free
    """
    arch = state.arch
    mix, rates = state.mix, state.rates
    ipc = 1.0 / state.cpi
    insts = window_cycles * ipc
    wrong = insts * rates["wrong_path"]

    def stall(unit: UnitLabel) -> np.ndarray:
        return insts * (state.stalls[unit] + state.attributed.get(unit, 0.0))

    unattributed = state.extra - sum(state.attributed.values(), np.zeros(state.length))
    fetched = insts + wrong
    fetch_stall = stall(UnitLabel.FETCH)
    pressure = state.cpi / (1.0 + state.cpi)
    fu_work = mix["int"] * arch.fu_latency["int"] + mix["fp"] * arch.fu_latency["fp"]
    c = {
        "fetch.insts": fetched,
        "fetch.cycles": np.maximum(window_cycles - fetch_stall, 0.0),
        "fetch.icache_misses": fetched * rates["icache_miss"],
        "fetch.stall_cycles": fetch_stall,
        "fetch.branches": fetched * mix["branch"],
        "decode.insts": fetched,
        "decode.stall_cycles": stall(UnitLabel.DECODE),
        "decode.idle_cycles": fetch_stall + stall(UnitLabel.BRANCH) * 0.5,
        "rename.insts": fetched,
        "rename.serialize_stall_cycles": stall(UnitLabel.RENAME),
        "rename.rob_full_events": stall(UnitLabel.REORDERBUFFER) / 4.0,
        "rename.iq_full_events": stall(UnitLabel.ISSUE) / 4.0,
        "rename.lsq_full_events": stall(UnitLabel.LOADSTOREQUEUE) / 4.0,
        "iq.insts_issued": fetched,
        "iq.int_issued": fetched * mix["int"],
        "iq.fp_issued": fetched * mix["fp"],
        "iq.mem_issued": fetched * (mix["load"] + mix["store"]),
        "iq.occupancy": window_cycles * arch.iq_size * (0.3 + 0.5 * pressure),
        "iq.stall_cycles": stall(UnitLabel.ISSUE),
        "exec.int_ops": insts * mix["int"],
        "exec.fp_ops": insts * mix["fp"],
        "exec.fu_busy_cycles": stall(UnitLabel.EXECUTE)
        + insts * fu_work / 4.0,
        "branch.predicted": insts * mix["branch"],
        "branch.mispredicted": insts * rates["mispredict"],
        "branch.btb_lookups": fetched * mix["branch"] * 1.1,
        "branch.squash_cycles": stall(UnitLabel.BRANCH),
        "regs.int_writes": insts * (mix["int"] + mix["load"]) * 0.9,
        "regs.fp_writes": insts * mix["fp"],
        "regs.full_cycles": stall(UnitLabel.REGISTERS),
        "lsq.loads": insts * mix["load"],
        "lsq.stores": insts * mix["store"],
        "lsq.full_cycles": stall(UnitLabel.LOADSTOREQUEUE),
        "lsq.forwarded_loads": insts * np.minimum(mix["load"], mix["store"]) * 0.1,
        "mem.l1d_accesses": insts * (mix["load"] + mix["store"]),
        "mem.l1d_misses": insts * rates["l1_miss"],
        "mem.l2_misses": insts * rates["l2_miss"],
        "mem.stall_cycles": stall(UnitLabel.MEMORY),
        "mem.writebacks": insts * rates["l1_miss"] * mix["store"],
        "rob.occupancy": window_cycles * arch.rob_size * (0.2 + 0.6 * pressure),
        "rob.full_cycles": stall(UnitLabel.REORDERBUFFER),
        "commit.insts": insts,
        "commit.squashed_insts": wrong,
        "commit.idle_cycles": stall(UnitLabel.COMMIT)
        + insts * np.maximum(unattributed, 0.0),
        "cycles": np.full(state.length, float(window_cycles)),
    }
    for name, delta in state.counter_deltas.items():
        c[name] = c[name] + insts * delta
    matrix = np.column_stack([np.maximum(c[n], 0.0) for n in COUNTER_NAMES])
    return matrix, ipc
