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
Mechanistic performance bug templates.

Each family belongs to one unit and adds CPI proportional to a magnitude
knob (a cycle count `T` or an entry count `N`) times a family specific
per-window exposure, for instance the fraction of instructions of an opcode
class. The extra cycles show up in the owning unit's stall counter and in a
small set of counters tied to the mechanism. Low observability families
expose only part of their extra cycles in their own unit's counters.

Variations of one family differ only in their parameters.
"""

from __future__ import annotations

# standard
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

# third party
import numpy as np

# this project
from ..api.traces import UnitLabel
from ..errors import ConfigError
from .cpimodel import MIX_CLASSES, WindowState

__all__ = [
    "BugFamily",
    "FAMILIES",
    "calibrate_knob",
    "families_for",
    "get_family",
    "relative_impact",
]

logger = logging.getLogger(__name__)

Exposure = Callable[[WindowState, Optional[str]], np.ndarray]


def _ones(s: WindowState) -> np.ndarray:
    return np.ones(s.length)


def _opclass(s: WindowState, x: Optional[str]) -> np.ndarray:
    return s.mix[x or "int"]


@dataclass(frozen=True)
class BugFamily:
    """Bug template with a single magnitude knob"""

    name: str
    unit: UnitLabel
    knob: str
    description: str
    exposure: Exposure = field(repr=False, compare=False)
    opclasses: tuple[str, ...] = ()
    """Opcode classes `X` the variations pick from"""
    observability: float = 1.0
    """Share of the extra cycles visible in the unit's stall counter"""
    signature: Mapping[str, float] = field(default_factory=dict)
    """Counter events per instruction per extra CPI"""
    knob_range: tuple[float, float] = (0.0, 10000.0)

    @property
    def low_observability(self) -> bool:
        return self.observability < 1.0

    def check_params(self, params: Mapping[str, object]) -> None:
        """
        Raises:
            ConfigError: knob missing or out of range, bad opcode class
        """
        if self.knob not in params:
            raise ConfigError(f"{self.name} bug needs parameter '{self.knob}'")
        value = float(params[self.knob])  # type: ignore[arg-type]
        lo, hi = self.knob_range
        if not lo <= value <= hi:
            raise ConfigError(f"{self.name}: {self.knob}={value} outside [{lo}, {hi}]")
        opclass = params.get("X")
        if self.opclasses:
            if opclass not in self.opclasses:
                raise ConfigError(
                    f"{self.name}: opcode class X={opclass!r}"
                    f" not one of {list(self.opclasses)}"
                )
        elif opclass is not None:
            raise ConfigError(f"{self.name} takes no opcode class")
        unknown = set(params) - {self.knob, "X"}
        if unknown:
            raise ConfigError(f"{self.name}: unknown parameters {sorted(unknown)}")

    def extra_cpi(self, state: WindowState, params: Mapping[str, object]) -> np.ndarray:
        knob = float(params[self.knob])  # type: ignore[arg-type]
        x = params.get("X")
        return knob * self.exposure(state, None if x is None else str(x))

    def apply(self, state: WindowState, params: Mapping[str, object]) -> WindowState:
        """Copy of state with this bug's extra cycles and counter deltas"""
        extra = self.extra_cpi(state, params)
        deltas = dict(state.counter_deltas)
        for name, weight in self.signature.items():
            deltas[name] = deltas.get(name, 0.0) + weight * extra
        attributed = dict(state.attributed)
        attributed[self.unit] = (
            attributed.get(self.unit, 0.0) + self.observability * extra
        )
        return dataclasses.replace(
            state,
            extra=state.extra + extra,
            attributed=attributed,
            counter_deltas=deltas,
        )


FAMILIES: dict[str, BugFamily] = {
    f.name: f
    for f in (
        BugFamily(
            "icache_delay",
            UnitLabel.FETCH,
            "T",
            "instruction cache fetches take T cycles longer",
            lambda s, x: 0.0125 * (2.0 - s.locality),
            signature={"fetch.icache_misses": 0.02},
        ),
        BugFamily(
            "fetch_width_drop",
            UnitLabel.FETCH,
            "N",
            "every 10 cycles fetch width drops by N for one cycle",
            lambda s, x: _ones(s) / (10.0 * s.arch.pipeline_width),
        ),
        BugFamily(
            "no_operand_delay",
            UnitLabel.DECODE,
            "T",
            "instructions without source operands wait T cycles in decode",
            lambda s, x: 0.05 * s.mix["int"],
        ),
        BugFamily(
            "predecode_bubble",
            UnitLabel.DECODE,
            "T",
            "a T cycle decode bubble follows every taken branch",
            lambda s, x: 0.2 * s.mix["branch"],
        ),
        BugFamily(
            "oldest_opcode_stall",
            UnitLabel.ISSUE,
            "T",
            "issue stalls while an opcode X instruction is the oldest in the queue",
            lambda s, x: 0.1 * _opclass(s, x) * (32.0 / s.arch.iq_size),
            opclasses=("int", "fp", "load"),
            signature={"iq.occupancy": 2.0},
        ),
        BugFamily(
            "iq_slot_delay",
            UnitLabel.ISSUE,
            "T",
            "with fewer than N free queue slots the next instruction waits T cycles",
            lambda s, x: 0.02 * (32.0 / s.arch.iq_size) * (1.0 + s.mix["fp"]),
            signature={"rename.iq_full_events": 0.25},
        ),
        BugFamily(
            "serializing_opcode",
            UnitLabel.RENAME,
            "T",
            "opcode X instructions serialize the pipeline",
            lambda s, x: 0.05 * _opclass(s, x),
            opclasses=("int", "fp", "store"),
        ),
        BugFamily(
            "rename_port_drop",
            UnitLabel.RENAME,
            "N",
            "every 10 cycles N rename ports are unavailable for one cycle",
            lambda s, x: _ones(s) / (10.0 * s.arch.pipeline_width),
        ),
        BugFamily(
            "int_latency",
            UnitLabel.EXECUTE,
            "T",
            "integer operation latency increased by T cycles",
            lambda s, x: 0.1 * s.mix["int"],
        ),
        BugFamily(
            "fp_latency",
            UnitLabel.EXECUTE,
            "T",
            "floating point operation latency increased by T cycles",
            lambda s, x: 0.15 * s.mix["fp"],
        ),
        BugFamily(
            "predictor_table_shrink",
            UnitLabel.BRANCH,
            "N",
            "prediction table index malfunction loses N entries",
            lambda s, x: 1e-4 * s.mix["branch"] * s.arch.pipeline_depth,
            signature={"branch.mispredicted": 0.07, "commit.squashed_insts": 0.1},
        ),
        BugFamily(
            "btb_alias_delay",
            UnitLabel.BRANCH,
            "T",
            "aliased target buffer entries delay redirects by T cycles",
            lambda s, x: 0.05 * s.mix["branch"],
            observability=0.25,
        ),
        BugFamily(
            "reg_write_delay",
            UnitLabel.REGISTERS,
            "T",
            "every N-th register write is delayed by T cycles",
            lambda s, x: 0.01 * (s.mix["int"] + s.mix["load"] + s.mix["fp"]),
        ),
        BugFamily(
            "phys_reg_shrink",
            UnitLabel.REGISTERS,
            "N",
            "number of physical registers reduced by N",
            lambda s, x: _ones(s) * (0.02 / s.arch.phys_regs),
        ),
        BugFamily(
            "load_queue_reject",
            UnitLabel.LOADSTOREQUEUE,
            "T",
            "every N-th load is rejected by a falsely full load queue",
            lambda s, x: 0.05 * s.mix["load"],
            signature={"rename.lsq_full_events": 0.25},
        ),
        BugFamily(
            "store_queue_reject",
            UnitLabel.LOADSTOREQUEUE,
            "T",
            "every N-th store is rejected by a falsely full store queue",
            lambda s, x: 0.05 * s.mix["store"],
            signature={"rename.lsq_full_events": 0.25},
        ),
        BugFamily(
            "l2_latency",
            UnitLabel.MEMORY,
            "T",
            "second level cache latency T cycles higher than expected",
            lambda s, x: s.rates["l1_miss"] / (1.0 + s.arch.lsq_size / 32.0),
        ),
        BugFamily(
            "store_line_delay",
            UnitLabel.MEMORY,
            "T",
            "after N stores to one cache line the next write waits T cycles",
            lambda s, x: 0.02 * s.mix["store"],
            observability=0.25,
        ),
        BugFamily(
            "rob_slot_delay",
            UnitLabel.REORDERBUFFER,
            "T",
            "with fewer than N free reorder buffer slots the next instruction"
            " waits T cycles",
            lambda s, x: 0.02 * (128.0 / s.arch.rob_size) * _ones(s),
            signature={"rename.rob_full_events": 0.25},
        ),
        BugFamily(
            "rob_shrink",
            UnitLabel.REORDERBUFFER,
            "N",
            "reorder buffer capacity reduced by N entries",
            lambda s, x: 10.0 * s.rates["l2_miss"] / s.arch.rob_size,
        ),
        BugFamily(
            "commit_width_drop",
            UnitLabel.COMMIT,
            "N",
            "every 10 cycles commit width drops by N for one cycle",
            lambda s, x: _ones(s) / (10.0 * s.arch.pipeline_width),
        ),
        BugFamily(
            "commit_opcode_stall",
            UnitLabel.COMMIT,
            "T",
            "committing an opcode X instruction blocks commit for T cycles",
            lambda s, x: 0.02 * _opclass(s, x),
            opclasses=("store", "branch", "fp"),
        ),
    )
}


def get_family(name: str) -> BugFamily:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ConfigError(f"unknown bug family '{name}'") from None


def families_for(unit: UnitLabel) -> list[BugFamily]:
    """Families of a unit, low observability ones last"""
    return sorted(
        (f for f in FAMILIES.values() if f.unit is unit),
        key=lambda f: (f.low_observability, list(FAMILIES).index(f.name)),
    )


def relative_impact(base_cpi: np.ndarray, extra_cpi: np.ndarray) -> float:
    """Mean per-window relative IPC degradation"""
    return float(np.mean(extra_cpi / (base_cpi + extra_cpi)))


def calibrate_knob(
    family: BugFamily,
    states: Iterable[WindowState],
    target: float,
    *,
    opclass: Optional[str] = None,
    tolerance: float = 1e-9,
) -> float:
    """
    Knob value giving the target mean impact over the given states.

    Impact is the average over states of [relative_impact][..]. It grows
    monotonically with the knob, so the value is found by bisection.

    Raises:
        ConfigError: target not reachable within the knob range
    """
    states = list(states)
    if not 0.0 < target < 1.0:
        raise ConfigError(f"impact target must be in (0,1): {target}")
    if opclass is not None and opclass not in MIX_CLASSES:
        raise ConfigError(f"unknown opcode class {opclass!r}")
    bases = [s.cpi for s in states]
    exposures = [family.exposure(s, opclass) for s in states]

    def impact(knob: float) -> float:
        return float(
            np.mean([relative_impact(b, knob * e) for b, e in zip(bases, exposures)])
        )

    lo, hi = family.knob_range
    if impact(hi) < target:
        raise ConfigError(
            f"{family.name}: impact {target:.4f} unreachable"
            f" (max {impact(hi):.4f} at {family.knob}={hi})"
        )
    while hi - lo > tolerance * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if impact(mid) < target:
            lo = mid
        else:
            hi = mid
    logger.debug("%s: %s=%.6g for impact %.4f", family.name, family.knob, hi, target)
    return hi
