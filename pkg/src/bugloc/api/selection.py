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
Per-workload performance counter selection.

Selection runs in two steps over the bug-free traces of the training
("legacy") architectures of a workload:

1. keep counters whose absolute Pearson correlation with IPC, averaged over
   the legacy architectures, is at least `alpha`
2. scan the survivors by decreasing average IPC correlation (ties by name)
   and drop any counter whose average absolute correlation with an already
   kept counter exceeds `beta`

Buggy traces never take part, so selection is independent of the bugs.
"""

from __future__ import annotations

# standard
import datetime as dt
import fnmatch
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

# third party
import numpy as np

# this project
from ..__about__ import __version__
from ..errors import ConfigError, InsufficientData, LengthMismatch
from ..impl.parallel import thread_map
from .traces import CounterTrace, Dataset, Split, UnitLabel

__all__ = [
    "SelectionConfig",
    "SelectionResult",
    "build_superset",
    "ipc_correlations",
    "legacy_traces",
    "pearson",
    "select_all",
    "select_counters",
]

logger = logging.getLogger(__name__)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Pearson correlation coefficient.

    Returns 0 when either vector is constant.

    Raises:
        LengthMismatch: vectors differ in length or are shorter than 2
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise LengthMismatch(f"cannot correlate shapes {xa.shape} and {ya.shape}")
    if xa.shape[0] < 2:
        raise LengthMismatch(f"need at least 2 values but got {xa.shape[0]}")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        return 0.0
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    den = np.sqrt(np.dot(xc, xc) * np.dot(yc, yc))
    if den == 0.0:
        return 0.0
    return float(np.clip(np.dot(xc, yc) / den, -1.0, 1.0))


@dataclass
class SelectionConfig:
    """Counter selection thresholds"""

    alpha: float = 0.7
    """Minimum average absolute correlation with IPC"""
    beta: float = 0.95
    """Maximum average absolute correlation between kept counters"""
    exclude: Sequence[str] = ()
    """Glob patterns of counters never selected"""

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0,1]: {value}")
        self.exclude = tuple(self.exclude)

    def excluded(self, name: str) -> bool:
        return any(fnmatch.fnmatchcase(name, pat) for pat in self.exclude)


def legacy_traces(dataset: Dataset, workload: str) -> list[CounterTrace]:
    """Bug-free traces of a workload on training architectures"""
    return dataset.select(split=Split.TRAIN, workload=workload, label=UnitLabel.BUGFREE)


def _candidate_counters(
    traces: Sequence[CounterTrace], cfg: SelectionConfig
) -> list[str]:
    common = set(traces[0].counter_names)
    for t in traces[1:]:
        common &= set(t.counter_names)
    return [
        n for n in traces[0].counter_names if n in common and not cfg.excluded(n)
    ]


def ipc_correlations(
    traces: Sequence[CounterTrace], counters: Sequence[str]
) -> dict[str, float]:
    """Average absolute correlation of each counter with IPC"""
    return {
        c: float(np.mean([abs(pearson(t.column(c), t.ipc)) for t in traces]))
        for c in counters
    }


def select_counters(
    dataset: Dataset,
    workload: str,
    cfg: Optional[SelectionConfig] = None,
) -> list[str]:
    """
    Select counters for one workload.

    Returns:
        selected counter names by decreasing IPC correlation

    Raises:
        InsufficientData: no legacy bug-free traces for the workload or a
            trace with fewer than 2 windows
    """
    cfg = cfg or SelectionConfig()
    traces = legacy_traces(dataset, workload)
    if not traces:
        raise InsufficientData(f"no bug-free legacy traces for workload '{workload}'")
    for t in traces:
        if t.length < 2:
            raise InsufficientData(f"trace {t.describe()} has fewer than 2 windows")
    if len({t.arch_id for t in traces}) < 2:
        logger.warning(
            "Selecting counters for '%s' from a single legacy architecture", workload
        )

    scores = ipc_correlations(traces, _candidate_counters(traces, cfg))
    survivors = sorted(
        (c for c, s in scores.items() if s >= cfg.alpha),
        key=lambda c: (-scores[c], c),
    )

    kept: list[str] = []
    for counter in survivors:
        col = [t.column(counter) for t in traces]
        redundant = False
        for other in kept:
            pair = np.mean(
                [abs(pearson(c, t.column(other))) for c, t in zip(col, traces)]
            )
            if pair > cfg.beta:
                redundant = True
                break
        if not redundant:
            kept.append(counter)

    logger.debug(
        "workload %s: %d of %d counters pass alpha, %d kept",
        workload,
        len(survivors),
        len(scores),
        len(kept),
    )
    if not kept:
        logger.warning("No counters selected for workload '%s'", workload)
    return kept


def build_superset(per_workload: Mapping[str, Sequence[str]]) -> list[str]:
    """
    Union of per-workload selections.

    Ordered by first appearance when scanning workloads sorted by id.
    """
    superset: list[str] = []
    seen: set[str] = set()
    for workload in sorted(per_workload):
        for counter in per_workload[workload]:
            if counter not in seen:
                seen.add(counter)
                superset.append(counter)
    return superset


@dataclass
class SelectionResult:
    """Selected counters for each workload and their union"""

    per_workload: dict[str, list[str]]
    superset: list[str] = field(default_factory=list)
    config: SelectionConfig = field(default_factory=SelectionConfig)
    n_available: int = 0
    """Number of counters common to the legacy traces, if known"""

    def __post_init__(self) -> None:
        if not self.superset:
            self.superset = build_superset(self.per_workload)

    @property
    def workloads(self) -> tuple[str, ...]:
        return tuple(sorted(self.per_workload))

    def ratio_report(self) -> dict[str, float]:
        """
        Size ratios of the superset.

        Superset size over the mean single-workload selection size and
        available counters over superset size.
        """
        sizes = [len(v) for v in self.per_workload.values()]
        mean_size = float(np.mean(sizes)) if sizes else 0.0
        n_super = len(self.superset)
        report = {
            "superset_size": float(n_super),
            "mean_selection_size": mean_size,
            "superset_over_selection": n_super / mean_size if mean_size else 0.0,
        }
        if self.n_available:
            report["available_over_superset"] = (
                self.n_available / n_super if n_super else 0.0
            )
        return report

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {w: list(self.per_workload[w]) for w in self.workloads}
        d["superset"] = list(self.superset)
        d["$config"] = {
            "alpha": self.config.alpha,
            "beta": self.config.beta,
            "exclude": list(self.config.exclude),
        }
        d["$available"] = self.n_available
        d["$bugloc-version"] = __version__
        d["$created"] = str(dt.datetime.now())
        return d

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> SelectionResult:
        """Parse selection JSON; keys starting with '$' are metadata"""
        per_workload = {
            str(k): [str(c) for c in v]
            for k, v in obj.items()
            if k != "superset" and not k.startswith("$")
        }
        config = SelectionConfig(**obj.get("$config", {}))
        return cls(
            per_workload=per_workload,
            superset=[str(c) for c in obj.get("superset", ())],
            config=config,
            n_available=int(obj.get("$available", 0)),
        )

    def save(self, path: Union[Path, str]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", "utf8")
        return path

    @classmethod
    def load(cls, path: Union[Path, str]) -> SelectionResult:
        return cls.from_dict(json.loads(Path(path).read_text("utf8")))


def select_all(
    dataset: Dataset,
    cfg: Optional[SelectionConfig] = None,
    *,
    threads: int = 1,
) -> SelectionResult:
    """Select counters for every workload in the dataset"""
    cfg = cfg or SelectionConfig()
    workloads = dataset.workloads
    selections = thread_map(
        lambda w: select_counters(dataset, w, cfg), workloads, threads
    )
    available: set[str] = set()
    for w in workloads:
        traces = legacy_traces(dataset, w)
        if traces:
            available |= set(_candidate_counters(traces, SelectionConfig()))
    result = SelectionResult(
        per_workload=dict(zip(workloads, selections)),
        config=cfg,
        n_available=len(available),
    )
    logger.info(
        "Selected %d counters over %d workloads (superset %.1fx a single selection)",
        len(result.superset),
        len(workloads),
        result.ratio_report()["superset_over_selection"],
    )
    return result
