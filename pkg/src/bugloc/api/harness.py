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
Evaluation of localization methods on held-out architectures.

A verdict is produced for every buggy design of a test architecture from the
traces of all its workloads. A verdict is correct at k when the true unit is
among the first k ranked classes.
"""

from __future__ import annotations

# standard
import enum
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

# third party
import numpy as np
import pandas as pd

# this project
from ..__about__ import __version__
from ..errors import ConfigError, EmptyInput, GridError, MissingClass, NoTestData
from ..impl.parallel import thread_map
from .cbc import CbcModelBank, localize_cbc, score_trace
from .ensemble import combine
from .p2bc import P2bcModel, localize_p2bc
from .scores import Localization, ScoreVector, sum_scores
from .traces import Category, CounterTrace, Dataset, DesignInstance, Split, UnitLabel

__all__ = [
    "BugFreeAudit",
    "EvalConfig",
    "EvalReport",
    "Localizer",
    "Method",
    "SensitivityResult",
    "Verdict",
    "bugfree_audit",
    "evaluate",
    "topk_accuracy",
    "workload_sensitivity",
]

logger = logging.getLogger(__name__)

DEFAULT_BANDS = (0.001, 0.01, 0.05)


class Method(str, enum.Enum):
    CBC = "cbc"
    P2BC = "p2bc"
    ENSEMBLE = "ensemble"

    @classmethod
    def from_string(cls, name: str) -> Method:
        if isinstance(name, cls):
            return name
        try:
            return cls(name.lower())
        except (ValueError, AttributeError):
            raise ValueError(f"'{name}' is not a localization method") from None


@dataclass
class Localizer:
    """Trained models of one localization method"""

    method: Method
    cbc: Optional[CbcModelBank] = None
    p2bc: Optional[P2bcModel] = None

    def __post_init__(self) -> None:
        self.method = Method.from_string(self.method)
        if self.method in (Method.CBC, Method.ENSEMBLE) and self.cbc is None:
            raise ConfigError(f"{self.method.value} needs a CBC model bank")
        if self.method in (Method.P2BC, Method.ENSEMBLE) and self.p2bc is None:
            raise ConfigError(f"{self.method.value} needs a P2BC model")

    def localize(
        self, traces: Union[Iterable[CounterTrace], Mapping[str, CounterTrace]]
    ) -> Localization:
        if not isinstance(traces, Mapping):
            traces = list(traces)
        if self.method is Method.CBC:
            assert self.cbc is not None
            return localize_cbc(self.cbc, traces)
        assert self.p2bc is not None
        p2bc = localize_p2bc(self.p2bc, traces=traces)
        if self.method is Method.P2BC:
            return p2bc
        assert self.cbc is not None
        cbc = localize_cbc(self.cbc, traces)
        verdict = combine(cbc.scores, p2bc.scores)
        loc = verdict.to_localization()
        loc.per_workload = cbc.per_workload
        loc.zero_filled_counters = sorted(
            set(cbc.zero_filled_counters) | set(p2bc.zero_filled_counters)
        )
        loc.missing_workloads = sorted(
            set(cbc.missing_workloads) | set(p2bc.missing_workloads)
        )
        return loc


def topk_accuracy(
    verdicts: Sequence[tuple[Sequence[UnitLabel], UnitLabel]], k: int
) -> float:
    """
    Fraction of verdicts whose true label is among the first k entries.

    Args:
        verdicts: (ranking, true label) pairs; every ranking orders the same
            units, each exactly once
        k: number of leading entries that count

    Raises:
        EmptyInput: no verdicts
        ValueError: k < 1, a ranking repeats a unit, rankings cover different
            units or a true label is not ranked
    """
    if k < 1:
        raise ValueError(f"k must be at least 1: {k}")
    if not verdicts:
        raise EmptyInput("no verdicts to score")
    units: Optional[set[UnitLabel]] = None
    hits = 0
    for ranking, truth in verdicts:
        ranked = list(ranking)
        ranked_set = set(ranked)
        if len(ranked_set) != len(ranked):
            repeated = sorted({u.value for u in ranked if ranked.count(u) > 1})
            raise ValueError(f"ranking lists units more than once: {repeated}")
        if units is None:
            units = ranked_set
        elif ranked_set != units:
            differ = sorted(u.value for u in units ^ ranked_set)
            raise ValueError(f"rankings cover different units: {differ}")
        if truth not in ranked_set:
            raise ValueError(f"true label {truth.value} is not in the ranking")
        hits += truth in ranked[:k]
    return hits / len(verdicts)


@dataclass
class Verdict:
    """Localization outcome for one test design"""

    arch_id: str
    bug_id: Optional[str]
    label: UnitLabel
    category: Optional[Category]
    ranking: list[UnitLabel]
    scores: dict[UnitLabel, float]
    impact: Optional[float] = None
    runtime: float = 0.0

    @property
    def rank(self) -> int:
        """One based rank of the true label"""
        return self.ranking.index(self.label) + 1

    def to_dict(self) -> dict[str, Any]:
        return dict(
            arch_id=self.arch_id,
            bug_id=self.bug_id,
            label=self.label.value,
            category=self.category.value if self.category else None,
            impact=self.impact,
            ranking=[u.value for u in self.ranking],
            scores={u.value: s for u, s in self.scores.items()},
            runtime=self.runtime,
        )


@dataclass
class EvalConfig:
    max_k: int = 5
    bands: tuple[float, ...] = DEFAULT_BANDS
    """Lower impact bounds of the cumulative impact bands"""
    threads: int = 1

    def __post_init__(self) -> None:
        if self.max_k < 1:
            raise ConfigError(f"max_k must be at least 1: {self.max_k}")
        self.bands = tuple(sorted(float(b) for b in self.bands))

    @property
    def ks(self) -> list[int]:
        return list(range(1, self.max_k + 1))


def _band_name(bound: float) -> str:
    return f">{100 * bound:g}%"


# pylint: disable=too-many-instance-attributes
@dataclass
class EvalReport:
    """Top-k accuracy tables of one method"""

    method: str
    ks: list[int]
    n_test: int
    accuracy: dict[int, float]
    by_category: dict[str, dict[int, float]]
    category_counts: dict[str, int]
    by_band: dict[str, dict[int, float]]
    band_counts: dict[str, int]
    by_arch: dict[str, dict[int, float]]
    random_baseline: dict[int, float]
    unit_recall: dict[str, float]
    """Top-1 recall per true unit"""
    runtime: dict[str, float]
    config: dict[str, Any] = field(default_factory=dict)
    verdicts: list[Verdict] = field(default_factory=list)

    @property
    def mean_arch_accuracy(self) -> dict[int, float]:
        return {
            k: float(np.mean([acc[k] for acc in self.by_arch.values()]))
            for k in self.ks
        }

    def to_dict(self, include_verdicts: bool = True) -> dict[str, Any]:
        def _table(t: Mapping[int, float]) -> dict[str, float]:
            return {str(k): v for k, v in t.items()}

        d: dict[str, Any] = dict(
            method=self.method,
            n_test=self.n_test,
            accuracy=_table(self.accuracy),
            random_baseline=_table(self.random_baseline),
            by_category={c: _table(t) for c, t in self.by_category.items()},
            category_counts=dict(self.category_counts),
            by_band={b: _table(t) for b, t in self.by_band.items()},
            band_counts=dict(self.band_counts),
            bands=dict(cumulative=True, approximate_edges=True),
            by_arch={a: _table(t) for a, t in self.by_arch.items()},
            mean_arch_accuracy=_table(self.mean_arch_accuracy),
            unit_recall=dict(self.unit_recall),
            runtime=dict(self.runtime),
            config=self.config,
        )
        d["$bugloc-version"] = __version__
        if include_verdicts:
            d["verdicts"] = [v.to_dict() for v in self.verdicts]
        return d

    def to_frame(self) -> pd.DataFrame:
        """Plot ready table: method, category, k, accuracy, n"""
        rows = []

        def _add(category: str, table: Mapping[int, float], n: int) -> None:
            for k in self.ks:
                rows.append(
                    dict(
                        method=self.method,
                        category=category,
                        k=k,
                        accuracy=table[k],
                        n=n,
                    )
                )

        _add("all", self.accuracy, self.n_test)
        for c, t in self.by_category.items():
            _add(c, t, self.category_counts[c])
        for b, t in self.by_band.items():
            _add(f"impact{b}", t, self.band_counts[b])
        _add("random", self.random_baseline, self.n_test)
        return pd.DataFrame(rows, columns=["method", "category", "k", "accuracy", "n"])

    def save(self, path: Union[Path, str], *, csv: bool = True) -> Path:
        """Write JSON report and, optionally, the CSV table next to it"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", "utf8")
        if csv:
            self.to_frame().to_csv(
                path.with_suffix(".csv"), index=False, lineterminator="\n"
            )
        return path


def _accuracy_table(verdicts: Sequence[Verdict], ks: Sequence[int]) -> dict[int, float]:
    pairs = [(v.ranking, v.label) for v in verdicts]
    if not pairs:
        return {k: 0.0 for k in ks}
    return {k: topk_accuracy(pairs, k) for k in ks}


def _test_designs(dataset: Dataset) -> list[DesignInstance]:
    return [i for i in dataset.instances(Split.TEST) if i.label.is_unit]


def evaluate(
    localizer: Localizer,
    dataset: Dataset,
    cfg: Optional[EvalConfig] = None,
    *,
    config_echo: Optional[Mapping[str, Any]] = None,
) -> EvalReport:
    """
    Localize every buggy test design and tabulate top-k accuracy.

    Overall accuracies pool all test designs. Impact bands use the
    manifest's per-bug impacts and are cumulative.

    Raises:
        NoTestData: dataset has no buggy designs on test architectures
    """
    cfg = cfg or EvalConfig()
    designs = _test_designs(dataset)
    if not designs:
        raise NoTestData("no buggy designs on test architectures")

    def _job(inst: DesignInstance) -> Verdict:
        start = time.perf_counter()
        loc = localizer.localize(inst.traces)
        elapsed = time.perf_counter() - start
        return Verdict(
            arch_id=inst.arch_id,
            bug_id=inst.bug_id,
            label=inst.label,
            category=inst.category,
            ranking=loc.ranking,
            scores=dict(loc.scores.scores),
            impact=dataset.bug_impacts.get(inst.bug_id or ""),
            runtime=elapsed,
        )

    verdicts = thread_map(_job, designs, cfg.threads)
    ks = cfg.ks
    n_units = len(UnitLabel.units())

    by_category: dict[str, dict[int, float]] = {}
    category_counts: dict[str, int] = {}
    for category in Category:
        selected = [v for v in verdicts if v.category is category]
        category_counts[category.value] = len(selected)
        by_category[category.value] = _accuracy_table(selected, ks)

    by_band: dict[str, dict[int, float]] = {}
    band_counts: dict[str, int] = {}
    if any(v.impact is not None for v in verdicts):
        for bound in cfg.bands:
            selected = [
                v for v in verdicts if v.impact is not None and v.impact > bound
            ]
            band_counts[_band_name(bound)] = len(selected)
            by_band[_band_name(bound)] = _accuracy_table(selected, ks)

    by_arch = {
        arch: _accuracy_table([v for v in verdicts if v.arch_id == arch], ks)
        for arch in sorted({v.arch_id for v in verdicts})
    }

    unit_recall = {}
    for unit in UnitLabel.units():
        selected = [v for v in verdicts if v.label is unit]
        if selected:
            unit_recall[unit.value] = sum(v.rank == 1 for v in selected) / len(selected)

    runtimes = [v.runtime for v in verdicts]
    report = EvalReport(
        method=localizer.method.value,
        ks=ks,
        n_test=len(verdicts),
        accuracy=_accuracy_table(verdicts, ks),
        by_category=by_category,
        category_counts=category_counts,
        by_band=by_band,
        band_counts=band_counts,
        by_arch=by_arch,
        random_baseline={k: min(1.0, k / n_units) for k in ks},
        unit_recall=unit_recall,
        runtime=dict(
            total=float(np.sum(runtimes)),
            mean=float(np.mean(runtimes)),
            max=float(np.max(runtimes)),
        ),
        config=dict(config_echo or {}),
        verdicts=verdicts,
    )
    logger.info(
        "%s: top-1 %.3f, top-3 %.3f over %d test designs",
        report.method,
        report.accuracy[1],
        report.accuracy.get(3, float("nan")),
        report.n_test,
    )
    return report


@dataclass
class SensitivityResult:
    """Top-1 accuracy against number of workloads used"""

    grid: list[int]
    accuracies: np.ndarray
    """repetitions x len(grid) top-1 accuracies"""
    seed: int
    batch: int

    @property
    def repetitions(self) -> int:
        return int(self.accuracies.shape[0])

    @property
    def mean(self) -> list[float]:
        return self.accuracies.mean(axis=0).tolist()

    @property
    def min(self) -> list[float]:
        return self.accuracies.min(axis=0).tolist()

    @property
    def max(self) -> list[float]:
        return self.accuracies.max(axis=0).tolist()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            dict(n_workloads=self.grid, mean=self.mean, min=self.min, max=self.max)
        )

    def to_dict(self) -> dict[str, Any]:
        return dict(
            grid=list(self.grid),
            mean=self.mean,
            min=self.min,
            max=self.max,
            repetitions=self.repetitions,
            seed=self.seed,
            batch=self.batch,
        )


def _bank_of(models: Union[CbcModelBank, Localizer]) -> CbcModelBank:
    if isinstance(models, Localizer):
        if models.method is not Method.CBC or models.cbc is None:
            raise ConfigError("workload sensitivity needs a CBC model bank")
        return models.cbc
    return models


def default_grid(n_workloads: int, batch: int = 5) -> list[int]:
    """Workload counts from all workloads down in steps of batch"""
    return list(range(n_workloads, 0, -batch))


# pylint: disable=too-many-locals
def workload_sensitivity(
    models: Union[CbcModelBank, Localizer],
    dataset: Dataset,
    grid: Optional[Sequence[int]] = None,
    repetitions: int = 100,
    seed: int = 0,
    *,
    batch: int = 5,
) -> SensitivityResult:
    """
    Top-1 accuracy when localizing from fewer workloads.

    Each repetition discards workloads in random order; grid point g keeps
    the first g workloads of that order. Nothing is retrained: per-workload
    scores are computed once and summed over the kept workloads.

    Raises:
        GridError: grid empty, not strictly decreasing or out of range
        NoTestData: no buggy test designs
    """
    bank = _bank_of(models)
    workloads = [w for w in dataset.workloads if w in bank.workloads]
    grid = list(grid) if grid is not None else default_grid(len(workloads), batch)
    if not grid:
        raise GridError("empty workload grid")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise GridError(f"workload grid must be strictly decreasing: {grid}")
    if grid[0] > len(workloads) or grid[-1] < 1:
        raise GridError(f"workload grid {grid} outside [1, {len(workloads)}]")
    if repetitions < 1:
        raise GridError(f"repetitions must be positive: {repetitions}")

    designs = _test_designs(dataset)
    if not designs:
        raise NoTestData("no buggy designs on test architectures")
    cached = [
        {w: score_trace(bank, t) for w, t in inst.traces.items() if w in bank.workloads}
        for inst in designs
    ]

    rng = np.random.default_rng(seed)
    accuracies = np.zeros((repetitions, len(grid)))
    for r in range(repetitions):
        order = [workloads[i] for i in rng.permutation(len(workloads))]
        for j, n in enumerate(grid):
            kept = set(order[:n])
            hits = 0
            for inst, scores in zip(designs, cached):
                subset = {w: s for w, s in scores.items() if w in kept}
                if not subset:
                    continue
                ranking = ScoreVector(sum_scores(subset)).ranking()
                hits += ranking[0] is inst.label
            accuracies[r, j] = hits / len(designs)
        logger.debug("sensitivity repetition %d: %s", r, accuracies[r].tolist())
    return SensitivityResult(grid=grid, accuracies=accuracies, seed=seed, batch=batch)


@dataclass
class BugFreeAudit:
    """How a bank with a BugFree class ranks bug-free and buggy designs"""

    bugfree_ranks: dict[str, int]
    """BugFree rank per bug-free design (by architecture)"""
    buggy_rank_histogram: dict[int, int]
    """Number of buggy designs per BugFree rank"""
    buggy_in_topk: int
    k: int
    bugfree_top1_confidence: float
    buggy_top1_confidence: float
    margin_ratio: Optional[float]
    """Smallest buggy top-1 score over largest BugFree score on buggy designs"""

    @property
    def ranked_first(self) -> int:
        return sum(1 for r in self.bugfree_ranks.values() if r == 1)

    def to_dict(self) -> dict[str, Any]:
        return dict(
            bugfree_ranks=dict(self.bugfree_ranks),
            bugfree_ranked_first=self.ranked_first,
            n_bugfree=len(self.bugfree_ranks),
            buggy_rank_histogram={
                str(k): v for k, v in self.buggy_rank_histogram.items()
            },
            buggy_bugfree_in_topk=self.buggy_in_topk,
            k=self.k,
            bugfree_top1_confidence=self.bugfree_top1_confidence,
            buggy_top1_confidence=self.buggy_top1_confidence,
            margin_ratio=self.margin_ratio,
        )


def bugfree_audit(
    models: Union[CbcModelBank, Localizer],
    dataset: Dataset,
    *,
    k: int = 5,
    threads: int = 1,
) -> BugFreeAudit:
    """
    Rank of the BugFree class on bug-free and buggy test designs.

    Raises:
        MissingClass: the bank was trained without the BugFree class
        EmptyInput: no test designs
    """
    bank = _bank_of(models)
    if not bank.include_bugfree_class:
        raise MissingClass("model bank was trained without the BugFree class")
    designs = dataset.instances(Split.TEST)
    if not designs:
        raise EmptyInput("no test designs to audit")
    locs = thread_map(lambda inst: localize_cbc(bank, inst.traces), designs, threads)

    bugfree_ranks: dict[str, int] = {}
    histogram: dict[int, int] = {}
    bugfree_top: list[float] = []
    buggy_top: list[float] = []
    buggy_bugfree_scores: list[float] = []
    for inst, loc in zip(designs, locs):
        ranking = loc.ranking
        rank = ranking.index(UnitLabel.BUGFREE) + 1
        top_score = loc.scores[ranking[0]]
        if inst.label is UnitLabel.BUGFREE:
            bugfree_ranks[inst.arch_id] = rank
            bugfree_top.append(top_score)
        elif inst.label.is_unit:
            histogram[rank] = histogram.get(rank, 0) + 1
            buggy_top.append(top_score)
            buggy_bugfree_scores.append(loc.scores[UnitLabel.BUGFREE])

    if not bugfree_ranks and not histogram:
        raise EmptyInput("no bug-free or buggy test designs to audit")
    margin = None
    if buggy_top and max(buggy_bugfree_scores) > 0:
        margin = min(buggy_top) / max(buggy_bugfree_scores)
    audit = BugFreeAudit(
        bugfree_ranks=bugfree_ranks,
        buggy_rank_histogram=dict(sorted(histogram.items())),
        buggy_in_topk=sum(n for r, n in histogram.items() if r <= k),
        k=k,
        bugfree_top1_confidence=float(np.mean(bugfree_top)) if bugfree_top else 0.0,
        buggy_top1_confidence=float(np.mean(buggy_top)) if buggy_top else 0.0,
        margin_ratio=margin,
    )
    logger.info(
        "BugFree first on %d of %d bug-free designs, in top-%d of %d buggy designs",
        audit.ranked_first,
        len(bugfree_ranks),
        k,
        audit.buggy_in_topk,
    )
    return audit
