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
Counter based classification.

A bank of one-vs-all binary classifiers is trained for every
(workload, unit) pair over the union of the selected counters. Rows of
training traces whose bug lies in the unit are positive, all other rows,
including those of bug-free designs, are negative.

To localize a design, each workload trace is scored by the classifiers of
its workload. In the default per-time-step mode a boosted tree model scores
every sample window and the per-workload score of a unit is the mean over
windows. In per-trace mode a convolutional network scores the whole trace
after resampling it to a fixed length. Per-workload scores are summed over
the available workloads and the units ranked by the sums.
"""

from __future__ import annotations

# standard
import dataclasses
import datetime as dt
import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

# third party
import numpy as np

# this project
from ..__about__ import __version__
from ..errors import EmptyInput, MissingWorkload, UnknownWorkload
from ..impl.convnet import ConvNet1D, ConvNetArch, TrainConfig, fit_convnet
from ..impl.gbdt import GbdtConfig, GbdtModel, balanced_weights, fit_gbdt
from ..impl.parallel import thread_map
from ..impl.resample import resample, target_length
from .scores import Localization, ScoreVector, sum_scores
from .traces import CounterTrace, Dataset, UnitLabel, as_trace_map

__all__ = [
    "CbcConfig",
    "CbcMode",
    "CbcModelBank",
    "extend_cbc",
    "localize_cbc",
    "score_trace",
    "train_cbc",
]

logger = logging.getLogger(__name__)

BANK_FORMAT = "bugloc.cbc-bank"
BANK_FORMAT_VERSION = 1


class CbcMode(str, enum.Enum):
    """
    Scoring granularity

    * STEP: boosted trees score each sample window
    * TRACE: convolutional network scores the resampled trace
    """

    STEP = "step"
    TRACE = "trace"

    @classmethod
    def from_string(cls, name: str) -> CbcMode:
        if isinstance(name, cls):
            return name
        try:
            return cls[name.upper()]
        except LookupError:
            return cls(name.lower())


@dataclass
class CbcConfig:
    """Counter based classification settings"""

    mode: CbcMode = CbcMode.STEP
    gbdt: GbdtConfig = field(default_factory=GbdtConfig)
    include_bugfree_class: bool = False
    balance_classes: bool = True
    trace_length: Optional[int] = None
    """Per-trace mode input length, default is the rounded mean training length"""
    cnn: ConvNetArch = field(default_factory=ConvNetArch)
    train: TrainConfig = field(default_factory=TrainConfig)
    threads: int = 1

    def __post_init__(self) -> None:
        self.mode = CbcMode.from_string(self.mode)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["mode"] = self.mode.value
        d["train"]["scaling"] = self.train.scaling.value
        return d


ModelKey = tuple[str, UnitLabel]


@dataclass(eq=False)
class CbcModelBank:
    """
    One-vs-all classifiers per (workload, class).

    In per-time-step mode `models` holds |W| x |classes| boosted tree models,
    in per-trace mode `trace_models` holds as many networks. The classes are
    the eleven units, plus BugFree when `include_bugfree_class` is set.
    """

    superset: list[str]
    workloads: tuple[str, ...]
    classes: tuple[UnitLabel, ...]
    mode: CbcMode = CbcMode.STEP
    models: dict[ModelKey, GbdtModel] = field(default_factory=dict)
    trace_models: dict[ModelKey, ConvNet1D] = field(default_factory=dict)
    trace_length: Optional[int] = None
    zero_filled: dict[str, list[str]] = field(default_factory=dict)
    """Superset counters missing from training traces, by workload"""
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def include_bugfree_class(self) -> bool:
        return UnitLabel.BUGFREE in self.classes

    @property
    def model_count(self) -> int:
        return len(self.models) + len(self.trace_models)

    @property
    def degenerate_models(self) -> list[ModelKey]:
        return sorted(
            (k for k, m in self.models.items() if m.degenerate),
            key=lambda k: (k[0], k[1].order),
        )

    #
    # persistence
    #

    def save(self, directory: Union[Path, str]) -> Path:
        """
        Write bank to a directory.

        Writes `bank.json` with the bank metadata and one JSON file per model
        under `models/`.
        """
        directory = Path(directory)
        model_dir = directory / "models"
        model_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        keyed: list[tuple[ModelKey, Any]] = sorted(
            list(self.models.items()) + list(self.trace_models.items()),
            key=lambda kv: (kv[0][0], kv[0][1].order),
        )
        for i, ((workload, unit), model) in enumerate(keyed):
            filename = f"m{i:05d}.json"
            model_dir.joinpath(filename).write_text(json.dumps(model.to_dict()), "utf8")
            entries.append(
                {"workload": workload, "unit": unit.value, "file": f"models/{filename}"}
            )
        meta = {
            "format": BANK_FORMAT,
            "version": BANK_FORMAT_VERSION,
            "mode": self.mode.value,
            "superset": self.superset,
            "workloads": list(self.workloads),
            "classes": [c.value for c in self.classes],
            "trace_length": self.trace_length,
            "zero_filled": self.zero_filled,
            "config": self.config,
            "models": entries,
            "$bugloc-version": __version__,
            "$created": str(dt.datetime.now()),
        }
        bank_file = directory / "bank.json"
        bank_file.write_text(json.dumps(meta, indent=2) + "\n", "utf8")
        return bank_file

    @classmethod
    def load(cls, directory: Union[Path, str]) -> CbcModelBank:
        directory = Path(directory)
        meta = json.loads(directory.joinpath("bank.json").read_text("utf8"))
        if meta.get("format") != BANK_FORMAT:
            raise ValueError(f"{directory} does not contain a cbc model bank")
        if meta.get("version") != BANK_FORMAT_VERSION:
            raise ValueError(f"unsupported bank version {meta.get('version')!r}")
        mode = CbcMode.from_string(meta["mode"])
        bank = cls(
            superset=list(meta["superset"]),
            workloads=tuple(meta["workloads"]),
            classes=tuple(UnitLabel.from_string(c) for c in meta["classes"]),
            mode=mode,
            trace_length=meta.get("trace_length"),
            zero_filled={k: list(v) for k, v in meta.get("zero_filled", {}).items()},
            config=meta.get("config", {}),
        )
        for entry in meta["models"]:
            obj = json.loads(directory.joinpath(entry["file"]).read_text("utf8"))
            key = (entry["workload"], UnitLabel.from_string(entry["unit"]))
            if mode is CbcMode.STEP:
                bank.models[key] = GbdtModel.from_dict(obj)
            else:
                bank.trace_models[key] = ConvNet1D.from_dict(obj)
        return bank


@dataclass
class _WorkloadData:
    """Training rows of one workload"""

    workload: str
    features: np.ndarray
    labels: np.ndarray
    """Class label of each row (step mode) or trace (trace mode)"""
    missing: list[str]


def _class_list(include_bugfree: bool) -> tuple[UnitLabel, ...]:
    units = UnitLabel.units()
    return units + (UnitLabel.BUGFREE,) if include_bugfree else units


def _trace_input(
    trace: CounterTrace, superset: Sequence[str], length: int
) -> tuple[np.ndarray, list[str]]:
    matrix, missing = trace.select(superset)
    return resample(matrix, length), missing


def _workload_data(
    dataset: Dataset,
    workload: str,
    superset: Sequence[str],
    mode: CbcMode,
    trace_length: Optional[int],
) -> _WorkloadData:
    traces = dataset.train_traces(workload)
    if not traces:
        raise MissingWorkload(f"no training traces for workload '{workload}'")
    blocks: list[np.ndarray] = []
    labels: list[UnitLabel] = []
    missing: set[str] = set()
    for t in traces:
        if mode is CbcMode.STEP:
            matrix, absent = t.select(superset)
            blocks.append(matrix)
            labels.extend([t.label] * t.length)
        else:
            assert trace_length is not None
            matrix, absent = _trace_input(t, superset, trace_length)
            blocks.append(matrix[None])
            labels.append(t.label)
        if absent:
            logger.warning(
                "Zero-filling %d counters missing from %s: %s",
                len(absent),
                t.describe(),
                ", ".join(absent),
            )
            missing.update(absent)
    return _WorkloadData(
        workload=workload,
        features=np.concatenate(blocks, axis=0),
        labels=np.array(labels, dtype=object),
        missing=sorted(missing),
    )


def _fit_one(
    data: _WorkloadData,
    unit: UnitLabel,
    superset: Sequence[str],
    cfg: CbcConfig,
) -> Union[GbdtModel, ConvNet1D]:
    y = np.array([label is unit for label in data.labels], dtype=np.float64)
    weights = balanced_weights(y) if cfg.balance_classes else None
    if cfg.mode is CbcMode.STEP:
        model = fit_gbdt(
            data.features,
            y,
            "logistic",
            cfg.gbdt,
            sample_weight=weights,
            feature_names=superset,
        )
        if model.degenerate:
            logger.warning(
                "Degenerate model for workload %s unit %s", data.workload, unit.value
            )
        return model
    train_cfg = dataclasses.replace(cfg.train, balance_classes=cfg.balance_classes)
    return fit_convnet(data.features, y, cfg.cnn, train_cfg)


def _train_pairs(
    dataset: Dataset,
    superset: Sequence[str],
    pairs: Sequence[ModelKey],
    cfg: CbcConfig,
    trace_length: Optional[int],
) -> tuple[dict[ModelKey, Any], dict[str, list[str]]]:
    workloads = sorted({w for w, _ in pairs})
    data = {
        w: _workload_data(dataset, w, superset, cfg.mode, trace_length)
        for w in workloads
    }

    def _job(pair: ModelKey):
        workload, unit = pair
        logger.debug("Training cbc model for %s/%s", workload, unit.value)
        return _fit_one(data[workload], unit, superset, cfg)

    models = thread_map(_job, pairs, cfg.threads)
    zero_filled = {w: d.missing for w, d in data.items() if d.missing}
    return dict(zip(pairs, models)), zero_filled


def train_cbc(
    dataset: Dataset,
    superset: Sequence[str],
    cfg: Optional[CbcConfig] = None,
) -> CbcModelBank:
    """
    Train the one-vs-all model bank.

    Args:
        dataset: dataset whose training architectures provide the samples
        superset: union of the selected counters, the features of every model
        cfg: settings

    Raises:
        MissingWorkload: a workload of the dataset has no training traces
        EmptyInput: empty superset
    """
    cfg = cfg or CbcConfig()
    superset = list(superset)
    if not superset:
        raise EmptyInput("counter superset is empty")
    workloads = dataset.workloads
    classes = _class_list(cfg.include_bugfree_class)
    trace_length = None
    if cfg.mode is CbcMode.TRACE:
        trace_length = cfg.trace_length or target_length(
            t.length for t in dataset.train_traces()
        )
    pairs = [(w, c) for w in workloads for c in classes]
    logger.info(
        "Training %d cbc models (%d workloads x %d classes, %s mode)",
        len(pairs),
        len(workloads),
        len(classes),
        cfg.mode.value,
    )
    models, zero_filled = _train_pairs(dataset, superset, pairs, cfg, trace_length)
    bank = CbcModelBank(
        superset=superset,
        workloads=tuple(workloads),
        classes=classes,
        mode=cfg.mode,
        trace_length=trace_length,
        zero_filled=zero_filled,
        config=cfg.to_dict(),
    )
    if cfg.mode is CbcMode.STEP:
        bank.models = models
    else:
        bank.trace_models = models
    return bank


def extend_cbc(
    bank: CbcModelBank,
    dataset: Dataset,
    cfg: Optional[CbcConfig] = None,
    *,
    workloads: Iterable[str] = (),
    units: Iterable[UnitLabel] = (),
) -> CbcModelBank:
    """
    Add workloads or classes to an existing bank.

    Only the missing (workload, class) models are trained: a new workload
    costs one model per class and a new class one model per workload. The
    superset of the bank is unchanged.
    """
    cfg = dataclasses.replace(cfg or CbcConfig(), mode=bank.mode)
    new_workloads = tuple(sorted(set(bank.workloads) | set(workloads)))
    new_classes = tuple(
        sorted(
            set(bank.classes) | {UnitLabel.from_string(u) for u in units},
            key=lambda u: u.order,
        )
    )
    existing = bank.models if bank.mode is CbcMode.STEP else bank.trace_models
    pairs = [
        (w, c) for w in new_workloads for c in new_classes if (w, c) not in existing
    ]
    logger.info("Extending cbc bank with %d models", len(pairs))
    models, zero_filled = _train_pairs(
        dataset, bank.superset, pairs, cfg, bank.trace_length
    )
    merged = dict(existing)
    merged.update(models)
    extended = dataclasses.replace(
        bank,
        workloads=new_workloads,
        classes=new_classes,
        zero_filled={**bank.zero_filled, **zero_filled},
        models=merged if bank.mode is CbcMode.STEP else {},
        trace_models=merged if bank.mode is CbcMode.TRACE else {},
    )
    return extended


def score_trace(bank: CbcModelBank, trace: CounterTrace) -> dict[UnitLabel, float]:
    """
    Per-class score of one workload trace.

    In per-time-step mode this is the mean predicted probability over the
    sample windows of the trace.

    Raises:
        UnknownWorkload: trace workload has no models in the bank
    """
    if trace.workload_id not in bank.workloads:
        raise UnknownWorkload(f"no models for workload '{trace.workload_id}'")
    scores: dict[UnitLabel, float] = {}
    if bank.mode is CbcMode.STEP:
        matrix, _ = trace.select(bank.superset)
        for unit in bank.classes:
            model = bank.models[(trace.workload_id, unit)]
            scores[unit] = float(np.mean(model.predict(matrix)))
    else:
        assert bank.trace_length is not None
        sample, _ = _trace_input(trace, bank.superset, bank.trace_length)
        for unit in bank.classes:
            net = bank.trace_models[(trace.workload_id, unit)]
            scores[unit] = float(net.predict(sample[None])[0])
    return scores


def localize_cbc(
    bank: CbcModelBank,
    traces: Union[Iterable[CounterTrace], Mapping[str, CounterTrace]],
) -> Localization:
    """
    Rank classes for one design.

    Per-class scores are summed over the supplied workloads. Workloads of the
    bank without a trace contribute nothing; traces of workloads unknown to
    the bank are skipped with a warning.

    Raises:
        EmptyInput: no usable traces
        DuplicateWorkload: more than one trace for a workload
    """
    trace_map = dict(traces) if isinstance(traces, Mapping) else as_trace_map(traces)
    per_workload: dict[str, dict[UnitLabel, float]] = {}
    zero_filled: set[str] = set()
    for workload, trace in sorted(trace_map.items()):
        if workload not in bank.workloads:
            logger.warning("Skipping trace of unknown workload '%s'", workload)
            continue
        per_workload[workload] = score_trace(bank, trace)
        missing = trace.select(bank.superset)[1]
        if missing:
            logger.warning(
                "Zero-filled %d counters for %s", len(missing), trace.describe()
            )
            zero_filled.update(missing)
    if not per_workload:
        raise EmptyInput("no traces for workloads known to the bank")
    return Localization(
        method="cbc",
        scores=ScoreVector(sum_scores(per_workload)),
        per_workload=per_workload,
        zero_filled_counters=sorted(zero_filled),
        missing_workloads=[w for w in bank.workloads if w not in per_workload],
    )
