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
Performance prediction error based classification.

Stage 1 trains one IPC regressor per workload on bug-free traces of the
training architectures, using only the counters selected for that workload.
Applied to a trace of a design under test it yields an error trace,
predicted minus observed IPC per window, so performance degrading bugs show
up as positive errors.

Stage 2 resamples the error traces of all workloads of a design to a common
length and stacks them as channels of a T_R x |W| tensor (missing workloads
are zero columns). One convolutional one-vs-all classifier per unit is
trained with one sample per (architecture, bug) instance.
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
from ..errors import (
    ConfigError,
    DuplicateWorkload,
    EmptyInput,
    InsufficientSamples,
    NoBugFreeData,
    UnknownWorkload,
)
from ..impl.convnet import ConvNet1D, ConvNetArch, TrainConfig, fit_convnet
from ..impl.gbdt import GbdtConfig, GbdtModel, fit_gbdt
from ..impl.parallel import thread_map
from ..impl.resample import resample, target_length
from .scores import Localization, ScoreVector
from .selection import SelectionResult, legacy_traces
from .traces import (
    CounterTrace,
    Dataset,
    DesignInstance,
    Split,
    UnitLabel,
    as_trace_map,
)

__all__ = [
    "ErrorTrace",
    "IpcModelSet",
    "P2bcConfig",
    "P2bcModel",
    "P2bcStage2",
    "ResampleConfig",
    "ResamplePolicy",
    "assemble_channels",
    "error_trace",
    "localize_p2bc",
    "resample",
    "train_ipc_models",
    "train_p2bc",
    "train_stage2",
]

logger = logging.getLogger(__name__)

P2BC_FORMAT = "bugloc.p2bc"
P2BC_FORMAT_VERSION = 1

MIN_POSITIVES = 2


def _stage1_gbdt() -> GbdtConfig:
    return GbdtConfig(n_trees=250)


@dataclass
class IpcModelSet:
    """Bug-free IPC regressor per workload"""

    models: dict[str, GbdtModel]
    counters: dict[str, list[str]]
    rrmse: dict[str, float] = field(default_factory=dict)
    """Relative RMSE on a held-out bug-free legacy architecture"""
    training_traces: dict[str, list[str]] = field(default_factory=dict)
    """Traces used to fit each workload's model"""
    training_labels: dict[str, list[str]] = field(default_factory=dict)

    @property
    def workloads(self) -> tuple[str, ...]:
        return tuple(sorted(self.models))

    @property
    def mean_rrmse(self) -> float:
        return float(np.mean(list(self.rrmse.values()))) if self.rrmse else float("nan")

    def audit_labels(self) -> int:
        """Number of non bug-free traces used in training (always 0)"""
        return sum(
            1
            for labels in self.training_labels.values()
            for label in labels
            if label != UnitLabel.BUGFREE.value
        )

    def predict(self, trace: CounterTrace) -> np.ndarray:
        """
        Predicted IPC per window.

        Raises:
            UnknownWorkload: no model for the trace workload
        """
        model = self.models.get(trace.workload_id)
        if model is None:
            raise UnknownWorkload(f"no ipc model for workload '{trace.workload_id}'")
        features, missing = trace.select(self.counters[trace.workload_id])
        if missing:
            logger.warning(
                "Zero-filling %d counters for %s", len(missing), trace.describe()
            )
        return model.predict(features)


def _rrmse(predicted: np.ndarray, observed: np.ndarray) -> float:
    rmse = float(np.sqrt(np.mean((predicted - observed) ** 2)))
    mean = float(np.mean(observed))
    return rmse / mean if mean > 0 else rmse


def _fit_ipc(
    traces: Sequence[CounterTrace], counters: Sequence[str], cfg: GbdtConfig
) -> GbdtModel:
    x = np.concatenate([t.select(counters)[0] for t in traces], axis=0)
    y = np.concatenate([t.ipc for t in traces])
    return fit_gbdt(x, y, "squared", cfg, feature_names=counters)


def train_ipc_models(
    dataset: Dataset,
    selections: Union[SelectionResult, Mapping[str, Sequence[str]]],
    cfg: Optional[GbdtConfig] = None,
    *,
    threads: int = 1,
) -> IpcModelSet:
    """
    Fit one squared loss regressor per workload.

    Only bug-free traces of training architectures are used. The reported
    relative RMSE comes from a model fit without the last legacy
    architecture and evaluated on it; the returned model is then fit on all
    legacy architectures.

    Raises:
        NoBugFreeData: a workload has no bug-free legacy trace
    """
    cfg = cfg or _stage1_gbdt()
    per_workload = (
        selections.per_workload
        if isinstance(selections, SelectionResult)
        else selections
    )

    def _job(workload: str) -> tuple[GbdtModel, float, list[CounterTrace]]:
        traces = legacy_traces(dataset, workload)
        if not traces:
            raise NoBugFreeData(f"no bug-free legacy traces for workload '{workload}'")
        counters = list(per_workload.get(workload, ()))
        archs = sorted({t.arch_id for t in traces})
        if len(archs) >= 2:
            held_out = [t for t in traces if t.arch_id == archs[-1]]
            fitted = [t for t in traces if t.arch_id != archs[-1]]
            probe = _fit_ipc(fitted, counters, cfg)
            predicted = np.concatenate(
                [probe.predict(t.select(counters)[0]) for t in held_out]
            )
            rrmse = _rrmse(predicted, np.concatenate([t.ipc for t in held_out]))
        else:
            logger.warning(
                "Only one bug-free legacy architecture for '%s': in-sample error",
                workload,
            )
            rrmse = float("nan")
        model = _fit_ipc(traces, counters, cfg)
        if len(archs) < 2:
            rrmse = _rrmse(
                np.concatenate([model.predict(t.select(counters)[0]) for t in traces]),
                np.concatenate([t.ipc for t in traces]),
            )
        return model, rrmse, traces

    workloads = dataset.workloads
    results = thread_map(_job, workloads, threads)
    models = IpcModelSet(
        models={w: r[0] for w, r in zip(workloads, results)},
        counters={w: list(per_workload.get(w, ())) for w in workloads},
        rrmse={w: r[1] for w, r in zip(workloads, results)},
        training_traces={
            w: [t.describe() for t in r[2]] for w, r in zip(workloads, results)
        },
        training_labels={
            w: [t.label.value for t in r[2]] for w, r in zip(workloads, results)
        },
    )
    assert models.audit_labels() == 0
    logger.info(
        "Trained %d ipc models, mean held-out RRMSE %.2f%%",
        len(models.models),
        100.0 * models.mean_rrmse,
    )
    return models


@dataclass(frozen=True)
class ErrorTrace:
    """Predicted minus observed IPC per window"""

    workload_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise ValueError(f"bad error trace for workload '{self.workload_id}'")
        object.__setattr__(self, "values", values)

    @property
    def length(self) -> int:
        return int(self.values.shape[0])


def error_trace(models: IpcModelSet, trace: CounterTrace) -> ErrorTrace:
    """
    Error trace of one workload trace.

    Raises:
        UnknownWorkload: no model for the trace workload
    """
    return ErrorTrace(trace.workload_id, models.predict(trace) - trace.ipc)


class ResamplePolicy(str, enum.Enum):
    MEAN_OF_TRAINING_LENGTHS = "mean"
    EXPLICIT = "explicit"

    @classmethod
    def from_string(cls, name: str) -> ResamplePolicy:
        if isinstance(name, cls):
            return name
        try:
            return cls[name.upper()]
        except LookupError:
            return cls(name.lower())


@dataclass
class ResampleConfig:
    """Common error trace length"""

    target_length: Optional[int] = None
    policy: ResamplePolicy = ResamplePolicy.MEAN_OF_TRAINING_LENGTHS

    def __post_init__(self) -> None:
        self.policy = ResamplePolicy.from_string(self.policy)
        if self.target_length is not None:
            if self.target_length < 2:
                raise ConfigError(
                    f"target length must be at least 2: {self.target_length}"
                )
            self.policy = ResamplePolicy.EXPLICIT
        elif self.policy is ResamplePolicy.EXPLICIT:
            raise ConfigError("explicit resample policy needs a target length")

    def resolve(self, lengths: Iterable[int]) -> int:
        if self.policy is ResamplePolicy.EXPLICIT:
            assert self.target_length is not None
            return self.target_length
        return target_length(lengths)


def assemble_channels(
    errors: Union[Iterable[ErrorTrace], Mapping[str, ErrorTrace]],
    channels: Sequence[str],
    length: int,
) -> tuple[np.ndarray, list[str]]:
    """
    Stack resampled error traces as channels.

    Args:
        errors: error traces, at most one per workload
        channels: workload of each column
        length: common length T_R

    Returns:
        T_R x len(channels) matrix and the workloads zero-filled because
        no error trace was supplied for them

    Raises:
        DuplicateWorkload: more than one error trace for a workload
    """
    if isinstance(errors, Mapping):
        by_workload = dict(errors)
    else:
        by_workload = {}
        for e in errors:
            if e.workload_id in by_workload:
                raise DuplicateWorkload(
                    f"more than one error trace for workload '{e.workload_id}'"
                )
            by_workload[e.workload_id] = e
    tensor = np.zeros((length, len(channels)))
    missing: list[str] = []
    for j, workload in enumerate(channels):
        err = by_workload.get(workload)
        if err is None:
            missing.append(workload)
        else:
            tensor[:, j] = resample(err.values, length)
    extra = sorted(by_workload.keys() - set(channels))
    if extra:
        logger.warning(
            "Ignoring error traces of unknown workloads: %s", ", ".join(extra)
        )
    return tensor, missing


@dataclass
class P2bcConfig:
    """Prediction error based classification settings"""

    gbdt: GbdtConfig = field(default_factory=_stage1_gbdt)
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    cnn: ConvNetArch = field(default_factory=ConvNetArch)
    train: TrainConfig = field(default_factory=TrainConfig)
    include_bugfree_class: bool = False
    bugfree_negatives: bool = True
    """Use bug-free training designs as negative samples"""
    threads: int = 1

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["resample"]["policy"] = self.resample.policy.value
        d["train"]["scaling"] = self.train.scaling.value
        return d


@dataclass(eq=False)
class P2bcStage2:
    """One-vs-all convolutional classifiers over stacked error traces"""

    classifiers: dict[UnitLabel, ConvNet1D]
    channels: tuple[str, ...]
    length: int
    confidence_scale: dict[UnitLabel, float] = field(default_factory=dict)
    """Factor below 1 for classifiers trained on too few positive instances"""
    positives: dict[UnitLabel, int] = field(default_factory=dict)

    @property
    def classes(self) -> tuple[UnitLabel, ...]:
        return tuple(sorted(self.classifiers, key=lambda u: u.order))

    @property
    def insufficient(self) -> dict[UnitLabel, InsufficientSamples]:
        """Flag for each classifier trained on too few positive instances"""
        return {
            unit: InsufficientSamples(
                f"{self.positives[unit]} positive instances for {unit.value}"
            )
            for unit in self.classes
            if self.positives.get(unit, MIN_POSITIVES) < MIN_POSITIVES
        }

    def scores(self, tensor: np.ndarray) -> dict[UnitLabel, float]:
        """Confidence of each classifier for one T_R x |W| tensor"""
        out = {}
        for unit in self.classes:
            prob = float(self.classifiers[unit].predict(tensor[None])[0])
            out[unit] = prob * self.confidence_scale.get(unit, 1.0)
        return out


def _instance_tensor(
    models: IpcModelSet,
    traces: Mapping[str, CounterTrace],
    channels: Sequence[str],
    length: int,
) -> tuple[np.ndarray, list[str]]:
    errors = [
        error_trace(models, t)
        for w, t in sorted(traces.items())
        if w in models.models
    ]
    return assemble_channels(errors, channels, length)


def train_stage2(
    dataset: Dataset,
    models: IpcModelSet,
    resample_cfg: Optional[ResampleConfig] = None,
    cfg: Optional[P2bcConfig] = None,
) -> P2bcStage2:
    """
    Train the per-unit classifiers.

    Each training sample is one (architecture, bug) instance of a training
    architecture. Bug-free instances are negatives for every unit.

    Raises:
        EmptyInput: no training instances
    """
    cfg = cfg or P2bcConfig()
    resample_cfg = resample_cfg or cfg.resample
    keep_bugfree = cfg.bugfree_negatives or cfg.include_bugfree_class
    instances: list[DesignInstance] = [
        i
        for i in dataset.instances(Split.TRAIN)
        if i.label is not UnitLabel.BUGFREE or keep_bugfree
    ]
    dataset.train_traces()  # rejects Unknown labels
    if not instances:
        raise EmptyInput("no training instances for stage 2")
    channels = models.workloads
    length = resample_cfg.resolve(t.length for t in dataset.train_traces())
    tensors = []
    for inst in instances:
        tensor, missing = _instance_tensor(models, inst.traces, channels, length)
        if missing:
            logger.info("Instance %s lacks workloads %s", inst.key, ", ".join(missing))
        tensors.append(tensor)
    inputs = np.stack(tensors)
    labels = [inst.label for inst in instances]

    classes = UnitLabel.units()
    if cfg.include_bugfree_class:
        classes = classes + (UnitLabel.BUGFREE,)

    positives = {u: sum(1 for label in labels if label is u) for u in classes}
    scale = {
        u: n_pos / MIN_POSITIVES
        for u, n_pos in positives.items()
        if n_pos < MIN_POSITIVES
    }

    def _job(unit: UnitLabel) -> ConvNet1D:
        y = np.array([label is unit for label in labels], dtype=np.float64)
        logger.debug("Training stage 2 classifier for %s", unit.value)
        return fit_convnet(inputs, y, cfg.cnn, cfg.train)

    nets = thread_map(_job, classes, cfg.threads)
    logger.info(
        "Trained %d stage 2 classifiers on %d instances (T_R=%d, %d channels)",
        len(nets),
        len(instances),
        length,
        len(channels),
    )
    stage2 = P2bcStage2(
        classifiers=dict(zip(classes, nets)),
        channels=tuple(channels),
        length=length,
        confidence_scale=scale,
        positives=positives,
    )
    for unit, flag in stage2.insufficient.items():
        logger.warning(
            "%s: %s; confidence scaled by %g",
            type(flag).__name__,
            flag,
            scale[unit],
        )
    return stage2


@dataclass(eq=False)
class P2bcModel:
    """Complete two stage model"""

    ipc: IpcModelSet
    stage2: P2bcStage2
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def model_count(self) -> int:
        """Stage 1 regressors plus stage 2 classifiers"""
        return len(self.ipc.models) + len(self.stage2.classifiers)

    def save(self, directory: Union[Path, str]) -> Path:
        """Write `p2bc.json` and one JSON file per model to directory"""
        directory = Path(directory)
        directory.joinpath("stage1").mkdir(parents=True, exist_ok=True)
        directory.joinpath("stage2").mkdir(parents=True, exist_ok=True)
        stage1 = []
        for i, workload in enumerate(self.ipc.workloads):
            filename = f"stage1/w{i:04d}.json"
            directory.joinpath(filename).write_text(
                json.dumps(self.ipc.models[workload].to_dict()), "utf8"
            )
            stage1.append(
                {
                    "workload": workload,
                    "file": filename,
                    "counters": self.ipc.counters[workload],
                    "rrmse": self.ipc.rrmse.get(workload),
                    "training_traces": self.ipc.training_traces.get(workload, []),
                    "training_labels": self.ipc.training_labels.get(workload, []),
                }
            )
        stage2 = []
        for i, unit in enumerate(self.stage2.classes):
            filename = f"stage2/u{i:02d}.json"
            directory.joinpath(filename).write_text(
                json.dumps(self.stage2.classifiers[unit].to_dict()), "utf8"
            )
            stage2.append(
                {
                    "unit": unit.value,
                    "file": filename,
                    "confidence_scale": self.stage2.confidence_scale.get(unit, 1.0),
                    "positives": self.stage2.positives.get(unit, 0),
                }
            )
        meta = {
            "format": P2BC_FORMAT,
            "version": P2BC_FORMAT_VERSION,
            "channels": list(self.stage2.channels),
            "length": self.stage2.length,
            "stage1": stage1,
            "stage2": stage2,
            "config": self.config,
            "$bugloc-version": __version__,
            "$created": str(dt.datetime.now()),
        }
        meta_file = directory / "p2bc.json"
        meta_file.write_text(json.dumps(meta, indent=2) + "\n", "utf8")
        return meta_file

    @classmethod
    def load(cls, directory: Union[Path, str]) -> P2bcModel:
        directory = Path(directory)
        meta = json.loads(directory.joinpath("p2bc.json").read_text("utf8"))
        if meta.get("format") != P2BC_FORMAT:
            raise ValueError(f"{directory} does not contain a p2bc model")
        if meta.get("version") != P2BC_FORMAT_VERSION:
            raise ValueError(f"unsupported p2bc version {meta.get('version')!r}")

        def _read(entry: dict[str, Any]) -> dict[str, Any]:
            return json.loads(directory.joinpath(entry["file"]).read_text("utf8"))

        ipc = IpcModelSet(
            models={
                e["workload"]: GbdtModel.from_dict(_read(e)) for e in meta["stage1"]
            },
            counters={e["workload"]: list(e["counters"]) for e in meta["stage1"]},
            rrmse={
                e["workload"]: float(e["rrmse"])
                for e in meta["stage1"]
                if e.get("rrmse") is not None
            },
            training_traces={
                e["workload"]: e.get("training_traces", []) for e in meta["stage1"]
            },
            training_labels={
                e["workload"]: e.get("training_labels", []) for e in meta["stage1"]
            },
        )
        stage2 = P2bcStage2(
            classifiers={
                UnitLabel.from_string(e["unit"]): ConvNet1D.from_dict(_read(e))
                for e in meta["stage2"]
            },
            channels=tuple(meta["channels"]),
            length=int(meta["length"]),
            confidence_scale={
                UnitLabel.from_string(e["unit"]): float(e["confidence_scale"])
                for e in meta["stage2"]
                if float(e["confidence_scale"]) != 1.0
            },
            positives={
                UnitLabel.from_string(e["unit"]): int(e.get("positives", 0))
                for e in meta["stage2"]
            },
        )
        return cls(ipc=ipc, stage2=stage2, config=meta.get("config", {}))


def train_p2bc(
    dataset: Dataset,
    selections: Union[SelectionResult, Mapping[str, Sequence[str]]],
    cfg: Optional[P2bcConfig] = None,
) -> P2bcModel:
    """Train stage 1 and stage 2"""
    cfg = cfg or P2bcConfig()
    ipc = train_ipc_models(dataset, selections, cfg.gbdt, threads=cfg.threads)
    stage2 = train_stage2(dataset, ipc, cfg.resample, cfg)
    return P2bcModel(ipc=ipc, stage2=stage2, config=cfg.to_dict())


def localize_p2bc(
    models: Union[IpcModelSet, P2bcModel],
    stage2: Optional[P2bcStage2] = None,
    traces: Union[Iterable[CounterTrace], Mapping[str, CounterTrace]] = (),
) -> Localization:
    """
    Rank units for one design from its error traces.

    Accepts either a [P2bcModel][(m).] or the stage 1 models together with
    the stage 2 classifiers.

    Raises:
        EmptyInput: no traces of workloads known to the model
        DuplicateWorkload: more than one trace for a workload
    """
    if isinstance(models, P2bcModel):
        stage2 = models.stage2
        models = models.ipc
    if stage2 is None:
        raise ValueError("stage 2 classifiers are required")
    trace_map = dict(traces) if isinstance(traces, Mapping) else as_trace_map(traces)
    known = {w: t for w, t in trace_map.items() if w in models.models}
    for w in sorted(trace_map.keys() - known.keys()):
        logger.warning("Skipping trace of unknown workload '%s'", w)
    if not known:
        raise EmptyInput("no traces for workloads known to the model")
    tensor, missing = _instance_tensor(models, known, stage2.channels, stage2.length)
    zero_filled: set[str] = set()
    for w, t in known.items():
        zero_filled.update(t.select(models.counters[w])[1])
    return Localization(
        method="p2bc",
        scores=ScoreVector(stage2.scores(tensor)),
        zero_filled_counters=sorted(zero_filled),
        missing_workloads=missing,
    )
