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
Counter trace schema, trace files and manifest driven datasets.

A trace file holds one execution of one workload on one architecture. It is a
UTF-8 CSV file whose header names the counters followed by the literal `ipc`
column, with one row per sampling window:

```text
fetch.insts,branch.mispredicts,ipc
41234.0,120.0,1.37
40112.0,131.0,1.29
```

Counter values are per-window deltas (counters are sampled and reset every
window). Labels and identifiers are not stored in the trace file but in the
JSON manifest that references it, so the same file can be reused under
different split policies.
"""

from __future__ import annotations

# standard
import dataclasses
import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, Mapping, Optional, Sequence, Union

# third party
import numpy as np
import pandas as pd

# this project
from ..errors import (
    DuplicateWorkload,
    LeakageError,
    ManifestError,
    ParseError,
    SchemaError,
)

__all__ = [
    "Category",
    "CounterTrace",
    "Dataset",
    "DesignInstance",
    "Manifest",
    "MANIFEST_VERSION",
    "Split",
    "TraceEntry",
    "UnitLabel",
    "as_trace_map",
    "iter_trace_dir",
    "load_dataset",
    "load_trace",
    "write_trace",
]

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
"""Manifest schema version written and accepted by this module"""

DEFAULT_WINDOW_CYCLES = 100_000


class UnitLabel(str, enum.Enum):
    """
    Localization classes.

    The eleven microarchitectural units plus the `BugFree` and `Unknown`
    sentinels. Declaration order is the fixed order used to break ties
    between equal scores.
    """

    FETCH = "Fetch"
    DECODE = "Decode"
    ISSUE = "Issue"
    RENAME = "Rename"
    EXECUTE = "Execute"
    BRANCH = "Branch"
    REGISTERS = "Registers"
    LOADSTOREQUEUE = "LoadStoreQueue"
    MEMORY = "Memory"
    REORDERBUFFER = "ReOrderBuffer"
    COMMIT = "Commit"
    BUGFREE = "BugFree"
    UNKNOWN = "Unknown"

    @classmethod
    def from_string(cls, name: str) -> UnitLabel:
        """Convert string to UnitLabel

        Arguments:
            name: either the enum name or value, case insensitive,
                e.g. "LOADSTOREQUEUE", "LoadStoreQueue" or "loadstorequeue"
        """
        if isinstance(name, cls):
            return name
        try:
            return cls[name.upper()]
        except LookupError:
            pass
        for label in cls:
            if label.value.lower() == name.lower():
                return label
        raise ValueError(f"'{name}' is not a valid UnitLabel")

    @classmethod
    def units(cls) -> tuple[UnitLabel, ...]:
        """The eleven unit classes in tie-break order"""
        return tuple(u for u in cls if u.is_unit)

    @property
    def is_unit(self) -> bool:
        """True for the eleven microarchitectural unit classes"""
        return self not in (UnitLabel.BUGFREE, UnitLabel.UNKNOWN)

    @property
    def order(self) -> int:
        """Position in the fixed tie-break order"""
        return _LABEL_ORDER[self]


_LABEL_ORDER = {label: i for i, label in enumerate(UnitLabel)}


class Split(str, enum.Enum):
    """Role of an architecture in an experiment"""

    TRAIN = "train"
    TEST = "test"

    @classmethod
    def from_string(cls, name: str) -> Split:
        """Convert "train"/"test" (any case) to Split"""
        try:
            return cls(name.lower())
        except (ValueError, AttributeError):
            raise ValueError(f"'{name}' is not a valid split") from None


class Category(str, enum.Enum):
    """
    Bug category with respect to training data

    * SEEN: variation of a bug type that was used for training
    * UNSEEN_VARIATION: new variation of a bug type used for training
    * UNSEEN_TYPE: bug type never used for training
    """

    SEEN = "seen"
    UNSEEN_VARIATION = "unseen_variation"
    UNSEEN_TYPE = "unseen_type"

    @classmethod
    def from_string(cls, name: str) -> Category:
        """Convert category name or value (any case) to Category"""
        try:
            return cls[name.upper()]
        except (LookupError, AttributeError):
            pass
        try:
            return cls(name.lower())
        except (ValueError, AttributeError):
            raise ValueError(f"'{name}' is not a valid bug category") from None


@dataclass(eq=False)
class CounterTrace:
    """
    One workload executed on one architecture.

    `samples` is a T x C matrix of per-window counter deltas and `ipc` holds
    the T per-window IPC values. Arrays are made read-only on construction.
    """

    workload_id: str
    arch_id: str
    label: UnitLabel
    samples: np.ndarray
    counter_names: tuple[str, ...]
    ipc: np.ndarray
    bug_id: Optional[str] = None
    window_cycles: int = DEFAULT_WINDOW_CYCLES
    path: Optional[Path] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        self.label = UnitLabel.from_string(self.label)
        self.counter_names = tuple(self.counter_names)
        samples = np.array(self.samples, dtype=np.float64)
        ipc = np.array(self.ipc, dtype=np.float64)
        if samples.ndim != 2:
            raise SchemaError(f"samples must be a matrix but has shape {samples.shape}")
        if ipc.ndim != 1:
            raise SchemaError(f"ipc must be a vector but has shape {ipc.shape}")
        if samples.shape[0] != ipc.shape[0]:
            raise SchemaError(
                f"{samples.shape[0]} sample rows but {ipc.shape[0]} ipc values"
            )
        if ipc.shape[0] < 1:
            raise SchemaError("trace has no sample windows")
        if len(self.counter_names) != samples.shape[1]:
            raise SchemaError(
                f"{len(self.counter_names)} counter names"
                f" for {samples.shape[1]} columns"
            )
        if len(set(self.counter_names)) != len(self.counter_names):
            dups = sorted(
                {n for n in self.counter_names if self.counter_names.count(n) > 1}
            )
            raise SchemaError(f"duplicate counter names: {dups}")
        if self.window_cycles < 1:
            raise ValueError(f"window_cycles must be positive: {self.window_cycles}")
        for name, arr in (("counter", samples), ("ipc", ipc)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {name} value in trace {self.describe()}")
            if np.any(arr < 0):
                raise ValueError(f"negative {name} value in trace {self.describe()}")
        samples.setflags(write=False)
        ipc.setflags(write=False)
        self.samples = samples
        self.ipc = ipc

    @property
    def length(self) -> int:
        """Number of sample windows (T)"""
        return int(self.ipc.shape[0])

    @property
    def n_counters(self) -> int:
        """Number of counters (C)"""
        return len(self.counter_names)

    def describe(self) -> str:
        """Short human readable identification of the trace"""
        if self.path is not None:
            return str(self.path)
        bug = f"/{self.bug_id}" if self.bug_id else ""
        return f"{self.arch_id}/{self.workload_id}{bug}"

    def column(self, name: str) -> np.ndarray:
        """Values of named counter"""
        try:
            return self.samples[:, self.counter_names.index(name)]
        except ValueError:
            raise KeyError(f"no counter '{name}' in {self.describe()}") from None

    def select(self, names: Sequence[str]) -> tuple[np.ndarray, list[str]]:
        """
        Matrix of the named counters in the given order.

        Counters missing from this trace are zero-filled.

        Returns:
            T x len(names) matrix and the list of zero-filled names
        """
        index = {n: i for i, n in enumerate(self.counter_names)}
        out = np.zeros((self.length, len(names)), dtype=np.float64)
        missing: list[str] = []
        for j, name in enumerate(names):
            i = index.get(name)
            if i is None:
                missing.append(name)
            else:
                out[:, j] = self.samples[:, i]
        return out, missing

    def relabel(self, **changes: Any) -> CounterTrace:
        """Copy of trace with given fields replaced"""
        return dataclasses.replace(self, **changes)

    def to_frame(self) -> pd.DataFrame:
        """Trace contents as a data frame with counter columns and `ipc`"""
        frame = pd.DataFrame(self.samples, columns=list(self.counter_names))
        frame["ipc"] = self.ipc
        return frame


def load_trace(
    path: Union[Path, str],
    *,
    workload_id: str = "",
    arch_id: str = "",
    label: Union[UnitLabel, str] = UnitLabel.UNKNOWN,
    bug_id: Optional[str] = None,
    window_cycles: int = DEFAULT_WINDOW_CYCLES,
) -> CounterTrace:
    """
    Read a trace file.

    Identifiers and label are not stored in the file and must be supplied
    by the caller (usually from a [Manifest][(m).]). If `workload_id` is
    not given, the file stem is used.

    Raises:
        ParseError: file is not readable CSV or holds non-numeric values
        SchemaError: duplicate counter names, missing `ipc` column or rows
            whose length does not match the header
        ValueError: negative or non-finite values
    """
    path = Path(path)
    try:
        raw = pd.read_csv(
            path,
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            encoding="utf8",
        )
    except pd.errors.EmptyDataError as ex:
        raise ParseError(f"empty trace file {path}") from ex
    except pd.errors.ParserError as ex:
        if "Expected" in str(ex):
            raise SchemaError(f"row length mismatch in {path}: {ex}") from ex
        raise ParseError(f"cannot parse {path}: {ex}") from ex
    except UnicodeDecodeError as ex:
        raise ParseError(f"{path} is not UTF-8 text: {ex}") from ex

    header = [str(h).strip() for h in raw.iloc[0]]
    if not header or header[-1] != "ipc":
        raise SchemaError(f"last column of {path} must be 'ipc' but got {header[-1:]}")
    names = header[:-1]
    if len(set(header)) != len(header):
        dups = sorted({n for n in header if header.count(n) > 1})
        raise SchemaError(f"duplicate counter names in {path}: {dups}")
    body = raw.iloc[1:]
    if body.isna().to_numpy().any():
        raise SchemaError(f"row with fewer fields than header in {path}")
    if len(body) == 0:
        raise SchemaError(f"no sample rows in {path}")
    cells = body.to_numpy(dtype=str)
    if np.any(np.char.strip(cells) == ""):
        raise ParseError(f"empty value in {path}")
    try:
        values = cells.astype(np.float64)
    except ValueError as ex:
        raise ParseError(f"non-numeric value in {path}: {ex}") from ex

    return CounterTrace(
        workload_id=workload_id or path.stem,
        arch_id=arch_id,
        label=UnitLabel.from_string(label),
        bug_id=bug_id,
        samples=values[:, :-1],
        counter_names=tuple(names),
        ipc=values[:, -1],
        window_cycles=window_cycles,
        path=path,
    )


def write_trace(trace: CounterTrace, path: Union[Path, str]) -> Path:
    """
    Write trace in canonical form.

    Values are written in shortest round-trip decimal form, so that
    reading and rewriting a canonical file reproduces it byte for byte.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace.to_frame().to_csv(path, index=False, lineterminator="\n", encoding="utf8")
    return path


@dataclass
class TraceEntry:
    """Manifest entry for one trace file"""

    path: Path
    workload_id: str
    arch_id: str
    label: UnitLabel
    bug_id: Optional[str] = None

    def to_dict(self, root: Optional[Path] = None) -> dict[str, Any]:
        path = self.path
        if root is not None:
            try:
                path = path.relative_to(root)
            except ValueError:
                pass
        d: dict[str, Any] = dict(
            path=path.as_posix(),
            workload_id=self.workload_id,
            arch_id=self.arch_id,
            label=self.label.value,
        )
        if self.bug_id is not None:
            d["bug_id"] = self.bug_id
        return d


@dataclass
class Manifest:
    """
    Dataset manifest

    Relative trace paths are resolved against `root`, which is the directory
    containing the manifest file when read with [from_file][..].
    """

    traces: list[TraceEntry] = field(default_factory=list)
    splits: dict[str, Split] = field(default_factory=dict)
    categories: dict[str, Category] = field(default_factory=dict)
    window_cycles: int = DEFAULT_WINDOW_CYCLES
    version: int = MANIFEST_VERSION
    bug_impacts: dict[str, float] = field(default_factory=dict)
    """Optional mean relative IPC degradation per bug_id"""
    root: Path = field(default_factory=Path)

    @classmethod
    def from_file(cls, path: Union[Path, str]) -> Manifest:
        """Read manifest JSON file"""
        path = Path(path).expanduser()
        try:
            obj = json.loads(path.read_text("utf8"))
        except FileNotFoundError as ex:
            raise ManifestError(f"manifest {path} does not exist") from ex
        except json.JSONDecodeError as ex:
            raise ManifestError(f"manifest {path} is not valid JSON: {ex}") from ex
        return cls.from_dict(obj, root=path.parent)

    # pylint: disable=too-many-branches
    @classmethod
    def from_dict(cls, obj: Any, root: Union[Path, str] = "") -> Manifest:
        """
        Build manifest from parsed JSON object.

        Raises:
            ManifestError: missing or ill-typed fields, unknown labels, or
                split/category maps that do not cover the referenced ids
        """
        if not isinstance(obj, dict):
            raise ManifestError("manifest must be a JSON object")
        root = Path(root)
        version = obj.get("version", MANIFEST_VERSION)
        if version != MANIFEST_VERSION:
            raise ManifestError(f"unsupported manifest version {version!r}")
        window_cycles = obj.get("window_cycles", DEFAULT_WINDOW_CYCLES)
        if not isinstance(window_cycles, int) or window_cycles < 1:
            raise ManifestError(f"bad window_cycles {window_cycles!r}")

        raw_traces = obj.get("traces")
        if not isinstance(raw_traces, list):
            raise ManifestError("manifest has no 'traces' list")
        traces: list[TraceEntry] = []
        for i, entry in enumerate(raw_traces):
            try:
                bug_id = entry.get("bug_id")
                traces.append(
                    TraceEntry(
                        path=root / str(entry["path"]),
                        workload_id=str(entry["workload_id"]),
                        arch_id=str(entry["arch_id"]),
                        label=UnitLabel.from_string(entry["label"]),
                        bug_id=None if bug_id is None else str(bug_id),
                    )
                )
            except (KeyError, TypeError, AttributeError, ValueError) as ex:
                raise ManifestError(f"bad trace entry #{i}: {ex}") from ex

        try:
            splits = {
                str(k): Split.from_string(v) for k, v in obj.get("splits", {}).items()
            }
            categories = {
                str(k): Category.from_string(v)
                for k, v in obj.get("categories", {}).items()
            }
            bug_impacts = {
                str(k): float(v) for k, v in obj.get("bug_impacts", {}).items()
            }
        except (AttributeError, TypeError, ValueError) as ex:
            raise ManifestError(f"bad split/category map: {ex}") from ex

        missing_archs = sorted({t.arch_id for t in traces} - splits.keys())
        if missing_archs:
            raise ManifestError(f"architectures without split: {missing_archs}")
        missing_bugs = sorted(
            {t.bug_id for t in traces if t.bug_id is not None} - categories.keys()
        )
        if missing_bugs:
            raise ManifestError(f"bugs without category: {missing_bugs}")

        return cls(
            traces=traces,
            splits=splits,
            categories=categories,
            window_cycles=window_cycles,
            version=version,
            bug_impacts=bug_impacts,
            root=root,
        )

    def to_dict(self) -> dict[str, Any]:
        """Manifest as JSON compatible dictionary"""
        d: dict[str, Any] = dict(
            version=self.version,
            window_cycles=self.window_cycles,
            traces=[t.to_dict(self.root) for t in self.traces],
            splits={k: v.value for k, v in sorted(self.splits.items())},
            categories={k: v.value for k, v in sorted(self.categories.items())},
        )
        if self.bug_impacts:
            d["bug_impacts"] = dict(sorted(self.bug_impacts.items()))
        return d

    def save(self, path: Union[Path, str]) -> Path:
        """Write manifest JSON file"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", "utf8")
        return path


@dataclass(frozen=True)
class DesignInstance:
    """
    All traces of one design: one architecture with at most one bug.

    This is the unit of localization: one verdict is produced per instance
    from the traces of every available workload.
    """

    arch_id: str
    label: UnitLabel
    bug_id: Optional[str]
    traces: Mapping[str, CounterTrace]
    category: Optional[Category] = None

    @property
    def key(self) -> tuple[str, str]:
        return self.arch_id, self.bug_id or self.label.value


def _trace_sort_key(t: CounterTrace) -> tuple:
    return (t.arch_id, t.workload_id, t.bug_id or "", t.label.order)


@dataclass(frozen=True)
class Dataset:
    """
    Immutable validated collection of traces.

    Traces are held sorted by (arch_id, workload_id, bug_id, label).

    Raises:
        ManifestError: inconsistent labels, duplicate traces or missing
            split/category entries
        LeakageError: unseen bugs in training architectures or seen bugs
            that never occur in a training architecture
    """

    traces: tuple[CounterTrace, ...]
    splits: Mapping[str, Split]
    categories: Mapping[str, Category] = field(default_factory=dict)
    window_cycles: int = DEFAULT_WINDOW_CYCLES
    bug_impacts: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "traces", tuple(sorted(self.traces, key=_trace_sort_key))
        )
        object.__setattr__(
            self, "splits", {k: Split.from_string(v) for k, v in self.splits.items()}
        )
        object.__setattr__(
            self,
            "categories",
            {k: Category.from_string(v) for k, v in self.categories.items()},
        )
        object.__setattr__(self, "bug_impacts", dict(self.bug_impacts))
        self._validate()

    # pylint: disable=too-many-branches
    def _validate(self) -> None:
        seen_keys: set[tuple] = set()
        bug_labels: dict[str, UnitLabel] = {}
        train_bugs: set[str] = set()
        for t in self.traces:
            if t.arch_id not in self.splits:
                raise ManifestError(f"no split for architecture '{t.arch_id}'")
            if t.label is UnitLabel.BUGFREE and t.bug_id is not None:
                raise ManifestError(f"bug-free trace {t.describe()} has a bug_id")
            if t.label.is_unit and t.bug_id is None:
                raise ManifestError(f"buggy trace {t.describe()} has no bug_id")
            key = (t.arch_id, t.workload_id, t.bug_id, t.label)
            if key in seen_keys:
                raise ManifestError(f"duplicate trace {t.describe()}")
            seen_keys.add(key)
            if t.bug_id is None:
                continue
            if t.bug_id not in self.categories:
                raise ManifestError(f"no category for bug '{t.bug_id}'")
            prev = bug_labels.setdefault(t.bug_id, t.label)
            if prev is not t.label:
                raise ManifestError(
                    f"bug '{t.bug_id}' labeled both {prev.value} and {t.label.value}"
                )
            if self.splits[t.arch_id] is Split.TRAIN:
                if self.categories[t.bug_id] is not Category.SEEN:
                    raise LeakageError(
                        f"{self.categories[t.bug_id].value} bug '{t.bug_id}'"
                        f" in training architecture '{t.arch_id}'"
                    )
                train_bugs.add(t.bug_id)
        for bug_id in sorted(bug_labels.keys() - train_bugs):
            if self.categories[bug_id] is Category.SEEN:
                raise LeakageError(
                    f"seen bug '{bug_id}' only appears in test architectures"
                )

    #
    # Queries
    #

    @property
    def workloads(self) -> tuple[str, ...]:
        """Sorted workload ids"""
        return tuple(sorted({t.workload_id for t in self.traces}))

    @property
    def units(self) -> tuple[UnitLabel, ...]:
        """Localization unit classes"""
        return UnitLabel.units()

    def split_of(self, arch_id: str) -> Split:
        return self.splits[arch_id]

    def category_of(self, bug_id: Optional[str]) -> Optional[Category]:
        if bug_id is None:
            return None
        return self.categories.get(bug_id)

    def architectures(self, split: Optional[Split] = None) -> tuple[str, ...]:
        """Sorted architecture ids having traces, optionally for one split"""
        return tuple(
            sorted(
                {
                    t.arch_id
                    for t in self.traces
                    if split is None or self.splits[t.arch_id] is split
                }
            )
        )

    def select(
        self,
        *,
        split: Optional[Split] = None,
        workload: Optional[str] = None,
        label: Optional[UnitLabel] = None,
    ) -> list[CounterTrace]:
        """Traces matching all of the given criteria"""
        return [
            t
            for t in self.traces
            if (split is None or self.splits[t.arch_id] is split)
            and (workload is None or t.workload_id == workload)
            and (label is None or t.label is label)
        ]

    def train_traces(self, workload: Optional[str] = None) -> list[CounterTrace]:
        """
        Traces from training architectures.

        Raises:
            ManifestError: if a training trace is labeled Unknown
        """
        traces = self.select(split=Split.TRAIN, workload=workload)
        for t in traces:
            if t.label is UnitLabel.UNKNOWN:
                raise ManifestError(f"training trace {t.describe()} has Unknown label")
        return traces

    def test_traces(self, workload: Optional[str] = None) -> list[CounterTrace]:
        """Traces from test architectures"""
        return self.select(split=Split.TEST, workload=workload)

    def instances(self, split: Optional[Split] = None) -> list[DesignInstance]:
        """
        Group traces into designs, one per (architecture, bug).

        Returned in sorted (arch_id, bug key) order.
        """
        groups: dict[tuple[str, str], list[CounterTrace]] = {}
        for t in self.traces:
            if split is not None and self.splits[t.arch_id] is not split:
                continue
            groups.setdefault((t.arch_id, t.bug_id or t.label.value), []).append(t)
        out = []
        for key in sorted(groups):
            traces = groups[key]
            first = traces[0]
            out.append(
                DesignInstance(
                    arch_id=first.arch_id,
                    label=first.label,
                    bug_id=first.bug_id,
                    traces={t.workload_id: t for t in traces},
                    category=self.category_of(first.bug_id),
                )
            )
        return out

    def filter(self, predicate) -> Dataset:
        """New dataset holding traces for which `predicate(trace)` is true"""
        return dataclasses.replace(
            self, traces=tuple(t for t in self.traces if predicate(t))
        )

    def __iter__(self) -> Iterator[CounterTrace]:
        return iter(self.traces)

    def __len__(self) -> int:
        return len(self.traces)


def load_dataset(manifest: Union[Manifest, Path, str]) -> Dataset:
    """
    Load all traces referenced by a manifest.

    Args:
        manifest: manifest object or path to manifest JSON file

    Raises:
        ManifestError: empty manifest or missing trace files
        LeakageError: unseen bugs in training architectures
    """
    if not isinstance(manifest, Manifest):
        manifest = Manifest.from_file(manifest)
    if not manifest.traces:
        raise ManifestError("manifest references no traces")
    traces = []
    for entry in manifest.traces:
        if not entry.path.is_file():
            raise ManifestError(f"trace file {entry.path} does not exist")
        traces.append(
            load_trace(
                entry.path,
                workload_id=entry.workload_id,
                arch_id=entry.arch_id,
                label=entry.label,
                bug_id=entry.bug_id,
                window_cycles=manifest.window_cycles,
            )
        )
    dataset = Dataset(
        traces=tuple(traces),
        splits=manifest.splits,
        categories=manifest.categories,
        window_cycles=manifest.window_cycles,
        bug_impacts=manifest.bug_impacts,
    )
    logger.info(
        "Loaded %d traces (%d workloads, %d architectures)",
        len(dataset),
        len(dataset.workloads),
        len(dataset.architectures()),
    )
    return dataset


def iter_trace_dir(
    directory: Union[Path, str],
    *,
    arch_id: str = "",
    window_cycles: int = DEFAULT_WINDOW_CYCLES,
) -> list[CounterTrace]:
    """
    Load every `*.csv` trace in a directory for inference.

    Workload ids are taken from the file stems and labels are Unknown.
    """
    directory = Path(directory)
    return [
        load_trace(p, arch_id=arch_id or directory.name, window_cycles=window_cycles)
        for p in sorted(directory.glob("*.csv"))
    ]


def as_trace_map(traces: Iterable[CounterTrace]) -> Dict[str, CounterTrace]:
    """
    Map workload id to trace.

    Raises:
        DuplicateWorkload: more than one trace for a workload
    """
    out: dict[str, CounterTrace] = {}
    for t in traces:
        if t.workload_id in out:
            raise DuplicateWorkload(
                f"more than one trace for workload '{t.workload_id}'"
            )
        out[t.workload_id] = t
    return out
