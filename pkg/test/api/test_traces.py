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
Unit tests for bugloc.api.traces module
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from bugloc.api.traces import (
    Category,
    Dataset,
    Manifest,
    Split,
    UnitLabel,
    as_trace_map,
    iter_trace_dir,
    load_dataset,
    load_trace,
    write_trace,
)
from bugloc.errors import (
    DuplicateWorkload,
    LeakageError,
    ManifestError,
    ParseError,
    SchemaError,
)

from .corpus import make_trace

# pylint: disable=redefined-outer-name


def test_UnitLabel() -> None:
    """Unit test for UnitLabel enum"""
    units = UnitLabel.units()
    assert len(units) == 11
    assert units[0] is UnitLabel.FETCH
    assert units[-1] is UnitLabel.COMMIT
    assert UnitLabel.BUGFREE not in units
    assert not UnitLabel.UNKNOWN.is_unit
    assert [u.order for u in units] == list(range(11))

    assert UnitLabel.from_string("LoadStoreQueue") is UnitLabel.LOADSTOREQUEUE
    assert UnitLabel.from_string("reorderbuffer") is UnitLabel.REORDERBUFFER
    assert UnitLabel.from_string("BUGFREE") is UnitLabel.BUGFREE
    assert UnitLabel.from_string(UnitLabel.ISSUE) is UnitLabel.ISSUE
    with pytest.raises(ValueError, match="not a valid UnitLabel"):
        UnitLabel.from_string("Cache")

    assert Split.from_string("TRAIN") is Split.TRAIN
    with pytest.raises(ValueError):
        Split.from_string("validation")
    assert Category.from_string("unseen_type") is Category.UNSEEN_TYPE
    assert Category.from_string("SEEN") is Category.SEEN
    with pytest.raises(ValueError):
        Category.from_string("novel")


def test_CounterTrace() -> None:
    """Unit test for CounterTrace validation and accessors"""
    trace = make_trace("w1", "a1", length=5)
    assert trace.length == 5
    assert trace.n_counters == 3
    assert trace.describe() == "a1/w1"
    assert not trace.samples.flags.writeable
    assert np.array_equal(trace.column("b"), trace.samples[:, 1])
    with pytest.raises(KeyError, match="no counter 'z'"):
        trace.column("z")

    matrix, missing = trace.select(["c", "z", "a"])
    assert missing == ["z"]
    assert np.array_equal(matrix[:, 0], trace.column("c"))
    assert np.all(matrix[:, 1] == 0.0)
    assert np.array_equal(matrix[:, 2], trace.column("a"))

    with pytest.raises(SchemaError, match="ipc values"):
        make_trace("w", "a", samples=np.ones((3, 3)), ipc=[1.0, 1.0])
    with pytest.raises(SchemaError, match="duplicate counter names"):
        make_trace("w", "a", counters=("a", "a", "b"))
    with pytest.raises(SchemaError, match="counter names"):
        make_trace("w", "a", samples=np.ones((3, 2)))
    with pytest.raises(ValueError, match="negative"):
        make_trace("w", "a", samples=-np.ones((3, 3)))
    with pytest.raises(ValueError, match="non-finite"):
        make_trace("w", "a", samples=np.ones((2, 3)), ipc=[1.0, np.nan])

    frame = trace.to_frame()
    assert list(frame.columns) == ["a", "b", "c", "ipc"]


def test_load_trace(tmp_path: Path) -> None:
    """Unit test for load_trace and write_trace"""
    path = tmp_path / "wl.csv"
    path.write_text("x,y,ipc\n1,2,0.5\n3,4.5,1.25\n")
    trace = load_trace(path, arch_id="a1", label="Fetch", bug_id="b1")
    assert trace.workload_id == "wl"
    assert trace.counter_names == ("x", "y")
    assert np.array_equal(trace.samples, [[1, 2], [3, 4.5]])
    assert np.array_equal(trace.ipc, [0.5, 1.25])
    assert trace.label is UnitLabel.FETCH
    assert trace.describe() == str(path)

    # canonical form survives a second round byte for byte
    out1 = write_trace(trace, tmp_path / "out1.csv")
    out2 = write_trace(load_trace(out1), tmp_path / "out2.csv")
    assert out1.read_bytes() == out2.read_bytes()

    def _bad(text: str, exc: type, match: str) -> None:
        bad = tmp_path / "bad.csv"
        bad.write_text(text)
        with pytest.raises(exc, match=match):
            load_trace(bad)

    _bad("", ParseError, "empty")
    _bad("x,y\n1,2\n", SchemaError, "must be 'ipc'")
    _bad("x,x,ipc\n1,2,3\n", SchemaError, "duplicate")
    _bad("x,ipc\n", SchemaError, "no sample rows")
    _bad("x,ipc\n1,abc\n", ParseError, "non-numeric")
    _bad("x,ipc\n1,2,3\n", SchemaError, "row length")
    _bad("x,ipc\n-1,2\n", ValueError, "negative")


def _write_manifest(root: Path, traces, splits, categories, **extra) -> Path:
    entries = []
    for t in traces:
        design = t.bug_id or t.label.value
        path = write_trace(t, root / t.arch_id / design / f"{t.workload_id}.csv")
        entry = dict(
            path=path.relative_to(root).as_posix(),
            workload_id=t.workload_id,
            arch_id=t.arch_id,
            label=t.label.value,
        )
        if t.bug_id:
            entry["bug_id"] = t.bug_id
        entries.append(entry)
    manifest = dict(traces=entries, splits=splits, categories=categories, **extra)
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


def test_load_dataset(tmp_path: Path) -> None:
    """Unit test for Manifest and load_dataset"""
    traces = [
        make_trace("w1", "a1", seed=1),
        make_trace("w2", "a1", seed=2),
        make_trace("w1", "a1", "Fetch", "f.A", seed=3),
        make_trace("w2", "a1", "Fetch", "f.A", seed=4),
        make_trace("w1", "a2", "Fetch", "f.A", seed=5),
        make_trace("w1", "a2", "Commit", "c.B", seed=6),
        make_trace("w1", "a2", seed=7),
    ]
    path = _write_manifest(
        tmp_path,
        traces,
        splits={"a1": "train", "a2": "test"},
        categories={"f.A": "seen", "c.B": "unseen_type"},
        bug_impacts={"f.A": 0.02},
    )
    dataset = load_dataset(path)
    assert len(dataset) == 7
    assert dataset.workloads == ("w1", "w2")
    assert dataset.architectures() == ("a1", "a2")
    assert dataset.architectures(Split.TEST) == ("a2",)
    assert dataset.split_of("a1") is Split.TRAIN
    assert dataset.category_of("c.B") is Category.UNSEEN_TYPE
    assert dataset.category_of(None) is None
    assert dataset.bug_impacts == {"f.A": 0.02}
    assert len(dataset.train_traces()) == 4
    assert len(dataset.train_traces("w2")) == 2
    assert len(dataset.test_traces()) == 3
    assert len(dataset.select(label=UnitLabel.FETCH)) == 3

    train = dataset.instances(Split.TRAIN)
    assert [i.key for i in train] == [("a1", "BugFree"), ("a1", "f.A")]
    assert sorted(train[1].traces) == ["w1", "w2"]
    test = dataset.instances(Split.TEST)
    assert [i.key for i in test] == [("a2", "BugFree"), ("a2", "c.B"), ("a2", "f.A")]
    assert test[1].category is Category.UNSEEN_TYPE
    assert test[0].category is None

    only_w1 = dataset.filter(lambda t: t.workload_id == "w1")
    assert only_w1.workloads == ("w1",)

    manifest = Manifest.from_file(path)
    again = Manifest.from_dict(manifest.to_dict(), root=tmp_path)
    assert again.to_dict() == manifest.to_dict()


def test_manifest_errors(tmp_path: Path) -> None:
    """Manifest validation errors"""
    with pytest.raises(ManifestError, match="does not exist"):
        Manifest.from_file(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ManifestError, match="not valid JSON"):
        Manifest.from_file(bad)

    entry = dict(path="x.csv", workload_id="w", arch_id="a", label="Fetch", bug_id="b")
    with pytest.raises(ManifestError, match="'traces' list"):
        Manifest.from_dict({})
    with pytest.raises(ManifestError, match="unsupported manifest version"):
        Manifest.from_dict(dict(version=99, traces=[]))
    with pytest.raises(ManifestError, match="bad trace entry #0"):
        Manifest.from_dict(dict(traces=[dict(entry, label="Cache")]))
    with pytest.raises(ManifestError, match="without split"):
        Manifest.from_dict(dict(traces=[entry], categories={"b": "seen"}))
    with pytest.raises(ManifestError, match="without category"):
        Manifest.from_dict(dict(traces=[entry], splits={"a": "train"}))

    manifest = Manifest.from_dict(
        dict(traces=[entry], splits={"a": "train"}, categories={"b": "seen"}),
        root=tmp_path,
    )
    with pytest.raises(ManifestError, match="does not exist"):
        load_dataset(manifest)
    with pytest.raises(ManifestError, match="no traces"):
        load_dataset(Manifest())


def test_dataset_leakage() -> None:
    """Dataset rejects category leakage and inconsistent labels"""
    seen_train = make_trace("w", "a1", "Fetch", "f.A")
    with pytest.raises(LeakageError, match="training architecture"):
        Dataset(
            traces=(make_trace("w", "a1", "Fetch", "f.B"),),
            splits={"a1": "train"},
            categories={"f.B": "unseen_variation"},
        )
    with pytest.raises(LeakageError, match="only appears in test"):
        Dataset(
            traces=(make_trace("w", "a2", "Fetch", "f.A"),),
            splits={"a1": "train", "a2": "test"},
            categories={"f.A": "seen"},
        )
    with pytest.raises(ManifestError, match="labeled both"):
        Dataset(
            traces=(seen_train, make_trace("w", "a2", "Decode", "f.A")),
            splits={"a1": "train", "a2": "test"},
            categories={"f.A": "seen"},
        )
    with pytest.raises(ManifestError, match="duplicate trace"):
        Dataset(
            traces=(seen_train, make_trace("w", "a1", "Fetch", "f.A")),
            splits={"a1": "train"},
            categories={"f.A": "seen"},
        )
    with pytest.raises(ManifestError, match="has a bug_id"):
        Dataset(
            traces=(make_trace("w", "a1", "BugFree", "x"),),
            splits={"a1": "train"},
            categories={"x": "seen"},
        )
    with pytest.raises(ManifestError, match="has no bug_id"):
        Dataset(traces=(make_trace("w", "a1", "Fetch"),), splits={"a1": "train"})
    unknown = Dataset(
        traces=(make_trace("w", "a1", "Unknown"),), splits={"a1": "train"}
    )
    with pytest.raises(ManifestError, match="Unknown label"):
        unknown.train_traces()


def test_iter_trace_dir(tmp_path: Path) -> None:
    """Unit test for iter_trace_dir and as_trace_map"""
    design = tmp_path / "chip7"
    for name in ("w2", "w1"):
        write_trace(make_trace(name, "x"), design / f"{name}.csv")
    (design / "notes.txt").write_text("ignored")
    traces = iter_trace_dir(design)
    assert [t.workload_id for t in traces] == ["w1", "w2"]
    assert all(t.arch_id == "chip7" for t in traces)
    assert all(t.label is UnitLabel.UNKNOWN for t in traces)
    assert iter_trace_dir(design, arch_id="other")[0].arch_id == "other"

    trace_map = as_trace_map(traces)
    assert sorted(trace_map) == ["w1", "w2"]
    with pytest.raises(DuplicateWorkload):
        as_trace_map(traces + traces[:1])
