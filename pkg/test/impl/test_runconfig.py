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
Unit tests for bugloc.impl.runconfig and bugloc.impl.parallel modules
"""

from __future__ import annotations

import threading
import time
from pathlib import Path

import pytest
import tomlkit

from bugloc.api.cbc import CbcMode
from bugloc.errors import ConfigError
from bugloc.impl.convnet import Scaling
from bugloc.impl.parallel import thread_map
from bugloc.impl.runconfig import (
    RUN_DEFAULTS,
    RunConfig,
    add_run_defaults,
    read_run_config,
)


def test_defaults() -> None:
    """Defaults agree with the config dataclasses"""
    cfg = read_run_config(None)
    assert cfg.source is None
    assert cfg.selection.alpha == RUN_DEFAULTS["selection"]["alpha"]["default"]
    assert cfg.selection.beta == RUN_DEFAULTS["selection"]["beta"]["default"]
    assert cfg.cbc.mode is CbcMode.STEP
    assert cfg.cbc.gbdt.n_trees == 100
    assert cfg.evaluate.max_k == 5
    assert cfg.sensitivity_batch == 5
    assert cfg.sensitivity_repetitions == 100

    cfg.apply_runtime(seed=17, threads=3)
    assert cfg.cbc.threads == cfg.p2bc.threads == cfg.evaluate.threads == 3
    assert cfg.cbc.train.seed == cfg.p2bc.train.seed == 17
    d = cfg.to_dict()
    assert d["cbc"]["mode"] == "step"
    assert d["evaluate"]["repetitions"] == 100


def test_add_run_defaults(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    """Unit test for add_run_defaults"""
    add_run_defaults("out")
    out, _ = capsys.readouterr()
    doc = tomlkit.loads(out).unwrap()
    assert set(doc) == set(RUN_DEFAULTS)
    assert doc["cnn"]["dense-units"] == [300, 100, 50]
    assert "# Boosting rounds of CBC models" in out

    run_file = tmp_path / "run.toml"
    run_file.write_text("[gbdt]\nn-trees = 7\n", "utf8")
    add_run_defaults(run_file)
    doc = tomlkit.loads(run_file.read_text("utf8")).unwrap()
    assert doc["gbdt"]["n-trees"] == 7
    assert doc["gbdt"]["max-depth"] == 6

    # file written with defaults reads back as the defaults
    defaults_file = tmp_path / "defaults.toml"
    add_run_defaults(str(defaults_file))
    cfg = read_run_config(defaults_file)
    assert cfg.source == defaults_file
    expected = RunConfig().to_dict()
    actual = cfg.to_dict()
    expected.pop("source")
    actual.pop("source")
    assert actual == expected

    with pytest.raises(ValueError, match="non .toml"):
        add_run_defaults(tmp_path / "run.txt")


def test_read_run_config(tmp_path: Path) -> None:
    """Unit test for read_run_config"""
    run_file = tmp_path / "run.toml"
    run_file.write_text(
        "\n".join(
            [
                "[selection]",
                "alpha = 0.5",
                'exclude = ["commit.*"]',
                "[cbc]",
                'mode = "trace"',
                "trace-length = 40",
                "[p2bc]",
                "n-trees = 20",
                "target-length = 30",
                "[cnn]",
                "conv-filters = [8]",
                "dense-units = [4, 2]",
                'scaling = "none"',
                "[evaluate]",
                "max-k = 3",
                "bands = [0.05, 0.001]",
            ]
        ),
        "utf8",
    )
    cfg = read_run_config(run_file)
    assert cfg.selection.alpha == 0.5
    assert cfg.selection.beta == 0.95
    assert cfg.selection.exclude == ("commit.*",)
    assert cfg.cbc.mode is CbcMode.TRACE
    assert cfg.cbc.trace_length == 40
    assert [c.filters for c in cfg.cbc.cnn.conv] == [8]
    assert [d.units for d in cfg.p2bc.cnn.dense] == [4, 2]
    assert cfg.p2bc.gbdt.n_trees == 20
    assert cfg.p2bc.resample.target_length == 30
    assert cfg.cbc.train.scaling is Scaling.NONE
    assert cfg.p2bc.train is not cfg.cbc.train
    assert cfg.evaluate.max_k == 3
    assert cfg.evaluate.bands == (0.001, 0.05)


@pytest.mark.parametrize(
    "text,expected_warning",
    [
        ("[plots]\nwidth = 3\n", "'plots'"),
        ("[gbdt]\ndepth = 3\n", "'gbdt.depth':\n unknown key"),
        ("[gbdt]\nn-trees = true\n", "not a number"),
        ('[gbdt]\nmax-depth = "deep"\n', "expected int"),
        ("[selection]\nexclude = 3\n", "expected list"),
    ],
)
def test_ignored_keys(tmp_path: Path, text: str, expected_warning: str) -> None:
    """Unknown and ill-typed entries are ignored with a warning"""
    run_file = tmp_path / "run.toml"
    run_file.write_text(text, "utf8")
    with pytest.warns(UserWarning, match=expected_warning):
        cfg = read_run_config(run_file)
    assert cfg.cbc.gbdt.max_depth == 6
    assert cfg.selection.exclude == ()


def test_bad_run_config(tmp_path: Path) -> None:
    """Unparseable files and bad values raise ConfigError"""
    run_file = tmp_path / "run.toml"
    run_file.write_text("[gbdt\n", "utf8")
    with pytest.raises(ConfigError, match="cannot parse"):
        read_run_config(run_file)

    run_file.write_text('[cbc]\nmode = "sideways"\n', "utf8")
    with pytest.raises(ConfigError, match="bad run config"):
        read_run_config(run_file)

    run_file.write_text("[selection]\nalpha = 1.5\n", "utf8")
    with pytest.raises(ConfigError, match="alpha"):
        read_run_config(run_file)

    run_file.write_text("[cnn]\nepochs = 0\n", "utf8")
    with pytest.raises(ConfigError, match="epochs"):
        read_run_config(run_file)


def test_thread_map() -> None:
    """Unit test for thread_map"""
    assert thread_map(lambda x: x * x, range(5)) == [0, 1, 4, 9, 16]
    assert thread_map(str, [], threads=4) == []

    def slow_first(x: int) -> tuple[int, str]:
        time.sleep(0.05 if x == 0 else 0.0)
        return x, threading.current_thread().name

    results = thread_map(slow_first, range(4), threads=4)
    assert [r[0] for r in results] == [0, 1, 2, 3]
    assert all(r[1] != threading.main_thread().name for r in results)

    def fail_on_two(x: int) -> int:
        if x == 2:
            raise KeyError(x)
        return x

    with pytest.raises(KeyError):
        thread_map(fail_on_two, range(4), threads=2)
