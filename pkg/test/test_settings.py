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
Unit tests for bugloc.settings module
"""

import json
import tempfile
from pathlib import Path
from typing import Any, Dict

import pytest

from bugloc.api.harness import Method
from bugloc.settings import BugLocSettings, _fromidentifier

# ruff: noqa: F811


def test_BugLocSettings(tmp_path: Path):
    """
    Unit test for BugLocSettings class
    """

    settings = BugLocSettings()

    # check defaults
    assert settings.settings_file
    assert settings.seed == 0
    assert settings.threads == 1
    assert settings.default_method is Method.CBC
    assert settings.topk == 5
    assert settings.manifests == {}

    check_settings(settings, tmp_path)

    settings.seed = 42
    assert settings.seed == 42
    settings.seed = "17"
    assert settings.seed == 17
    with pytest.raises(ValueError):
        settings.seed = "bogus"
    with pytest.raises(ValueError):
        settings.seed = True
    with pytest.raises(ValueError):
        settings.threads = 0
    with pytest.raises(ValueError):
        settings.topk = "0"

    settings.default_method = "P2BC"
    assert settings.default_method is Method.P2BC
    with pytest.raises(ValueError):
        settings.default_method = "voting"

    settings.manifests["corpus"] = "~/data/corpus/manifest.json"
    assert settings.manifests == {"corpus": "~/data/corpus/manifest.json"}
    check_settings(settings, tmp_path)


def test_settings_get() -> None:
    """Unit test for BugLocSettings.get method"""
    settings = BugLocSettings()

    settings.threads = 4
    assert settings.get("threads") == 4

    with pytest.raises(KeyError, match=r"Unknown settings key 'barf'"):
        settings.get("barf")

    assert settings.get("manifests") is settings.manifests

    with pytest.raises(KeyError, match="'manifests.corpus' is not set"):
        settings.get("manifests.corpus")

    with pytest.raises(KeyError, match="Bad settings key 'seed.value'"):
        settings.get("seed.value")

    settings.manifests["corpus"] = "/data/manifest.json"
    assert settings.get("manifests.corpus") == "/data/manifest.json"
    assert settings.get("default-method") is Method.CBC


def test_settings_set(tmp_path: Path) -> None:
    """Unit test for BugLocSettings.set method"""
    settings = BugLocSettings()

    settings.set("default-method", "ensemble")
    assert settings.default_method is Method.ENSEMBLE

    settings.set("topk", "3")
    assert settings.topk == 3

    settings.set("manifests.small", "/data/small.json")
    settings.set("manifests.big", "/data/big.json")
    assert settings.manifests == {
        "small": "/data/small.json",
        "big": "/data/big.json",
    }

    with pytest.raises(KeyError, match="'seed' is not a dictionary"):
        settings.set("seed.value", 3)

    check_settings(settings, tmp_path)


def test_settings_unset(tmp_path: Path) -> None:
    """
    Unit test for BugLocSettings.unset method
    """
    settings = BugLocSettings()

    settings.threads = 8
    settings.manifests["a"] = "/a.json"
    settings.manifests["b"] = "/b.json"

    settings.unset("manifests.a")
    assert settings.manifests == {"b": "/b.json"}

    settings.unset("manifests")
    assert settings.manifests == {}

    settings.unset("threads")
    assert settings.threads == 1

    # no error
    settings.unset("manifests.notset")

    with pytest.raises(KeyError, match="'threads' is not a dictionary"):
        settings.unset("threads.value")


def test_resolve_manifest(tmp_path: Path) -> None:
    """Unit test for BugLocSettings.resolve_manifest"""
    settings = BugLocSettings()
    settings.manifests["corpus"] = str(tmp_path / "manifest.json")

    assert settings.resolve_manifest("@corpus") == tmp_path / "manifest.json"
    assert settings.resolve_manifest(tmp_path) == tmp_path
    assert settings.resolve_manifest("~/x.json") == Path("~/x.json").expanduser()
    with pytest.raises(KeyError, match="No manifest alias 'other'"):
        settings.resolve_manifest("@other")


def test_settings_load_bad_value(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    """Bad values in the settings file are reported and skipped"""
    settings_file = tmp_path / "settings.json"
    settings_file.write_text(json.dumps({"threads": 0, "topk": 3, "other": 1}))
    settings = BugLocSettings.from_file(settings_file)
    assert settings.threads == 1
    assert settings.topk == 3
    assert "Cannot read 'threads'" in capsys.readouterr().err


def check_settings(settings: BugLocSettings, tmp_path: Path) -> None:
    """
    Check invariants on BugLocSettings instance
    """
    fname = tempfile.mktemp(prefix="bugloc", suffix=".json", dir=tmp_path)
    settings.save(fname)
    settings2 = BugLocSettings.from_file(fname)
    assert settings2.settings_file == Path(fname)
    assert settings == settings2

    saved = json.loads(Path(fname).read_text("utf8"))
    assert "$bugloc-version" in saved

    for name in BugLocSettings._fieldnames:
        assert settings.get(_fromidentifier(name)) == getattr(settings, name)

    settings_dict = settings.to_dict()

    def _check_dict(d: Dict[str, Any], prefix="") -> None:
        for k, v in d.items():
            key = f"{prefix}{k}"
            if isinstance(v, dict):
                _check_dict(v, prefix=key + ".")
            else:
                assert settings.get(key) == v

    _check_dict(settings_dict)
