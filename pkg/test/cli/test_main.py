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
Unit tests for main `bugloc` CLI
"""

from __future__ import annotations

import json
import re
import subprocess
import sys

import pytest

from bugloc import __version__
from bugloc.cli import main
from bugloc.settings import settings

SUBCOMMANDS = [
    "audit-bugfree",
    "config",
    "evaluate",
    "localize",
    "select",
    "sensitivity",
    "simgen",
    "train-cbc",
    "train-p2bc",
]


def test_help(
    capsys: pytest.CaptureFixture,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    """Unit test for --help flag"""

    with pytest.raises(SystemExit):
        main(["--help"], "bugloc2")
    out, err = capsys.readouterr()
    assert not err
    assert "usage: bugloc2" in out
    assert "--markdown-help" not in out

    for subcmd in SUBCOMMANDS:
        assert re.search(rf"^\s+{subcmd}\s+\w+", out, flags=re.MULTILINE)

    with pytest.raises(SystemExit) as exc_info:
        main(["--list-subcommands"], "bugloc")
    out, err = capsys.readouterr()
    assert err == ""
    assert set(out.strip().split()) == set(SUBCOMMANDS)
    assert exc_info.value.code == 0

    def _check_subcmd(subcmd: str):
        with monkeypatch.context() as ctx:
            with pytest.raises(SystemExit):
                main(f"{subcmd} --help".split(), "bugloc2")
            out, err = capsys.readouterr()
            assert not err
            assert "usage: bugloc2" in out
            assert "--markdown-help" not in out

            ctx.setattr("sys.argv", f"bugloc3 {subcmd} --help".split())
            with pytest.raises(SystemExit):
                main()
            out, err = capsys.readouterr()
            assert not err
            assert "usage: bugloc3" in out

            with pytest.raises(SystemExit):
                main(f"{subcmd} --markdown-help".split())
            out, err = capsys.readouterr()
            assert not err
            assert "### Usage" in out
            assert "usage: bugloc3" in out

    for subcmd in SUBCOMMANDS:
        _check_subcmd(subcmd)


def test_version(capsys: pytest.CaptureFixture):
    """Unit test for --version flag"""
    with pytest.raises(SystemExit):
        main(["--version"])
    out, err = capsys.readouterr()
    assert not err
    assert out.strip() == __version__


def test_runtime_options(capsys: pytest.CaptureFixture) -> None:
    """--seed and --threads override the settings for one run"""
    main(["--seed", "42", "--threads", "3", "config"])
    assert settings.seed == 42
    assert settings.threads == 3

    with pytest.raises(SystemExit) as exc_info:
        main(["--threads", "0", "config"])
    assert exc_info.value.code == 1
    _, err = capsys.readouterr()
    error = json.loads(err.strip().splitlines()[-1])
    assert error["error"] == "UsageError"
    assert "less than 1" in error["message"]


@pytest.mark.parametrize(
    "args,message",
    [
        ([], "the following arguments are required: <command>"),
        (["nosuch"], "invalid choice: 'nosuch'"),
        (["--seed", "x", "config"], "invalid int value: 'x'"),
        (["select", "--bogus"], "unrecognized arguments: --bogus"),
        (["localize", "--traces", ".", "--topk", "0"], "--topk must be at least 1"),
        (["sensitivity", "--manifest"], "expected one argument"),
    ],
)
def test_usage_errors(
    args: list[str], message: str, capsys: pytest.CaptureFixture
) -> None:
    """Usage errors are reported as JSON on stderr and exit with 1"""
    with pytest.raises(SystemExit) as exc_info:
        main(args, "bugloc")
    assert exc_info.value.code == 1
    out, err = capsys.readouterr()
    assert not out
    error = json.loads(err.strip().splitlines()[-1])
    assert error["error"] == "UsageError"
    assert error["message"].startswith("bugloc")
    assert message in error["message"]


def test_error_report(capsys: pytest.CaptureFixture, tmp_path) -> None:
    """Failures print one JSON line on stderr and exit with 1"""
    bank = tmp_path / "bank"
    bank.mkdir()
    bank.joinpath("bank.json").write_text('{"format": "other"}', "utf8")
    traces = tmp_path / "traces"
    traces.mkdir()
    with pytest.raises(SystemExit) as exc_info:
        main(["localize", "--bank", str(bank), "--traces", str(traces)])
    assert exc_info.value.code == 1
    out, err = capsys.readouterr()
    assert not out
    error = json.loads(err.strip().splitlines()[-1])
    assert error["error"] == "ValueError"
    assert "does not contain a cbc model bank" in error["message"]


def test_main_module() -> None:
    """
    Test running using python -m
    """
    version = subprocess.check_output(
        [sys.executable, "-m", "bugloc", "--version"], encoding="utf8"
    )
    assert version.strip() == __version__

    # pylint: disable=import-outside-toplevel
    import bugloc.__main__

    assert bugloc.__main__.main is main
