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
bugloc localize subcommand implementation
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path
from typing import Optional, Sequence

from ..api.cbc import CbcModelBank
from ..api.harness import Localizer, Method
from ..api.p2bc import P2bcModel
from ..api.traces import iter_trace_dir
from ..errors import ConfigError, EmptyInput
from ..settings import settings
from .common import CommandParser, add_markdown_help, dedent, existing_dir

__all__ = ["add_model_options", "load_localizer", "localize_main"]


def add_model_options(parser: argparse.ArgumentParser) -> None:
    """Adds --method, --cbc-bank and --p2bc-models options"""
    parser.add_argument(
        "--method",
        choices=[m.value for m in Method],
        default=None,
        help="Localization method (default: from settings, initially cbc)",
    )
    parser.add_argument(
        "--bank",
        "--cbc-bank",
        dest="cbc_bank",
        metavar="<dir>",
        type=existing_dir,
        help="CBC model bank written by `bugloc train-cbc`",
    )
    parser.add_argument(
        "--p2bc-models",
        metavar="<dir>",
        type=existing_dir,
        help="P2BC models written by `bugloc train-p2bc`",
    )


def load_localizer(
    method: Optional[str],
    cbc_bank: Optional[Path],
    p2bc_models: Optional[Path],
) -> Localizer:
    """
    Load the models a localization method needs.

    Raises:
        ConfigError: a model directory required by the method was not given
    """
    resolved = Method.from_string(method) if method else settings.default_method
    if resolved in (Method.CBC, Method.ENSEMBLE) and cbc_bank is None:
        raise ConfigError(f"--cbc-bank is required for method {resolved.value}")
    if resolved in (Method.P2BC, Method.ENSEMBLE) and p2bc_models is None:
        raise ConfigError(f"--p2bc-models is required for method {resolved.value}")
    return Localizer(
        method=resolved,
        cbc=CbcModelBank.load(cbc_bank) if cbc_bank else None,
        p2bc=P2bcModel.load(p2bc_models) if p2bc_models else None,
    )


def localize_main(
    args: Optional[Sequence[str]] = None,
    prog: Optional[str] = None,
) -> None:
    """Main routine for `bugloc localize` subcommand"""
    parser = CommandParser(
        usage="%(prog)s --traces <dir> [options]",
        prog=prog,
        formatter_class=argparse.RawTextHelpFormatter,
        description=dedent("""
            Rank the units of one design by how likely they hold a
            performance bug.

            The traces directory holds one `<workload>.csv` counter trace
            per workload run on the design. Workloads without a trace are
            skipped and counters missing from a trace are zero-filled; both
            are listed in the verdict.
            """),
    )
    add_model_options(parser)
    parser.add_argument(
        "--traces",
        metavar="<dir>",
        type=existing_dir,
        required=True,
        help="Directory of per-workload trace files of the design",
    )
    parser.add_argument(
        "--arch",
        metavar="<id>",
        default="",
        help="Architecture id of the design (default: traces directory name)",
    )
    parser.add_argument(
        "--topk",
        metavar="<k>",
        type=int,
        default=None,
        help="Number of leading units to list (default: from settings, initially 5)",
    )
    parser.add_argument(
        "--out",
        metavar="<json>",
        type=Path,
        help="Also write the verdict to this file",
    )
    add_markdown_help(parser)

    parsed = parser.parse_args(args)

    topk = parsed.topk if parsed.topk is not None else settings.topk
    if topk < 1:
        parser.error(f"--topk must be at least 1: {topk}")

    localizer = load_localizer(parsed.method, parsed.cbc_bank, parsed.p2bc_models)
    traces = iter_trace_dir(parsed.traces, arch_id=parsed.arch)
    if not traces:
        raise EmptyInput(f"no trace files in {parsed.traces}")
    verdict = localizer.localize(traces)
    if parsed.out:
        verdict.save(parsed.out, topk=topk)
    print(json.dumps(verdict.to_dict(topk=topk), indent=2))


if __name__ == "__main__":  # pragma: no cover
    localize_main()
