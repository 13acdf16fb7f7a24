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
bugloc select subcommand implementation
"""

from __future__ import annotations

import argparse
import dataclasses
import json
from pathlib import Path
from typing import Optional, Sequence

from ..api.selection import select_all
from ..api.traces import load_dataset
from ..settings import settings
from .common import (
    CommandParser,
    add_config_option,
    add_markdown_help,
    add_out_option,
    dedent,
    load_run_config,
    manifest_path,
)

__all__ = ["select_main"]


def select_main(
    args: Optional[Sequence[str]] = None,
    prog: Optional[str] = None,
) -> None:
    """Main routine for `bugloc select` subcommand"""
    parser = CommandParser(
        usage="%(prog)s --manifest <manifest> [options]",
        prog=prog,
        formatter_class=argparse.RawTextHelpFormatter,
        description=dedent("""
            Select performance counters for every workload from the bug-free
            traces of the training architectures.

            The output JSON maps each workload id to its selected counters
            and holds their union under the key "superset".
            """),
    )
    parser.add_argument(
        "--manifest",
        metavar="<manifest>",
        type=manifest_path,
        required=True,
        help="Dataset manifest file, corpus directory or @alias from settings",
    )
    parser.add_argument(
        "--alpha",
        metavar="<r>",
        type=float,
        help="Minimum mean absolute correlation with IPC (default 0.7)",
    )
    parser.add_argument(
        "--beta",
        metavar="<r>",
        type=float,
        help="Maximum mean absolute correlation between kept counters (default 0.95)",
    )
    parser.add_argument(
        "--exclude",
        metavar="<pattern>",
        action="append",
        default=[],
        help="Glob pattern of counters never to select (repeatable)",
    )
    add_config_option(parser)
    add_out_option(parser, "selection.json", "Output file")
    add_markdown_help(parser)

    parsed = parser.parse_args(args)

    run = load_run_config(parsed.config)
    cfg = run.selection
    changes = {}
    if parsed.alpha is not None:
        changes["alpha"] = parsed.alpha
    if parsed.beta is not None:
        changes["beta"] = parsed.beta
    if parsed.exclude:
        changes["exclude"] = tuple(cfg.exclude) + tuple(parsed.exclude)
    cfg = dataclasses.replace(cfg, **changes)

    dataset = load_dataset(parsed.manifest)
    result = select_all(dataset, cfg, threads=settings.threads)
    out: Path = result.save(parsed.out)
    print(json.dumps(dict(selection=str(out), **result.ratio_report()), indent=2))


if __name__ == "__main__":  # pragma: no cover
    select_main()
