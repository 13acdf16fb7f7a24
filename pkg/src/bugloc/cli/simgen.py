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
bugloc simgen subcommand implementation
"""

from __future__ import annotations

import argparse
import dataclasses
import json
from pathlib import Path
from typing import Optional, Sequence

from ..api.simgen import GeneratorConfig, category_proportions, generate_corpus
from ..settings import settings
from .common import (
    CommandParser,
    add_markdown_help,
    dedent,
    existing_path,
    maybe_existing_dir,
)

__all__ = ["simgen_main"]


def simgen_main(
    args: Optional[Sequence[str]] = None,
    prog: Optional[str] = None,
) -> None:
    """Main routine for `bugloc simgen` subcommand"""
    parser = CommandParser(
        usage="%(prog)s [options]",
        prog=prog,
        formatter_class=argparse.RawTextHelpFormatter,
        description=dedent("""
            Generate a synthetic labeled corpus of counter traces.

            Writes trace CSV files, `manifest.json`, per bug impacts in
            `impacts.csv`, an impact histogram and the resolved generator
            configuration to the output directory.
            """),
    )
    parser.add_argument(
        "--config",
        metavar="<file>",
        type=existing_path,
        help=dedent("""
            Generator configuration in JSON or YAML (.yaml/.yml) format.
            Without it the default corpus (6 architectures, 12 workloads,
            2 bug families per unit with 3 variations) is generated with
            the seed from the user settings or --seed.
            """),
    )
    parser.add_argument(
        "--out",
        metavar="<dir>",
        type=maybe_existing_dir,
        default=Path("corpus"),
        help="Output directory (default: %(default)s)",
    )
    parser.add_argument(
        "--impact-band",
        metavar=("<low>", "<high>"),
        nargs=2,
        type=float,
        help="Mean IPC impact range of generated bugs, e.g. 0.01 0.05",
    )
    parser.add_argument(
        "--windows",
        metavar="<n>",
        type=int,
        help="Approximate sample windows per trace",
    )
    add_markdown_help(parser)

    parsed = parser.parse_args(args)

    if parsed.config:
        cfg = GeneratorConfig.from_file(parsed.config)
    else:
        cfg = GeneratorConfig(seed=settings.seed)
    if parsed.impact_band:
        cfg = dataclasses.replace(cfg, impact_band=tuple(parsed.impact_band))
    if parsed.windows:
        cfg = dataclasses.replace(cfg, windows_per_trace=parsed.windows)

    manifest = generate_corpus(cfg, parsed.out, threads=settings.threads)
    print(
        json.dumps(
            dict(
                manifest=str(parsed.out / "manifest.json"),
                traces=len(manifest.traces),
                architectures=len(manifest.splits),
                bugs=len(manifest.categories),
                categories=category_proportions(manifest),
            ),
            indent=2,
        )
    )


if __name__ == "__main__":  # pragma: no cover
    simgen_main()
