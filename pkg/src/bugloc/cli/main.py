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
Main bugloc CLI
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..__about__ import __version__
from ..errors import BugLocError
from ..settings import settings
from .common import (
    CommandParser,
    Subcommands,
    add_markdown_help,
    dedent,
    report_error,
    set_verbosity,
)

__all__ = ["main"]


def main(args: Optional[Sequence[str]] = None, prog: Optional[str] = None) -> None:
    """
    Main command line interface for bugloc
    """
    parser = CommandParser(
        prog=prog,
        usage="%(prog)s [options] <command> ...",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        description=dedent("""
            Localize microprocessor performance bugs to a microarchitectural
            unit from performance counter traces of legacy designs.

            A typical run generates or points at a corpus, selects counters,
            trains models and evaluates them on the test architectures:

                bugloc simgen --config gen.yaml --out corpus
                bugloc select --manifest corpus --out selection.json
                bugloc train-cbc --manifest corpus --selection selection.json --out cbc
                bugloc evaluate --manifest corpus --method cbc --cbc-bank cbc

            See `%(prog)s <command> --help` for more information.
            """),
    )

    subcmds = Subcommands(parser)
    subcmds.add_subcommand(
        "audit-bugfree",
        "bugloc.cli.evaluate.audit_bugfree_main",
        "rank of the BugFree class on test designs",
    )
    subcmds.add_subcommand(
        "config",
        "bugloc.cli.config.config_main",
        "configure bugloc",
    )
    subcmds.add_subcommand(
        "evaluate",
        "bugloc.cli.evaluate.evaluate_main",
        "top-k accuracy on test architectures",
    )
    subcmds.add_subcommand(
        "localize",
        "bugloc.cli.localize.localize_main",
        "rank units for one design",
    )
    subcmds.add_subcommand(
        "select",
        "bugloc.cli.select.select_main",
        "select performance counters per workload",
    )
    subcmds.add_subcommand(
        "sensitivity",
        "bugloc.cli.evaluate.sensitivity_main",
        "accuracy against number of workloads",
    )
    subcmds.add_subcommand(
        "simgen",
        "bugloc.cli.simgen.simgen_main",
        "generate a synthetic labeled corpus",
    )
    subcmds.add_subcommand(
        "train-cbc",
        "bugloc.cli.train.train_cbc_main",
        "train counter based classifiers",
    )
    subcmds.add_subcommand(
        "train-p2bc",
        "bugloc.cli.train.train_p2bc_main",
        "train prediction error based classifiers",
    )

    class ListSubcommands(argparse.Action):
        """Print out space separated list of command words and exit"""

        def __call__(self, *args, **kwargs):
            print(" ".join(subcmds.subcommands))
            sys.exit(0)

    parser.add_argument(
        "--list-subcommands", action=ListSubcommands, nargs=0, help=argparse.SUPPRESS
    )

    parser.add_argument(
        "--settings",
        metavar="<filepath>",
        help="Override default settings file",
    )
    parser.add_argument(
        "--seed",
        metavar="<int>",
        type=int,
        help="Random seed for this run (default from settings)",
    )
    parser.add_argument(
        "--threads",
        metavar="<n>",
        type=int,
        help="Worker threads for this run (default from settings)",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="More verbose output",
    )
    parser.add_argument(
        "-q",
        "--quiet",
        action="count",
        default=0,
        help="Less verbose output",
    )

    add_markdown_help(parser)
    parser.add_argument("--version", action="version", version=__version__)

    parsed = parser.parse_args(args)

    if parsed.settings:
        settings.load(Path(parsed.settings).expanduser())
    try:
        if parsed.seed is not None:
            settings.seed = parsed.seed
        if parsed.threads is not None:
            settings.threads = parsed.threads
    except ValueError as ex:
        parser.error(str(ex))

    set_verbosity(parsed.verbose - parsed.quiet)

    try:
        subcmds.run(parsed)
    except (BugLocError, ValueError, OSError) as ex:
        report_error(ex)


if __name__ == "__main__":  # pragma: no cover
    main()
