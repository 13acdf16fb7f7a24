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
bugloc evaluate, sensitivity and audit-bugfree subcommand implementations
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path
from typing import Optional, Sequence

from ..api.cbc import CbcModelBank
from ..api.harness import bugfree_audit, evaluate, workload_sensitivity
from ..api.traces import load_dataset
from ..settings import settings
from .common import (
    CommandParser,
    add_config_option,
    add_markdown_help,
    add_out_option,
    dedent,
    existing_dir,
    load_run_config,
    manifest_path,
)
from .localize import add_model_options, load_localizer

__all__ = ["audit_bugfree_main", "evaluate_main", "sensitivity_main"]


def _add_manifest(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--manifest",
        metavar="<manifest>",
        type=manifest_path,
        required=True,
        help="Dataset manifest file, corpus directory or @alias from settings",
    )


def _add_bank(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--bank",
        "--cbc-bank",
        dest="cbc_bank",
        metavar="<dir>",
        type=existing_dir,
        required=True,
        help="CBC model bank written by `bugloc train-cbc`",
    )


def _write_json(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n", "utf8")


def evaluate_main(
    args: Optional[Sequence[str]] = None,
    prog: Optional[str] = None,
) -> None:
    """Main routine for `bugloc evaluate` subcommand"""
    parser = CommandParser(
        usage="%(prog)s --manifest <manifest> [options]",
        prog=prog,
        formatter_class=argparse.RawTextHelpFormatter,
        description=dedent("""
            Localize every buggy design of the test architectures and
            report top-k accuracy.

            Accuracy is broken down by bug category, by impact band and by
            architecture. The JSON report is written to --out and a plot
            ready CSV table next to it.
            """),
    )
    _add_manifest(parser)
    add_model_options(parser)
    parser.add_argument(
        "--max-k",
        metavar="<k>",
        type=int,
        help="Largest k to report (default 5)",
    )
    add_config_option(parser)
    add_out_option(parser, "report.json", "Output report")
    add_markdown_help(parser)

    parsed = parser.parse_args(args)

    run = load_run_config(parsed.config)
    cfg = run.evaluate
    if parsed.max_k is not None:
        if parsed.max_k < 1:
            parser.error(f"--max-k must be at least 1: {parsed.max_k}")
        cfg.max_k = parsed.max_k

    localizer = load_localizer(parsed.method, parsed.cbc_bank, parsed.p2bc_models)
    dataset = load_dataset(parsed.manifest)
    echo = run.to_dict()
    echo["seed"] = settings.seed
    report = evaluate(localizer, dataset, cfg, config_echo=echo)
    out = report.save(parsed.out)
    summary = report.to_dict(include_verdicts=False)
    summary["report"] = str(out)
    print(json.dumps(summary, indent=2))


def sensitivity_main(
    args: Optional[Sequence[str]] = None,
    prog: Optional[str] = None,
) -> None:
    """Main routine for `bugloc sensitivity` subcommand"""
    parser = CommandParser(
        usage="%(prog)s --manifest <manifest> --bank <dir> [options]",
        prog=prog,
        formatter_class=argparse.RawTextHelpFormatter,
        description=dedent("""
            Measure top-1 accuracy of a CBC bank when only a random subset
            of the workloads is used for localization.

            Nothing is retrained. Each repetition drops workloads in a new
            random order; the report gives mean, min and max accuracy for
            every workload count of the grid.
            """),
    )
    _add_manifest(parser)
    _add_bank(parser)
    parser.add_argument(
        "--grid",
        metavar="<n>",
        type=int,
        nargs="+",
        help="Strictly decreasing workload counts (default: all, then in batch steps)",
    )
    parser.add_argument(
        "--repetitions",
        metavar="<n>",
        type=int,
        help="Number of random workload orders (default 100)",
    )
    parser.add_argument(
        "--batch",
        metavar="<n>",
        type=int,
        help="Step of the default grid (default 5)",
    )
    add_config_option(parser)
    add_out_option(parser, "sensitivity.json", "Output file")
    add_markdown_help(parser)

    parsed = parser.parse_args(args)

    run = load_run_config(parsed.config)
    batch = parsed.batch if parsed.batch is not None else run.sensitivity_batch
    repetitions = (
        parsed.repetitions
        if parsed.repetitions is not None
        else run.sensitivity_repetitions
    )
    if batch < 1:
        parser.error(f"--batch must be at least 1: {batch}")

    bank = CbcModelBank.load(parsed.cbc_bank)
    dataset = load_dataset(parsed.manifest)
    result = workload_sensitivity(
        bank,
        dataset,
        parsed.grid,
        repetitions,
        settings.seed,
        batch=batch,
    )
    out: Path = parsed.out
    _write_json(out, result.to_dict())
    result.to_frame().to_csv(out.with_suffix(".csv"), index=False, lineterminator="\n")
    print(json.dumps(result.to_dict(), indent=2))


def audit_bugfree_main(
    args: Optional[Sequence[str]] = None,
    prog: Optional[str] = None,
) -> None:
    """Main routine for `bugloc audit-bugfree` subcommand"""
    parser = CommandParser(
        usage="%(prog)s --manifest <manifest> --bank <dir> [options]",
        prog=prog,
        formatter_class=argparse.RawTextHelpFormatter,
        description=dedent("""
            Check how a CBC bank trained with the BugFree class ranks that
            class on the bug-free and the buggy designs of the test
            architectures.
            """),
    )
    _add_manifest(parser)
    _add_bank(parser)
    parser.add_argument(
        "--topk",
        metavar="<k>",
        type=int,
        default=None,
        help="Rank within which BugFree counts as reported on buggy designs",
    )
    add_out_option(parser, "bugfree_audit.json", "Output file")
    add_markdown_help(parser)

    parsed = parser.parse_args(args)

    k = parsed.topk if parsed.topk is not None else settings.topk
    bank = CbcModelBank.load(parsed.cbc_bank)
    dataset = load_dataset(parsed.manifest)
    audit = bugfree_audit(bank, dataset, k=k, threads=settings.threads)
    _write_json(parsed.out, audit.to_dict())
    print(json.dumps(audit.to_dict(), indent=2))
