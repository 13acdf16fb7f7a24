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
bugloc train-cbc and train-p2bc subcommand implementations
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import time
from pathlib import Path
from typing import Optional, Sequence

from ..api.cbc import CbcMode, CbcModelBank, extend_cbc, train_cbc
from ..api.p2bc import ResampleConfig, train_p2bc
from ..api.selection import SelectionResult
from ..api.traces import UnitLabel, load_dataset
from .common import (
    CommandParser,
    add_config_option,
    add_markdown_help,
    add_out_option,
    dedent,
    existing_dir,
    existing_path,
    load_run_config,
    manifest_path,
)

__all__ = ["train_cbc_main", "train_p2bc_main"]

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser, out_default: str) -> None:
    parser.add_argument(
        "--manifest",
        metavar="<manifest>",
        type=manifest_path,
        required=True,
        help="Dataset manifest file, corpus directory or @alias from settings",
    )
    parser.add_argument(
        "--selection",
        metavar="<json>",
        type=existing_path,
        required=True,
        help="Counter selection written by `bugloc select`",
    )
    add_config_option(parser)
    add_out_option(parser, out_default, "Output directory")
    add_markdown_help(parser)


def train_cbc_main(
    args: Optional[Sequence[str]] = None,
    prog: Optional[str] = None,
) -> None:
    """Main routine for `bugloc train-cbc` subcommand"""
    parser = CommandParser(
        usage="%(prog)s --manifest <manifest> --selection <json> [options]",
        prog=prog,
        formatter_class=argparse.RawTextHelpFormatter,
        description=dedent("""
            Train the counter based classification model bank.

            One one-vs-all classifier is trained for every workload and unit
            using the counter superset of the selection as features. With
            --extend, only the models missing from an existing bank are
            trained.
            """),
    )
    _add_common(parser, "bank")
    parser.add_argument(
        "--mode",
        choices=[m.value for m in CbcMode],
        help="Per time step boosted trees or per trace convolutional classifiers",
    )
    parser.add_argument(
        "--include-bugfree",
        action="store_true",
        default=None,
        help="Also train a BugFree class for every workload",
    )
    parser.add_argument(
        "--extend",
        metavar="<dir>",
        type=existing_dir,
        help="Existing bank to extend with the workloads and units of the dataset",
    )

    parsed = parser.parse_args(args)

    run = load_run_config(parsed.config)
    cfg = run.cbc
    if parsed.mode:
        cfg = dataclasses.replace(cfg, mode=CbcMode.from_string(parsed.mode))
    if parsed.include_bugfree:
        cfg = dataclasses.replace(cfg, include_bugfree_class=True)

    dataset = load_dataset(parsed.manifest)
    selection = SelectionResult.load(parsed.selection)
    start = time.perf_counter()
    if parsed.extend:
        units = set(dataset.units)
        if cfg.include_bugfree_class:
            units.add(UnitLabel.BUGFREE)
        bank = extend_cbc(
            CbcModelBank.load(parsed.extend),
            dataset,
            cfg,
            workloads=dataset.workloads,
            units=units,
        )
    else:
        bank = train_cbc(dataset, selection.superset, cfg)
    elapsed = time.perf_counter() - start
    out = bank.save(parsed.out)
    degenerate = bank.degenerate_models
    if degenerate:
        logger.warning("%d models saw only one class", len(degenerate))
    print(
        json.dumps(
            dict(
                bank=str(out),
                mode=bank.mode.value,
                models=bank.model_count,
                workloads=len(bank.workloads),
                classes=[c.value for c in bank.classes],
                superset=len(bank.superset),
                degenerate=len(degenerate),
                seconds=round(elapsed, 3),
            ),
            indent=2,
        )
    )


def train_p2bc_main(
    args: Optional[Sequence[str]] = None,
    prog: Optional[str] = None,
) -> None:
    """Main routine for `bugloc train-p2bc` subcommand"""
    parser = CommandParser(
        usage="%(prog)s --manifest <manifest> --selection <json> [options]",
        prog=prog,
        formatter_class=argparse.RawTextHelpFormatter,
        description=dedent("""
            Train the two stage IPC prediction based classifier.

            Stage 1 fits one IPC regressor per workload on the bug-free
            training traces. Stage 2 fits one binary classifier per unit on
            the multi-channel IPC error traces of the training designs.
            """),
    )
    _add_common(parser, "p2bc")
    parser.add_argument(
        "--target-length",
        metavar="<n>",
        type=int,
        help="Common error trace length (default: mean training trace length)",
    )

    parsed = parser.parse_args(args)

    run = load_run_config(parsed.config)
    cfg = run.p2bc
    if parsed.target_length is not None:
        cfg = dataclasses.replace(
            cfg,
            resample=ResampleConfig(target_length=parsed.target_length),
        )

    dataset = load_dataset(parsed.manifest)
    selection = SelectionResult.load(parsed.selection)
    start = time.perf_counter()
    model = train_p2bc(dataset, selection, cfg)
    elapsed = time.perf_counter() - start
    out = model.save(parsed.out)
    print(
        json.dumps(
            dict(
                models=str(out),
                stage1=len(model.ipc.models),
                stage2=len(model.stage2.classifiers),
                total=model.model_count,
                mean_rrmse=model.ipc.mean_rrmse,
                length=model.stage2.length,
                insufficient=[u.value for u in model.stage2.insufficient],
                seconds=round(elapsed, 3),
            ),
            indent=2,
        )
    )
