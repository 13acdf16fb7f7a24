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
Test fixtures and helpers building small labeled corpora
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pytest

from bugloc.api.cbc import CbcConfig
from bugloc.api.p2bc import P2bcConfig
from bugloc.api.simgen import GeneratorConfig, NoiseConfig, generate_corpus
from bugloc.api.traces import CounterTrace, Dataset, UnitLabel, load_dataset
from bugloc.impl.convnet import ConvLayerSpec, ConvNetArch, DenseLayerSpec, TrainConfig
from bugloc.impl.gbdt import GbdtConfig

__all__ = [
    "STALL_COUNTERS",
    "fast_cbc_config",
    "fast_p2bc_config",
    "make_trace",
    "small_corpus",
    "small_dataset",
    "small_generator_config",
]

# stall counter of each unit
STALL_COUNTERS = [
    "fetch.stall_cycles",
    "decode.stall_cycles",
    "rename.serialize_stall_cycles",
    "iq.stall_cycles",
    "exec.fu_busy_cycles",
    "branch.squash_cycles",
    "regs.full_cycles",
    "lsq.full_cycles",
    "mem.stall_cycles",
    "rob.full_cycles",
    "commit.idle_cycles",
]


def make_trace(
    workload: str,
    arch: str,
    label: UnitLabel | str = UnitLabel.BUGFREE,
    bug_id: Optional[str] = None,
    *,
    samples: Optional[np.ndarray] = None,
    ipc: Optional[Sequence[float]] = None,
    counters: Sequence[str] = ("a", "b", "c"),
    length: int = 8,
    seed: int = 0,
) -> CounterTrace:
    """Trace with given or random non-negative contents"""
    rng = np.random.default_rng(seed)
    if samples is None:
        samples = rng.uniform(0.0, 100.0, (length, len(counters)))
    if ipc is None:
        ipc = rng.uniform(0.5, 2.0, np.asarray(samples).shape[0])
    return CounterTrace(
        workload_id=workload,
        arch_id=arch,
        label=label,
        bug_id=bug_id,
        samples=samples,
        counter_names=tuple(counters),
        ipc=ipc,
    )


def small_generator_config(**changes: Any) -> GeneratorConfig:
    """
    Generator settings for a corpus small enough to train on in tests.

    Three architectures (two for training), three workloads, one bug family
    per unit in two variations, two units of unseen type.
    """
    settings: dict[str, Any] = dict(
        seed=7,
        n_archs=3,
        n_train_archs=2,
        n_workloads=3,
        windows_per_trace=12,
        families_per_unit=1,
        variations=2,
        unseen_type_fraction=2.0 / 11.0,
        impact_band=(0.02, 0.08),
        noise=NoiseConfig(ipc=0.005, jitter=0.01, counters=0.005),
    )
    settings.update(changes)
    return GeneratorConfig(**settings)


def fast_cbc_config(**changes: Any) -> CbcConfig:
    """CBC settings with a few shallow trees and a tiny network"""
    settings: dict[str, Any] = dict(
        gbdt=GbdtConfig(n_trees=8, max_depth=3, learning_rate=0.3),
        cnn=ConvNetArch(conv=[ConvLayerSpec(4, 3)], dense=[DenseLayerSpec(8)]),
        train=TrainConfig(epochs=5, batch_size=16, patience=5),
    )
    settings.update(changes)
    return CbcConfig(**settings)


def fast_p2bc_config(**changes: Any) -> P2bcConfig:
    """P2BC settings with a few shallow trees and a tiny network"""
    settings: dict[str, Any] = dict(
        gbdt=GbdtConfig(n_trees=10, max_depth=3, learning_rate=0.3),
        cnn=ConvNetArch(conv=[ConvLayerSpec(4, 3)], dense=[DenseLayerSpec(8)]),
        train=TrainConfig(epochs=5, batch_size=8, patience=5),
    )
    settings.update(changes)
    return P2bcConfig(**settings)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Directory of a generated small corpus, shared by all tests"""
    out = tmp_path_factory.mktemp("corpus")
    generate_corpus(small_generator_config(), out)
    return out


@pytest.fixture(scope="session")
def small_dataset(
    small_corpus: Path,  # pylint: disable=redefined-outer-name
) -> Dataset:
    """Dataset loaded from the small corpus"""
    return load_dataset(small_corpus / "manifest.json")
