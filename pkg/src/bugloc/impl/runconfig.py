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
Run configuration: hyperparameters read from a TOML file.

Entries live in the tables `[selection]`, `[gbdt]`, `[cbc]`, `[p2bc]`,
`[cnn]` and `[evaluate]`. Unknown keys and ill-typed values are ignored
with a warning. Use [add_run_defaults][(m).] to write a file holding every
default with explanatory comments.
"""

from __future__ import annotations

# standard
import dataclasses
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

# third party
import tomlkit
from tomlkit.exceptions import ParseError as TomlParseError

# this project
from ..api.cbc import CbcConfig
from ..api.harness import EvalConfig
from ..api.p2bc import P2bcConfig, ResampleConfig
from ..api.selection import SelectionConfig
from ..errors import ConfigError
from .convnet import ConvLayerSpec, ConvNetArch, DenseLayerSpec, TrainConfig
from .gbdt import GbdtConfig

__all__ = [
    "RUN_DEFAULTS",
    "RunConfig",
    "add_run_defaults",
    "read_run_config",
]


def warn_ignored_key(file: Path, key: str, msg: str) -> None:
    """Warn about ignored key in run configuration"""
    warnings.warn(
        f"Ignoring run config key '{key}':\n {msg}\n from {file}",
        UserWarning,
    )


RUN_DEFAULTS: dict[str, dict[str, dict[str, Any]]] = {
    "selection": {
        "alpha": {
            "default": 0.7,
            "comment": ["Minimum mean absolute correlation of a counter with IPC"],
        },
        "beta": {
            "default": 0.95,
            "comment": ["Maximum mean absolute correlation between kept counters"],
        },
        "exclude": {
            "default": [],
            "comment": [
                "Glob patterns of counters never selected, e.g. counters",
                "that define IPC such as committed instructions",
            ],
        },
    },
    "gbdt": {
        "n-trees": {"default": 100, "comment": ["Boosting rounds of CBC models"]},
        "learning-rate": {"default": 0.3, "comment": ["Shrinkage in (0,1]"]},
        "max-depth": {"default": 6, "comment": ["Maximum tree depth"]},
        "min-samples-leaf": {"default": 1, "comment": ["Minimum samples per leaf"]},
    },
    "cbc": {
        "mode": {
            "default": "step",
            "comment": [
                "Classifier input:",
                '   "step": boosted trees on each sample window',
                '   "trace": convolutional network on whole resampled traces',
            ],
        },
        "include-bugfree-class": {
            "default": False,
            "comment": ["Train an additional BugFree classifier per workload"],
        },
        "balance-classes": {
            "default": True,
            "comment": ["Weight positive samples by negatives/positives"],
        },
        "trace-length": {
            "default": 0,
            "comment": ["Trace mode input length, 0 for the mean training length"],
        },
    },
    "p2bc": {
        "n-trees": {
            "default": 250,
            "comment": ["Boosting rounds of the bug-free IPC models"],
        },
        "target-length": {
            "default": 0,
            "comment": ["Error trace length, 0 for the mean training length"],
        },
        "include-bugfree-class": {
            "default": False,
            "comment": ["Train an additional BugFree classifier"],
        },
        "bugfree-negatives": {
            "default": True,
            "comment": ["Use bug-free training designs as negative samples"],
        },
    },
    "cnn": {
        "conv-filters": {
            "default": [100, 100],
            "comment": ["Filters of each convolution layer"],
        },
        "kernel-width": {"default": 3, "comment": ["Convolution kernel width"]},
        "dense-units": {
            "default": [300, 100, 50],
            "comment": ["Units of each dense layer"],
        },
        "epochs": {"default": 60, "comment": ["Maximum training epochs"]},
        "batch-size": {"default": 32, "comment": ["Minibatch size"]},
        "learning-rate": {"default": 0.001, "comment": ["Adam step size"]},
        "patience": {
            "default": 10,
            "comment": ["Epochs without improvement before stopping"],
        },
        "scaling": {
            "default": "channel",
            "comment": ['Input standardization: "channel", "feature" or "none"'],
        },
    },
    "evaluate": {
        "max-k": {"default": 5, "comment": ["Largest k of top-k accuracy"]},
        "bands": {
            "default": [0.001, 0.01, 0.05],
            "comment": ["Lower bounds of cumulative IPC impact bands"],
        },
        "batch": {
            "default": 5,
            "comment": ["Workloads dropped per step of the sensitivity study"],
        },
        "repetitions": {
            "default": 100,
            "comment": ["Repetitions of the sensitivity study"],
        },
    },
}


def add_run_defaults(path: Union[Path, str]) -> None:
    """
    Add default entries to a run configuration file.

    Existing entries are kept.

    Args:
        path: toml file to create or update. The special value 'out'
            writes to stdout.
    """
    toml = tomlkit.TOMLDocument()
    toml_file: Optional[Path] = None
    if path not in {"out", "stdout"}:
        toml_file = Path(path).expanduser()
        if toml_file.suffix != ".toml":
            raise ValueError(f"Cannot write to non .toml file {toml_file}")
        if toml_file.is_file():
            toml = tomlkit.loads(toml_file.read_text("utf8"))

    for table_name, entries in RUN_DEFAULTS.items():
        table = toml.setdefault(table_name, tomlkit.table())
        for k, v in entries.items():
            if k not in table:
                for comment in v.get("comment", ()):
                    table.add(tomlkit.comment(comment))
                table.add(k, v["default"])

    new_contents = tomlkit.dumps(toml)
    if toml_file:
        toml_file.write_text(new_contents, "utf8")
    else:
        print(new_contents)


@dataclass
class RunConfig:
    """Hyperparameters of one run"""

    selection: SelectionConfig = field(default_factory=SelectionConfig)
    cbc: CbcConfig = field(default_factory=CbcConfig)
    p2bc: P2bcConfig = field(default_factory=P2bcConfig)
    evaluate: EvalConfig = field(default_factory=EvalConfig)
    sensitivity_batch: int = 5
    sensitivity_repetitions: int = 100
    source: Optional[Path] = None

    def apply_runtime(self, *, seed: int, threads: int) -> RunConfig:
        """Set seed and thread count everywhere they are used"""
        for cfg in (self.cbc, self.p2bc):
            cfg.threads = threads
            cfg.train.seed = seed
        self.evaluate.threads = threads
        return self

    def to_dict(self) -> dict[str, Any]:
        return dict(
            selection=dict(
                alpha=self.selection.alpha,
                beta=self.selection.beta,
                exclude=list(self.selection.exclude),
            ),
            cbc=self.cbc.to_dict(),
            p2bc=self.p2bc.to_dict(),
            evaluate=dict(
                max_k=self.evaluate.max_k,
                bands=list(self.evaluate.bands),
                batch=self.sensitivity_batch,
                repetitions=self.sensitivity_repetitions,
            ),
            source=str(self.source) if self.source else None,
        )


def _expected_type(default: Any) -> tuple[type, ...]:
    if isinstance(default, bool):
        return (bool,)
    if isinstance(default, float):
        return (float, int)
    if isinstance(default, int):
        return (int,)
    if isinstance(default, str):
        return (str,)
    return (list,)


# pylint: disable=too-many-locals
def read_run_config(path: Union[Path, str, None] = None) -> RunConfig:
    """
    Read run configuration.

    Args:
        path: TOML file, or None for all defaults

    Raises:
        ConfigError: the file cannot be parsed or values are out of range
    """
    if path is None:
        return RunConfig()
    toml_file = Path(path).expanduser()
    try:
        toml = tomlkit.loads(toml_file.read_text("utf8")).unwrap()
    except TomlParseError as ex:
        raise ConfigError(f"cannot parse run config {toml_file}: {ex}") from ex

    values: dict[str, dict[str, Any]] = {}
    for table_name, table in toml.items():
        if table_name not in RUN_DEFAULTS or not isinstance(table, dict):
            warn_ignored_key(toml_file, table_name, "unknown table")
            continue
        known = RUN_DEFAULTS[table_name]
        for k, v in table.items():
            key = f"{table_name}.{k}"
            if k not in known:
                warn_ignored_key(toml_file, key, "unknown key")
                continue
            default = known[k]["default"]
            if isinstance(v, bool) and not isinstance(default, bool):
                warn_ignored_key(toml_file, key, f"value is not a number: {v}")
                continue
            if not isinstance(v, _expected_type(default)):
                warn_ignored_key(
                    toml_file, key, f"expected {type(default).__name__} but got {v!r}"
                )
                continue
            values.setdefault(table_name, {})[k] = v

    def get(table: str, key: str) -> Any:
        return values.get(table, {}).get(key, RUN_DEFAULTS[table][key]["default"])

    try:
        cnn = ConvNetArch(
            conv=[
                ConvLayerSpec(int(n), kernel_width=int(get("cnn", "kernel-width")))
                for n in get("cnn", "conv-filters")
            ],
            dense=[DenseLayerSpec(int(n)) for n in get("cnn", "dense-units")],
        )
        train = TrainConfig(
            epochs=int(get("cnn", "epochs")),
            batch_size=int(get("cnn", "batch-size")),
            learning_rate=float(get("cnn", "learning-rate")),
            patience=int(get("cnn", "patience")),
            scaling=get("cnn", "scaling"),
        )
        trace_length = int(get("cbc", "trace-length")) or None
        target_length = int(get("p2bc", "target-length")) or None
        cfg = RunConfig(
            selection=SelectionConfig(
                alpha=float(get("selection", "alpha")),
                beta=float(get("selection", "beta")),
                exclude=[str(p) for p in get("selection", "exclude")],
            ),
            cbc=CbcConfig(
                mode=get("cbc", "mode"),
                gbdt=GbdtConfig(
                    n_trees=int(get("gbdt", "n-trees")),
                    learning_rate=float(get("gbdt", "learning-rate")),
                    max_depth=int(get("gbdt", "max-depth")),
                    min_samples_leaf=int(get("gbdt", "min-samples-leaf")),
                ),
                include_bugfree_class=bool(get("cbc", "include-bugfree-class")),
                balance_classes=bool(get("cbc", "balance-classes")),
                trace_length=trace_length,
                cnn=cnn,
                train=train,
            ),
            p2bc=P2bcConfig(
                gbdt=GbdtConfig(
                    n_trees=int(get("p2bc", "n-trees")),
                    learning_rate=float(get("gbdt", "learning-rate")),
                    max_depth=int(get("gbdt", "max-depth")),
                    min_samples_leaf=int(get("gbdt", "min-samples-leaf")),
                ),
                resample=ResampleConfig(target_length=target_length),
                cnn=ConvNetArch(conv=list(cnn.conv), dense=list(cnn.dense)),
                train=dataclasses.replace(train),
                include_bugfree_class=bool(get("p2bc", "include-bugfree-class")),
                bugfree_negatives=bool(get("p2bc", "bugfree-negatives")),
            ),
            evaluate=EvalConfig(
                max_k=int(get("evaluate", "max-k")),
                bands=tuple(float(b) for b in get("evaluate", "bands")),
            ),
            sensitivity_batch=int(get("evaluate", "batch")),
            sensitivity_repetitions=int(get("evaluate", "repetitions")),
            source=toml_file,
        )
    except (TypeError, ValueError) as ex:
        raise ConfigError(f"bad run config {toml_file}: {ex}") from ex
    return cfg
