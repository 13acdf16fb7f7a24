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
Seeded synthetic generator of labeled counter traces.

Traces come from the analytic bottleneck model in
[cpimodel][bugloc.impl.cpimodel.] with bugs from
[bugfamilies][bugloc.impl.bugfamilies.]. All random draws of a trace depend
only on (seed, architecture, workload) and are made before a bug is applied,
so a buggy trace and its bug-free twin share every bit of noise and differ
only through the bug.

A corpus follows the usual legacy/new design protocol: bugs of unseen
types and the last variation of every seen type appear only on test
architectures.
"""

from __future__ import annotations

# standard
import dataclasses
import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

# third party
import numpy as np
import pandas as pd
import yaml

# this project
from ..errors import ConfigError
from ..impl.bugfamilies import (
    FAMILIES,
    BugFamily,
    calibrate_knob,
    families_for,
    get_family,
    relative_impact,
)
from ..impl.cpimodel import (
    COUNTER_NAMES,
    MIX_CLASSES,
    ArchConfig,
    Phase,
    WindowState,
    WorkloadProfile,
    derive_counters,
    window_state,
)
from ..impl.parallel import thread_map
from .traces import (
    DEFAULT_WINDOW_CYCLES,
    Category,
    CounterTrace,
    Manifest,
    Split,
    TraceEntry,
    UnitLabel,
    write_trace,
)

__all__ = [
    "ArchConfig",
    "BugSpec",
    "GeneratorConfig",
    "NoiseConfig",
    "Phase",
    "WorkloadProfile",
    "category_proportions",
    "generate_corpus",
    "generate_trace",
    "measure_impact",
]

logger = logging.getLogger(__name__)

IMPACT_HISTOGRAM_EDGES = (0.0, 0.001, 0.0025, 0.005, 0.01, 0.025, 0.05, 0.1, 1.0)


@dataclass(frozen=True)
class BugSpec:
    """One bug variation"""

    bug_id: str
    unit: UnitLabel
    family: str
    params: Mapping[str, Any]
    category: Category = Category.SEEN
    target_impact: Optional[float] = None

    def __post_init__(self) -> None:
        try:
            unit = UnitLabel.from_string(self.unit)
            category = Category.from_string(self.category)
        except ValueError as ex:
            raise ConfigError(f"bug '{self.bug_id}': {ex}") from ex
        if not unit.is_unit:
            raise ConfigError(f"bug '{self.bug_id}' has non-unit label {unit.value}")
        family = get_family(self.family)
        if family.unit is not unit:
            raise ConfigError(
                f"bug '{self.bug_id}': family {self.family} belongs to"
                f" {family.unit.value}, not {unit.value}"
            )
        family.check_params(self.params)
        object.__setattr__(self, "unit", unit)
        object.__setattr__(self, "category", category)
        object.__setattr__(self, "params", dict(self.params))

    @property
    def bug_family(self) -> BugFamily:
        return FAMILIES[self.family]

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = dict(
            bug_id=self.bug_id,
            unit=self.unit.value,
            family=self.family,
            params=dict(self.params),
            category=self.category.value,
        )
        if self.target_impact is not None:
            d["target_impact"] = self.target_impact
        return d

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> BugSpec:
        try:
            return cls(**obj)
        except TypeError as ex:
            raise ConfigError(f"bad bug spec: {ex}") from ex


@dataclass(frozen=True)
class NoiseConfig:
    """Noise levels, all as log-normal sigmas"""

    ipc: float = 0.02
    """Per-window multiplicative IPC noise"""
    jitter: float = 0.02
    """Per-window workload behavior jitter of locality and mix"""
    counters: float = 0.01
    """Per-counter measurement noise"""

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"noise.{f.name} must be in [0,1): {value}")

    @classmethod
    def none(cls) -> NoiseConfig:
        return cls(ipc=0.0, jitter=0.0, counters=0.0)


def _noise_rng(seed: int, arch_id: str, workload_id: str) -> np.random.Generator:
    return np.random.default_rng(
        [seed, zlib.crc32(arch_id.encode()), zlib.crc32(workload_id.encode())]
    )


@dataclass
class _Draws:
    mix: dict[str, np.ndarray]
    locality: np.ndarray
    ipc_factor: np.ndarray
    counter_factor: np.ndarray


def _draw(
    arch: ArchConfig, workload: WorkloadProfile, seed: int, noise: NoiseConfig
) -> _Draws:
    rng = _noise_rng(seed, arch.arch_id, workload.workload_id)
    n = workload.length
    z_loc = rng.standard_normal(n)
    z_mix = rng.standard_normal((n, len(MIX_CLASSES)))
    z_ipc = rng.standard_normal(n)
    z_cnt = rng.standard_normal((n, len(COUNTER_NAMES)))

    mix, locality = workload.per_window()
    locality = np.clip(locality * np.exp(noise.jitter * z_loc), 0.01, 0.999)
    weights = np.column_stack([mix[c] for c in MIX_CLASSES])
    weights *= np.exp(noise.jitter * z_mix)
    weights /= weights.sum(axis=1, keepdims=True)
    counter_factor = np.exp(noise.counters * z_cnt)
    counter_factor[:, COUNTER_NAMES.index("cycles")] = 1.0
    return _Draws(
        mix={c: weights[:, i] for i, c in enumerate(MIX_CLASSES)},
        locality=locality,
        ipc_factor=np.exp(noise.ipc * z_ipc),
        counter_factor=counter_factor,
    )


def _state(
    arch: ArchConfig, workload: WorkloadProfile, seed: int, noise: NoiseConfig
) -> tuple[WindowState, _Draws]:
    draws = _draw(arch, workload, seed, noise)
    return window_state(arch, draws.mix, draws.locality), draws


def generate_trace(
    arch: ArchConfig,
    workload: WorkloadProfile,
    bug: Optional[BugSpec] = None,
    seed: int = 0,
    *,
    noise: Optional[NoiseConfig] = None,
    window_cycles: int = DEFAULT_WINDOW_CYCLES,
) -> CounterTrace:
    """
    Generate one trace.

    Args:
        arch: architecture parameters
        workload: workload phases
        bug: bug to inject, if any
        seed: corpus seed
        noise: noise levels, default [NoiseConfig][..]
        window_cycles: cycles per sample window
    """
    noise = noise or NoiseConfig()
    state, draws = _state(arch, workload, seed, noise)
    if bug is not None:
        state = bug.bug_family.apply(state, bug.params)
    samples, ipc = derive_counters(state, window_cycles)
    return CounterTrace(
        workload_id=workload.workload_id,
        arch_id=arch.arch_id,
        label=bug.unit if bug is not None else UnitLabel.BUGFREE,
        samples=samples * draws.counter_factor,
        counter_names=COUNTER_NAMES,
        ipc=ipc * draws.ipc_factor,
        bug_id=bug.bug_id if bug is not None else None,
        window_cycles=window_cycles,
    )


def measure_impact(
    arch: ArchConfig,
    workload: WorkloadProfile,
    bug: BugSpec,
    seed: int = 0,
    *,
    noise: Optional[NoiseConfig] = None,
) -> float:
    """Mean per-window relative IPC loss of a buggy trace against its twin"""
    buggy = generate_trace(arch, workload, bug, seed, noise=noise)
    clean = generate_trace(arch, workload, None, seed, noise=noise)
    return float(np.mean(1.0 - buggy.ipc / clean.ipc))


# pylint: disable=too-many-instance-attributes
@dataclass
class GeneratorConfig:
    """
    Corpus generator settings.

    Architectures, workloads and bugs may be listed explicitly. Whatever is
    left empty is drawn from `seed` by [resolved][..].
    """

    seed: int = 0
    archs: list[ArchConfig] = field(default_factory=list)
    workloads: list[WorkloadProfile] = field(default_factory=list)
    bugs: list[BugSpec] = field(default_factory=list)
    train_archs: list[str] = field(default_factory=list)
    n_archs: int = 6
    n_train_archs: int = 4
    n_workloads: int = 12
    windows_per_trace: int = 30
    families_per_unit: int = 2
    variations: int = 3
    unseen_type_fraction: float = 6.0 / 22.0
    impact_band: tuple[float, float] = (0.01, 0.05)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    bugfree_test_designs: bool = True
    window_cycles: int = DEFAULT_WINDOW_CYCLES

    # pylint: disable=too-many-branches
    def __post_init__(self) -> None:
        self.archs = [
            a if isinstance(a, ArchConfig) else ArchConfig.from_dict(a)
            for a in self.archs
        ]
        self.workloads = [
            w if isinstance(w, WorkloadProfile) else WorkloadProfile.from_dict(w)
            for w in self.workloads
        ]
        self.bugs = [
            b if isinstance(b, BugSpec) else BugSpec.from_dict(b) for b in self.bugs
        ]
        if not isinstance(self.noise, NoiseConfig):
            self.noise = NoiseConfig(**self.noise)
        self.impact_band = tuple(float(v) for v in self.impact_band)  # type: ignore
        lo, hi = self.impact_band
        if not 0.0 < lo < hi < 1.0:
            raise ConfigError(f"bad impact band {self.impact_band}")
        for name, ids in (
            ("architecture", [a.arch_id for a in self.archs]),
            ("workload", [w.workload_id for w in self.workloads]),
            ("bug", [b.bug_id for b in self.bugs]),
        ):
            if len(set(ids)) != len(ids):
                raise ConfigError(f"duplicate {name} ids")
        n_archs = len(self.archs) or self.n_archs
        if n_archs < 2:
            raise ConfigError("need at least 2 architectures")
        if self.train_archs:
            known = {a.arch_id for a in self.archs}
            if not set(self.train_archs) <= known:
                raise ConfigError(
                    "unknown training architectures"
                    f" {sorted(set(self.train_archs) - known)}"
                )
            if len(set(self.train_archs)) >= n_archs:
                raise ConfigError("need at least one test architecture")
        elif not 1 <= self.n_train_archs < n_archs:
            raise ConfigError(
                f"n_train_archs must be in [1, {n_archs - 1}]: {self.n_train_archs}"
            )
        if self.n_workloads < 1 or self.windows_per_trace < 2:
            raise ConfigError("need at least one workload and two windows per trace")
        if not 1 <= self.families_per_unit <= 2:
            raise ConfigError(
                f"families_per_unit must be 1 or 2: {self.families_per_unit}"
            )
        if self.variations < 1:
            raise ConfigError(f"variations must be positive: {self.variations}")
        if not 0.0 <= self.unseen_type_fraction < 1.0:
            raise ConfigError(f"bad unseen_type_fraction {self.unseen_type_fraction}")
        if self.window_cycles < 1:
            raise ConfigError(f"bad window_cycles {self.window_cycles}")

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> GeneratorConfig:
        """
        Raises:
            ConfigError: unknown keys or invalid values
        """
        if not isinstance(obj, Mapping):
            raise ConfigError("generator config must be a mapping")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(obj) - names)
        if unknown:
            raise ConfigError(f"unknown generator config keys {unknown}")
        try:
            return cls(**obj)
        except (TypeError, ValueError) as ex:
            raise ConfigError(f"bad generator config: {ex}") from ex

    @classmethod
    def from_file(cls, path: Union[Path, str]) -> GeneratorConfig:
        """Read JSON or YAML (by `.yaml`/`.yml` suffix) config file"""
        path = Path(path)
        try:
            text = path.read_text("utf8")
            if path.suffix.lower() in (".yaml", ".yml"):
                obj = yaml.safe_load(text) or {}
            else:
                obj = json.loads(text)
        except (yaml.YAMLError, json.JSONDecodeError) as ex:
            raise ConfigError(f"cannot parse generator config {path}: {ex}") from ex
        return cls.from_dict(obj)

    def to_dict(self) -> dict[str, Any]:
        return dict(
            seed=self.seed,
            archs=[a.to_dict() for a in self.archs],
            workloads=[w.to_dict() for w in self.workloads],
            bugs=[b.to_dict() for b in self.bugs],
            train_archs=list(self.train_archs),
            n_archs=self.n_archs,
            n_train_archs=self.n_train_archs,
            n_workloads=self.n_workloads,
            windows_per_trace=self.windows_per_trace,
            families_per_unit=self.families_per_unit,
            variations=self.variations,
            unseen_type_fraction=self.unseen_type_fraction,
            impact_band=list(self.impact_band),
            noise=dataclasses.asdict(self.noise),
            bugfree_test_designs=self.bugfree_test_designs,
            window_cycles=self.window_cycles,
        )

    def resolved(self) -> GeneratorConfig:
        """Copy with architectures, workloads, split and bugs filled in"""
        archs = self.archs or _random_archs(self.n_archs, self.seed)
        workloads = self.workloads or _random_workloads(
            self.n_workloads, self.windows_per_trace, self.seed
        )
        train = self.train_archs or [a.arch_id for a in archs[: self.n_train_archs]]
        cfg = dataclasses.replace(
            self, archs=list(archs), workloads=list(workloads), train_archs=list(train)
        )
        if not cfg.bugs:
            cfg.bugs = _random_bugs(cfg)
        return cfg

    def split_of(self, arch_id: str) -> Split:
        return Split.TRAIN if arch_id in self.train_archs else Split.TEST


def _random_archs(n: int, seed: int) -> list[ArchConfig]:
    rng = np.random.default_rng([seed, 1])
    archs = []
    for i in range(n):
        archs.append(
            ArchConfig(
                arch_id=f"arch{i:02d}",
                pipeline_width=int(rng.choice([2, 3, 4, 6, 8])),
                rob_size=int(rng.choice([64, 96, 128, 192, 256])),
                lsq_size=int(rng.choice([16, 24, 32, 48, 64])),
                iq_size=int(rng.choice([16, 24, 32, 48, 64])),
                phys_regs=int(rng.choice([128, 192, 256, 384])),
                branch_accuracy=float(np.round(rng.uniform(0.9, 0.98), 4)),
                cache_latency_cycles=float(rng.integers(8, 21)),
                fu_latency={
                    "int": float(rng.integers(1, 3)),
                    "fp": float(rng.integers(3, 7)),
                    "mem": float(rng.integers(1, 4)),
                },
            )
        )
    return archs


def _random_workloads(n: int, windows: int, seed: int) -> list[WorkloadProfile]:
    rng = np.random.default_rng([seed, 2])
    spread = max(1, windows // 5)
    workloads = []
    for i in range(n):
        length = max(2, windows + int(rng.integers(-spread, spread + 1)))
        n_phases = int(rng.integers(1, min(3, length) + 1))
        cuts = np.sort(rng.choice(np.arange(1, length), n_phases - 1, replace=False))
        lengths = np.diff(np.concatenate([[0], cuts, [length]]))
        phases = []
        for plen in lengths:
            mix = rng.dirichlet([2.0, 3.0, 1.5, 5.0, 1.5])
            mix[-1] = 1.0 - float(np.sum(mix[:-1]))
            phases.append(
                Phase(
                    length_windows=int(plen),
                    mix={c: float(v) for c, v in zip(MIX_CLASSES, mix)},
                    locality=float(np.round(rng.uniform(0.6, 0.98), 4)),
                )
            )
        workloads.append(WorkloadProfile(workload_id=f"wl{i:02d}", phases=phases))
    return workloads


def _random_bugs(cfg: GeneratorConfig) -> list[BugSpec]:
    rng = np.random.default_rng([cfg.seed, 3])
    units = UnitLabel.units()
    per_unit = {u: families_for(u)[: cfg.families_per_unit] for u in units}
    n_families = sum(len(f) for f in per_unit.values())
    n_unseen = min(len(units), int(round(cfg.unseen_type_fraction * n_families)))
    unseen_units = set(rng.choice(len(units), n_unseen, replace=False).tolist())
    unseen: set[str] = set()
    for i in sorted(unseen_units):
        families = per_unit[units[i]]
        unseen.add(families[int(rng.integers(0, len(families)))].name)
        if len(families) == 1:
            logger.warning("All bugs of %s are unseen types", units[i].value)

    states = [
        _state(a, w, cfg.seed, cfg.noise)[0] for a in cfg.archs for w in cfg.workloads
    ]
    lo, hi = cfg.impact_band
    bugs = []
    for unit in units:
        for family in per_unit[unit]:
            for v in range(cfg.variations):
                if family.name in unseen:
                    category = Category.UNSEEN_TYPE
                elif cfg.variations > 1 and v == cfg.variations - 1:
                    category = Category.UNSEEN_VARIATION
                else:
                    category = Category.SEEN
                target = lo + (hi - lo) * rng.uniform(v, v + 1) / cfg.variations
                params: dict[str, Any] = {}
                opclass = None
                if family.opclasses:
                    opclass = family.opclasses[v % len(family.opclasses)]
                    params["X"] = opclass
                params[family.knob] = calibrate_knob(
                    family, states, target, opclass=opclass
                )
                bugs.append(
                    BugSpec(
                        bug_id=f"{family.name}.{chr(ord('A') + v)}",
                        unit=unit,
                        family=family.name,
                        params=params,
                        category=category,
                        target_impact=float(target),
                    )
                )
    return bugs


def _design_bugs(cfg: GeneratorConfig, arch_id: str) -> list[Optional[BugSpec]]:
    if cfg.split_of(arch_id) is Split.TRAIN:
        return [None] + [b for b in cfg.bugs if b.category is Category.SEEN]
    designs: list[Optional[BugSpec]] = list(cfg.bugs)
    if cfg.bugfree_test_designs:
        designs.insert(0, None)
    return designs


def category_proportions(manifest: Manifest) -> dict[str, float]:
    """Fraction of buggy test designs in each bug category"""
    counts = {c.value: 0 for c in Category}
    designs = {
        (t.arch_id, t.bug_id)
        for t in manifest.traces
        if t.bug_id is not None and manifest.splits[t.arch_id] is Split.TEST
    }
    for _, bug_id in designs:
        counts[manifest.categories[bug_id].value] += 1
    total = sum(counts.values())
    return {k: (v / total if total else 0.0) for k, v in counts.items()}


def generate_corpus(
    cfg: GeneratorConfig,
    out_dir: Union[Path, str],
    *,
    threads: int = 1,
) -> Manifest:
    """
    Generate a complete labeled corpus.

    Writes `traces/<arch>/<design>/<workload>.csv`, `manifest.json`,
    `impacts.csv` (per bug impact), `impact_histogram.csv` and the resolved
    `generator.json` into `out_dir`. A fixed config and seed reproduce the
    output byte for byte.

    Raises:
        ConfigError: invalid config or unreachable impact target
    """
    out_dir = Path(out_dir)
    cfg = cfg.resolved()
    jobs = [
        (arch, bug) for arch in cfg.archs for bug in _design_bugs(cfg, arch.arch_id)
    ]

    def _job(job: tuple[ArchConfig, Optional[BugSpec]]) -> list[TraceEntry]:
        arch, bug = job
        design = bug.bug_id if bug is not None else UnitLabel.BUGFREE.value
        entries = []
        for workload in cfg.workloads:
            trace = generate_trace(
                arch,
                workload,
                bug,
                cfg.seed,
                noise=cfg.noise,
                window_cycles=cfg.window_cycles,
            )
            filename = f"{workload.workload_id}.csv"
            path = out_dir / "traces" / arch.arch_id / design / filename
            write_trace(trace, path)
            entries.append(
                TraceEntry(
                    path=path,
                    workload_id=trace.workload_id,
                    arch_id=trace.arch_id,
                    label=trace.label,
                    bug_id=trace.bug_id,
                )
            )
        return entries

    logger.info(
        "Generating %d designs x %d workloads into %s",
        len(jobs),
        len(cfg.workloads),
        out_dir,
    )
    entries = [e for chunk in thread_map(_job, jobs, threads) for e in chunk]

    impacts = _bug_impacts(cfg)
    manifest = Manifest(
        traces=entries,
        splits={a.arch_id: cfg.split_of(a.arch_id) for a in cfg.archs},
        categories={b.bug_id: b.category for b in cfg.bugs},
        window_cycles=cfg.window_cycles,
        bug_impacts={b: float(v) for b, v in impacts.items()},
        root=out_dir,
    )
    manifest.save(out_dir / "manifest.json")

    table = pd.DataFrame(
        [
            dict(
                bug_id=b.bug_id,
                unit=b.unit.value,
                family=b.family,
                category=b.category.value,
                target=b.target_impact,
                impact=impacts[b.bug_id],
            )
            for b in cfg.bugs
        ],
        columns=["bug_id", "unit", "family", "category", "target", "impact"],
    )
    table.to_csv(out_dir / "impacts.csv", index=False, lineterminator="\n")
    _impact_histogram(table).to_csv(
        out_dir / "impact_histogram.csv", index=False, lineterminator="\n"
    )
    out_dir.joinpath("generator.json").write_text(
        json.dumps(cfg.to_dict(), indent=2) + "\n", "utf8"
    )

    proportions = category_proportions(manifest)
    logger.info(
        "Test design categories: %s",
        ", ".join(f"{k} {100 * v:.1f}%" for k, v in proportions.items()),
    )
    return manifest


def _bug_impacts(cfg: GeneratorConfig) -> dict[str, float]:
    """Mean paired impact of each bug over all architectures and workloads"""
    states = [
        _state(a, w, cfg.seed, cfg.noise)[0] for a in cfg.archs for w in cfg.workloads
    ]
    return {
        b.bug_id: float(
            np.mean(
                [
                    relative_impact(s.cpi, b.bug_family.extra_cpi(s, b.params))
                    for s in states
                ]
            )
        )
        for b in cfg.bugs
    }


def _impact_histogram(table: pd.DataFrame) -> pd.DataFrame:
    edges = np.asarray(IMPACT_HISTOGRAM_EDGES)
    rows = []
    for category in [c.value for c in Category]:
        selected = table.loc[table["category"] == category, "impact"]
        values = selected.to_numpy(dtype=float)
        counts, _ = np.histogram(values, bins=edges)
        for lo, hi, count in zip(edges[:-1], edges[1:], counts):
            rows.append(dict(category=category, low=lo, high=hi, count=int(count)))
    return pd.DataFrame(rows, columns=["category", "low", "high", "count"])
