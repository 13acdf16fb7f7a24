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
Exception types raised by bugloc.

All errors derive from [BugLocError][(m).] so that callers (and the CLI)
can distinguish them from programming errors. Plain `ValueError` is
reserved for out-of-domain numerical values such as negative counters.
"""

from __future__ import annotations

__all__ = [
    "AllZeroScores",
    "BadLength",
    "BugLocError",
    "ConfigError",
    "DegenerateData",
    "DuplicateWorkload",
    "EmptyInput",
    "GridError",
    "InsufficientData",
    "InsufficientSamples",
    "KeyMismatch",
    "LeakageError",
    "LengthMismatch",
    "ManifestError",
    "MissingClass",
    "MissingWorkload",
    "NoBugFreeData",
    "NoTestData",
    "NonFiniteLoss",
    "ParseError",
    "SchemaError",
    "ShapeMismatch",
    "UnknownWorkload",
    "UsageError",
]


class BugLocError(RuntimeError):
    """Base class for errors raised by bugloc"""


# trace and dataset loading


class ParseError(BugLocError):
    """Trace file cannot be parsed"""


class SchemaError(BugLocError):
    """Trace file violates the trace schema"""


class ManifestError(BugLocError):
    """Invalid or incomplete dataset manifest"""


class LeakageError(BugLocError):
    """Unseen bugs appear in training architectures"""


# counter selection


class LengthMismatch(BugLocError):
    """Vectors of differing length"""


class InsufficientData(BugLocError):
    """Not enough windows or legacy traces"""


# learning kernels


class DegenerateData(BugLocError):
    """Training data holds a single class"""


class ShapeMismatch(BugLocError):
    """Input shape does not match the model"""


class NonFiniteLoss(BugLocError):
    """Training loss became NaN or infinite"""


# localization


class MissingWorkload(BugLocError):
    """A workload has no training traces"""


class UnknownWorkload(BugLocError):
    """Workload is not known to the model"""


class DuplicateWorkload(BugLocError):
    """More than one trace supplied for a workload"""


class EmptyInput(BugLocError):
    """No input supplied"""


class NoBugFreeData(BugLocError):
    """Missing bug-free legacy traces"""


class BadLength(BugLocError):
    """Series too short for resampling"""


class InsufficientSamples(BugLocError):
    """Too few positive instances for a classifier"""


class AllZeroScores(BugLocError):
    """All scores are zero and cannot be normalized"""


class KeyMismatch(BugLocError):
    """Score vectors have different unit keys"""


# generator and harness


class ConfigError(BugLocError):
    """Invalid generator or run configuration"""


class NoTestData(BugLocError):
    """Dataset has no test instances"""


class GridError(BugLocError):
    """Invalid workload-count grid"""


class MissingClass(BugLocError):
    """Model bank lacks a required class"""


class UsageError(BugLocError):
    """Bad command line arguments"""
