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
Fourier resampling of series to a common length.

The spectrum of the input is truncated (downsampling) or zero-padded
(upsampling) and transformed back. For an even number of retained bins the
Nyquist bin is split or folded so the result stays real:

* downsampling to an even length: the retained Nyquist bin is doubled, which
  after the real inverse transform equals the sum of the two conjugate bins
  of the full spectrum.
* upsampling from an even length: the input Nyquist bin is halved and
  mirrored to the positive and negative frequency of the longer spectrum.

The inverse transform is scaled by `T_R / T_i` so that the mean of the
signal is preserved.
"""

from __future__ import annotations

# standard
import math
from typing import Iterable

# third party
import numpy as np

# this project
from ..errors import BadLength

__all__ = ["resample", "target_length"]


def resample(values: np.ndarray, length: int) -> np.ndarray:
    """
    Resample series to given length.

    Args:
        values: vector of length T_i, or T_i x K matrix whose columns are
            resampled independently
        length: target length T_R

    Returns:
        array of length T_R along the first axis

    Raises:
        BadLength: T_i < 2 or T_R < 2
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim not in (1, 2):
        raise BadLength(f"cannot resample array with shape {x.shape}")
    n = x.shape[0]
    m = int(length)
    if n < 2:
        raise BadLength(f"series of length {n} is too short to resample")
    if m < 2:
        raise BadLength(f"target length {m} must be at least 2")
    if n == m:
        return x.copy()

    spectrum = np.fft.rfft(x, axis=0)
    out_shape = (m // 2 + 1,) + x.shape[1:]
    new_spectrum = np.zeros(out_shape, dtype=np.complex128)
    keep = min(n, m)
    nyquist = keep // 2
    new_spectrum[: nyquist + 1] = spectrum[: nyquist + 1]
    if keep % 2 == 0:
        if m < n:
            new_spectrum[nyquist] *= 2.0
        else:
            new_spectrum[nyquist] *= 0.5

    return np.fft.irfft(new_spectrum, m, axis=0) * (m / n)


def target_length(lengths: Iterable[int]) -> int:
    """
    Common length T_R for a set of trace lengths.

    Nearest integer to the mean length (halves round up), at least 2.
    """
    lengths = list(lengths)
    if not lengths:
        raise BadLength("no lengths to average")
    return max(2, int(math.floor(float(np.mean(lengths)) + 0.5)))
