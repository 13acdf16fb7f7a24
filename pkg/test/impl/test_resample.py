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
Unit tests for bugloc.impl.resample module
"""

from __future__ import annotations

import numpy as np
import pytest

from bugloc.errors import BadLength
from bugloc.impl.resample import resample, target_length


def _signal(t: np.ndarray, n: int) -> np.ndarray:
    """Band-limited periodic signal with period n"""
    return (
        3.0
        + np.cos(2 * np.pi * 2 * t / n)
        + 0.5 * np.sin(2 * np.pi * 3 * t / n + 0.3)
    )


@pytest.mark.parametrize("n,m", [(20, 30), (30, 20), (17, 40), (40, 17), (12, 13)])
def test_resample_band_limited(n: int, m: int) -> None:
    """Band-limited signals are sampled exactly on the new grid"""
    x = _signal(np.arange(n), n)
    expected = _signal(np.arange(m) * n / m, n)
    out = resample(x, m)
    assert out.shape == (m,)
    assert np.allclose(out, expected, atol=1e-10)
    assert out.mean() == pytest.approx(x.mean())


def _dft_resample(x: np.ndarray, m: int) -> np.ndarray:
    """Resampling through an explicit O(T^2) DFT of the full spectrum"""
    n = len(x)
    t = np.arange(n)
    spectrum = np.array([np.sum(x * np.exp(-2j * np.pi * k * t / n)) for k in t])
    out = np.zeros(m, dtype=np.complex128)
    keep = min(n, m)
    for k in range((keep + 1) // 2):
        out[k] = spectrum[k]
        if k:
            out[m - k] = spectrum[n - k]
    if keep % 2 == 0:
        half = keep // 2
        if m < n:
            out[half] = spectrum[half] + spectrum[n - half]
        elif m == n:
            out[half] = spectrum[half]
        else:
            out[half] = out[m - half] = spectrum[half] / 2.0
    s = np.arange(m)
    return np.array([np.sum(out * np.exp(2j * np.pi * s * j / m)).real for j in s]) / n


def _check_against_dft(n: int, lengths: range) -> None:
    rng = np.random.default_rng(1000 + n)
    x = rng.normal(size=n)
    for m in lengths:
        out = resample(x, m)
        assert out.shape == (m,)
        assert np.allclose(out, _dft_resample(x, m), rtol=0, atol=1e-9), (n, m)
        assert out.mean() == pytest.approx(x.mean(), rel=0, abs=1e-9)


@pytest.mark.parametrize("n", [3, 4, 7, 8, 16, 33])
def test_resample_dft(n: int) -> None:
    """Random vectors match an explicit DFT for a range of lengths"""
    _check_against_dft(n, range(3, 40))


@pytest.mark.slow
@pytest.mark.parametrize("n", range(3, 65))
def test_resample_dft_grid(n: int) -> None:
    """Random vectors match an explicit DFT for all lengths from 3 to 64"""
    _check_against_dft(n, range(3, 65))


@pytest.mark.parametrize("seed", range(5))
def test_resample_linear(seed: int) -> None:
    """resample(a*x + b*y) is a*resample(x) + b*resample(y)"""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 65))
    x, y = rng.normal(size=(2, n))
    a, b = rng.normal(size=2) * 10
    for m in (3, 4, n - 1, n, n + 1, 2 * n, 64):
        combined = resample(a * x + b * y, m)
        assert np.allclose(
            combined, a * resample(x, m) + b * resample(y, m), rtol=0, atol=1e-9
        )


def test_resample_nyquist() -> None:
    """Even length Nyquist bins are split and folded"""
    alternating = np.cos(np.pi * np.arange(8))
    up = resample(alternating, 16)
    assert np.allclose(up, np.cos(np.pi * np.arange(16) / 2), atol=1e-12)

    x = np.cos(2 * np.pi * 4 * np.arange(12) / 12)
    down = resample(x, 8)
    assert np.allclose(down, np.cos(np.pi * np.arange(8)), atol=1e-12)


def test_resample_matrix() -> None:
    """Columns of a matrix are resampled independently"""
    n, m = 24, 10
    t = np.arange(n)
    x = np.column_stack([_signal(t, n), np.full(n, 2.5), np.sin(2 * np.pi * t / n)])
    out = resample(x, m)
    assert out.shape == (m, 3)
    for j in range(3):
        assert np.allclose(out[:, j], resample(x[:, j], m))
    assert np.allclose(out[:, 1], 2.5)


def test_resample_edge_cases() -> None:
    """Identity length and bad lengths"""
    x = np.array([1.0, 4.0, 2.0])
    same = resample(x, 3)
    assert np.array_equal(same, x)
    assert same is not x
    with pytest.raises(BadLength):
        resample(np.array([1.0]), 4)
    with pytest.raises(BadLength):
        resample(x, 1)
    with pytest.raises(BadLength):
        resample(np.zeros((2, 2, 2)), 4)


def test_target_length() -> None:
    """Unit test for target_length"""
    assert target_length([10, 11]) == 11
    assert target_length([10, 10, 11]) == 10
    assert target_length([3]) == 3
    assert target_length([1, 1]) == 2
    with pytest.raises(BadLength):
        target_length([])
