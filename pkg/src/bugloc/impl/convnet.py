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
Small 1D convolutional binary classifier.

Inputs are N x T x C tensors (samples, time steps, channels). Convolutions
run along the time axis only (valid padding, stride 1) and mix channels
through the depth of their filters. The convolution output is flattened and
fed through dense layers into a single sigmoid unit.

Everything is computed in double precision with numpy, and gradients are
backpropagated by hand so they can be verified with [grad_check][(m).].
"""

from __future__ import annotations

# standard
import enum
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

# third party
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# this project
from ..errors import ConfigError, NonFiniteLoss, ShapeMismatch
from .gbdt import balanced_weights, sigmoid

__all__ = [
    "ConvLayerSpec",
    "ConvNet1D",
    "ConvNetArch",
    "DenseLayerSpec",
    "Scaling",
    "TrainConfig",
    "fit_convnet",
    "grad_check",
]

logger = logging.getLogger(__name__)

CONVNET_FORMAT = "bugloc.convnet"
CONVNET_FORMAT_VERSION = 1

ACTIVATIONS = ("relu", "tanh", "linear")


class Scaling(str, enum.Enum):
    """
    Input standardization mode

    * CHANNEL: z-score per channel over all samples and time steps
    * FEATURE: z-score per (time step, channel) position
    * NONE: raw inputs
    """

    CHANNEL = "channel"
    FEATURE = "feature"
    NONE = "none"

    @classmethod
    def from_string(cls, name: str) -> Scaling:
        if isinstance(name, cls):
            return name
        try:
            return cls[name.upper()]
        except LookupError:
            return cls(name.lower())


def _check_activation(name: str) -> str:
    if name not in ACTIVATIONS:
        raise ConfigError(f"unknown activation '{name}', expected one of {ACTIVATIONS}")
    return name


@dataclass
class ConvLayerSpec:
    filters: int
    kernel_width: int = 3
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.filters < 1 or self.kernel_width < 1:
            raise ConfigError(f"bad convolution layer {self}")
        _check_activation(self.activation)


@dataclass
class DenseLayerSpec:
    units: int
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.units < 1:
            raise ConfigError(f"bad dense layer {self}")
        _check_activation(self.activation)


def _default_conv() -> list[ConvLayerSpec]:
    return [ConvLayerSpec(100), ConvLayerSpec(100)]


def _default_dense() -> list[DenseLayerSpec]:
    return [DenseLayerSpec(300), DenseLayerSpec(100), DenseLayerSpec(50)]


@dataclass
class ConvNetArch:
    """
    Network layout.

    The default is two convolution layers of 100 filters followed by dense
    layers of 300, 100 and 50 ReLU units.
    """

    conv: list[ConvLayerSpec] = field(default_factory=_default_conv)
    dense: list[DenseLayerSpec] = field(default_factory=_default_dense)

    def __post_init__(self) -> None:
        self.conv = [
            c if isinstance(c, ConvLayerSpec) else ConvLayerSpec(**c) for c in self.conv
        ]
        self.dense = [
            d if isinstance(d, DenseLayerSpec) else DenseLayerSpec(**d)
            for d in self.dense
        ]

    @property
    def receptive_width(self) -> int:
        """Minimum number of time steps the network can consume"""
        return 1 + sum(c.kernel_width - 1 for c in self.conv)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class TrainConfig:
    """Training hyperparameters"""

    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 10
    """Stop after this many epochs without improvement of the training loss"""
    min_delta: float = 1e-6
    seed: int = 0
    scaling: Scaling = Scaling.CHANNEL
    balance_classes: bool = True

    def __post_init__(self) -> None:
        self.scaling = Scaling.from_string(self.scaling)
        for name in ("epochs", "batch_size", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive: {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive: {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must be in [0,1)")


def _activate(name: str, h: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(h, 0.0)
    if name == "tanh":
        return np.tanh(h)
    return h


def _activation_grad(name: str, h: np.ndarray, out: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (h > 0).astype(np.float64)
    if name == "tanh":
        return 1.0 - out * out
    return np.ones_like(h)


@dataclass(eq=False)
class ConvNet1D:
    """
    Convolutional binary classifier.

    `params` holds weight and bias arrays in layer order: each convolution
    (weights of shape kernel_width x in_channels x filters), each dense
    layer (in x out) and finally the single output unit.
    """

    arch: ConvNetArch
    n_timesteps: int
    n_channels: int
    params: list[np.ndarray]
    scaling: Scaling = Scaling.NONE
    scale_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scale_std: np.ndarray = field(default_factory=lambda: np.ones(0))
    rng_seed: int = 0
    train_loss: list[float] = field(default_factory=list)

    @classmethod
    def initialize(
        cls,
        arch: ConvNetArch,
        n_timesteps: int,
        n_channels: int,
        seed: int = 0,
    ) -> ConvNet1D:
        """
        Network with randomly initialized weights and zero biases.

        ReLU layers use He initialization, other layers Glorot.
        """
        if n_timesteps < arch.receptive_width:
            raise ShapeMismatch(
                f"{n_timesteps} time steps is shorter than the"
                f" receptive width {arch.receptive_width}"
            )
        rng = np.random.default_rng(seed)
        params: list[np.ndarray] = []
        steps, chans = n_timesteps, n_channels
        for conv in arch.conv:
            fan_in = conv.kernel_width * chans
            std = _init_std(conv.activation, fan_in, conv.filters)
            shape = (conv.kernel_width, chans, conv.filters)
            params.append(rng.normal(0.0, std, shape))
            params.append(np.zeros(conv.filters))
            steps -= conv.kernel_width - 1
            chans = conv.filters
        width = steps * chans
        for dense in arch.dense:
            std = _init_std(dense.activation, width, dense.units)
            params.append(rng.normal(0.0, std, (width, dense.units)))
            params.append(np.zeros(dense.units))
            width = dense.units
        params.append(rng.normal(0.0, _init_std("linear", width, 1), (width, 1)))
        params.append(np.zeros(1))
        return cls(
            arch=arch,
            n_timesteps=n_timesteps,
            n_channels=n_channels,
            params=params,
            rng_seed=seed,
        )

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    #
    # Forward and backward passes
    #

    def _check(self, inputs: np.ndarray) -> np.ndarray:
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (self.n_timesteps, self.n_channels):
            raise ShapeMismatch(
                f"expected N x {self.n_timesteps} x {self.n_channels} input"
                f" but got {x.shape}"
            )
        return x

    def _scale(self, x: np.ndarray) -> np.ndarray:
        if self.scaling is Scaling.NONE:
            return x
        return (x - self.scale_mean) / self.scale_std

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, list[tuple]]:
        """Logits and per-layer cache of (input, pre-activation, output)"""
        cache: list[tuple] = []
        a = self._scale(x)
        i = 0
        for conv in self.arch.conv:
            w, b = self.params[i], self.params[i + 1]
            windows = sliding_window_view(a, conv.kernel_width, axis=1)
            h = np.tensordot(windows, w, axes=([2, 3], [1, 0])) + b
            out = _activate(conv.activation, h)
            cache.append((windows, h, out))
            a = out
            i += 2
        conv_shape = a.shape
        a = a.reshape(a.shape[0], -1)
        for dense in self.arch.dense:
            w, b = self.params[i], self.params[i + 1]
            h = a @ w + b
            out = _activate(dense.activation, h)
            cache.append((a, h, out))
            a = out
            i += 2
        logits = (a @ self.params[i] + self.params[i + 1])[:, 0]
        cache.append((a, conv_shape))
        return logits, cache

    def _backward(self, cache: list[tuple], dlogits: np.ndarray) -> list[np.ndarray]:
        grads: list[np.ndarray] = [np.empty(0)] * len(self.params)
        i = len(self.params) - 2
        a_last, conv_shape = cache[-1]
        d = dlogits[:, None]
        grads[i] = a_last.T @ d
        grads[i + 1] = d.sum(axis=0)
        da = d @ self.params[i].T
        n_conv = len(self.arch.conv)
        for layer in reversed(range(len(self.arch.dense))):
            spec = self.arch.dense[layer]
            a_prev, h, out = cache[n_conv + layer]
            i -= 2
            dh = da * _activation_grad(spec.activation, h, out)
            grads[i] = a_prev.T @ dh
            grads[i + 1] = dh.sum(axis=0)
            da = dh @ self.params[i].T
        da = da.reshape(conv_shape)
        for layer in reversed(range(n_conv)):
            spec = self.arch.conv[layer]
            windows, h, out = cache[layer]
            i -= 2
            w = self.params[i]
            dh = da * _activation_grad(spec.activation, h, out)
            grads[i] = np.tensordot(windows, dh, axes=([0, 1], [0, 1])).transpose(
                1, 0, 2
            )
            grads[i + 1] = dh.sum(axis=(0, 1))
            if layer:
                n, steps_out, _ = dh.shape
                da = np.zeros((n, steps_out + spec.kernel_width - 1, w.shape[1]))
                for j in range(spec.kernel_width):
                    da[:, j : j + steps_out] += dh @ w[j].T
        return grads

    def logits(self, inputs: np.ndarray) -> np.ndarray:
        """Pre-sigmoid output for each sample"""
        return self._forward(self._check(inputs))[0]

    def predict(self, inputs: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Probability of the positive class for each sample, in (0,1)"""
        x = self._check(inputs)
        out = np.empty(x.shape[0])
        for start in range(0, x.shape[0], batch_size):
            out[start : start + batch_size] = sigmoid(
                self._forward(x[start : start + batch_size])[0]
            )
        return out

    def loss_and_grads(
        self,
        inputs: np.ndarray,
        labels: np.ndarray,
        weights: Optional[np.ndarray] = None,
    ) -> tuple[float, list[np.ndarray]]:
        """Weighted binary cross entropy and its gradient for every parameter"""
        x = self._check(inputs)
        y = np.asarray(labels, dtype=np.float64)
        w = (
            np.ones_like(y)
            if weights is None
            else np.asarray(weights, dtype=np.float64)
        )
        logits, cache = self._forward(x)
        total = float(np.sum(w))
        loss = float(np.sum(w * (np.logaddexp(0.0, logits) - y * logits)) / total)
        dlogits = w * (sigmoid(logits) - y) / total
        return loss, self._backward(cache, dlogits)

    def loss(
        self,
        inputs: np.ndarray,
        labels: np.ndarray,
        weights: Optional[np.ndarray] = None,
    ) -> float:
        """Weighted binary cross entropy"""
        x = self._check(inputs)
        y = np.asarray(labels, dtype=np.float64)
        w = (
            np.ones_like(y)
            if weights is None
            else np.asarray(weights, dtype=np.float64)
        )
        logits = self._forward(x)[0]
        return float(np.sum(w * (np.logaddexp(0.0, logits) - y * logits)) / np.sum(w))

    #
    # Serialization
    #

    def to_dict(self) -> dict[str, Any]:
        def _arr(a: np.ndarray) -> dict[str, Any]:
            return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}

        return {
            "format": CONVNET_FORMAT,
            "version": CONVNET_FORMAT_VERSION,
            "arch": self.arch.to_dict(),
            "n_timesteps": self.n_timesteps,
            "n_channels": self.n_channels,
            "scaling": self.scaling.value,
            "scale_mean": _arr(np.asarray(self.scale_mean)),
            "scale_std": _arr(np.asarray(self.scale_std)),
            "rng_seed": self.rng_seed,
            "train_loss": [float(v) for v in self.train_loss],
            "params": [_arr(p) for p in self.params],
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> ConvNet1D:
        if obj.get("format") != CONVNET_FORMAT:
            raise ValueError(f"not a serialized convnet: {obj.get('format')!r}")
        if obj.get("version") != CONVNET_FORMAT_VERSION:
            raise ValueError(f"unsupported convnet version {obj.get('version')!r}")

        def _arr(d: dict[str, Any]) -> np.ndarray:
            return np.array(d["data"], dtype=np.float64).reshape(d["shape"])

        return cls(
            arch=ConvNetArch(**obj["arch"]),
            n_timesteps=int(obj["n_timesteps"]),
            n_channels=int(obj["n_channels"]),
            params=[_arr(p) for p in obj["params"]],
            scaling=Scaling.from_string(obj["scaling"]),
            scale_mean=_arr(obj["scale_mean"]),
            scale_std=_arr(obj["scale_std"]),
            rng_seed=int(obj.get("rng_seed", 0)),
            train_loss=[float(v) for v in obj.get("train_loss", ())],
        )


def _init_std(activation: str, fan_in: int, fan_out: int) -> float:
    if activation == "relu":
        return float(np.sqrt(2.0 / fan_in))
    return float(np.sqrt(2.0 / (fan_in + fan_out)))


def _scaling_stats(x: np.ndarray, mode: Scaling) -> tuple[np.ndarray, np.ndarray]:
    if mode is Scaling.CHANNEL:
        mean, std = x.mean(axis=(0, 1)), x.std(axis=(0, 1))
    elif mode is Scaling.FEATURE:
        mean, std = x.mean(axis=0), x.std(axis=0)
    else:
        return np.zeros(0), np.ones(0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


# pylint: disable=too-many-locals
def fit_convnet(
    inputs: np.ndarray,
    labels: np.ndarray,
    arch: Optional[ConvNetArch] = None,
    cfg: Optional[TrainConfig] = None,
    *,
    sample_weight: Optional[np.ndarray] = None,
) -> ConvNet1D:
    """
    Train a convolutional binary classifier.

    Mini-batch Adam on weighted binary cross entropy. When
    `cfg.balance_classes` is set (the default) positives are weighted by the
    negative/positive count ratio. Training stops early when the full
    training loss has not improved by `min_delta` for `patience` epochs, and
    the best weights seen are kept.

    Args:
        inputs: N x T x C tensor
        labels: N labels in {0,1}
        arch: network layout, defaults to [ConvNetArch][(m).]
        cfg: training hyperparameters

    Raises:
        ShapeMismatch: bad input or label shapes
        NonFiniteLoss: training diverged
    """
    arch = arch or ConvNetArch()
    cfg = cfg or TrainConfig()
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 3 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"inputs {x.shape} do not match labels {y.shape}")
    if x.shape[0] < 2:
        raise ShapeMismatch(f"need at least 2 samples but got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite value in convnet inputs")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")

    weights = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight)
    if cfg.balance_classes:
        weights = weights * balanced_weights(y)

    net = ConvNet1D.initialize(arch, x.shape[1], x.shape[2], seed=cfg.seed)
    net.scaling = cfg.scaling
    net.scale_mean, net.scale_std = _scaling_stats(x, cfg.scaling)

    rng = np.random.default_rng(cfg.seed + 1)
    moment1 = [np.zeros_like(p) for p in net.params]
    moment2 = [np.zeros_like(p) for p in net.params]
    step = 0
    best_loss = net.loss(x, y, weights)
    best_params = [p.copy() for p in net.params]
    net.train_loss.append(best_loss)
    stale = 0
    n = x.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = net.loss_and_grads(x[batch], y[batch], weights[batch])
            if not np.isfinite(loss):
                raise NonFiniteLoss(
                    f"loss became {loss} in epoch {epoch}, batch starting at {start}"
                )
            step += 1
            correction1 = 1.0 - cfg.beta1**step
            correction2 = 1.0 - cfg.beta2**step
            for p, g, m1, m2 in zip(net.params, grads, moment1, moment2):
                m1 *= cfg.beta1
                m1 += (1.0 - cfg.beta1) * g
                m2 *= cfg.beta2
                m2 += (1.0 - cfg.beta2) * g * g
                p -= (
                    cfg.learning_rate
                    * (m1 / correction1)
                    / (np.sqrt(m2 / correction2) + cfg.epsilon)
                )
        epoch_loss = net.loss(x, y, weights)
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss(f"loss became {epoch_loss} after epoch {epoch}")
        net.train_loss.append(epoch_loss)
        if epoch_loss < best_loss - cfg.min_delta:
            best_loss = epoch_loss
            best_params = [p.copy() for p in net.params]
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.debug("early stop after epoch %d (loss %.6g)", epoch, best_loss)
                break
    net.params = best_params
    logger.debug("convnet trained: %d params, loss %.6g", net.n_params, best_loss)
    return net


def grad_check(
    net: ConvNet1D,
    inputs: np.ndarray,
    labels: Optional[np.ndarray] = None,
    *,
    eps: float = 1e-4,
    objective: str = "bce",
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Compare backpropagated gradients with central finite differences.

    Args:
        net: network to check (parameters are restored afterwards)
        inputs: N x T x C samples
        labels: N labels, required for the "bce" objective
        eps: finite difference step
        objective: "bce" for the unweighted training loss or "logit" for the
            sum of pre-sigmoid outputs
        max_entries: if set, check at most this many randomly chosen entries
            of each parameter array
        seed: seed for choosing entries

    Returns:
        worst relative error `|a - n| / max(|a| + |n|, 1e-8)`
    """
    x = net._check(inputs)  # pylint: disable=protected-access
    if objective == "bce":
        if labels is None:
            raise ValueError("labels are required for the bce objective")
        y = np.asarray(labels, dtype=np.float64)

        def _objective() -> float:
            return net.loss(x, y)

        analytic = net.loss_and_grads(x, y)[1]
    elif objective == "logit":

        def _objective() -> float:
            return float(np.sum(net.logits(x)))

        _, cache = net._forward(x)  # pylint: disable=protected-access
        # pylint: disable-next=protected-access
        analytic = net._backward(cache, np.ones(x.shape[0]))
    else:
        raise ValueError(f"unknown objective '{objective}'")

    rng = np.random.default_rng(seed)
    worst = 0.0
    for param, grad in zip(net.params, analytic):
        flat = param.reshape(-1)
        gflat = grad.reshape(-1)
        entries: Sequence[int] = range(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = rng.choice(flat.size, size=max_entries, replace=False)
        for k in entries:
            saved = flat[k]
            flat[k] = saved + eps
            plus = _objective()
            flat[k] = saved - eps
            minus = _objective()
            flat[k] = saved
            numeric = (plus - minus) / (2.0 * eps)
            a = float(gflat[k])
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst
