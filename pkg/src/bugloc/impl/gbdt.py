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
Gradient boosted regression trees.

Each boosting round fits a regression tree to the negative gradient of the
loss using exact greedy splits that maximize the (sample weighted) reduction
in squared error. Leaves hold the weighted mean of the negative gradient of
their samples, and the model margin is

    base_score + learning_rate * sum(tree(x) for tree in trees)

For logistic loss the probability is the sigmoid of the margin.
"""

from __future__ import annotations

# standard
import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

# third party
import numpy as np

# this project
from ..errors import ConfigError, DegenerateData, InsufficientData, ShapeMismatch

__all__ = [
    "GbdtConfig",
    "GbdtModel",
    "Loss",
    "RegressionTree",
    "balanced_weights",
    "fit_gbdt",
    "predict_gbdt",
    "sigmoid",
]

logger = logging.getLogger(__name__)

GBDT_FORMAT = "bugloc.gbdt"
GBDT_FORMAT_VERSION = 1

_MARGIN_CLIP = 30.0
_PROB_EPS = 1e-6


class Loss(str, enum.Enum):
    """Boosting loss"""

    LOGISTIC = "logistic"
    SQUARED = "squared"

    @classmethod
    def from_string(cls, name: str) -> Loss:
        """Convert loss name (any case) to Loss"""
        if isinstance(name, cls):
            return name
        try:
            return cls[name.upper()]
        except LookupError:
            return cls(name.lower())


def sigmoid(margin: np.ndarray) -> np.ndarray:
    """Logistic function, with margin clipped so the result lies in (0,1)"""
    z = np.clip(np.asarray(margin, dtype=np.float64), -_MARGIN_CLIP, _MARGIN_CLIP)
    return 1.0 / (1.0 + np.exp(-z))


def _expit(margin: np.ndarray) -> np.ndarray:
    """Unclipped numerically stable logistic function"""
    out = np.empty_like(margin)
    pos = margin >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-margin[pos]))
    e = np.exp(margin[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class GbdtConfig:
    """Boosting hyperparameters"""

    n_trees: int = 100
    learning_rate: float = 0.3
    max_depth: int = 6
    min_samples_leaf: int = 1
    min_split_gain: float = 0.0

    def __post_init__(self) -> None:
        if self.n_trees < 0:
            raise ConfigError(f"n_trees must not be negative: {self.n_trees}")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must be in (0,1]: {self.learning_rate}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be positive: {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ConfigError(
                f"min_samples_leaf must be positive: {self.min_samples_leaf}"
            )
        if self.min_split_gain < 0:
            raise ConfigError(
                f"min_split_gain must not be negative: {self.min_split_gain}"
            )


@dataclass(eq=False)
class RegressionTree:
    """
    Binary regression tree in flat array form.

    Node 0 is the root. A node whose `feature` is -1 is a leaf. Samples go
    to the left child when `x[feature] <= threshold`.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, features: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row"""
        x = np.asarray(features, dtype=np.float64)
        nodes = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        active = self.feature[nodes] >= 0
        while np.any(active):
            idx = rows[active]
            node = nodes[idx]
            feat = self.feature[node]
            go_left = x[idx, feat] <= self.threshold[node]
            nodes[idx] = np.where(go_left, self.left[node], self.right[node])
            active = self.feature[nodes] >= 0
        return nodes

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Leaf value reached by each row"""
        return self.value[self.apply(features)]

    def to_dict(self, node: int = 0) -> dict[str, Any]:
        """Nested split/leaf representation"""
        if self.feature[node] < 0:
            return {"leaf": float(self.value[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> RegressionTree:
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []

        def _add(node_obj: dict[str, Any]) -> int:
            node = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            if "leaf" in node_obj:
                value[node] = float(node_obj["leaf"])
            else:
                feature[node] = int(node_obj["feature"])
                threshold[node] = float(node_obj["threshold"])
                left[node] = _add(node_obj["left"])
                right[node] = _add(node_obj["right"])
            return node

        _add(obj)
        return cls(
            feature=np.array(feature, dtype=np.int64),
            threshold=np.array(threshold, dtype=np.float64),
            left=np.array(left, dtype=np.int64),
            right=np.array(right, dtype=np.int64),
            value=np.array(value, dtype=np.float64),
        )


@dataclass(eq=False)
class GbdtModel:
    """Fitted gradient boosted tree ensemble"""

    trees: list[RegressionTree]
    loss: Loss
    base_score: float
    learning_rate: float
    max_depth: int
    n_features: int
    feature_names: tuple[str, ...] = ()
    degenerate: bool = False
    """True if fitted on single-class logistic data (no trees)"""
    train_loss: list[float] = field(default_factory=list)
    """Training loss before the first and after each boosting round"""

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _check(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ShapeMismatch(
                f"expected {self.n_features} features but got shape {x.shape}"
            )
        return x

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        """Raw margin for each row"""
        x = self._check(features)
        margin = np.full(x.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            margin += self.learning_rate * tree.predict(x)
        return margin

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Probability for logistic loss, regression value for squared loss"""
        margin = self.decision_function(features)
        if self.loss is Loss.LOGISTIC:
            return sigmoid(margin)
        return margin

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": GBDT_FORMAT,
            "version": GBDT_FORMAT_VERSION,
            "loss": self.loss.value,
            "base_score": float(self.base_score),
            "learning_rate": float(self.learning_rate),
            "max_depth": int(self.max_depth),
            "n_features": int(self.n_features),
            "feature_names": list(self.feature_names),
            "degenerate": self.degenerate,
            "train_loss": [float(v) for v in self.train_loss],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> GbdtModel:
        if obj.get("format") != GBDT_FORMAT:
            raise ValueError(f"not a serialized gbdt model: {obj.get('format')!r}")
        if obj.get("version") != GBDT_FORMAT_VERSION:
            raise ValueError(f"unsupported gbdt model version {obj.get('version')!r}")
        return cls(
            trees=[RegressionTree.from_dict(t) for t in obj["trees"]],
            loss=Loss.from_string(obj["loss"]),
            base_score=float(obj["base_score"]),
            learning_rate=float(obj["learning_rate"]),
            max_depth=int(obj["max_depth"]),
            n_features=int(obj["n_features"]),
            feature_names=tuple(obj.get("feature_names", ())),
            degenerate=bool(obj.get("degenerate", False)),
            train_loss=[float(v) for v in obj.get("train_loss", ())],
        )


def balanced_weights(labels: np.ndarray) -> np.ndarray:
    """
    Sample weights giving positives a weight of negatives/positives.

    Negatives have weight 1. With a single class all weights are 1.
    """
    y = np.asarray(labels, dtype=np.float64)
    n_pos = int(np.count_nonzero(y > 0.5))
    n_neg = y.shape[0] - n_pos
    weights = np.ones_like(y)
    if n_pos and n_neg:
        weights[y > 0.5] = n_neg / n_pos
    return weights


def _loss_value(loss: Loss, y: np.ndarray, margin: np.ndarray, w: np.ndarray) -> float:
    if loss is Loss.LOGISTIC:
        per_sample = np.logaddexp(0.0, margin) - y * margin
    else:
        per_sample = 0.5 * (y - margin) ** 2
    return float(np.sum(w * per_sample) / np.sum(w))


def _negative_gradient(loss: Loss, y: np.ndarray, margin: np.ndarray) -> np.ndarray:
    if loss is Loss.LOGISTIC:
        return y - _expit(margin)
    return y - margin


class _TreeBuilder:
    """Exact greedy tree construction over presorted features"""

    def __init__(self, features: np.ndarray, cfg: GbdtConfig):
        self.x = features
        self.cfg = cfg
        self.n, self.n_features = features.shape
        # per feature sample order, reused by every tree
        self.order = np.argsort(features, axis=0, kind="stable")
        self.columns = np.arange(self.n_features)

    def build(self, grad: np.ndarray, weight: np.ndarray) -> RegressionTree:
        wg = weight * grad
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []

        def _new_node() -> int:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            return len(feature) - 1

        stack = [(_new_node(), self.order, 0)]
        while stack:
            node, rows, depth = stack.pop()
            members = rows[:, 0] if self.n_features else np.arange(self.n)
            total_w = float(np.sum(weight[members]))
            total_g = float(np.sum(wg[members]))
            value[node] = total_g / total_w
            n_rows = rows.shape[0]
            if (
                depth >= self.cfg.max_depth
                or self.n_features == 0
                or n_rows < 2 * self.cfg.min_samples_leaf
            ):
                continue
            split = self._best_split(rows, wg, weight, total_g, total_w)
            if split is None:
                continue
            feat, pos, thresh = split
            goes_left = np.zeros(self.n, dtype=bool)
            goes_left[rows[: pos + 1, feat]] = True
            mask = goes_left[rows].T
            rows_t = rows.T
            n_left = pos + 1
            left_rows = rows_t[mask].reshape(self.n_features, n_left).T
            right_rows = rows_t[~mask].reshape(self.n_features, n_rows - n_left).T
            feature[node] = feat
            threshold[node] = thresh
            left[node] = _new_node()
            right[node] = _new_node()
            stack.append((right[node], right_rows, depth + 1))
            stack.append((left[node], left_rows, depth + 1))

        return RegressionTree(
            feature=np.array(feature, dtype=np.int64),
            threshold=np.array(threshold, dtype=np.float64),
            left=np.array(left, dtype=np.int64),
            right=np.array(right, dtype=np.int64),
            value=np.array(value, dtype=np.float64),
        )

    def _best_split(
        self,
        rows: np.ndarray,
        wg: np.ndarray,
        weight: np.ndarray,
        total_g: float,
        total_w: float,
    ) -> Optional[tuple[int, int, float]]:
        n_rows = rows.shape[0]
        vals = self.x[rows, self.columns]
        cum_w = np.cumsum(weight[rows], axis=0)[:-1]
        cum_g = np.cumsum(wg[rows], axis=0)[:-1]
        right_w = total_w - cum_w
        right_g = total_g - cum_g
        n_left = np.arange(1, n_rows)[:, None]
        valid = (
            (vals[:-1] < vals[1:])
            & (n_left >= self.cfg.min_samples_leaf)
            & (n_rows - n_left >= self.cfg.min_samples_leaf)
            & (right_w > 0)
        )
        if not np.any(valid):
            return None
        parent = total_g * total_g / total_w
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = cum_g * cum_g / cum_w + right_g * right_g / right_w - parent
        gain = np.where(valid, gain, -np.inf)
        best = int(np.argmax(gain))
        pos, feat = divmod(best, self.n_features)
        if not gain[pos, feat] > self.cfg.min_split_gain + 1e-12 * max(1.0, parent):
            return None
        lo = float(vals[pos, feat])
        hi = float(vals[pos + 1, feat])
        thresh = 0.5 * (lo + hi)
        if not lo <= thresh < hi:
            thresh = lo
        return feat, pos, thresh


# pylint: disable=too-many-arguments,too-many-locals
def fit_gbdt(
    features: np.ndarray,
    targets: np.ndarray,
    loss: Loss | str = Loss.LOGISTIC,
    cfg: Optional[GbdtConfig] = None,
    *,
    sample_weight: Optional[np.ndarray] = None,
    feature_names: Sequence[str] = (),
    strict: bool = False,
) -> GbdtModel:
    """
    Fit a gradient boosted tree model.

    Args:
        features: N x F matrix
        targets: N targets, 0/1 for logistic loss
        loss: logistic or squared
        cfg: hyperparameters, defaults to [GbdtConfig][(m).] defaults
        sample_weight: optional positive per-sample weights
        feature_names: optional names recorded in the model
        strict: raise DegenerateData for single-class logistic data
            instead of returning a flagged constant model

    Raises:
        ShapeMismatch: inconsistent shapes
        InsufficientData: fewer than 2 samples
        DegenerateData: single class with logistic loss and `strict`
        ValueError: non-finite entries or non-binary logistic targets
    """
    cfg = cfg or GbdtConfig()
    loss = Loss.from_string(loss)
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"features {x.shape} do not match targets {y.shape}")
    if feature_names and len(feature_names) != x.shape[1]:
        raise ShapeMismatch(
            f"{len(feature_names)} feature names for {x.shape[1]} features"
        )
    if x.shape[0] < 2:
        raise InsufficientData(f"need at least 2 samples but got {x.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite value in training data")
    if sample_weight is None:
        w = np.ones_like(y)
    else:
        w = np.asarray(sample_weight, dtype=np.float64)
        if w.shape != y.shape or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("sample weights must be positive and match targets")

    degenerate = False
    if loss is Loss.LOGISTIC:
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("logistic targets must be 0 or 1")
        p = float(np.clip(np.sum(w * y) / np.sum(w), _PROB_EPS, 1 - _PROB_EPS))
        base_score = float(np.log(p / (1 - p)))
        if np.all(y == y[0]):
            msg = f"all {y.shape[0]} targets are {int(y[0])}"
            if strict:
                raise DegenerateData(msg)
            logger.warning("Degenerate training data (%s): constant model", msg)
            degenerate = True
    else:
        base_score = float(np.sum(w * y) / np.sum(w))

    model = GbdtModel(
        trees=[],
        loss=loss,
        base_score=base_score,
        learning_rate=cfg.learning_rate,
        max_depth=cfg.max_depth,
        n_features=x.shape[1],
        feature_names=tuple(feature_names),
        degenerate=degenerate,
    )
    margin = np.full(y.shape[0], base_score)
    model.train_loss.append(_loss_value(loss, y, margin, w))
    if degenerate:
        return model

    builder = _TreeBuilder(x, cfg)
    for round_ in range(cfg.n_trees):
        tree = builder.build(_negative_gradient(loss, y, margin), w)
        margin += cfg.learning_rate * tree.predict(x)
        model.trees.append(tree)
        model.train_loss.append(_loss_value(loss, y, margin, w))
        if logger.isEnabledFor(logging.DEBUG) and (round_ + 1) % 25 == 0:
            logger.debug("round %d loss %.6g", round_ + 1, model.train_loss[-1])

    return model


def predict_gbdt(model: GbdtModel, features: np.ndarray) -> np.ndarray:
    """
    Predictions of a fitted model.

    Probabilities in (0,1) for logistic loss, real values for squared loss.

    Raises:
        ShapeMismatch: feature count differs from the model
    """
    return model.predict(features)
