"""Regression head trained on optimized labels with an L1 loss.

Two architectures: ``linear`` (``w . x + b``) and ``mlp`` (one ReLU hidden
layer). Gradients are written out by hand; training is plain mini-batch SGD.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datamodel import DataError, DatasetBundle, QualityTable

MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 400
    batch_size: int = 32
    hidden_width: int = 64
    seed: int = 42

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DataError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1 or self.hidden_width < 0:
            raise DataError("epochs, batch_size >= 1 and hidden_width >= 0 required")


@dataclass(eq=False)
class RegressorModel:
    """Regression head; ``params`` maps names to float64 arrays.

    ``linear``: ``w`` (D,), ``b`` (1,).
    ``mlp``: ``W1`` (H, D), ``b1`` (H,), ``w2`` (H,), ``b2`` (1,).
    """

    architecture: str
    dimension: int
    params: dict[str, np.ndarray]
    hidden_width: int = 0
    loss_trace: list[float] = field(default_factory=list)

    def predict_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dimension:
            raise DataError(f"expected inputs of dimension {self.dimension}, got {x.shape}")
        return _forward(self, x)[0]

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in _param_names(self.architecture)])

    def with_flat_params(self, flat) -> "RegressorModel":
        flat = np.asarray(flat, dtype=np.float64)
        params, pos = {}, 0
        for k in _param_names(self.architecture):
            shape = self.params[k].shape
            size = int(np.prod(shape))
            params[k] = flat[pos : pos + size].reshape(shape).copy()
            pos += size
        return RegressorModel(self.architecture, self.dimension, params, self.hidden_width)


def _param_names(architecture):
    return ("w", "b") if architecture == "linear" else ("W1", "b1", "w2", "b2")


def init_model(dimension: int, hidden_width: int, rng: np.random.Generator) -> RegressorModel:
    """Weights uniform in ``+-1/sqrt(fan_in)``, biases zero."""
    bound = 1.0 / math.sqrt(dimension)
    if hidden_width == 0:
        params = {"w": rng.uniform(-bound, bound, dimension), "b": np.zeros(1)}
        return RegressorModel("linear", dimension, params, 0)
    params = {
        "W1": rng.uniform(-bound, bound, (hidden_width, dimension)),
        "b1": np.zeros(hidden_width),
        "w2": rng.uniform(-1.0 / math.sqrt(hidden_width), 1.0 / math.sqrt(hidden_width),
                          hidden_width),
        "b2": np.zeros(1),
    }
    return RegressorModel("mlp", dimension, params, hidden_width)


def _forward(model, x):
    p = model.params
    if model.architecture == "linear":
        return x @ p["w"] + p["b"][0], None
    pre = x @ p["W1"].T + p["b1"]
    act = np.maximum(pre, 0.0)
    return act @ p["w2"] + p["b2"][0], (pre, act)


def l1_loss(predictions, targets) -> float:
    """Mean absolute error."""
    pred = np.asarray(predictions, dtype=np.float64)
    targ = np.asarray(targets, dtype=np.float64)
    if pred.shape != targ.shape:
        raise DataError(f"length mismatch {pred.shape} vs {targ.shape}")
    if pred.size == 0:
        raise DataError("l1_loss of empty input")
    return float(np.mean(np.abs(pred - targ)))


def loss_and_grad(model: RegressorModel, x, y) -> tuple[float, dict[str, np.ndarray]]:
    """L1 loss on ``(x, y)`` and its gradient (``sign(0) = 0``) for every parameter."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    pred, cache = _forward(model, x)
    resid = pred - y
    n = len(y)
    s = np.sign(resid) / n
    loss = float(np.mean(np.abs(resid)))
    if model.architecture == "linear":
        return loss, {"w": x.T @ s, "b": np.array([s.sum()])}
    pre, act = cache
    w2 = model.params["w2"]
    d_pre = np.outer(s, w2) * (pre > 0)
    return loss, {
        "W1": d_pre.T @ x,
        "b1": d_pre.sum(axis=0),
        "w2": act.T @ s,
        "b2": np.array([s.sum()]),
    }


def normalize_scores(table: Mapping[str, float]) -> QualityTable:
    """Min-max scale to [0, 1]; a constant table maps to 0.5."""
    if len(table) == 0:
        raise DataError("cannot normalize an empty table")
    vals = np.array(list(table.values()), dtype=np.float64)
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        out = np.full(len(vals), 0.5)
    else:
        out = (vals - lo) / (hi - lo)
    return QualityTable(zip(table.keys(), out.tolist()))


def train_regressor(bundle: DatasetBundle, labels: Mapping[str, float],
                    config: TrainConfig) -> RegressorModel:
    """Fit a regression head from embeddings to ``labels`` (already in [0, 1]).

    Each epoch shuffles the training set with the seeded RNG and takes one SGD
    step per mini-batch. The full-set L1 loss after every epoch is appended to
    ``model.loss_trace``.
    """
    ids = bundle.image_ids
    if set(labels) != set(ids):
        raise DataError("label ids do not match bundle ids")
    y = np.array([labels[i] for i in ids], dtype=np.float64)
    if np.any((y < 0) | (y > 1)):
        raise DataError("labels must be normalized to [0, 1]")
    x = bundle.vectors
    rng = np.random.default_rng(config.seed)
    model = init_model(bundle.dimension, config.hidden_width, rng)
    names = _param_names(model.architecture)
    n = len(y)
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = perm[start : start + config.batch_size]
            _, grads = loss_and_grad(model, x[batch], y[batch])
            for k in names:
                model.params[k] = model.params[k] - config.learning_rate * grads[k]
        model.loss_trace.append(l1_loss(_forward(model, x)[0], y))
    for k in names:
        if not np.all(np.isfinite(model.params[k])):
            raise DataError("training diverged (non-finite parameters)")
    return model


def predict_quality(model: RegressorModel, vector) -> float:
    """Raw (unclamped) regressor output for one embedding."""
    v = np.asarray(vector, dtype=np.float64).reshape(-1)
    if v.size != model.dimension:
        raise DataError(f"expected dimension {model.dimension}, got {v.size}")
    return float(model.predict_batch(v[None, :])[0])


def save_model(path, model: RegressorModel) -> None:
    doc = {
        "version": MODEL_VERSION,
        "architecture": model.architecture,
        "dimension": model.dimension,
        "hidden_width": model.hidden_width,
        "parameters": {k: model.params[k].ravel().tolist() for k in _param_names(model.architecture)},
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_model(path) -> RegressorModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid model JSON ({exc})") from None
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"{path}: unsupported model version {doc.get('version')}")
    arch = doc["architecture"]
    d, h = int(doc["dimension"]), int(doc["hidden_width"])
    shapes = {"w": (d,), "b": (1,)} if arch == "linear" else {
        "W1": (h, d), "b1": (h,), "w2": (h,), "b2": (1,)}
    if arch not in ("linear", "mlp"):
        raise DataError(f"{path}: unknown architecture {arch!r}")
    params = {}
    for k, shape in shapes.items():
        arr = np.asarray(doc["parameters"][k], dtype=np.float64)
        if arr.size != int(np.prod(shape)) or not np.all(np.isfinite(arr)):
            raise DataError(f"{path}: bad parameter array {k!r}")
        params[k] = arr.reshape(shape)
    return RegressorModel(arch, d, params, h)


def write_loss_trace(path, model: RegressorModel) -> None:
    lines = ["epoch,l1_loss"]
    lines += [f"{e},{float(v)!r}" for e, v in enumerate(model.loss_trace, start=1)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
