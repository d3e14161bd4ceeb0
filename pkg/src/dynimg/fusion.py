"""Two-stream fusion head.

Each processed dynamic image is bilinearly resampled to a fixed grid and
flattened into a unit-norm embedding (a stand-in for a CNN backbone).  The
RGB and depth embeddings are concatenated and classified by one
fully-connected softmax layer trained with minibatch SGD.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .rank_pooling import DynamicImage


@dataclass
class FcParams:
    weights: np.ndarray  # (K, D)
    bias: np.ndarray  # (K,)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def fused_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "FcParams":
        return FcParams(self.weights.copy(), self.bias.copy())


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2.0
    epochs: int = 600
    batch_size: int = 16
    seed: int = 0
    l2: float = 1e-5
    init_std: float = 0.01

    def __post_init__(self):
        if self.learning_rate < 0 or self.epochs < 1 or self.batch_size < 1 or self.l2 < 0:
            raise ValueError(f"invalid train config: {self}")


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres, clamped at the border
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, pos - i0


def resample_bilinear(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an (H, W, C) array to (out_h, out_w, C)."""
    h, w = values.shape[:2]
    y0, y1, wy = _axis_weights(h, out_h)
    x0, x1, wx = _axis_weights(w, out_w)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = values[y0][:, x0] * (1 - wx) + values[y0][:, x1] * wx
    bot = values[y1][:, x0] * (1 - wx) + values[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def embed(img: DynamicImage, embed_h: int = 32, embed_w: int = 32) -> np.ndarray:
    v = resample_bilinear(img.values, embed_h, embed_w).reshape(-1)
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else np.zeros_like(v)


def fuse(rgb: np.ndarray, depth: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(rgb, dtype=np.float64), np.asarray(depth, dtype=np.float64)])


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: FcParams, x) -> np.ndarray:
    """softmax(Wx + b) for one vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.fused_dim:
        raise ValueError(f"input dim {x.shape[-1]} != {params.fused_dim}")
    return _softmax_rows(x @ params.weights.T + params.bias)


def loss_and_grad(params: FcParams, X, y, l2: float = 0.0):
    """Mean cross-entropy plus (l2/2)|W|^2, with analytic gradients."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=int)
    if len(X) == 0:
        raise DataError("empty batch")
    if y.min() < 0 or y.max() >= params.num_classes:
        raise DataError("label out of range")
    z = X @ params.weights.T + params.bias
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    m = len(X)
    loss = -logp[np.arange(m), y].mean() + 0.5 * l2 * float(np.sum(params.weights ** 2))

    delta = np.exp(logp)
    delta[np.arange(m), y] -= 1.0
    delta /= m
    grads = FcParams(delta.T @ X + l2 * params.weights, delta.sum(axis=0))
    return float(loss), grads


def init_params(num_classes: int, dim: int, rng: np.random.Generator, std: float = 0.01) -> FcParams:
    return FcParams(rng.normal(0.0, std, size=(num_classes, dim)), np.zeros(num_classes))


def train(X, y, cfg: TrainConfig, num_classes: int | None = None):
    """Minibatch SGD from a seeded Gaussian init.

    Returns ``(params, losses)`` where ``losses[e]`` is the full training
    loss after epoch ``e``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=int)
    K = int(num_classes if num_classes is not None else y.max() + 1)
    missing = sorted(set(range(K)) - set(y.tolist()))
    if missing:
        raise DataError(f"classes absent from training set: {missing}")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(K, X.shape[1], rng, cfg.init_std)
    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, g = loss_and_grad(params, X[idx], y[idx], cfg.l2)
            params.weights -= cfg.learning_rate * g.weights
            params.bias -= cfg.learning_rate * g.bias
        losses.append(loss_and_grad(params, X, y, cfg.l2)[0])
    return params, losses


def predict(params: FcParams, x) -> int:
    """Most probable class; ties go to the lowest index."""
    return int(np.argmax(forward(params, x)))


def predict_batch(params: FcParams, X) -> np.ndarray:
    return np.argmax(forward(params, X), axis=1)


def save_model(params: FcParams, cfg: TrainConfig, path, class_names=None) -> None:
    data = {
        "num_classes": params.num_classes,
        "fused_dim": params.fused_dim,
        "weights": params.weights.reshape(-1).tolist(),
        "bias": params.bias.tolist(),
        "train_config": asdict(cfg),
    }
    if class_names is not None:
        data["class_names"] = list(class_names)
    Path(path).write_text(json.dumps(data))


def load_model(path):
    """Returns ``(params, train_config, class_names)``."""
    try:
        data = json.loads(Path(path).read_text())
        K, D = int(data["num_classes"]), int(data["fused_dim"])
        W = np.asarray(data["weights"], dtype=np.float64).reshape(K, D)
        b = np.asarray(data["bias"], dtype=np.float64).reshape(K)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"bad model file {path}: {exc}") from exc
    return FcParams(W, b), TrainConfig(**data.get("train_config", {})), data.get("class_names")
