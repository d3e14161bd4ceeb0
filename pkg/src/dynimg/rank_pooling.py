"""Rank pooling: turn a frame sequence into a single dynamic image.

Two routes are provided.  ``solve_exact`` minimizes the regularized pairwise
hinge objective with deterministic subgradient descent; ``approx_pool`` takes
the closed-form direction of the first descent step from ``d = 0``.  Time is
1-based throughout (frame ``t`` has weight index ``t``, ``t = 1..T``).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError
from .frame_io import Frame, FrameSequence, Modality


class PoolingInput(enum.Enum):
    RAW_FRAMES = "raw"
    TIME_AVERAGED = "averaged"


class SolverDiverged(ArithmeticError):
    """The objective became non-finite; step0 is too large for the data scale."""


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 1.0
    max_iters: int = 500
    step0: float = 0.1
    step_decay: float = 0.01
    tol: float = 1e-8
    # iterations per convergence check: stop once the best objective improved
    # by less than tol over a full sweep
    sweep: int = 10

    def __post_init__(self):
        if self.max_iters < 1 or self.step0 <= 0 or self.tol < 0 or self.lam <= 0 or self.sweep < 1:
            raise ValueError(f"invalid solver config: {self}")


@dataclass(frozen=True)
class PoolingProblem:
    """Ordered vectors to be ranked (raw features or running averages)."""

    vectors: np.ndarray  # (T, D)
    lam: float = 1.0
    mode: PoolingInput = PoolingInput.RAW_FRAMES

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if v.shape[0] < 1:
            raise DataError("pooling problem needs at least one vector")
        if not np.all(np.isfinite(v)):
            raise DataError("feature vectors must be finite")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        object.__setattr__(self, "vectors", v)

    @property
    def T(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class DynamicImage:
    values: np.ndarray  # (H, W, C)
    modality: Modality
    value_range: tuple[float, float] = field(default=None)
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3:
            raise DataError(f"dynamic image must be HxWxC, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("dynamic image values must be finite")
        object.__setattr__(self, "values", v)
        if self.value_range is None:
            object.__setattr__(self, "value_range", (float(v.min()), float(v.max())))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def rest_level(self) -> float:
        """Normalized value that a zero (motionless) raw pixel maps to.

        Zero whenever the raw image had no negative values, so plain
        non-negative images behave as if thresholded against black.
        """
        lo, hi = self.value_range
        if hi <= lo:
            return 0.0
        return float(min(max(-lo / (hi - lo), 0.0), 1.0))


def stack_features(frame: Frame) -> np.ndarray:
    """Row-major, channel-interleaved flattening of one frame."""
    return np.asarray(frame.data, dtype=np.float64).reshape(-1).copy()


def sequence_features(seq: FrameSequence) -> np.ndarray:
    return np.stack([stack_features(f) for f in seq.frames])


def running_average(features) -> np.ndarray:
    """Prefix means: row ``t-1`` of the output is the mean of rows ``0..t-1``."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[0] == 0 or x.size == 0:
        raise DataError("running_average needs at least one vector")
    t = np.arange(1, x.shape[0] + 1, dtype=np.float64)[:, None]
    return np.cumsum(x, axis=0) / t


def score(d, v) -> float:
    d = np.asarray(d, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if d.shape != v.shape:
        raise ValueError(f"length mismatch: {d.shape} vs {v.shape}")
    return float(np.dot(d, v))


def make_problem(features, mode: PoolingInput = PoolingInput.RAW_FRAMES, lam: float = 1.0) -> PoolingProblem:
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    vectors = running_average(x) if mode is PoolingInput.TIME_AVERAGED else x
    return PoolingProblem(vectors, lam=lam, mode=mode)


def _pair_weight(T: int) -> float:
    return 2.0 / (T * (T - 1))


def _check_pairs(problem: PoolingProblem):
    if problem.T < 2:
        raise DataError("need at least two frames")


def objective(d, problem: PoolingProblem) -> float:
    """E(d) = lam/2 |d|^2 + 2/(T(T-1)) * sum_{p>t} max(0, 1 - S(p|d) + S(t|d))."""
    _check_pairs(problem)
    d = np.asarray(d, dtype=np.float64)
    s = problem.vectors @ d
    t_idx, p_idx = np.triu_indices(problem.T, k=1)
    hinge = np.maximum(0.0, 1.0 - s[p_idx] + s[t_idx])
    return 0.5 * problem.lam * float(d @ d) + _pair_weight(problem.T) * float(hinge.sum())


def subgradient(d, problem: PoolingProblem) -> np.ndarray:
    """A subgradient of ``objective`` at ``d`` (hinge kinks count as active)."""
    _check_pairs(problem)
    d = np.asarray(d, dtype=np.float64)
    s = problem.vectors @ d
    t_idx, p_idx = np.triu_indices(problem.T, k=1)
    active = (1.0 - s[p_idx] + s[t_idx]) >= 0.0
    coef = np.zeros(problem.T)
    np.add.at(coef, p_idx[active], -1.0)
    np.add.at(coef, t_idx[active], 1.0)
    return problem.lam * d + _pair_weight(problem.T) * (coef @ problem.vectors)


def solve_exact(problem: PoolingProblem, cfg: SolverConfig | None = None) -> np.ndarray:
    """Minimize the ranking objective by full-batch subgradient descent.

    Starts from ``d = 0`` with step ``step0 / (1 + k * step_decay)`` and
    returns the best iterate seen, so the result is never worse than zero.
    """
    cfg = cfg or SolverConfig(lam=problem.lam)
    _check_pairs(problem)
    # scores only enter through differences, so shifting every vector by the
    # first one leaves E unchanged and keeps constant coordinates exactly 0
    centered = replace(problem, vectors=problem.vectors - problem.vectors[0])
    d = np.zeros(problem.dim)
    best_d = d.copy()
    best_e = objective(d, centered)
    sweep_start = best_e
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(cfg.max_iters):
            step = cfg.step0 / (1.0 + k * cfg.step_decay)
            d = d - step * subgradient(d, centered)
            e = objective(d, centered)
            if not np.isfinite(e):
                raise SolverDiverged(f"non-finite objective at iteration {k}; reduce step0")
            if e < best_e:
                best_e = e
                best_d = d.copy()
            if (k + 1) % cfg.sweep == 0:
                if sweep_start - best_e < cfg.tol:
                    break
                sweep_start = best_e
    return best_d


def approx_coefficients(T: int, mode: PoolingInput = PoolingInput.RAW_FRAMES) -> np.ndarray:
    """Per-frame weights of approximate rank pooling, applied to raw features.

    RAW_FRAMES:     2t - T - 1
    TIME_AVERAGED:  2(T - t + 1) - (T + 1)(H_T - H_{t-1})
    """
    if T < 1:
        raise DataError("approx pooling needs at least one frame")
    t = np.arange(1, T + 1, dtype=np.float64)
    if mode is PoolingInput.RAW_FRAMES:
        return 2.0 * t - T - 1.0
    h = np.concatenate([[0.0], np.cumsum(1.0 / t)])  # h[k] = H_k
    return 2.0 * (T - t + 1.0) - (T + 1.0) * (h[T] - h[:-1])


def approx_pool(features, mode: PoolingInput = PoolingInput.RAW_FRAMES) -> np.ndarray:
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[0] == 0 or x.size == 0:
        raise DataError("approx pooling needs at least one frame")
    # coefficients sum to zero; centering makes constant pixels exactly 0
    return approx_coefficients(x.shape[0], mode) @ (x - x[0])


def to_dynamic_image(d, height: int, width: int, channels: int, modality: Modality) -> DynamicImage:
    d = np.asarray(d, dtype=np.float64)
    if d.size != height * width * channels:
        raise DataError(f"vector length {d.size} != {height}x{width}x{channels}")
    return DynamicImage(d.reshape(height, width, channels).copy(), modality)


def flatten(img: DynamicImage) -> np.ndarray:
    return img.values.reshape(-1).copy()


def normalize_image(img: DynamicImage) -> DynamicImage:
    """Joint min-max scaling to [0, 1]; a constant image becomes all zeros.

    ``value_range`` keeps the range of the incoming values.
    """
    v = img.values
    lo, hi = float(v.min()), float(v.max())
    if hi > lo:
        out = (v - lo) / (hi - lo)
    else:
        out = np.zeros_like(v)
    return DynamicImage(out, img.modality, (lo, hi), normalized=True)


def denormalize(img: DynamicImage) -> DynamicImage:
    """Map a normalized image back onto its recorded raw range."""
    if not img.normalized:
        return img
    lo, hi = img.value_range
    return DynamicImage(lo + img.values * (hi - lo), img.modality, (lo, hi), normalized=False)


def dynamic_image(seq: FrameSequence, exact: bool = False,
                  mode: PoolingInput = PoolingInput.RAW_FRAMES,
                  cfg: SolverConfig | None = None) -> DynamicImage:
    """Raw (un-normalized) dynamic image of one sequence."""
    feats = sequence_features(seq)
    if exact:
        cfg = cfg or SolverConfig()
        d = solve_exact(make_problem(feats, mode, cfg.lam), cfg)
    else:
        d = approx_pool(feats, mode)
    h, w, c = seq.shape
    return to_dynamic_image(d, h, w, c, seq.modality)


def with_values(img: DynamicImage, values: np.ndarray) -> DynamicImage:
    """Copy of ``img`` with new pixel values and the same range bookkeeping."""
    return replace(img, values=np.asarray(values, dtype=np.float64))
