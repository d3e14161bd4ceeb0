"""A-contrario pruning of weak motion components in a dynamic image.

The normalized dynamic image is binarized, split into 8-connected
components, and each component gets an areal intensity (area times mean
motion magnitude).  Areal intensities are scaled so the strongest component
is 1.0.  A grid of thresholds is then swept; for each threshold the binomial
tail of the observed count of weak components under a uniform null gives a
number of false alarms (NFA).  The most meaningful threshold (smallest NFA
below epsilon) decides which components are removed.

Thresholds are placed on component *weakness* ``w = 1 - norm_ai``: at
threshold ``g`` the count ``n`` is ``#{w > g}``, the prior is ``p = 1 - g``,
and the components counted in ``n`` are the ones removed.  The strongest
component has ``w = 0`` and is never removed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import DataError
from .rank_pooling import DynamicImage, with_values

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Component:
    label: int
    area: int
    mean_intensity: float
    areal_intensity: float
    norm_ai: float | None = None

    @property
    def weakness(self) -> float:
        if self.norm_ai is None:
            raise ValueError("component not normalized yet")
        return 1.0 - self.norm_ai


@dataclass(frozen=True)
class ComponentMap:
    labels: np.ndarray  # (H, W) int, 0 = background
    components: tuple[Component, ...]

    @property
    def N(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class Candidate:
    gamma_star: float
    n: int
    p: float
    P: float
    NFA: float


@dataclass(frozen=True)
class NfaSweep:
    N: int
    delta: int
    epsilon: float
    candidates: tuple[Candidate, ...]
    selected_index: int | None

    @property
    def selected(self) -> float | None:
        if self.selected_index is None:
            return None
        return self.candidates[self.selected_index].gamma_star

    def removes(self, comp: Component) -> bool:
        g = self.selected
        return g is not None and comp.weakness > g

    def to_dict(self, cmap: ComponentMap | None = None) -> dict:
        out = {
            "N": self.N,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "candidates": [
                {"gamma_star": c.gamma_star, "n": c.n, "p": c.p, "P": c.P, "NFA": c.NFA}
                for c in self.candidates
            ],
            "selected": self.selected,
        }
        if cmap is not None:
            out["kept"] = [c.label for c in cmap.components if not self.removes(c)]
        return out


def magnitude(img: DynamicImage) -> np.ndarray:
    """Per-pixel motion magnitude in [0, 1], averaged over channels.

    Measured as distance from the image's rest level, rescaled so the
    farthest reachable value is 1.  For images whose raw values were
    non-negative the rest level is 0 and this is just the channel mean.
    """
    v = img.values
    if v.size and (v.min() < 0.0 or v.max() > 1.0):
        raise DataError("expected a normalized image with values in [0, 1]")
    r = img.rest_level
    span = max(r, 1.0 - r)
    return np.abs(v - r).mean(axis=2) / span


def binarize(img: DynamicImage, tau_b: float = 0.05) -> np.ndarray:
    if not 0.0 <= tau_b <= 1.0:
        raise ValueError("tau_b must lie in [0, 1]")
    return magnitude(img) > tau_b


def label_components(mask: np.ndarray, img: DynamicImage) -> ComponentMap:
    """8-connected labeling; labels follow raster order of each component's first pixel."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.values.shape[:2]:
        raise DataError(f"mask {mask.shape} does not match image {img.values.shape[:2]}")
    raw, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return ComponentMap(np.zeros(mask.shape, dtype=np.int32), ())

    flat = raw.ravel()
    ids, first = np.unique(flat, return_index=True)
    order = ids[1:][np.argsort(first[1:])]
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[order] = np.arange(1, count + 1, dtype=np.int32)
    labels = remap[raw]

    mag = magnitude(img).ravel()
    lab = labels.ravel()
    areas = np.bincount(lab, minlength=count + 1)
    sums = np.bincount(lab, weights=mag, minlength=count + 1)
    comps = []
    for k in range(1, count + 1):
        a = int(areas[k])
        mean = float(sums[k] / a)
        comps.append(Component(k, a, mean, a * mean))
    return ComponentMap(labels, tuple(comps))


def normalize_ai(components) -> list[Component]:
    comps = list(components)
    if not comps:
        raise DataError("no components to normalize")
    top = max(c.areal_intensity for c in comps)
    if top <= 0.0:
        return [replace(c, norm_ai=1.0) for c in comps]
    return [replace(c, norm_ai=c.areal_intensity / top) for c in comps]


# largest N whose binomial coefficients still fit a double
_DIRECT_MAX_N = 1000


def binomial_tail(N: int, n: int, p: float) -> float:
    """P(X >= n) for X ~ Binomial(N, p).

    Sums whichever tail is the smaller one so tiny upper tails keep full
    relative precision.  Coefficients come from exact integers while they fit
    a double and from log-gamma beyond that.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if n < 0 or N < 0:
        raise ValueError("N and n must be non-negative")
    if n > N:
        raise ValueError(f"n={n} exceeds N={N}")
    if n == 0:
        return 1.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0

    q = 1.0 - p
    lp, lq = math.log(p), math.log1p(-p)
    lfact_N = math.lgamma(N + 1)
    direct = N <= _DIRECT_MAX_N

    def term(i):
        a, b = i * lp, (N - i) * lq
        if direct and a + b > -700.0:
            # exact integer coefficient keeps small cases exact (e.g. p = 1/2)
            return math.comb(N, i) * p ** i * q ** (N - i)
        return math.exp(lfact_N - math.lgamma(i + 1) - math.lgamma(N - i + 1) + a + b)

    if n > N * p:
        tail = math.fsum(term(i) for i in range(n, N + 1))
    else:
        tail = 1.0 - math.fsum(term(i) for i in range(0, n))
    return min(max(tail, 0.0), 1.0)


def threshold_grid(delta: int) -> np.ndarray:
    return np.arange(delta, dtype=np.float64) / (delta - 1)


def sweep_thresholds(components, delta: int = 100, epsilon: float = 1.0) -> NfaSweep:
    comps = list(components)
    if not comps:
        raise DataError("empty component list")
    if delta < 2:
        raise ValueError("delta must be at least 2")
    if any(c.norm_ai is None for c in comps):
        raise ValueError("components must be normalized first")

    N = len(comps)
    weakness = np.array([c.weakness for c in comps])
    candidates = []
    for g in threshold_grid(delta):
        g = float(g)
        n = int(np.count_nonzero(weakness > g))
        p = 1.0 - g
        P = binomial_tail(N, n, p)
        candidates.append(Candidate(g, n, p, P, delta * P))

    # fixed-order scan; on equal NFA keep the larger threshold (removes fewer)
    best = None
    for i, c in enumerate(candidates):
        if c.NFA < epsilon and (best is None or c.NFA <= candidates[best].NFA):
            best = i
    return NfaSweep(N, delta, epsilon, tuple(candidates), best)


def apply_mask(img: DynamicImage, cmap: ComponentMap, sweep: NfaSweep | None) -> DynamicImage:
    """Reset pixels of removed components to the rest level; everything else is copied."""
    if cmap.labels.shape != img.values.shape[:2]:
        raise DataError("component map does not match image")
    if sweep is None or sweep.selected is None or cmap.N == 0:
        return with_values(img, img.values.copy())
    doomed = [c.label for c in cmap.components if sweep.removes(c)]
    out = img.values.copy()
    if doomed:
        out[np.isin(cmap.labels, doomed)] = img.rest_level
    return with_values(img, out)


def prune_detailed(img: DynamicImage, tau_b: float = 0.05, delta: int = 100, epsilon: float = 1.0):
    """Full pruning pass; returns (image, component map, sweep or None)."""
    mask = binarize(img, tau_b)
    cmap = label_components(mask, img)
    if cmap.N == 0:
        return with_values(img, img.values.copy()), cmap, None
    comps = tuple(normalize_ai(cmap.components))
    cmap = ComponentMap(cmap.labels, comps)
    sweep = sweep_thresholds(comps, delta, epsilon)
    return apply_mask(img, cmap, sweep), cmap, sweep


def prune(img: DynamicImage, tau_b: float = 0.05, delta: int = 100, epsilon: float = 1.0) -> DynamicImage:
    return prune_detailed(img, tau_b, delta, epsilon)[0]


def kept_mask(cmap: ComponentMap, sweep: NfaSweep | None) -> np.ndarray:
    """Boolean (H, W) map of pixels in components that survive the sweep."""
    keep = [c.label for c in cmap.components if sweep is None or not sweep.removes(c)]
    return np.isin(cmap.labels, keep)


def sweep_report(sweep: NfaSweep | None, cmap: ComponentMap, delta: int, epsilon: float) -> str:
    if sweep is None:
        data = {"N": 0, "delta": delta, "epsilon": epsilon, "candidates": [], "selected": None, "kept": []}
    else:
        data = sweep.to_dict(cmap)
    return json.dumps(data, indent=2)
