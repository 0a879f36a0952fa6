"""Two-channel pseudo-attention training targets.

Channel 1 encodes face presence, channel 2 the co-attention point. Each
channel is a log-scaled mix of truncated box Gaussians and a saliency map:

    h1_raw = alpha * ln(clamp(sum_i G_face_i, eps)) + beta * ln(clamp(S, eps, 1))
    h2_raw = alpha * ln(clamp(G_coatt, eps, 1))     + beta * ln(clamp(S, eps, 1))

with natural logarithms throughout. When no co-attention exists the
Gaussian term bottoms out at ln(eps), so the channel carries only damped
saliency structure and its peak stays well below the with-co-attention
peak; detection thresholds rely on exactly that gap, which is why the
final affine rescale to [0, 1] uses dataset-wide constants rather than
per-image extrema.

Defaults: alpha=1.0, beta=0.3 (saliency deliberately suppressed below the
Gaussian evidence), eps=1e-3, sigma = min(w, h)/4 per box.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log

import numpy as np

from .saliency import SaliencyMap, compute_saliency, mean_in_box

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 0.3
DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box: top-left corner plus extent.

    Stored unclipped; consumers clip to image bounds where needed.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extent must be positive, got {self.w}x{self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + (self.w - 1) / 2.0, self.y + (self.h - 1) / 2.0)

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h


def default_sigma(box: BoundingBox) -> float:
    return min(box.w, box.h) / 4.0


@dataclass(frozen=True)
class BoxGaussian:
    """Gaussian bump centered on a box, truncated at twice the box extent."""

    box: BoundingBox
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma <= 0:
            object.__setattr__(self, "sigma", default_sigma(self.box))


@dataclass
class PseudoAttentionMaps:
    """Normalized (H, W) training target pair plus the constants that built it."""

    h1: np.ndarray
    h2: np.ndarray
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    epsilon: float = DEFAULT_EPSILON

    def stacked(self) -> np.ndarray:
        return np.stack([self.h1, self.h2])


def box_gaussian_map(g: BoxGaussian, dims: tuple[int, int]) -> np.ndarray:
    """Render ``exp(-(dx^2 + dy^2) / (2 sigma^2))`` for offsets (dx, dy)
    from the box center with |dx| <= w, |dy| <= h, zero elsewhere."""
    H, W = dims
    if H <= 0 or W <= 0:
        raise ValueError("dims must be positive")
    cx, cy = g.box.center
    dx = np.arange(W, dtype=np.float64) - cx
    dy = np.arange(H, dtype=np.float64) - cy
    support = (np.abs(dy)[:, None] <= g.box.h) & (np.abs(dx)[None, :] <= g.box.w)
    r2 = dy[:, None] ** 2 + dx[None, :] ** 2
    return np.where(support, np.exp(-r2 / (2.0 * g.sigma**2)), 0.0)


def _saliency_values(saliency, dims: tuple[int, int]) -> np.ndarray:
    values = saliency.values if isinstance(saliency, SaliencyMap) else np.asarray(saliency)
    if values.shape != dims:
        raise ValueError(f"saliency shape {values.shape} does not match target dims {dims}")
    return values


def face_channel(
    faces: list[BoxGaussian],
    saliency,
    dims: tuple[int, int],
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    epsilon: float = DEFAULT_EPSILON,
) -> np.ndarray:
    """Raw (pre-normalization) face channel; an empty face list leaves the
    Gaussian term clamped at ln(eps) everywhere."""
    _check_fusion_params(alpha, beta, epsilon)
    sal = _saliency_values(saliency, dims)
    acc = np.zeros(dims)
    for g in faces:
        acc += box_gaussian_map(g, dims)
    return alpha * np.log(np.maximum(acc, epsilon)) + beta * np.log(np.clip(sal, epsilon, 1.0))


def coatt_channel(
    coatt: BoxGaussian | None,
    saliency,
    dims: tuple[int, int],
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    epsilon: float = DEFAULT_EPSILON,
) -> np.ndarray:
    """Raw co-attention channel; ``coatt=None`` means no joint attention in
    the frame and the channel reduces to the damped saliency term."""
    _check_fusion_params(alpha, beta, epsilon)
    sal = _saliency_values(saliency, dims)
    if coatt is None:
        gterm = np.full(dims, log(epsilon))
    else:
        gmap = box_gaussian_map(coatt, dims)
        gterm = np.log(np.clip(gmap, epsilon, 1.0))
    return alpha * gterm + beta * np.log(np.clip(sal, epsilon, 1.0))


def _check_fusion_params(alpha: float, beta: float, epsilon: float) -> None:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if not (0 < epsilon < 1):
        raise ValueError("epsilon must lie in (0, 1)")


def target_bounds(
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    epsilon: float = DEFAULT_EPSILON,
    max_faces: int = 4,
) -> tuple[float, float]:
    """Dataset-wide affine constants for normalize_target.

    ``lo`` is the floor both channels share (all terms clamped at eps);
    ``hi`` is the largest face-channel value (max_faces coincident Gaussian
    peaks, saliency term at its ceiling of ln(1) = 0).
    """
    lo = alpha * log(epsilon) + beta * log(epsilon)
    hi = alpha * log(max(max_faces, 1)) if max_faces >= 1 else 0.0
    return lo, hi


def normalize_target(raw: np.ndarray, bounds: tuple[float, float]) -> np.ndarray:
    """Affine map of raw log-space values onto [0, 1] with clipping.

    The bounds are fixed per dataset so that peak magnitudes stay
    comparable across images.
    """
    lo, hi = bounds
    if hi <= lo:
        raise ValueError(f"invalid normalization bounds: lo={lo}, hi={hi}")
    return np.clip((np.asarray(raw, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)


def build_target_maps(
    face_boxes: list[BoundingBox],
    coatt_box: BoundingBox | None,
    saliency,
    dims: tuple[int, int],
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    epsilon: float = DEFAULT_EPSILON,
    max_faces: int = 4,
) -> PseudoAttentionMaps:
    """Full target construction for one scene: fuse, then normalize both
    channels with shared dataset-wide bounds."""
    faces = [BoxGaussian(b) for b in face_boxes]
    coatt = BoxGaussian(coatt_box) if coatt_box is not None else None
    bounds = target_bounds(alpha, beta, epsilon, max_faces)
    h1 = normalize_target(face_channel(faces, saliency, dims, alpha, beta, epsilon), bounds)
    h2 = normalize_target(coatt_channel(coatt, saliency, dims, alpha, beta, epsilon), bounds)
    return PseudoAttentionMaps(h1=h1, h2=h2, alpha=alpha, beta=beta, epsilon=epsilon)


def saliency_box_statistic(dataset, estimator=compute_saliency) -> float:
    """Fraction of records whose co-attention box outshines the image mean.

    ``dataset`` is a sequence of (image, coatt_box) pairs, every record
    carrying a box. Strict inequality, so uniform maps never count.
    """
    records = list(dataset)
    if not records:
        raise ValueError("saliency_box_statistic needs a non-empty dataset")
    hits = 0
    for image, box in records:
        if box is None:
            raise ValueError("every record must carry a co-attention box")
        sal = estimator(image)
        values = sal.values if isinstance(sal, SaliencyMap) else np.asarray(sal)
        if mean_in_box(sal, box) > float(values.mean()):
            hits += 1
    return hits / len(records)
