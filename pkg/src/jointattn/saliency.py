"""Classical bottom-up saliency from multi-scale center-surround contrast.

The estimator follows the well-known biologically inspired recipe: build
Gaussian pyramids for an intensity channel, two color-opponency channels
(R-G and B-Y) and four oriented-edge channels, take across-scale absolute
differences between a fine "center" level and a coarse "surround" level,
apply the peak-promoting normalization ``N(.)``, and sum the per-channel
conspicuity maps back at the finest center scale.

Oriented channels use simple 3x3 compass derivative kernels instead of
Gabor filters; this keeps the module dependency-free and is adequate for
the synthetic desk-scale scenes this package targets.

Images are ``(3, H, W)`` float arrays in [0, 1]; maps are ``(H, W)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CENTER_LEVELS = (2, 3, 4)
SURROUND_DELTAS = (3, 4)
DEFAULT_LEVELS = 7

_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

# 3x3 compass derivative kernels for 0/45/90/135 degrees
_ORIENT_KERNELS = {
    0: np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]) / 4.0,
    45: np.array([[0.0, 1.0, 2.0], [-1.0, 0.0, 1.0], [-2.0, -1.0, 0.0]]) / 4.0,
    90: np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 4.0,
    135: np.array([[2.0, 1.0, 0.0], [1.0, 0.0, -1.0], [0.0, -1.0, -2.0]]) / 4.0,
}


@dataclass
class SaliencyMap:
    """Single-channel saliency in [0, 1] at the source image resolution.

    ``uniform`` marks the degenerate all-constant-input case, where the map
    is all zeros by definition.
    """

    values: np.ndarray
    uniform: bool = False

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


class GaussianPyramid:
    """Level 0 is the source; each level halves the previous one after
    5-tap binomial smoothing."""

    def __init__(self, levels: list[np.ndarray]):
        self.levels = levels

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.levels[k]


def _smooth5(img: np.ndarray) -> np.ndarray:
    """Separable 5-tap binomial filter with edge replication."""
    padded = np.pad(img, ((2, 2), (0, 0)), mode="edge")
    rows = sum(w * padded[i : i + img.shape[0]] for i, w in enumerate(_BINOMIAL5))
    padded = np.pad(rows, ((0, 0), (2, 2)), mode="edge")
    return sum(w * padded[:, i : i + img.shape[1]] for i, w in enumerate(_BINOMIAL5))


def build_pyramid(image: np.ndarray, levels: int) -> GaussianPyramid:
    """Smooth-and-halve pyramid; requires the image to survive all halvings."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("build_pyramid expects a 2-D grayscale image")
    if min(image.shape) < 2 ** (levels - 1):
        raise ValueError(
            f"image {image.shape} too small for {levels} pyramid levels "
            f"(needs at least {2 ** (levels - 1)} px per side)"
        )
    out = [image]
    for _ in range(levels - 1):
        out.append(_smooth5(out[-1])[::2, ::2])
    return GaussianPyramid(out)


def resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to an arbitrary shape, half-pixel-center convention."""
    H, W = img.shape
    Ho, Wo = shape
    ys = np.clip((np.arange(Ho) + 0.5) * (H / Ho) - 0.5, 0, H - 1)
    xs = np.clip((np.arange(Wo) + 0.5) * (W / Wo) - 0.5, 0, W - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    ty = (ys - y0)[:, None]
    tx = (xs - x0)[None, :]
    a = img[np.ix_(y0, x0)]
    b = img[np.ix_(y0, x1)]
    c = img[np.ix_(y1, x0)]
    d = img[np.ix_(y1, x1)]
    return (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d)


def center_surround(pyr: GaussianPyramid, c: int, s: int) -> np.ndarray:
    """Across-scale contrast: |level_c - upsample(level_s)| at level c."""
    if not (0 <= c < len(pyr)) or not (0 <= s < len(pyr)):
        raise ValueError(f"pyramid levels ({c}, {s}) out of range 0..{len(pyr) - 1}")
    if s <= c:
        raise ValueError(f"surround level must be coarser than center ({c}, {s})")
    coarse = resize_bilinear(pyr[s], pyr[c].shape)
    return np.abs(pyr[c] - coarse)


def _local_maxima(m: np.ndarray) -> list[tuple[int, int]]:
    # strict 4-neighbor maxima over interior pixels
    inner = m[1:-1, 1:-1]
    mask = (
        (inner > m[:-2, 1:-1])
        & (inner > m[2:, 1:-1])
        & (inner > m[1:-1, :-2])
        & (inner > m[1:-1, 2:])
    )
    ys, xs = np.nonzero(mask)
    return [(int(y) + 1, int(x) + 1) for y, x in zip(ys, xs)]


def normalize_iterative(m: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1] and damp maps with many comparable peaks.

    The damping factor is ``(1 - mean_of_other_local_maxima)^2`` where the
    global maximum (first occurrence, row-major) is excluded from the mean.
    A uniform map degenerates to all zeros.
    """
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("normalize_iterative expects a non-negative map")
    lo, hi = m.min(), m.max()
    if hi <= lo:
        return np.zeros_like(m)
    m = (m - lo) / (hi - lo)
    peaks = _local_maxima(m)
    gy, gx = np.unravel_index(np.argmax(m), m.shape)
    others = [m[y, x] for y, x in peaks if (y, x) != (gy, gx)]
    mean_other = float(np.mean(others)) if others else 0.0
    return m * (1.0 - mean_other) ** 2


def _auto_levels(shape: tuple[int, int], requested: int) -> int:
    max_levels = int(np.floor(np.log2(min(shape)))) + 1
    return max(3, min(requested, max_levels))


def _feature_channels(image: np.ndarray) -> dict[str, np.ndarray]:
    r, g, b = image[0], image[1], image[2]
    intensity = (r + g + b) / 3.0
    # classic opponency components, rectified at zero
    rr = np.maximum(r - (g + b) / 2.0, 0.0)
    gg = np.maximum(g - (r + b) / 2.0, 0.0)
    bb = np.maximum(b - (r + g) / 2.0, 0.0)
    yy = np.maximum((r + g) / 2.0 - np.abs(r - g) / 2.0 - b, 0.0)
    return {"intensity": intensity, "rg": rr - gg, "by": bb - yy}


def _filter2(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    padded = np.pad(img, 1, mode="edge")
    out = np.zeros_like(img)
    for i in range(3):
        for j in range(3):
            out += kernel[i, j] * padded[i : i + img.shape[0], j : j + img.shape[1]]
    return out


def _cs_pairs(levels: int) -> list[tuple[int, int]]:
    return [
        (c, c + d)
        for c in CENTER_LEVELS
        for d in SURROUND_DELTAS
        if c + d < levels
    ]


def compute_saliency(image: np.ndarray, levels: int = DEFAULT_LEVELS) -> SaliencyMap:
    """Full saliency map for a (3, H, W) image in [0, 1].

    Sums normalized conspicuity maps for intensity, R-G, B-Y and the four
    orientations, then rescales the result to [0, 1] at source resolution.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError("compute_saliency expects a (3, H, W) image")
    H, W = image.shape[1], image.shape[2]
    if H < 32 or W < 32:
        raise ValueError("image must be at least 32x32")
    levels = _auto_levels((H, W), levels)
    pairs = _cs_pairs(levels)
    if not pairs:
        pairs = [(0, levels - 1)]

    feats = _feature_channels(image)
    pyramids: dict[str, GaussianPyramid] = {
        name: build_pyramid(chan, levels) for name, chan in feats.items()
    }
    ipyr = pyramids["intensity"]
    for angle, kern in _ORIENT_KERNELS.items():
        pyramids[f"orient{angle}"] = GaussianPyramid(
            [np.abs(_filter2(lvl, kern)) for lvl in ipyr.levels]
        )

    base_shape = ipyr[pairs[0][0]].shape
    total = np.zeros(base_shape)
    for name, pyr in pyramids.items():
        consp = np.zeros(base_shape)
        for c, s in pairs:
            fm = normalize_iterative(center_surround(pyr, c, s))
            consp += resize_bilinear(fm, base_shape)
        total += normalize_iterative(consp)

    full = resize_bilinear(total, (H, W))
    lo, hi = full.min(), full.max()
    if hi <= lo:
        return SaliencyMap(np.zeros((H, W)), uniform=True)
    return SaliencyMap((full - lo) / (hi - lo), uniform=False)


def mean_in_box(sal: SaliencyMap | np.ndarray, box) -> float:
    """Mean saliency inside a box clipped to the image bounds."""
    values = sal.values if isinstance(sal, SaliencyMap) else np.asarray(sal)
    x0 = max(int(box.x), 0)
    y0 = max(int(box.y), 0)
    x1 = min(int(box.x + box.w), values.shape[1])
    y1 = min(int(box.y + box.h), values.shape[0])
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {box} does not intersect a {values.shape} map")
    return float(values[y0:y1, x0:x1].mean())
