"""The six image-similarity metrics, spanning pixel-value, perceptual,
semantic, and structural facets.

Canonical metric order is frozen (it fixes feature layout and the
"first k metrics" ablation): bhattacharyya, intersection, lpips, clip,
phash_distance, structural.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
import scipy.fft

from .core import ImageBuffer, resize_bilinear


class MetricId(Enum):
    BHATTACHARYYA = 0
    INTERSECTION = 1
    LPIPS = 2
    CLIP_SCORE = 3
    PHASH = 4
    STRUCTURAL = 5


METRIC_ORDER = (
    MetricId.BHATTACHARYYA,
    MetricId.INTERSECTION,
    MetricId.LPIPS,
    MetricId.CLIP_SCORE,
    MetricId.PHASH,
    MetricId.STRUCTURAL,
)

METRIC_NAMES = ("bhattacharyya", "intersection", "lpips", "clip", "phash", "structural")

#: which direction means "more similar" for each metric, in canonical order
HIGHER_IS_SIMILAR = (False, True, False, True, False, False)

HIST_BINS = 64  # per channel; bin = v // 4
PATCH_GRID = 14  # P: patches per side for the structural descriptor
ORIENT_BINS = 8
COLOR_WEIGHT = 0.5  # weight of mean-color components inside a patch descriptor


class ExtractorMismatch(Exception):
    """Patch-descriptor grids of the two images have different shapes."""


# ---------------------------------------------------------------------------
# pixel-value metrics (histograms)
# ---------------------------------------------------------------------------

def histogram(img: ImageBuffer) -> np.ndarray:
    """Concatenated per-channel 64-bin intensity histogram, joint sum 1."""
    arr = img.array
    bins = arr.astype(np.int64) // 4
    out = np.empty(3 * HIST_BINS, dtype=np.float64)
    for c in range(3):
        out[c * HIST_BINS:(c + 1) * HIST_BINS] = np.bincount(
            bins[:, :, c].ravel(), minlength=HIST_BINS
        )
    total = out.sum()
    return out / total


def bhattacharyya_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Hellinger form sqrt(1 - sum(sqrt(a*b))); 0 = identical, 1 = disjoint."""
    coeff = float(np.sqrt(np.asarray(a) * np.asarray(b)).sum())
    return float(np.sqrt(max(0.0, 1.0 - coeff)))


def intersection_score(a: np.ndarray, b: np.ndarray) -> float:
    """sum(min(a_i, b_i)); 1 = identical, 0 = disjoint."""
    return float(np.minimum(np.asarray(a), np.asarray(b)).sum())


# ---------------------------------------------------------------------------
# structural metrics
# ---------------------------------------------------------------------------

def _luma(arr: np.ndarray) -> np.ndarray:
    # BT.601 weights
    return arr[:, :, 0] * 0.299 + arr[:, :, 1] * 0.587 + arr[:, :, 2] * 0.114


def phash(img: ImageBuffer) -> int:
    """64-bit perceptual hash.

    Luma -> bilinear 32x32 -> 2-D DCT-II (unnormalized) -> top-left 8x8 ->
    median of the 63 non-DC coefficients -> bit = (coef > median), DC bit
    forced to 0. Bit (r, c) of the 8x8 block maps to hash bit 63 - (8r + c),
    i.e. the DC coefficient is the most significant bit.
    """
    luma = _luma(img.to_float())
    small = resize_bilinear(luma, 32, 32)
    coeffs = scipy.fft.dctn(small, type=2)
    block = coeffs[:8, :8]
    flat = block.ravel()
    median = float(np.median(flat[1:]))
    bits = flat > median
    bits[0] = False
    value = 0
    for bit in bits:
        value = (value << 1) | int(bit)
    return value


def phash_distance(a: int, b: int) -> float:
    """Normalized Hamming distance between two 64-bit hashes."""
    return (a ^ b).bit_count() / 64.0


def patch_descriptors(img: ImageBuffer, grid: int = PATCH_GRID) -> np.ndarray:
    """grid x grid unit-norm patch descriptors (8 orientation bins + 3 colors).

    Gradient orientations are binned over [0, 2pi) weighted by magnitude;
    zero-gradient patches fall back to the uniform orientation histogram.
    Mean patch color (scaled by COLOR_WEIGHT) is appended before the final
    L2 normalization.
    """
    arr = img.to_float()
    h, w = arr.shape[:2]
    luma = _luma(arr)
    gy, gx = np.gradient(luma)
    mag = np.hypot(gx, gy)
    angle = np.arctan2(gy, gx)  # [-pi, pi)
    obin = np.floor((angle + np.pi) / (2 * np.pi) * ORIENT_BINS).astype(np.int64)
    obin = np.clip(obin, 0, ORIENT_BINS - 1)

    ye = (np.arange(grid + 1) * h) // grid
    xe = (np.arange(grid + 1) * w) // grid
    py = np.searchsorted(ye[1:], np.arange(h), side="right")
    px = np.searchsorted(xe[1:], np.arange(w), side="right")
    patch_id = py[:, None] * grid + px[None, :]

    flat_idx = patch_id.ravel() * ORIENT_BINS + obin.ravel()
    hist = np.bincount(flat_idx, weights=mag.ravel(), minlength=grid * grid * ORIENT_BINS)
    hist = hist.reshape(grid * grid, ORIENT_BINS)
    sums = hist.sum(axis=1, keepdims=True)
    hist = hist / np.maximum(sums, 1e-9)
    hist[sums[:, 0] < 1e-9] = 1.0 / ORIENT_BINS

    counts = np.bincount(patch_id.ravel(), minlength=grid * grid).astype(np.float64)
    color = np.stack(
        [
            np.bincount(patch_id.ravel(), weights=arr[:, :, c].ravel(), minlength=grid * grid)
            for c in range(3)
        ],
        axis=1,
    ) / counts[:, None] / 255.0

    desc = np.concatenate([hist, color * COLOR_WEIGHT], axis=1)
    norms = np.linalg.norm(desc, axis=1, keepdims=True)
    desc = desc / np.maximum(norms, 1e-12)
    return desc.reshape(grid, grid, ORIENT_BINS + 3)


def _self_similarity(desc: np.ndarray) -> np.ndarray:
    flat = desc.reshape(-1, desc.shape[-1])
    return flat @ flat.T


def structural_distance(a: ImageBuffer, b: ImageBuffer, extractor=patch_descriptors) -> float:
    """Frobenius distance between patch self-similarity matrices, / P^2.

    The extractor is pluggable; by default gradient-orientation descriptors
    are used, but any callable returning a P x P x d grid works (e.g. deep
    patch keys obtained through an embedder backend).
    """
    da = extractor(a)
    db = extractor(b)
    return structural_distance_from_descriptors(da, db)


def structural_distance_from_descriptors(da: np.ndarray, db: np.ndarray) -> float:
    if da.shape != db.shape:
        raise ExtractorMismatch(f"descriptor grids differ: {da.shape} vs {db.shape}")
    sa = _self_similarity(da)
    sb = _self_similarity(db)
    p2 = da.shape[0] * da.shape[1]
    return float(np.linalg.norm(sa - sb) / p2)


# ---------------------------------------------------------------------------
# semantic / perceptual metrics (embedder-backed)
# ---------------------------------------------------------------------------

def clip_score(a: ImageBuffer, b: ImageBuffer, embedder) -> float:
    """Cosine similarity of semantic-space embeddings."""
    va = np.asarray(embedder.embed(a, "semantic"), dtype=np.float64)
    vb = np.asarray(embedder.embed(b, "semantic"), dtype=np.float64)
    return cosine_similarity(va, vb)


def cosine_similarity(va: np.ndarray, vb: np.ndarray) -> float:
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def lpips_distance(a: ImageBuffer, b: ImageBuffer, embedder) -> float:
    """Perceptual-space distance: mean squared difference of perceptual
    embeddings.

    The default offline embedder exposes a 3-level Laplacian-pyramid feature
    vector with equal-length unit-normalized levels, so the plain MSE over
    the concatenated vector equals the per-level MSE averaged over levels.
    """
    va = np.asarray(embedder.embed(a, "perceptual"), dtype=np.float64)
    vb = np.asarray(embedder.embed(b, "perceptual"), dtype=np.float64)
    if va.shape != vb.shape:
        raise ExtractorMismatch(f"perceptual vectors differ: {va.shape} vs {vb.shape}")
    return float(np.mean((va - vb) ** 2))


# ---------------------------------------------------------------------------
# batched profiles + the canonical six-vector
# ---------------------------------------------------------------------------

class MetricProfile:
    """Precomputed per-image quantities so one image can be compared against
    many counterparts without recomputation."""

    __slots__ = ("histogram", "phash", "descriptors", "semantic", "perceptual")

    def __init__(self, img: ImageBuffer, embedder):
        self.histogram = histogram(img)
        self.phash = phash(img)
        self.descriptors = patch_descriptors(img)
        self.semantic = np.asarray(embedder.embed(img, "semantic"), dtype=np.float64)
        self.perceptual = np.asarray(embedder.embed(img, "perceptual"), dtype=np.float64)


def compute_all_from_profiles(pa: MetricProfile, pb: MetricProfile) -> np.ndarray:
    return np.array(
        [
            bhattacharyya_distance(pa.histogram, pb.histogram),
            intersection_score(pa.histogram, pb.histogram),
            float(np.mean((pa.perceptual - pb.perceptual) ** 2)),
            cosine_similarity(pa.semantic, pb.semantic),
            phash_distance(pa.phash, pb.phash),
            structural_distance_from_descriptors(pa.descriptors, pb.descriptors),
        ],
        dtype=np.float64,
    )


def compute_all(a: ImageBuffer, b: ImageBuffer, embedder) -> np.ndarray:
    """All six metrics in canonical order:
    [bhattacharyya, intersection, lpips, clip, phash_distance, structural].
    """
    return compute_all_from_profiles(MetricProfile(a, embedder), MetricProfile(b, embedder))
