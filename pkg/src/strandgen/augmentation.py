"""Geometric hairstyle augmentation: squeeze/stretch, cut, curl.

All transforms act per strand in local space, keep the root at the origin,
and preserve strand count, point count, and the validity mask.  Dataset
expansion draws augmentation parameters from configured ranges with one
seeded stream per (style, variant) pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import LOCAL, HairMap, Strand, resample


def scale(h: HairMap, factors) -> HairMap:
    """Componentwise scaling of local strand coordinates."""
    factors = np.asarray(factors, dtype=np.float64)
    if factors.shape != (3,) or np.any(factors <= 0):
        raise ValueError("factors must be three positive reals")
    strands = (h.strands.astype(np.float64) * factors).astype(np.float32)
    return HairMap(mask=h.mask.copy(), strands=strands, grid=h.grid)


def cut(h: HairMap, fraction: float) -> HairMap:
    """Truncate each strand at arc_length * fraction, resampled back to L."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return HairMap(mask=h.mask.copy(), strands=h.strands.copy(),
                       grid=h.grid)
    L = h.strand_length
    out = np.empty_like(h.strands)
    for i, pts in enumerate(h.strands):
        out[i] = _cut_strand(pts.astype(np.float64), fraction, L)
    return HairMap(mask=h.mask.copy(), strands=out, grid=h.grid)


def _cut_strand(pts, fraction, n_out):
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0.0:
        return np.repeat(pts[:1], n_out, axis=0)
    target = total * fraction
    keep = cum <= target
    k = int(keep.sum())
    if k == len(pts):
        trimmed = pts
    else:
        # interpolate the exact cut point on segment k-1 -> k
        t = (target - cum[k - 1]) / max(cum[k] - cum[k - 1], 1e-30)
        cut_pt = pts[k - 1] + t * (pts[k] - pts[k - 1])
        trimmed = np.vstack([pts[:k], cut_pt])
    return resample(Strand(trimmed, space=LOCAL), n_out).points


def curl(h: HairMap, amplitude: float, frequency: float,
         seed: int = 0) -> HairMap:
    """Helical offset orthogonal to the strand tangent.

    amplitude in meters, frequency in turns per meter of arc length; the
    offset is tapered linearly from zero at the root, and the phase is drawn
    per strand from the seed.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    if amplitude == 0.0:
        return HairMap(mask=h.mask.copy(), strands=h.strands.copy(),
                       grid=h.grid)
    rng = np.random.default_rng(seed)
    out = np.empty_like(h.strands)
    for i, pts in enumerate(h.strands):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out[i] = _curl_strand(pts.astype(np.float64), amplitude, frequency,
                              phase)
    return HairMap(mask=h.mask.copy(), strands=out, grid=h.grid)


def _curl_strand(pts, amplitude, frequency, phase):
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    if total <= 0.0:
        return pts
    tangents = np.gradient(pts, axis=0)
    norms = np.linalg.norm(tangents, axis=1, keepdims=True)
    tangents = tangents / np.maximum(norms, 1e-30)
    ref = np.array([1.0, 0.0, 0.0])
    if abs(tangents[0] @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    n1 = np.cross(tangents, ref)
    n1 /= np.maximum(np.linalg.norm(n1, axis=1, keepdims=True), 1e-30)
    n2 = np.cross(tangents, n1)
    theta = 2.0 * np.pi * frequency * arc + phase
    taper = arc / total
    offset = amplitude * taper[:, None] * (np.cos(theta)[:, None] * n1
                                           + np.sin(theta)[:, None] * n2)
    return pts + offset


@dataclass
class AugmentRanges:
    """Uniform sampling ranges for expand_dataset (lo == hi pins a value)."""

    scale_x: tuple = (0.85, 1.15)
    scale_y: tuple = (0.85, 1.15)
    scale_z: tuple = (0.85, 1.15)
    cut_fraction: tuple = (0.6, 1.0)
    curl_amplitude: tuple = (0.0, 0.01)
    curl_frequency: tuple = (0.0, 150.0)


IDENTITY_RANGES = AugmentRanges(scale_x=(1, 1), scale_y=(1, 1),
                                scale_z=(1, 1), cut_fraction=(1, 1),
                                curl_amplitude=(0, 0), curl_frequency=(0, 0))


def expand_dataset(base, variants_per_style: int,
                   ranges: AugmentRanges = AugmentRanges(),
                   seed: int = 0):
    """|base| * variants_per_style augmented hair maps, seeded per variant."""
    base = list(base)
    if not base:
        raise ValueError("empty base set")
    if variants_per_style < 1:
        raise ValueError("variants_per_style must be >= 1")
    out = []
    for si, style in enumerate(base):
        for vi in range(variants_per_style):
            rng = np.random.default_rng([seed, si, vi])
            factors = (rng.uniform(*ranges.scale_x),
                       rng.uniform(*ranges.scale_y),
                       rng.uniform(*ranges.scale_z))
            fraction = rng.uniform(*ranges.cut_fraction)
            amp = rng.uniform(*ranges.curl_amplitude)
            freq = rng.uniform(*ranges.curl_frequency)
            variant = scale(style, factors)
            variant = cut(variant, fraction)
            variant = curl(variant, amp, freq,
                           seed=int(rng.integers(2 ** 31)))
            out.append(variant)
    return out
