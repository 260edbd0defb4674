"""Guide-strand densification in latent space.

A sparse latent map (e.g. 32x32 guides) is lifted to a dense one (512x512)
by blending nearest-neighbor and bilinear interpolation per target texel.
The blend weight comes from the cosine similarity x between the decoded
guide strands enclosing the texel:

    f(x) = 1 - 1.63 * x^5   for x <= 0.9
    f(x) = 0.4 - 0.4 * x    for x > 0.9        (clamped to [0, 1])

so structure survives near partings (dissimilar guides -> nearest neighbor)
while smooth regions interpolate.  Optional per-texel latent noise
Z + Z_sigma * X * Y (X ~ N(0.15, 0.05^2), Y = +-1 coin flips, broadcast over
channels) breaks up the grid structure of the guides.
"""

from __future__ import annotations

import numpy as np

from .codec import CodecParams, decode
from .geometry import LOCAL, LatentMap, Strand


def strand_cosine_similarity(a: Strand, b: Strand) -> float:
    """Cosine between the strands' root-relative point offsets; degenerate
    (zero-length) pairs count as identical (similarity 1)."""
    if a.length != b.length:
        raise ValueError(f"strand length mismatch: {a.length} vs {b.length}")
    va = (a.points - a.points[0]).reshape(-1)
    vb = (b.points - b.points[0]).reshape(-1)
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        return 1.0
    return float(np.dot(va, vb) / (na * nb))


def blend_weight(x) -> np.ndarray:
    """Nearest-neighbor weight f(x) for similarity x in [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    left = 1.0 - 1.63 * x ** 5
    right = 0.4 - 0.4 * x
    f = np.where(x <= 0.9, left, right)
    return np.clip(f, 0.0, 1.0)


def _pairwise_min_similarity(strand_grid, mask):
    """Per guide cell, the minimum cosine similarity over all pairs of the
    (up to four) valid corner strands.  strand_grid: (H, W, L, 3) with junk
    at invalid texels; returns (H-1, W-1) with 1.0 where < 2 valid corners.
    """
    h, w = mask.shape
    vecs = strand_grid - strand_grid[:, :, :1, :]
    vecs = vecs.reshape(h, w, -1)
    norms = np.linalg.norm(vecs, axis=-1)

    def sim(ay, ax, by, bx):
        va = vecs[ay, ax]
        vb = vecs[by, bx]
        na = norms[ay, ax]
        nb = norms[by, bx]
        dots = np.einsum("...k,...k->...", va, vb)
        denom = na * nb
        out = np.where(denom > 0, dots / np.maximum(denom, 1e-30), 1.0)
        both = mask[ay, ax] & mask[by, bx]
        return np.where(both, out, np.inf)  # inf = pair excluded from min

    yy, xx = np.mgrid[0:h - 1, 0:w - 1]
    corners = [(yy, xx), (yy, xx + 1), (yy + 1, xx), (yy + 1, xx + 1)]
    min_sim = np.full((h - 1, w - 1), np.inf)
    for i in range(4):
        for j in range(i + 1, 4):
            s = sim(corners[i][0], corners[i][1], corners[j][0], corners[j][1])
            min_sim = np.minimum(min_sim, s)
    return np.where(np.isfinite(min_sim), min_sim, 1.0)


def upsample(lmap: LatentMap, target, codec: CodecParams,
             noise: str = "off", seed: int = 0) -> LatentMap:
    """Densify a guide latent map to `target` = (H', W').

    Guide strands are decoded once for the similarity field; latents (not
    geometry) are interpolated.  Guide texels aligned with target positions
    reproduce exactly when noise is off; the validity mask follows the
    nearest guide.
    """
    th, tw = (target, target) if isinstance(target, int) else target
    h, w = lmap.shape
    if th < h or tw < w:
        raise ValueError("target must be at least the guide resolution")
    if lmap.latents.shape[0] == 0:
        raise ValueError("empty latent map")

    dense32 = lmap.dense()                      # (H, W, M) float32
    dense = dense32.astype(np.float64)
    mask = lmap.mask

    # decoded guides for similarity (cached per call)
    strand_grid = np.zeros((h, w, codec.strand_length, 3), dtype=np.float64)
    iy, ix = np.nonzero(mask)
    for y, x in zip(iy, ix):
        strand_grid[y, x] = decode(codec, dense32[y, x]).points
    cell_sim = _pairwise_min_similarity(strand_grid, mask)   # (H-1, W-1)

    # target texel -> guide coordinates (top-left aligned so guide g maps to
    # target g * (target/guide) exactly)
    uy = np.arange(th) * h / th
    ux = np.arange(tw) * w / tw
    i0 = np.minimum(np.floor(uy).astype(int), h - 2) if h > 1 else np.zeros(th, int)
    j0 = np.minimum(np.floor(ux).astype(int), w - 2) if w > 1 else np.zeros(tw, int)
    fy = np.clip(uy - i0, 0.0, 1.0)[:, None]      # (th, 1)
    fx = np.clip(ux - j0, 0.0, 1.0)[None, :]      # (1, tw)
    ii0 = i0[:, None]
    jj0 = j0[None, :]
    ii1 = ii0 + 1
    jj1 = jj0 + 1

    z00 = dense[ii0, jj0]
    z01 = dense[ii0, jj1]
    z10 = dense[ii1, jj0]
    z11 = dense[ii1, jj1]
    m00 = mask[ii0, jj0]
    m01 = mask[ii0, jj1]
    m10 = mask[ii1, jj0]
    m11 = mask[ii1, jj1]

    all_valid = m00 & m01 & m10 & m11
    # nested lerp keeps constants and aligned guides bit-exact
    fx3 = fx[..., None]
    fy3 = fy[..., None]
    top = z00 + fx3 * (z01 - z00)
    bot = z10 + fx3 * (z11 - z10)
    bilinear = top + fy3 * (bot - top)

    # partially valid cells: renormalized weighted mean over valid corners
    w00 = (1 - fy) * (1 - fx)
    w01 = (1 - fy) * fx
    w10 = fy * (1 - fx)
    w11 = fy * fx
    wsum = (w00 * m00 + w01 * m01 + w10 * m10 + w11 * m11)
    partial = (z00 * (w00 * m00)[..., None] + z01 * (w01 * m01)[..., None]
               + z10 * (w10 * m10)[..., None] + z11 * (w11 * m11)[..., None])
    safe = np.maximum(wsum, 1e-30)[..., None]
    bilinear = np.where(all_valid[..., None], bilinear, partial / safe)

    # nearest guide, and the similarity of the enclosing cell
    ny = np.minimum(np.round(uy).astype(int), h - 1)[:, None]
    nx = np.minimum(np.round(ux).astype(int), w - 1)[None, :]
    nearest = dense[ny, nx]
    out_mask = np.broadcast_to(mask[ny, nx], (th, tw)).copy()

    x_sim = cell_sim[ii0, jj0]
    fweight = blend_weight(x_sim)[..., None]
    out = bilinear + fweight * (nearest - bilinear)
    out[~out_mask] = 0.0

    result = LatentMap.from_dense(out.astype(np.float32), out_mask)
    if noise == "on":
        result = inject_noise(result, seed)
    elif noise != "off":
        raise ValueError(f"noise must be 'on' or 'off', got {noise!r}")
    return result


def inject_noise(lmap: LatentMap, seed: int = 0) -> LatentMap:
    """Add per-texel scaled latent noise: Z + Z_sigma * X * Y.

    Z_sigma is the per-channel std over valid texels; X ~ N(0.15, 0.05^2)
    and Y = 2 * Bernoulli(0.5) - 1 are drawn per texel (broadcast over
    channels) from a counter-based stream, so results are independent of
    evaluation order.  A constant map has Z_sigma = 0 and passes through.
    """
    h, w = lmap.shape
    sigma_c = lmap.latents.std(axis=0)          # (M,)
    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.normal(0.15, 0.05, size=(h, w, 1))
    y = 2.0 * rng.integers(0, 2, size=(h, w, 1)) - 1.0
    noise = (sigma_c[None, None, :] * x * y).astype(np.float32)
    dense = lmap.dense()
    dense[lmap.mask] += noise[lmap.mask]
    return LatentMap.from_dense(dense, lmap.mask)
