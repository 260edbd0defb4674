"""Set-to-set distribution metrics over latent hair maps.

All three compare a generated set against a reference set with the squared
latent distance D summed over valid texels:

    mmd      mean over references of the distance to their closest generate
    cov      fraction of references that are some generate's nearest match
    one_nna  leave-one-out 1-NN classification accuracy over the union
             (0.5 = the two sets are statistically indistinguishable)

Argmin ties break toward the lowest index (generated before reference in the
union ordering), which makes duplicate-set identities exact.
"""

from __future__ import annotations

import numpy as np

from .geometry import LatentMap


def latent_distance(x: LatentMap, y: LatentMap) -> float:
    """Squared distance summed over the valid texel latents."""
    _check_pair(x, y)
    d = x.latents.astype(np.float64) - y.latents.astype(np.float64)
    return float(np.sum(d * d))


def _check_pair(x, y):
    if x.shape != y.shape or x.channels != y.channels:
        raise ValueError(f"latent map shape mismatch: "
                         f"{x.shape}x{x.channels} vs {y.shape}x{y.channels}")
    if not np.array_equal(x.mask, y.mask):
        raise ValueError("latent map masks differ")


def _as_matrix(style_set):
    """(N, D) float64 matrix of packed latents; validates set consistency."""
    style_set = list(style_set)
    if not style_set:
        raise ValueError("empty style set")
    first = style_set[0]
    for lm in style_set[1:]:
        _check_pair(first, lm)
    return np.stack([lm.latents.astype(np.float64).reshape(-1)
                     for lm in style_set])


def pairwise_distances(set_a, set_b) -> np.ndarray:
    """(|A|, |B|) matrix of squared latent distances.

    Row-wise differences (not the Gram expansion) so identical members give
    exact zeros.
    """
    a = _as_matrix(set_a)
    b = _as_matrix(set_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("style sets have different latent layouts")
    out = np.empty((len(a), len(b)))
    for i in range(len(a)):
        diff = a[i][None, :] - b
        out[i] = np.sum(diff * diff, axis=1)
    return out


def mmd(generated, reference) -> float:
    """Mean over the reference set of the closest-generate distance."""
    d = pairwise_distances(generated, reference)
    return float(d.min(axis=0).mean())


def cov(generated, reference) -> float:
    """Fraction of references covered as someone's nearest match."""
    d = pairwise_distances(generated, reference)
    matched = np.unique(d.argmin(axis=1))
    return float(len(matched)) / d.shape[1]


def one_nna(generated, reference) -> float:
    """Leave-one-out 1-NN accuracy over the union (needs equal set sizes)."""
    g = _as_matrix(generated)
    r = _as_matrix(reference)
    if len(g) != len(r):
        raise ValueError(f"set sizes must match: {len(g)} vs {len(r)}")
    union = np.vstack([g, r])
    n = len(g)
    d = np.empty((2 * n, 2 * n))
    for i in range(2 * n):
        diff = union[i][None, :] - union
        d[i] = np.sum(diff * diff, axis=1)
    np.fill_diagonal(d, np.inf)
    nn = d.argmin(axis=1)  # ties -> lowest global index
    labels = np.concatenate([np.ones(n, bool), np.zeros(n, bool)])
    correct = labels[nn] == labels
    return float(correct.mean())


def evaluate(generated, reference) -> dict:
    """All three metrics (one_nna only when the sizes match)."""
    generated = list(generated)
    reference = list(reference)
    out = {"mmd": mmd(generated, reference),
           "cov": cov(generated, reference)}
    if len(generated) == len(reference):
        out["one_nna"] = one_nna(generated, reference)
    return out
