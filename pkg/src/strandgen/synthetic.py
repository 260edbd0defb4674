"""Procedural strand and hairstyle fixtures.

Wave/curl polylines in local space, used for codec training at desk scale
and throughout the test suite.  Everything is seeded and pure.
"""

from __future__ import annotations

import numpy as np

from .geometry import LOCAL, HairMap, ScalpGrid, Strand


def synthetic_strand(rng: np.random.Generator, n_points: int = 100) -> Strand:
    """One procedural wave/curl strand in local space, root at the origin."""
    t = np.linspace(0.0, 1.0, n_points)
    length = rng.uniform(0.12, 0.35)
    # growth direction: mostly along the local normal, drooping sideways
    direction = np.array([0.0, 0.0, 1.0]) + 0.35 * rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    e1 = np.cross(direction, [1.0, 0.0, 0.0])
    if np.linalg.norm(e1) < 1e-6:
        e1 = np.cross(direction, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(direction, e1)

    amp = rng.uniform(0.0, 0.05) * length
    freq = rng.uniform(0.5, 4.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    droop = rng.uniform(0.0, 0.6) * length

    theta = 2.0 * np.pi * freq * t + phase
    pts = (np.outer(t * length, direction)
           + np.outer(amp * t * np.sin(theta), e1)
           + np.outer(amp * t * np.cos(theta), e2)
           + np.outer(droop * t * t, [0.0, 0.0, -1.0]))
    pts -= pts[0]
    return Strand(points=pts, space=LOCAL)


def synthetic_strands(n: int, n_points: int = 100, seed: int = 0) -> np.ndarray:
    """(n, n_points, 3) float32 stack of local-space strands."""
    rng = np.random.default_rng(seed)
    return np.stack([synthetic_strand(rng, n_points).points
                     for _ in range(n)]).astype(np.float32)


def synthetic_hair_map(grid: ScalpGrid, n_points: int = 100, seed: int = 0,
                       coverage: float = 1.0) -> HairMap:
    """Hair map with procedural strands on (a subset of) the valid texels."""
    rng = np.random.default_rng(seed)
    mask = grid.valid.copy()
    if coverage < 1.0:
        drop = rng.random(mask.shape) >= coverage
        mask &= ~drop
    n = int(mask.sum())
    strands = np.stack([synthetic_strand(rng, n_points).points
                        for _ in range(n)]).astype(np.float32)
    return HairMap(mask=mask, strands=strands, grid=grid)
