"""Prompt embeddings: the cross-attention context for the denoiser.

Ships a deterministic builtin text embedder (FNV-1a token hash seeding a
splitmix64 stream, Gaussian rows via Box-Muller, unit-normalized) so the
toolkit runs without any external language model; embeddings produced by an
external encoder arrive through the HEMB file format instead.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .binio import HairIOError, Reader, atomic_write, finish, read_file

BUILTIN = "builtin"
EXTERNAL = "external"
NULL = "null"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass
class PromptEmbedding:
    """T x d_ctx context row matrix plus a provenance tag."""

    tokens: np.ndarray  # (T, d_ctx) float32
    provenance: str = BUILTIN

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float32)
        if self.tokens.ndim != 2:
            raise ValueError("tokens must be (T, d_ctx)")
        if not np.all(np.isfinite(self.tokens)):
            raise ValueError("embedding must be finite")
        if self.provenance == NULL and np.any(self.tokens):
            raise ValueError("null embedding must be all zeros")

    @property
    def shape(self):
        return self.tokens.shape

    def is_null(self) -> bool:
        return not np.any(self.tokens)


def null_embedding(n_tokens: int, d_ctx: int) -> PromptEmbedding:
    return PromptEmbedding(np.zeros((n_tokens, d_ctx), np.float32), NULL)


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _splitmix64(state: int):
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield (z ^ (z >> 31)) & _MASK64


def _hash_gaussians(seed: int, n: int) -> np.ndarray:
    """n standard normals from a splitmix64 stream via Box-Muller (float64)."""
    stream = _splitmix64(seed)
    out = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        # u1 in (0, 1], u2 in [0, 1)
        u1 = (next(stream) >> 11) / 9007199254740992.0
        u2 = (next(stream) >> 11) / 9007199254740992.0
        r = np.sqrt(-2.0 * np.log(1.0 - u1))
        theta = 2.0 * np.pi * u2
        out[i] = r * np.cos(theta)
        i += 1
        if i < n:
            out[i] = r * np.sin(theta)
            i += 1
    return out


def tokenize(text: str):
    """Lowercase and split on non-alphanumeric characters."""
    out, cur = [], []
    for ch in text.lower():
        if ch.isalnum():
            cur.append(ch)
        elif cur:
            out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return out


def embed_text_builtin(text: str, n_tokens: int = 16,
                       d_ctx: int = 64) -> PromptEmbedding:
    """Deterministic, platform-stable embedding of a prompt string.

    Token k of the first `n_tokens` tokens becomes a unit row seeded by
    FNV-1a(token) xor position; remaining rows stay zero.  The empty string
    gives the all-zero null embedding.
    """
    if n_tokens < 1:
        raise ValueError("n_tokens must be >= 1")
    rows = np.zeros((n_tokens, d_ctx), dtype=np.float32)
    toks = tokenize(text)
    for k, tok in enumerate(toks[:n_tokens]):
        seed = _fnv1a64(tok.encode("utf-8")) ^ (k * 0x9E3779B97F4A7C15 & _MASK64)
        g = _hash_gaussians(seed, d_ctx)
        g /= np.linalg.norm(g)
        rows[k] = g.astype(np.float32)
    prov = NULL if not toks else BUILTIN
    return PromptEmbedding(rows, prov)


def average_embeddings(embeddings) -> PromptEmbedding:
    """Elementwise mean of equal-shape embeddings."""
    embeddings = list(embeddings)
    if not embeddings:
        raise ValueError("cannot average zero embeddings")
    shape = embeddings[0].shape
    for e in embeddings[1:]:
        if e.shape != shape:
            raise ValueError(f"shape mismatch: {e.shape} vs {shape}")
    stack = np.stack([e.tokens.astype(np.float64) for e in embeddings])
    mean = stack.mean(axis=0).astype(np.float32)
    prov = NULL if not np.any(mean) else embeddings[0].provenance
    return PromptEmbedding(mean, prov)


def lerp_embeddings(e1: PromptEmbedding, e2: PromptEmbedding,
                    alpha: float) -> PromptEmbedding:
    """(1 - alpha) * e1 + alpha * e2, alpha in [0, 1]; endpoints exact."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if e1.shape != e2.shape:
        raise ValueError(f"shape mismatch: {e1.shape} vs {e2.shape}")
    if alpha == 0.0:
        return PromptEmbedding(e1.tokens.copy(), e1.provenance)
    if alpha == 1.0:
        return PromptEmbedding(e2.tokens.copy(), e2.provenance)
    mix = (1.0 - alpha) * e1.tokens.astype(np.float64) \
        + alpha * e2.tokens.astype(np.float64)
    mix = mix.astype(np.float32)
    prov = NULL if not np.any(mix) else e1.provenance
    return PromptEmbedding(mix, prov)


# ---------------------------------------------------------------------------
# HEMB file format
#
#   "HEMB" | u32 version=1 | u32 T | u32 d_ctx |
#   T*d_ctx f32 little-endian row-major | crc32

HEMB_MAGIC = b"HEMB"
HEMB_VERSION = 1


def write_embedding_file(path, embedding: PromptEmbedding) -> None:
    t, d = embedding.shape
    parts = [HEMB_MAGIC,
             struct.pack("<III", HEMB_VERSION, t, d),
             np.ascontiguousarray(embedding.tokens,
                                  dtype="<f4").tobytes()]
    atomic_write(path, finish(parts))


def read_embedding_file(path) -> PromptEmbedding:
    r = read_file(path)
    r.magic(HEMB_MAGIC)
    version = r.u32()
    if version != HEMB_VERSION:
        raise HairIOError(f"unsupported HEMB version {version}", offset=4)
    t = r.u32()
    d = r.u32()
    raw = r.take(4 * t * d)
    r.check_crc()
    tokens = np.frombuffer(raw, dtype="<f4").reshape(t, d).copy()
    prov = NULL if not np.any(tokens) else EXTERNAL
    return PromptEmbedding(tokens, prov)
