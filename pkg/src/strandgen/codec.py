"""Variational autoencoder over local-space strands.

Encoder maps a flattened L x 3 strand to a 64-dim latent (mu and log-variance
heads); the decoder maps a latent back to an L-point local strand with the
root pinned to the origin.  Fully connected with SiLU activations, z-scored
inputs, and a KL term with linear warm-up.  Map-level encode/decode apply the
single-strand kernels texel by texel, so per-texel results match standalone
calls bit for bit.

Checkpoint format "HVAE" (little-endian, CRC32 trailer):

    "HVAE" | u32 version=1 | u32 L | u32 M | u32 hidden | f32 beta |
    blobs in declared order: norm_mu (3L), norm_sigma (3L),
    enc_w1 (3L*h), enc_b1 (h), enc_w2 (h*h), enc_b2 (h),
    enc_wmu (h*M), enc_bmu (M), enc_wlv (h*M), enc_blv (M),
    dec_w1 (M*h), dec_b1 (h), dec_w2 (h*h), dec_b2 (h),
    dec_w3 (h*3L), dec_b3 (3L) | crc32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .binio import HairIOError, atomic_write, finish, read_file
from .geometry import LOCAL, HairMap, LatentMap, ScalpGrid, Strand

HVAE_MAGIC = b"HVAE"
HVAE_VERSION = 1

_TENSOR_ORDER = ("enc_w1", "enc_b1", "enc_w2", "enc_b2",
                 "enc_wmu", "enc_bmu", "enc_wlv", "enc_blv",
                 "dec_w1", "dec_b1", "dec_w2", "dec_b2",
                 "dec_w3", "dec_b3")


@dataclass
class CodecParams:
    """Trained codec weights plus input-normalization stats."""

    strand_length: int
    latent_dim: int
    hidden: int
    beta: float
    norm_mu: np.ndarray     # (3L,)
    norm_sigma: np.ndarray  # (3L,)
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        d_in = 3 * self.strand_length
        shapes = _tensor_shapes(self.strand_length, self.latent_dim, self.hidden)
        for name in _TENSOR_ORDER:
            t = self.tensors.get(name)
            if t is None or t.shape != shapes[name]:
                raise ValueError(f"tensor {name} missing or misshaped")
        if self.norm_mu.shape != (d_in,) or self.norm_sigma.shape != (d_in,):
            raise ValueError("normalization stats must be (3L,)")


def _tensor_shapes(L, M, h):
    d = 3 * L
    return {"enc_w1": (d, h), "enc_b1": (h,), "enc_w2": (h, h), "enc_b2": (h,),
            "enc_wmu": (h, M), "enc_bmu": (M,), "enc_wlv": (h, M), "enc_blv": (M,),
            "dec_w1": (M, h), "dec_b1": (h,), "dec_w2": (h, h), "dec_b2": (h,),
            "dec_w3": (h, d), "dec_b3": (d,)}


def init_codec_params(strand_length=100, latent_dim=64, hidden=256,
                      beta=1e-4, seed=0, zero=False) -> CodecParams:
    rng = np.random.default_rng(seed)
    shapes = _tensor_shapes(strand_length, latent_dim, hidden)
    tensors = {}
    for name, shape in shapes.items():
        if zero or name.endswith(("b1", "b2", "bmu", "blv", "b3")):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = shape[0]
            tensors[name] = (rng.standard_normal(shape)
                             / np.sqrt(fan_in)).astype(np.float32)
    d = 3 * strand_length
    return CodecParams(strand_length=strand_length, latent_dim=latent_dim,
                       hidden=hidden, beta=beta,
                       norm_mu=np.zeros(d, np.float32),
                       norm_sigma=np.ones(d, np.float32), tensors=tensors)


def _np_silu(x):
    return x / (1.0 + np.exp(-x))


def _encode_kernel(p: CodecParams, flat: np.ndarray):
    """flat: (3L,) normalized input -> (mu, logvar), pure numpy."""
    t = p.tensors
    h = _np_silu(flat @ t["enc_w1"] + t["enc_b1"])
    h = _np_silu(h @ t["enc_w2"] + t["enc_b2"])
    return h @ t["enc_wmu"] + t["enc_bmu"], h @ t["enc_wlv"] + t["enc_blv"]


def _decode_kernel(p: CodecParams, z: np.ndarray):
    t = p.tensors
    h = _np_silu(z @ t["dec_w1"] + t["dec_b1"])
    h = _np_silu(h @ t["dec_w2"] + t["dec_b2"])
    return h @ t["dec_w3"] + t["dec_b3"]


def encode(params: CodecParams, strand: Strand, mode: str = "mean",
           seed: int = 0) -> np.ndarray:
    """Strand -> latent; mode "mean" returns mu, "sample" draws seeded noise."""
    if strand.space != LOCAL:
        raise ValueError("encode expects a local-space strand")
    if strand.length != params.strand_length:
        raise ValueError(f"strand length {strand.length} != codec "
                         f"{params.strand_length}")
    flat = strand.points.astype(np.float32).reshape(-1)
    flat = (flat - params.norm_mu) / params.norm_sigma
    mu, logvar = _encode_kernel(params, flat)
    if mode == "mean":
        return mu
    if mode == "sample":
        eps = np.random.default_rng(seed).standard_normal(
            params.latent_dim).astype(np.float32)
        return mu + np.exp(0.5 * logvar) * eps
    raise ValueError(f"unknown mode {mode!r}")


def decode(params: CodecParams, z: np.ndarray) -> Strand:
    """Latent -> L-point local strand, root pinned to the origin."""
    z = np.asarray(z, dtype=np.float32)
    if z.shape != (params.latent_dim,):
        raise ValueError(f"latent must be ({params.latent_dim},), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("latent must be finite")
    flat = _decode_kernel(params, z)
    pts = (flat * params.norm_sigma + params.norm_mu).reshape(-1, 3)
    pts = pts - pts[0]
    return Strand(points=pts, space=LOCAL)


def encode_map(params: CodecParams, hair_map: HairMap, mode: str = "mean",
               seed: int = 0) -> LatentMap:
    """Per-texel encode of a hair map; matches single-strand calls bit for bit."""
    if hair_map.strand_length != params.strand_length:
        raise ValueError("hair map strand length != codec length")
    n = hair_map.strands.shape[0]
    out = np.empty((n, params.latent_dim), dtype=np.float32)
    for i in range(n):
        out[i] = encode(params, Strand(hair_map.strands[i], space=LOCAL),
                        mode=mode, seed=seed + i)
    return LatentMap(mask=hair_map.mask.copy(), latents=out)


def decode_map(params: CodecParams, latent_map: LatentMap,
               grid: ScalpGrid) -> HairMap:
    """Per-texel decode; returns a local-space hair map bound to `grid`
    (world coordinates available via HairMap.world_strands)."""
    if latent_map.channels != params.latent_dim:
        raise ValueError("latent map channels != codec latent dim")
    if latent_map.mask.shape != grid.valid.shape:
        raise ValueError("latent map / grid shape mismatch")
    if np.any(latent_map.mask & ~grid.valid):
        raise ValueError("latent map mask includes texels off the scalp")
    n = latent_map.latents.shape[0]
    out = np.empty((n, params.strand_length, 3), dtype=np.float32)
    for i in range(n):
        out[i] = decode(params, latent_map.latents[i]).points
    return HairMap(mask=latent_map.mask.copy(), strands=out, grid=grid)


# ---------------------------------------------------------------------------
# training

@dataclass
class CodecTrainConfig:
    latent_dim: int = 64
    hidden: int = 256
    beta: float = 1e-4
    epochs: int = 200
    lr: float = 1e-3
    batch: int = 64
    seed: int = 0


def _codec_graph(tensors, x, eps, beta):
    """Training loss graph: recon MSE + beta * KL, batched (B, 3L) input."""
    t = tensors
    h = ad.silu(ad.add(ad.matmul(x, t["enc_w1"]), t["enc_b1"]))
    h = ad.silu(ad.add(ad.matmul(h, t["enc_w2"]), t["enc_b2"]))
    mu = ad.add(ad.matmul(h, t["enc_wmu"]), t["enc_bmu"])
    logvar = ad.add(ad.matmul(h, t["enc_wlv"]), t["enc_blv"])
    z = ad.add(mu, ad.mul(ad.exp(ad.mul(logvar, 0.5)), eps))
    g = ad.silu(ad.add(ad.matmul(z, t["dec_w1"]), t["dec_b1"]))
    g = ad.silu(ad.add(ad.matmul(g, t["dec_w2"]), t["dec_b2"]))
    recon = ad.add(ad.matmul(g, t["dec_w3"]), t["dec_b3"])

    err = ad.sub(recon, x)
    mse = ad.reduce_mean(ad.mul(err, err))
    # KL(q || N(0, I)) = 0.5 * sum(mu^2 + exp(logvar) - logvar - 1) per sample
    kl_terms = ad.sub(ad.add(ad.mul(mu, mu), ad.exp(logvar)),
                      ad.add(logvar, 1.0))
    kl = ad.mul(ad.reduce_mean(ad.reduce_sum(kl_terms, axis=1)), 0.5)
    loss = ad.add(mse, ad.mul(kl, float(beta)))
    return loss, mse, kl


def train_codec(dataset, config: CodecTrainConfig = CodecTrainConfig()):
    """Train the codec on local-space strands.

    dataset: (N, L, 3) array or list of local Strands, all the same length.
    Returns (CodecParams, report) where report carries per-epoch raw and
    smoothed losses plus the minimum KL seen.
    """
    if isinstance(dataset, np.ndarray):
        data = np.asarray(dataset, dtype=np.float32)
    else:
        strands = list(dataset)
        if any(s.space != LOCAL for s in strands):
            raise ValueError("codec trains on local-space strands")
        data = np.stack([s.points for s in strands]).astype(np.float32)
    if data.ndim != 3 or data.shape[2] != 3:
        raise ValueError("dataset must be (N, L, 3)")
    if data.shape[0] < 2:
        raise ValueError("need at least 2 strands")

    n, L, _ = data.shape
    flat = data.reshape(n, -1)
    norm_mu = flat.mean(axis=0)
    norm_sigma = np.maximum(flat.std(axis=0), 1e-6).astype(np.float32)
    x_all = (flat - norm_mu) / norm_sigma

    params = init_codec_params(L, config.latent_dim, config.hidden,
                               config.beta, seed=config.seed)
    params.norm_mu = norm_mu.astype(np.float32)
    params.norm_sigma = norm_sigma

    rng = np.random.default_rng(config.seed)
    state = ad.AdamWState(lr=config.lr, beta1=0.9, beta2=0.999, eps=1e-8,
                          weight_decay=0.0)
    warmup = max(1, config.epochs // 10)
    losses, kls = [], []
    min_kl = np.inf
    for epoch in range(config.epochs):
        beta_t = config.beta * min(1.0, (epoch + 1) / warmup)
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, config.batch):
            idx = order[start:start + config.batch]
            xb = x_all[idx]
            eps = rng.standard_normal((len(idx), config.latent_dim)) \
                .astype(np.float32)
            tensors = {k: ad.Tensor(v, requires_grad=True)
                       for k, v in params.tensors.items()}
            loss, mse, kl = _codec_graph(tensors, ad.Tensor(xb),
                                         ad.Tensor(eps), beta_t)
            if not np.isfinite(loss.data):
                raise RuntimeError(f"NaN loss at epoch {epoch}")
            min_kl = min(min_kl, float(kl.data))
            names = list(tensors)
            grads = dict(zip(names, ad.grad(loss, [tensors[k] for k in names])))
            ad.adamw_step(state, params.tensors, grads)
            epoch_loss += float(loss.data)
            batches += 1
        losses.append(epoch_loss / batches)
        kls.append(float(kl.data))

    smoothed = _moving_average(losses, window=max(1, min(5, len(losses))))
    report = {"loss": losses, "loss_smoothed": smoothed, "kl": kls,
              "min_kl": float(min_kl),
              "initial_loss": losses[0], "final_loss": losses[-1]}
    return params, report


def _moving_average(values, window):
    out = []
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out.append(float(np.mean(values[lo:i + 1])))
    return out


def reconstruction_rms(params: CodecParams, strands: np.ndarray) -> float:
    """RMS point error of decode(encode(s)) over a (N, L, 3) strand stack."""
    errs = []
    for s in strands:
        z = encode(params, Strand(s, space=LOCAL))
        rec = decode(params, z)
        errs.append(np.mean((rec.points - s) ** 2))
    return float(np.sqrt(np.mean(errs)))


# ---------------------------------------------------------------------------
# HVAE checkpoint io

def save_codec(path, params: CodecParams) -> None:
    parts = [HVAE_MAGIC,
             struct.pack("<IIII", HVAE_VERSION, params.strand_length,
                         params.latent_dim, params.hidden),
             struct.pack("<f", params.beta),
             np.ascontiguousarray(params.norm_mu, "<f4").tobytes(),
             np.ascontiguousarray(params.norm_sigma, "<f4").tobytes()]
    for name in _TENSOR_ORDER:
        parts.append(np.ascontiguousarray(params.tensors[name],
                                          "<f4").tobytes())
    atomic_write(path, finish(parts))


def load_codec(path) -> CodecParams:
    r = read_file(path)
    r.magic(HVAE_MAGIC)
    version = r.u32()
    if version != HVAE_VERSION:
        raise HairIOError(f"unsupported HVAE version {version}", offset=4)
    L = r.u32()
    M = r.u32()
    hidden = r.u32()
    beta = r.f32()
    d = 3 * L

    def blob(count):
        return np.frombuffer(r.take(4 * count), dtype="<f4").copy()

    norm_mu = blob(d)
    norm_sigma = blob(d)
    tensors = {}
    for name, shape in _tensor_shapes(L, M, hidden).items():
        tensors[name] = blob(int(np.prod(shape))).reshape(shape)
    r.check_crc()
    return CodecParams(strand_length=L, latent_dim=M, hidden=hidden, beta=beta,
                       norm_mu=norm_mu, norm_sigma=norm_sigma, tensors=tensors)
