"""2D U-Net denoiser with cross-attention text conditioning.

Encoder/bottleneck/decoder with skip concatenations; residual blocks carry a
noise-level embedding, and cross-attention against the prompt context rows is
inserted at the configured downsample ratios.  The final output convolution
is zero-initialized, so a freshly initialized network is the zero function.

Checkpoint format "HUNT" (little-endian, CRC32 trailer):

    "HUNT" | u32 version=1 | u32 cfg_len | cfg utf8 key=value lines |
    f32 blobs of current weights in declared order |
    f32 blobs of the EMA shadow in the same order | crc32

Declared order = iteration order of param_shapes(config).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .binio import HairIOError, atomic_write, finish, read_file

HUNT_MAGIC = b"HUNT"
HUNT_VERSION = 1


@dataclass(frozen=True)
class UNetConfig:
    image_size: int = 16
    input_channels: int = 64
    model_channels: int = 32
    channel_mult: tuple = (1, 2)
    num_res_blocks: int = 1
    num_heads: int = 4
    attention_resolutions: tuple = (1, 2)
    context_dim: int = 64
    groups: int = 8


def validate_config(cfg: UNetConfig) -> None:
    factor = 2 ** (len(cfg.channel_mult) - 1)
    if cfg.image_size % factor != 0:
        raise ValueError(
            f"image_size {cfg.image_size} not divisible by 2^(levels-1)={factor}")
    if cfg.model_channels % cfg.num_heads != 0:
        raise ValueError(
            f"model_channels {cfg.model_channels} not divisible by "
            f"num_heads {cfg.num_heads}")
    if cfg.model_channels % cfg.groups != 0:
        raise ValueError(
            f"model_channels {cfg.model_channels} not divisible by "
            f"groups {cfg.groups}")
    if cfg.model_channels % 2 != 0:
        raise ValueError("model_channels must be even (sinusoidal embedding)")
    if cfg.num_res_blocks < 1 or cfg.num_heads < 1:
        raise ValueError("num_res_blocks and num_heads must be >= 1")


def param_shapes(cfg: UNetConfig) -> dict:
    """Parameter name -> shape, in declared (checkpoint) order."""
    validate_config(cfg)
    mc = cfg.model_channels
    temb = 4 * mc
    chans = [mc * m for m in cfg.channel_mult]
    shapes: dict = {}

    def res_block(prefix, c_in, c_out):
        shapes[f"{prefix}.gn1_g"] = (c_in,)
        shapes[f"{prefix}.gn1_b"] = (c_in,)
        shapes[f"{prefix}.conv1_w"] = (c_out, c_in, 3, 3)
        shapes[f"{prefix}.conv1_b"] = (c_out,)
        shapes[f"{prefix}.temb_w"] = (temb, c_out)
        shapes[f"{prefix}.temb_b"] = (c_out,)
        shapes[f"{prefix}.gn2_g"] = (c_out,)
        shapes[f"{prefix}.gn2_b"] = (c_out,)
        shapes[f"{prefix}.conv2_w"] = (c_out, c_out, 3, 3)
        shapes[f"{prefix}.conv2_b"] = (c_out,)
        if c_in != c_out:
            shapes[f"{prefix}.skip_w"] = (c_out, c_in, 1, 1)
            shapes[f"{prefix}.skip_b"] = (c_out,)

    def attn_block(prefix, ch):
        shapes[f"{prefix}.gn_g"] = (ch,)
        shapes[f"{prefix}.gn_b"] = (ch,)
        shapes[f"{prefix}.wq"] = (ch, ch)
        shapes[f"{prefix}.wk"] = (cfg.context_dim, ch)
        shapes[f"{prefix}.wv"] = (cfg.context_dim, ch)
        shapes[f"{prefix}.wo"] = (ch, ch)
        shapes[f"{prefix}.wo_b"] = (ch,)

    shapes["time.w1"] = (mc, temb)
    shapes["time.b1"] = (temb,)
    shapes["time.w2"] = (temb, temb)
    shapes["time.b2"] = (temb,)
    shapes["in.w"] = (chans[0], cfg.input_channels, 3, 3)
    shapes["in.b"] = (chans[0],)

    ch = chans[0]
    ds = 1
    for level, out_ch in enumerate(chans):
        for r in range(cfg.num_res_blocks):
            res_block(f"down{level}.res{r}", ch, out_ch)
            ch = out_ch
            if ds in cfg.attention_resolutions:
                attn_block(f"down{level}.attn{r}", ch)
        if level < len(chans) - 1:
            shapes[f"down{level}.down_w"] = (ch, ch, 3, 3)
            shapes[f"down{level}.down_b"] = (ch,)
            ds *= 2

    res_block("mid.res0", ch, ch)
    attn_block("mid.attn", ch)
    res_block("mid.res1", ch, ch)

    skip_chs = _skip_channels(cfg)
    for level in reversed(range(len(chans))):
        out_ch = chans[level]
        for r in range(cfg.num_res_blocks + 1):
            res_block(f"up{level}.res{r}", ch + skip_chs.pop(), out_ch)
            ch = out_ch
            if ds in cfg.attention_resolutions:
                attn_block(f"up{level}.attn{r}", ch)
        if level > 0:
            shapes[f"up{level}.up_w"] = (ch, ch, 3, 3)
            shapes[f"up{level}.up_b"] = (ch,)
            ds //= 2

    shapes["out.gn_g"] = (ch,)
    shapes["out.gn_b"] = (ch,)
    shapes["out.w"] = (cfg.input_channels, ch, 3, 3)
    shapes["out.b"] = (cfg.input_channels,)
    return shapes


def _skip_channels(cfg: UNetConfig):
    """Channel counts on the skip stack, in pop order for the up path."""
    mc = cfg.model_channels
    chans = [mc * m for m in cfg.channel_mult]
    stack = [chans[0]]
    ch = chans[0]
    for level, out_ch in enumerate(chans):
        for _ in range(cfg.num_res_blocks):
            ch = out_ch
            stack.append(ch)
        if level < len(chans) - 1:
            stack.append(ch)
    return stack


_ZERO_SUFFIXES = ("conv2_w", "conv2_b", "wo", "wo_b", "out.w", "out.b")


def _is_zero_init(name):
    return (name.endswith(("conv2_w", "conv2_b", "wo", "wo_b"))
            or name in ("out.w", "out.b"))


def param_count(cfg: UNetConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(cfg).values())


@dataclass
class DenoiserParams:
    """Learnable denoiser tensors plus their EMA shadow copy."""

    config: UNetConfig
    tensors: dict
    ema: dict
    sigma_data: float = 0.5

    def sampling_tensors(self, use_ema=True):
        return self.ema if use_ema else self.tensors


def init_params(cfg: UNetConfig, seed: int = 0) -> DenoiserParams:
    """Seeded initialization; zero-init output projections make the fresh
    network the zero function."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        if _is_zero_init(name) or name.endswith(("_b", ".b1", ".b2")) \
                or name.endswith("gn1_b") or name.endswith("gn2_b") \
                or name.endswith("gn_b") or name == "in.b":
            tensors[name] = np.zeros(shape, dtype=np.float32)
        elif name.endswith(("gn1_g", "gn2_g", "gn_g")):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
            tensors[name] = (rng.standard_normal(shape)
                             / np.sqrt(max(fan_in, 1))).astype(np.float32)
    ema = {k: v.copy() for k, v in tensors.items()}
    return DenoiserParams(config=cfg, tensors=tensors, ema=ema)


def sinusoidal_embedding(value: float, dim: int) -> np.ndarray:
    """Standard sin/cos embedding of a scalar noise level, (dim,) float32."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = value * freqs
    return np.concatenate([np.cos(args), np.sin(args)]).astype(np.float32)


# ---------------------------------------------------------------------------
# forward graph

def cross_attention(queries, context, wq, wk, wv, num_heads=1):
    """softmax(Q K^T / sqrt(d_head)) V with multi-head splitting.

    queries (N, d), context (T, d_ctx); weights project into the query space.
    Inputs are Tensors or arrays; returns a Tensor of shape (N, d).
    """
    queries = queries if isinstance(queries, ad.Tensor) else ad.Tensor(queries)
    context = context if isinstance(context, ad.Tensor) else ad.Tensor(context)
    wq = wq if isinstance(wq, ad.Tensor) else ad.Tensor(wq)
    wk = wk if isinstance(wk, ad.Tensor) else ad.Tensor(wk)
    wv = wv if isinstance(wv, ad.Tensor) else ad.Tensor(wv)

    d = wq.shape[1]
    if d % num_heads != 0:
        raise ValueError(f"width {d} not divisible by {num_heads} heads")
    if context.shape[0] < 1:
        raise ValueError("context must have at least one row")
    dh = d // num_heads
    scale = 1.0 / np.sqrt(dh)

    q = ad.matmul(queries, wq)
    k = ad.matmul(context, wk)
    v = ad.matmul(context, wv)
    heads = []
    for i in range(num_heads):
        cols = (slice(None), slice(i * dh, (i + 1) * dh))
        qs = ad.slice_(q, cols)
        ks = ad.slice_(k, cols)
        vs = ad.slice_(v, cols)
        logits = ad.mul(ad.matmul(qs, ad.transpose(ks, (1, 0))), scale)
        heads.append(ad.matmul(ad.softmax(logits), vs))
    return heads[0] if num_heads == 1 else ad.concat(heads, axis=1)


def _affine_gn(x, gamma, beta, groups):
    c = gamma.shape[0]
    h = ad.group_norm(x, groups)
    h = ad.mul(h, ad.reshape(gamma, (c, 1, 1)))
    return ad.add(h, ad.reshape(beta, (c, 1, 1)))


def _res_block(p, prefix, x, temb_row, groups):
    c_in = p[f"{prefix}.gn1_g"].shape[0]
    c_out = p[f"{prefix}.conv1_b"].shape[0]
    h = _affine_gn(x, p[f"{prefix}.gn1_g"], p[f"{prefix}.gn1_b"], groups)
    h = ad.conv2d(ad.silu(h), p[f"{prefix}.conv1_w"], p[f"{prefix}.conv1_b"])
    t = ad.add(ad.matmul(ad.silu(temb_row), p[f"{prefix}.temb_w"]),
               p[f"{prefix}.temb_b"])
    h = ad.add(h, ad.reshape(t, (c_out, 1, 1)))
    h = _affine_gn(h, p[f"{prefix}.gn2_g"], p[f"{prefix}.gn2_b"], groups)
    h = ad.conv2d(ad.silu(h), p[f"{prefix}.conv2_w"], p[f"{prefix}.conv2_b"])
    if c_in != c_out:
        x = ad.conv2d(x, p[f"{prefix}.skip_w"], p[f"{prefix}.skip_b"])
    return ad.add(x, h)


def _attn_block(p, prefix, x, context, num_heads, groups):
    ch, hh, ww = x.shape
    h = _affine_gn(x, p[f"{prefix}.gn_g"], p[f"{prefix}.gn_b"], groups)
    tokens = ad.transpose(ad.reshape(h, (ch, hh * ww)), (1, 0))
    att = cross_attention(tokens, context, p[f"{prefix}.wq"],
                          p[f"{prefix}.wk"], p[f"{prefix}.wv"], num_heads)
    out = ad.add(ad.matmul(att, p[f"{prefix}.wo"]), p[f"{prefix}.wo_b"])
    back = ad.reshape(ad.transpose(out, (1, 0)), (ch, hh, ww))
    return ad.add(x, back)


def unet_forward(params, z, noise_embedding, context, tensors=None):
    """Denoiser network forward pass; output shape equals input shape.

    params: DenoiserParams; z: (C, W, H) array or Tensor; noise_embedding:
    (model_channels,) vector; context: (T, context_dim).  Pass `tensors`
    (dict name -> Tensor) to build a differentiable graph for training,
    otherwise the stored weights are used read-only.
    """
    cfg = params.config
    p = tensors if tensors is not None else {
        k: ad.Tensor(v) for k, v in params.tensors.items()}
    z = z if isinstance(z, ad.Tensor) else ad.Tensor(np.asarray(z))
    if z.shape != (cfg.input_channels, cfg.image_size, cfg.image_size):
        raise ValueError(f"input shape {z.shape} does not match config "
                         f"({cfg.input_channels}, {cfg.image_size}, "
                         f"{cfg.image_size})")
    context = context if isinstance(context, ad.Tensor) \
        else ad.Tensor(np.asarray(context))
    if context.shape[1] != cfg.context_dim:
        raise ValueError(f"context dim {context.shape[1]} != config "
                         f"{cfg.context_dim}")
    emb = noise_embedding if isinstance(noise_embedding, ad.Tensor) \
        else ad.Tensor(np.asarray(noise_embedding))
    if emb.shape != (cfg.model_channels,):
        raise ValueError("noise embedding must be (model_channels,)")

    chans = [cfg.model_channels * m for m in cfg.channel_mult]
    temb = ad.add(ad.matmul(ad.silu(
        ad.add(ad.matmul(ad.reshape(emb, (1, cfg.model_channels)),
                         p["time.w1"]), p["time.b1"])),
        p["time.w2"]), p["time.b2"])

    h = ad.conv2d(z, p["in.w"], p["in.b"])
    skips = [h]
    ds = 1
    for level in range(len(chans)):
        for r in range(cfg.num_res_blocks):
            h = _res_block(p, f"down{level}.res{r}", h, temb, cfg.groups)
            if ds in cfg.attention_resolutions:
                h = _attn_block(p, f"down{level}.attn{r}", h, context,
                                cfg.num_heads, cfg.groups)
            skips.append(h)
        if level < len(chans) - 1:
            h = ad.conv2d(h, p[f"down{level}.down_w"],
                          p[f"down{level}.down_b"], stride=2)
            skips.append(h)
            ds *= 2

    h = _res_block(p, "mid.res0", h, temb, cfg.groups)
    h = _attn_block(p, "mid.attn", h, context, cfg.num_heads, cfg.groups)
    h = _res_block(p, "mid.res1", h, temb, cfg.groups)

    for level in reversed(range(len(chans))):
        for r in range(cfg.num_res_blocks + 1):
            h = ad.concat([h, skips.pop()], axis=0)
            h = _res_block(p, f"up{level}.res{r}", h, temb, cfg.groups)
            if ds in cfg.attention_resolutions:
                h = _attn_block(p, f"up{level}.attn{r}", h, context,
                                cfg.num_heads, cfg.groups)
        if level > 0:
            h = ad.conv2d(ad.resize_nearest(h, 2), p[f"up{level}.up_w"],
                          p[f"up{level}.up_b"])
            ds //= 2

    h = _affine_gn(h, p["out.gn_g"], p["out.gn_b"], cfg.groups)
    h = ad.conv2d(ad.silu(h), p["out.w"], p["out.b"])
    return h


# ---------------------------------------------------------------------------
# HUNT checkpoint io

def _config_text(cfg: UNetConfig, sigma_data: float) -> str:
    lines = [
        f"image_size={cfg.image_size}",
        f"input_channels={cfg.input_channels}",
        f"model_channels={cfg.model_channels}",
        "channel_mult=" + ",".join(str(m) for m in cfg.channel_mult),
        f"num_res_blocks={cfg.num_res_blocks}",
        f"num_heads={cfg.num_heads}",
        "attention_resolutions=" + ",".join(
            str(a) for a in cfg.attention_resolutions),
        f"context_dim={cfg.context_dim}",
        f"groups={cfg.groups}",
        f"sigma_data={sigma_data!r}",
    ]
    return "\n".join(lines) + "\n"


def _parse_config_text(text: str):
    kv = {}
    for line in text.strip().splitlines():
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()
    cfg = UNetConfig(
        image_size=int(kv["image_size"]),
        input_channels=int(kv["input_channels"]),
        model_channels=int(kv["model_channels"]),
        channel_mult=tuple(int(x) for x in kv["channel_mult"].split(",")),
        num_res_blocks=int(kv["num_res_blocks"]),
        num_heads=int(kv["num_heads"]),
        attention_resolutions=tuple(
            int(x) for x in kv["attention_resolutions"].split(",")),
        context_dim=int(kv["context_dim"]),
        groups=int(kv["groups"]),
    )
    return cfg, float(kv["sigma_data"])


def save_denoiser(path, params: DenoiserParams) -> None:
    cfg_blob = _config_text(params.config, params.sigma_data).encode("utf-8")
    parts = [HUNT_MAGIC, struct.pack("<II", HUNT_VERSION, len(cfg_blob)),
             cfg_blob]
    for name in param_shapes(params.config):
        parts.append(np.ascontiguousarray(params.tensors[name], "<f4").tobytes())
    for name in param_shapes(params.config):
        parts.append(np.ascontiguousarray(params.ema[name], "<f4").tobytes())
    atomic_write(path, finish(parts))


def load_denoiser(path) -> DenoiserParams:
    r = read_file(path)
    r.magic(HUNT_MAGIC)
    version = r.u32()
    if version != HUNT_VERSION:
        raise HairIOError(f"unsupported HUNT version {version}", offset=4)
    cfg_len = r.u32()
    cfg, sigma_data = _parse_config_text(r.take(cfg_len).decode("utf-8"))
    shapes = param_shapes(cfg)

    def section():
        out = {}
        for name, shape in shapes.items():
            count = int(np.prod(shape))
            out[name] = np.frombuffer(r.take(4 * count),
                                      dtype="<f4").copy().reshape(shape)
        return out

    tensors = section()
    ema = section()
    r.check_crc()
    return DenoiserParams(config=cfg, tensors=tensors, ema=ema,
                          sigma_data=sigma_data)
