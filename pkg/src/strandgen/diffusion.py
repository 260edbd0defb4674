"""Denoising diffusion over latent hair maps.

Preconditioned denoiser D(Z_t, sigma, ctx) = c_skip * Z_t
+ c_out * F(c_in * Z_t, c_noise, ctx) with the closed-form factors

    c_skip = sd^2 / (s^2 + sd^2)      c_out = s * sd / sqrt(s^2 + sd^2)
    c_in   = 1 / sqrt(s^2 + sd^2)     c_noise = ln(s) / 4

trained with a soft Min-SNR weighted squared error on Z_t = Z + eps * sigma,
10% null-conditioning dropout for classifier-free guidance, strided map
subsampling to the model resolution, AdamW, and an EMA shadow used for
sampling.  Sampling is stochastic Euler (ancestral) on a power-law sigma
grid, combining conditional and null-context denoiser calls with guidance
weight w.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import unet as un
from .conditioning import PromptEmbedding, null_embedding
from .geometry import LatentMap


@dataclass(frozen=True)
class Preconditioners:
    c_skip: float
    c_out: float
    c_in: float
    c_noise: float


def precondition(sigma: float, sigma_data: float) -> Preconditioners:
    """Noise-level scalings for the preconditioned denoiser."""
    if sigma_data <= 0:
        raise ValueError(f"sigma_data must be positive, got {sigma_data}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    s2 = sigma * sigma + sigma_data * sigma_data
    with np.errstate(divide="ignore"):
        c_noise = 0.25 * np.log(sigma)
    return Preconditioners(
        c_skip=sigma_data * sigma_data / s2,
        c_out=sigma * sigma_data / np.sqrt(s2),
        c_in=1.0 / np.sqrt(s2),
        c_noise=float(c_noise),
    )


@dataclass(frozen=True)
class NoiseSchedule:
    """Decreasing sigma grid (power-law spacing), final entry exactly 0."""

    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    steps: int = 50
    sigma_data: float = 0.5
    sigmas: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.sigmas is None:
            object.__setattr__(self, "sigmas", _sigma_grid(
                self.sigma_min, self.sigma_max, self.rho, self.steps))
        s = self.sigmas
        if s[0] != self.sigma_max or s[-1] != 0.0:
            raise ValueError("schedule must start at sigma_max and end at 0")
        if np.any(np.diff(s) >= 0):
            raise ValueError("sigma sequence must be strictly decreasing")


def _sigma_grid(sigma_min, sigma_max, rho, steps):
    ramp = np.linspace(0.0, 1.0, steps)
    inv_rho_min = sigma_min ** (1.0 / rho)
    inv_rho_max = sigma_max ** (1.0 / rho)
    sig = (inv_rho_max + ramp * (inv_rho_min - inv_rho_max)) ** rho
    sig[0] = sigma_max
    return np.concatenate([sig, [0.0]])


@dataclass
class TrainConfig:
    batch_size: int = 8
    lr: float = 1e-4
    lr_final: float = None  # cosine-decay target; None keeps lr constant
    beta1: float = 0.95
    beta2: float = 0.999
    eps: float = 1e-6
    weight_decay: float = 1e-3
    iterations: int = 1000
    ema_decay: float = 0.999
    null_prob: float = 0.1
    min_snr_gamma: float = 5.0
    subsample_stride: int = 8
    seed: int = 0
    sigma_mean: float = -1.2   # ln(sigma) ~ Normal(sigma_mean, sigma_std^2)
    sigma_std: float = 1.2
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0.0 <= self.null_prob <= 1.0:
            raise ValueError("null_prob must be in [0, 1]")

    def lr_at(self, iteration: int) -> float:
        if self.lr_final is None:
            return self.lr
        t = iteration / max(1, self.iterations - 1)
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (
            1.0 + np.cos(np.pi * t))


def soft_min_snr_weight(sigma, sigma_data, gamma=5.0):
    """gamma * SNR / (SNR + gamma), SNR = sigma_data^2 / sigma^2."""
    snr = (sigma_data * sigma_data) / (sigma * sigma)
    return gamma * snr / (snr + gamma)


def denoise(params: un.DenoiserParams, z_t, sigma, context, tensors=None,
            sigma_data=None):
    """Preconditioned denoiser output (Tensor when building a train graph)."""
    if sigma <= 0:
        raise ValueError(f"denoise needs sigma > 0, got {sigma}")
    sd = params.sigma_data if sigma_data is None else sigma_data
    c = precondition(sigma, sd)
    ctx = context.tokens if isinstance(context, PromptEmbedding) else context
    emb = un.sinusoidal_embedding(c.c_noise, params.config.model_channels)
    z_t = z_t if isinstance(z_t, ad.Tensor) else ad.Tensor(np.asarray(z_t))
    f = un.unet_forward(params, ad.mul(z_t, c.c_in), emb, ctx, tensors=tensors)
    d = ad.add(ad.mul(z_t, c.c_skip), ad.mul(f, c.c_out))
    return d if tensors is not None else d.data


def cfg_combine(d_cond, d_uncond, w: float):
    """d_uncond + w * (d_cond - d_uncond); exact passthrough at w in {0, 1}."""
    d_cond = np.asarray(d_cond)
    d_uncond = np.asarray(d_uncond)
    if d_cond.shape != d_uncond.shape:
        raise ValueError("shape mismatch in guidance combine")
    if w == 0.0:
        return d_uncond
    if w == 1.0:
        return d_cond
    return d_uncond + w * (d_cond - d_uncond)


def subsample_map(lmap: LatentMap, stride: int = 8,
                  offset=(0, 0)) -> LatentMap:
    """Strided texel subsampling; the mask is subsampled identically."""
    h, w = lmap.shape
    oy, ox = offset
    if stride < 1 or h % stride or w % stride:
        raise ValueError(f"stride {stride} must divide map extent {h}x{w}")
    if not (0 <= oy < stride and 0 <= ox < stride):
        raise ValueError(f"offset {offset} out of range for stride {stride}")
    dense = lmap.dense()[oy::stride, ox::stride]
    mask = lmap.mask[oy::stride, ox::stride]
    return LatentMap.from_dense(dense, mask)


def training_loss(params: un.DenoiserParams, maps, contexts, rng,
                  config: TrainConfig):
    """One batch of the weighted denoising loss; returns (loss, grads).

    maps: (B, C, H, W) clean latent tensors at the model resolution;
    contexts: list of (T, d_ctx) arrays.  Per sample: sigma from the
    log-normal train distribution, Z_t = Z + eps * sigma, context zeroed
    with probability null_prob, loss = mean_b[ lambda(sigma) * ||D - Z||^2 ].
    """
    if len(maps) == 0:
        raise ValueError("empty batch")
    tensors = {k: ad.Tensor(v, requires_grad=True)
               for k, v in params.tensors.items()}
    per_sample = []
    for z, ctx in zip(maps, contexts):
        sigma = float(np.exp(rng.normal(config.sigma_mean, config.sigma_std)))
        eps = rng.standard_normal(z.shape).astype(np.float32)
        if rng.random() < config.null_prob:
            ctx = np.zeros_like(ctx)
        z_t = z + eps * sigma
        d = denoise(params, z_t, sigma, ctx, tensors=tensors)
        lam = soft_min_snr_weight(sigma, params.sigma_data,
                                  config.min_snr_gamma)
        err = ad.sub(d, ad.Tensor(z))
        per_sample.append(ad.mul(ad.reduce_sum(ad.mul(err, err)), float(lam)))
    total = per_sample[0]
    for term in per_sample[1:]:
        total = ad.add(total, term)
    loss = ad.mul(total, 1.0 / len(per_sample))
    value = float(loss.data)
    if not np.isfinite(value):
        raise RuntimeError(f"non-finite training loss (sigma={sigma})")
    names = list(tensors)
    grads = dict(zip(names, ad.grad(loss, [tensors[k] for k in names])))
    return value, grads


def sample(params: un.DenoiserParams, context, schedule: NoiseSchedule,
           w: float = 1.5, seed: int = 0, use_ema: bool = True) -> LatentMap:
    """Stochastic Euler (ancestral) sampling from noise to a latent map.

    Two denoiser evaluations per step (prompt context and the null context)
    are blended by the guidance weight; fresh noise sigma_up re-enters after
    every step except the last.
    """
    if w < 0:
        raise ValueError("guidance weight must be >= 0")
    cfg = params.config
    ctx = context.tokens if isinstance(context, PromptEmbedding) else context
    ctx = np.asarray(ctx, dtype=np.float32)
    null_ctx = np.zeros_like(ctx)
    sampling = replace_tensors(params, use_ema)

    rng = np.random.default_rng(seed)
    shape = (cfg.input_channels, cfg.image_size, cfg.image_size)
    z = schedule.sigmas[0] * rng.standard_normal(shape).astype(np.float32)
    for i in range(len(schedule.sigmas) - 1):
        s_i = float(schedule.sigmas[i])
        s_next = float(schedule.sigmas[i + 1])
        d_cond = denoise(sampling, z, s_i, ctx)
        d_uncond = denoise(sampling, z, s_i, null_ctx)
        d_w = cfg_combine(d_cond, d_uncond, w)
        slope = (z - d_w) / s_i
        sigma_up = np.sqrt(s_next ** 2 * (s_i ** 2 - s_next ** 2) / s_i ** 2)
        sigma_down = np.sqrt(s_next ** 2 - sigma_up ** 2)
        z = z + slope * (sigma_down - s_i)
        if s_next > 0:
            z = z + sigma_up * rng.standard_normal(shape).astype(np.float32)
        if not np.all(np.isfinite(z)):
            raise RuntimeError(f"non-finite sample state at step {i}")
    h = cfg.image_size
    dense = np.transpose(z, (1, 2, 0))
    return LatentMap.from_dense(dense, np.ones((h, h), dtype=bool))


def replace_tensors(params: un.DenoiserParams, use_ema: bool):
    """View of params with the chosen weight set active (no copies)."""
    if not use_ema:
        return params
    return un.DenoiserParams(config=params.config, tensors=params.ema,
                             ema=params.ema, sigma_data=params.sigma_data)


def estimate_sigma_data(dataset) -> float:
    """Std of all valid latents across the training maps (fallback 0.5)."""
    vals = np.concatenate([lm.latents.reshape(-1) for lm, _ in dataset])
    sd = float(vals.std())
    return sd if sd > 1e-6 else 0.5


def train(dataset, unet_config: un.UNetConfig,
          config: TrainConfig = TrainConfig(), run_dir=None,
          init_seed: int = 0):
    """Train the denoiser on (LatentMap, PromptEmbedding) pairs.

    Maps larger than the model resolution are strided-subsampled with a
    random per-iteration offset.  Returns (DenoiserParams, loss curve); when
    `run_dir` is given, writes a config snapshot, the loss curve CSV (and
    figure), plus periodic checkpoints.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty dataset")
    params = un.init_params(unet_config, seed=init_seed)
    params.sigma_data = estimate_sigma_data(dataset)

    rng = np.random.default_rng(config.seed)
    state = ad.AdamWState(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                          eps=config.eps, weight_decay=config.weight_decay)

    size = unet_config.image_size
    losses = []
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        _write_config_snapshot(os.path.join(run_dir, "config.txt"),
                               unet_config, config, params.sigma_data)

    initial = None
    for it in range(config.iterations):
        idx = rng.integers(len(dataset), size=config.batch_size)
        maps, ctxs = [], []
        for j in idx:
            lmap, emb = dataset[j]
            h, w_ = lmap.shape
            if (h, w_) != (size, size):
                stride = config.subsample_stride
                if h != size * stride or w_ != size * stride:
                    raise ValueError(
                        f"map {h}x{w_} is not model size {size} times "
                        f"subsample stride {stride}")
                off = (int(rng.integers(stride)), int(rng.integers(stride)))
                lmap = subsample_map(lmap, stride=stride, offset=off)
            maps.append(np.transpose(lmap.dense(), (2, 0, 1)))
            ctxs.append(emb.tokens if isinstance(emb, PromptEmbedding) else emb)
        value, grads = training_loss(params, maps, ctxs, rng, config)
        state.lr = config.lr_at(it)
        ad.adamw_step(state, params.tensors, grads)
        ad.ema_update(params.ema, params.tensors, config.ema_decay)
        losses.append(value)
        if initial is None:
            initial = value
        elif value > 1e3 * initial:
            raise RuntimeError(
                f"training diverged at iteration {it}: loss {value:.3e} "
                f"vs initial {initial:.3e}")
        if (run_dir is not None and config.checkpoint_every
                and (it + 1) % config.checkpoint_every == 0):
            un.save_denoiser(
                os.path.join(run_dir, f"ckpt_{it + 1:06d}.hunt"), params)

    if run_dir is not None:
        _write_loss_csv(os.path.join(run_dir, "loss.csv"), losses)
        un.save_denoiser(os.path.join(run_dir, "model.hunt"), params)
        from .report import save_loss_figure
        save_loss_figure(losses, os.path.join(run_dir, "loss.png"),
                         title="denoiser training loss")
    return params, losses


def _write_config_snapshot(path, unet_config, config, sigma_data):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(un._config_text(unet_config, sigma_data))
        for key, val in vars(config).items():
            fh.write(f"{key}={val}\n")


def _write_loss_csv(path, losses):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        for i, v in enumerate(losses):
            writer.writerow([i, f"{v:.8g}"])
