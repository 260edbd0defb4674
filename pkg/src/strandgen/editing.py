"""Text-driven hairstyle editing on a trained denoiser.

Stage 1 inverts the input: starting from the target-prompt embedding e_tgt,
an embedding e_opt is optimized (Adam, model frozen) so the denoiser
reconstructs the input latent map under the training reconstruction loss.
Stage 2 freezes e_opt and fine-tunes the denoiser weights (AdamW) on the
same objective.  Edits then sample with the interpolated conditioning
eta * e_tgt + (1 - eta) * e_opt: eta 0 reproduces the input, eta 1 follows
the prompt.  Prompt-to-prompt interpolation reuses the sampler with
(1 - alpha) * e1 + alpha * e2 under a shared seed.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import diffusion as df
from . import unet as un
from .conditioning import (PromptEmbedding, lerp_embeddings,
                           write_embedding_file)
from .geometry import LatentMap


@dataclass
class EditSession:
    """Input map, its two embeddings, and the fine-tuned denoiser."""

    input_map: LatentMap
    e_tgt: PromptEmbedding
    e_opt: PromptEmbedding
    params: un.DenoiserParams
    inversion_curve: list = field(default_factory=list)
    finetune_curve: list = field(default_factory=list)


def _as_chw(lmap) -> np.ndarray:
    if isinstance(lmap, LatentMap):
        return np.transpose(lmap.dense(), (2, 0, 1)).astype(np.float32)
    return np.asarray(lmap, dtype=np.float32)


def _recon_loss_graph(params, frozen, z, ctx_tensor, sigma, eps, gamma):
    """lambda(sigma) * ||D(z + eps * sigma, sigma, e) - z||^2 as a graph."""
    z_t = z + eps * sigma
    d = df.denoise(params, z_t, sigma, ctx_tensor, tensors=frozen)
    lam = df.soft_min_snr_weight(sigma, params.sigma_data, gamma)
    err = ad.sub(d, ad.Tensor(z))
    return ad.mul(ad.reduce_sum(ad.mul(err, err)), float(lam))


def _eval_pairs(params, seed, count, sigma_mean=-1.2, sigma_std=1.2):
    """Fixed (sigma, eps) pairs shared by all loss evaluations.

    Sigmas sit at the quantiles of the training noise distribution
    (stratified, so the fixed-size evaluation covers the whole spectrum
    instead of gambling on random draws); the noise images are seeded.
    """
    from scipy.special import ndtri

    rng = np.random.default_rng([seed, 0xE7A1])
    cfg = params.config
    shape = (cfg.input_channels, cfg.image_size, cfg.image_size)
    pairs = []
    for k in range(count):
        z = ndtri((k + 0.5) / count)
        sigma = float(np.exp(sigma_mean + sigma_std * z))
        eps = rng.standard_normal(shape).astype(np.float32)
        pairs.append((sigma, eps))
    return pairs


def reconstruction_loss(params, z, embedding, pairs, gamma=5.0) -> float:
    """Deterministic reconstruction loss over the fixed evaluation pairs."""
    frozen = {k: ad.Tensor(v) for k, v in params.tensors.items()}
    ctx = ad.Tensor(embedding.tokens if isinstance(embedding, PromptEmbedding)
                    else np.asarray(embedding))
    total = 0.0
    for sigma, eps in pairs:
        loss = _recon_loss_graph(params, frozen, z, ctx, sigma, eps, gamma)
        total += float(loss.data)
    return total / len(pairs)


def invert_embedding(params: un.DenoiserParams, z_in, e_tgt: PromptEmbedding,
                     steps: int = 1500, lr: float = 1e-3, seed: int = 0,
                     gamma: float = 5.0, eval_every: int = 50,
                     eval_count: int = 8, use_ema: bool = True):
    """Optimize an embedding to reconstruct `z_in` with the model frozen.

    Adam (no weight decay) from e_tgt; each step draws a fresh (sigma, eps)
    from the training noise distribution.  The best iterate under the fixed
    evaluation pairs is returned together with the evaluation loss curve;
    steps=0 returns e_tgt unchanged.
    """
    sampling = df.replace_tensors(params, use_ema)
    z = _as_chw(z_in)
    e = {"e": e_tgt.tokens.copy().astype(np.float32)}
    if steps == 0:
        return PromptEmbedding(e["e"], e_tgt.provenance), []

    pairs = _eval_pairs(sampling, seed, eval_count)
    frozen = {k: ad.Tensor(v) for k, v in sampling.tensors.items()}
    rng = np.random.default_rng([seed, 0x1A2B])
    state = ad.AdamWState(lr=lr, beta1=0.9, beta2=0.999, eps=1e-8,
                          weight_decay=0.0)

    def eval_loss():
        return reconstruction_loss(
            sampling, z, PromptEmbedding(e["e"].copy()), pairs, gamma)

    curve = [(0, eval_loss())]
    best_loss = curve[0][1]
    best_e = e["e"].copy()
    cfg = sampling.config
    shape = (cfg.input_channels, cfg.image_size, cfg.image_size)
    for step in range(1, steps + 1):
        sigma = float(np.exp(rng.normal(-1.2, 1.2)))
        eps = rng.standard_normal(shape).astype(np.float32)
        ctx = ad.Tensor(e["e"], requires_grad=True)
        loss = _recon_loss_graph(sampling, frozen, z, ctx, sigma, eps, gamma)
        if not np.isfinite(loss.data):
            raise RuntimeError(f"inversion diverged at step {step}")
        (g,) = ad.grad(loss, [ctx])
        ad.adamw_step(state, e, {"e": g})
        if step % eval_every == 0 or step == steps:
            val = eval_loss()
            curve.append((step, val))
            if val < best_loss:
                best_loss = val
                best_e = e["e"].copy()
    return PromptEmbedding(best_e), curve


def finetune_for_edit(params: un.DenoiserParams, e_opt: PromptEmbedding,
                      z_in, steps: int = 600, lr: float = 1e-4,
                      seed: int = 0, gamma: float = 5.0,
                      eval_every: int = 50, eval_count: int = 8,
                      use_ema: bool = True):
    """Fine-tune the denoiser on the reconstruction objective, e_opt frozen.

    AdamW (betas 0.95/0.999, eps 1e-6, weight decay 1e-3).  Returns new
    DenoiserParams whose live and EMA weights are the fine-tuned copies;
    steps=0 returns a bit-identical copy.
    """
    sampling = df.replace_tensors(params, use_ema)
    tensors = {k: v.copy() for k, v in sampling.tensors.items()}
    tuned = un.DenoiserParams(config=params.config, tensors=tensors,
                              ema={k: v.copy() for k, v in tensors.items()},
                              sigma_data=params.sigma_data)
    if steps == 0:
        return tuned, []

    z = _as_chw(z_in)
    ctx_const = ad.Tensor(e_opt.tokens)
    pairs = _eval_pairs(tuned, seed, eval_count)
    rng = np.random.default_rng([seed, 0x3C4D])
    state = ad.AdamWState(lr=lr, beta1=0.95, beta2=0.999, eps=1e-6,
                          weight_decay=1e-3)
    curve = [(0, reconstruction_loss(tuned, z, e_opt, pairs, gamma))]
    cfg = tuned.config
    shape = (cfg.input_channels, cfg.image_size, cfg.image_size)
    for step in range(1, steps + 1):
        sigma = float(np.exp(rng.normal(-1.2, 1.2)))
        eps = rng.standard_normal(shape).astype(np.float32)
        live = {k: ad.Tensor(v, requires_grad=True)
                for k, v in tuned.tensors.items()}
        loss = _recon_loss_graph(tuned, live, z, ctx_const, sigma, eps, gamma)
        if not np.isfinite(loss.data):
            raise RuntimeError(f"fine-tuning diverged at step {step}")
        names = list(live)
        grads = dict(zip(names, ad.grad(loss, [live[k] for k in names])))
        ad.adamw_step(state, tuned.tensors, grads)
        if step % eval_every == 0 or step == steps:
            curve.append((step,
                          reconstruction_loss(tuned, z, e_opt, pairs, gamma)))
    for k in tuned.tensors:
        tuned.ema[k] = tuned.tensors[k].copy()
    return tuned, curve


def edit(session: EditSession, eta: float, schedule: df.NoiseSchedule,
         w: float = 1.5, seed: int = 0) -> LatentMap:
    """Sample with conditioning eta * e_tgt + (1 - eta) * e_opt."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    conditioning = lerp_embeddings(session.e_opt, session.e_tgt, eta)
    return df.sample(session.params, conditioning, schedule, w=w, seed=seed,
                     use_ema=False)


def interpolate_prompts(params: un.DenoiserParams, e1: PromptEmbedding,
                        e2: PromptEmbedding, alphas, schedule,
                        w: float = 1.5, seed: int = 0):
    """One sample per alpha with conditioning (1-a) * e1 + a * e2, shared seed."""
    out = []
    for alpha in alphas:
        conditioning = lerp_embeddings(e1, e2, float(alpha))
        out.append(df.sample(params, conditioning, schedule, w=w, seed=seed))
    return out


def save_edit_session(session: EditSession, out_dir) -> None:
    """Persist the session: embeddings, fine-tuned weights, loss curves."""
    os.makedirs(out_dir, exist_ok=True)
    write_embedding_file(os.path.join(out_dir, "e_tgt.hemb"), session.e_tgt)
    write_embedding_file(os.path.join(out_dir, "e_opt.hemb"), session.e_opt)
    un.save_denoiser(os.path.join(out_dir, "params.hunt"), session.params)
    for name, curve in (("inversion_loss", session.inversion_curve),
                        ("finetune_loss", session.finetune_curve)):
        if not curve:
            continue
        with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss"])
            for step, val in curve:
                writer.writerow([step, f"{val:.8g}"])
        from .report import save_loss_figure
        save_loss_figure([v for _, v in curve],
                         os.path.join(out_dir, f"{name}.png"),
                         title=name.replace("_", " "))
