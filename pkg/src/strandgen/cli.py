"""Command-line surface for the hairstyle generation toolkit.

Subcommands: dataset build, train-vae, train-diff, generate, upsample,
export, metrics, edit, interp.  Every command accepts --config FILE with
plain-text key=value lines (flag names with underscores); explicit flags win
over config values.  Exit code 0 on success; failures print one
machine-parseable JSON line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

# tiny-tensor numerics: a single BLAS thread is faster and bit-stable
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np


def _lazy_imports():
    from . import (augmentation, codec, conditioning, diffusion, editing,
                   geometry, hairio, metrics, report, synthetic, unet,
                   upsampler)
    return locals()


def read_config_file(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def apply_config(args, argv, parser_flags):
    """Fill parsed args from --config for flags not given on the command line."""
    if not getattr(args, "config", None):
        return args
    cfg = read_config_file(args.config)
    given = {a.split("=")[0] for a in argv if a.startswith("--")}
    for key, raw in cfg.items():
        flag = "--" + key.replace("_", "-")
        if flag in given or not hasattr(args, key):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, raw.lower() in ("1", "true", "yes", "on"))
        elif isinstance(current, int):
            setattr(args, key, int(raw))
        elif isinstance(current, float):
            setattr(args, key, float(raw))
        else:
            setattr(args, key, raw)
    return args


def _grid_for(mods, args, width, height):
    if getattr(args, "scalp", None):
        mesh = mods["geometry"].load_obj_mesh(args.scalp)
        return mods["geometry"].build_scalp_grid(mesh, width, height)
    return mods["geometry"].hemisphere_grid(width, height)


def _load_embedding(mods, args, n_tokens, d_ctx):
    cond = mods["conditioning"]
    if getattr(args, "embedding", None):
        emb = cond.read_embedding_file(args.embedding)
        if emb.shape[1] != d_ctx:
            raise ValueError(f"embedding dim {emb.shape[1]} != model "
                             f"context dim {d_ctx}")
        return emb
    if getattr(args, "prompt", None) is not None:
        return cond.embed_text_builtin(args.prompt, n_tokens, d_ctx)
    raise ValueError("need --prompt or --embedding")


# ---------------------------------------------------------------------------
# commands

def cmd_dataset_build(args, argv):
    mods = _lazy_imports()
    geometry, hairio = mods["geometry"], mods["hairio"]
    synthetic, augmentation = mods["synthetic"], mods["augmentation"]
    cond = mods["conditioning"]

    grid = _grid_for(mods, args, args.grid_size, args.grid_size)
    base, captions = [], []
    if args.cyhair:
        for path in sorted(os.listdir(args.cyhair)):
            if not path.endswith((".hair", ".cyhair")):
                continue
            strands = hairio.import_cyhair(os.path.join(args.cyhair, path),
                                           strand_length=args.strand_points)
            base.append(hairio.build_hair_map(grid, strands,
                                              strand_length=args.strand_points))
            captions.append(os.path.splitext(path)[0].replace("_", " "))
    if args.synthetic:
        for i in range(args.synthetic):
            base.append(synthetic.synthetic_hair_map(
                grid, n_points=args.strand_points, seed=args.seed + i))
            captions.append(f"synthetic hairstyle {i}")
    if not base:
        raise ValueError("no input styles: pass --synthetic N or --cyhair DIR")

    styles = augmentation.expand_dataset(base, args.variants, seed=args.seed) \
        if args.variants > 1 else base
    os.makedirs(args.out, exist_ok=True)
    count = 0
    for si, style in enumerate(styles):
        caption = f"{captions[si // args.variants]} variant {si % args.variants}" \
            if args.variants > 1 else captions[si]
        stem = os.path.join(args.out, f"style_{si:04d}")
        hairio.write_haar(stem + ".haar", style)
        emb = cond.embed_text_builtin(caption, args.ctx_tokens, args.ctx_dim)
        cond.write_embedding_file(stem + ".hemb", emb)
        with open(stem + ".txt", "w", encoding="utf-8") as fh:
            fh.write(caption + "\n")
        count += 1
    print(f"wrote {count} styles to {args.out}")
    return 0


def cmd_train_vae(args, argv):
    mods = _lazy_imports()
    codec, hairio, report = mods["codec"], mods["hairio"], mods["report"]
    strands = []
    for path in sorted(os.listdir(args.data)):
        if path.endswith(".haar"):
            hm = hairio.read_haar(os.path.join(args.data, path))
            strands.append(hm.strands)
    if not strands:
        raise ValueError(f"no .haar files under {args.data}")
    data = np.concatenate(strands, axis=0)
    if args.max_strands and len(data) > args.max_strands:
        rng = np.random.default_rng(args.seed)
        data = data[rng.choice(len(data), args.max_strands, replace=False)]
    cfg = codec.CodecTrainConfig(latent_dim=args.latent_dim,
                                 hidden=args.hidden, beta=args.beta,
                                 epochs=args.epochs, lr=args.lr,
                                 batch=args.batch, seed=args.seed)
    params, rep = codec.train_codec(data, cfg)
    os.makedirs(args.out, exist_ok=True)
    codec.save_codec(os.path.join(args.out, "codec.hvae"), params)
    with open(os.path.join(args.out, "loss.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,loss,loss_smoothed\n")
        for i, (a, b) in enumerate(zip(rep["loss"], rep["loss_smoothed"])):
            fh.write(f"{i},{a:.8g},{b:.8g}\n")
    report.save_loss_figure(rep["loss"], os.path.join(args.out, "loss.png"),
                            title="codec training loss")
    with open(os.path.join(args.out, "config.txt"), "w",
              encoding="utf-8") as fh:
        for key, val in vars(cfg).items():
            fh.write(f"{key}={val}\n")
    print(f"codec trained: {len(data)} strands, final loss "
          f"{rep['final_loss']:.6g} -> {args.out}/codec.hvae")
    return 0


def cmd_train_diff(args, argv):
    mods = _lazy_imports()
    codec, hairio, diffusion = mods["codec"], mods["hairio"], mods["diffusion"]
    cond, unet = mods["conditioning"], mods["unet"]
    cparams = codec.load_codec(args.codec)
    dataset = []
    for path in sorted(os.listdir(args.data)):
        if not path.endswith(".haar"):
            continue
        stem = os.path.splitext(path)[0]
        hemb = os.path.join(args.data, stem + ".hemb")
        if not os.path.exists(hemb):
            raise ValueError(f"missing embedding file for {stem}")
        hm = hairio.read_haar(os.path.join(args.data, path))
        lm = codec.encode_map(cparams, hm)
        emb = cond.read_embedding_file(hemb)
        dataset.append((lm, emb))
    if not dataset:
        raise ValueError(f"no .haar files under {args.data}")
    ucfg = unet.UNetConfig(image_size=args.image_size,
                           input_channels=cparams.latent_dim,
                           model_channels=args.model_channels,
                           channel_mult=tuple(int(x) for x in
                                              args.channel_mult.split(",")),
                           num_res_blocks=args.res_blocks,
                           num_heads=args.heads,
                           attention_resolutions=tuple(
                               int(x) for x in args.attention.split(",")),
                           context_dim=dataset[0][1].shape[1])
    map_extent = dataset[0][0].shape[0]
    stride = max(1, map_extent // args.image_size)
    tcfg = diffusion.TrainConfig(batch_size=args.batch, lr=args.lr,
                                 iterations=args.iterations,
                                 ema_decay=args.ema_decay,
                                 subsample_stride=stride,
                                 seed=args.seed,
                                 checkpoint_every=args.checkpoint_every)
    params, losses = diffusion.train(dataset, ucfg, tcfg, run_dir=args.out,
                                     init_seed=args.seed)
    print(f"denoiser trained: {len(dataset)} styles, {len(losses)} iters, "
          f"final loss {losses[-1]:.6g} -> {args.out}/model.hunt")
    return 0


def cmd_generate(args, argv):
    mods = _lazy_imports()
    unet, diffusion, hairio = mods["unet"], mods["diffusion"], mods["hairio"]
    params = unet.load_denoiser(args.model)
    emb = _load_embedding(mods, args, args.ctx_tokens,
                          params.config.context_dim)
    schedule = diffusion.NoiseSchedule(steps=args.steps,
                                       sigma_data=params.sigma_data)
    lm = diffusion.sample(params, emb, schedule, w=args.guidance,
                          seed=args.seed)
    hairio.write_hlat(args.out, lm)
    print(f"generated {lm.shape[0]}x{lm.shape[1]}x{lm.channels} latent map "
          f"-> {args.out}")
    if args.decode:
        codec = mods["codec"]
        cparams = codec.load_codec(args.codec)
        grid = _grid_for(mods, args, lm.shape[1], lm.shape[0])
        lm_clipped = _clip_to_grid(lm, grid)
        hm = codec.decode_map(cparams, lm_clipped, grid)
        hairio.write_haar(args.decode, hm)
        print(f"decoded {hm.strands.shape[0]} strands -> {args.decode}")
    return 0


def _clip_to_grid(lm, grid):
    from .geometry import LatentMap

    mask = lm.mask & grid.valid
    return LatentMap.from_dense(lm.dense(), mask)


def cmd_upsample(args, argv):
    mods = _lazy_imports()
    codec, hairio, upsampler = mods["codec"], mods["hairio"], mods["upsampler"]
    lm = hairio.read_hlat(args.input)
    cparams = codec.load_codec(args.codec)
    out = upsampler.upsample(lm, (args.target, args.target), cparams,
                             noise=args.noise, seed=args.seed)
    hairio.write_hlat(args.out, out)
    print(f"upsampled {lm.shape[0]}x{lm.shape[1]} -> {args.target}x"
          f"{args.target} ({out.latents.shape[0]} strands) -> {args.out}")
    return 0


def cmd_export(args, argv):
    mods = _lazy_imports()
    codec, hairio, report = mods["codec"], mods["hairio"], mods["report"]
    if args.format != "obj":
        raise ValueError(f"unsupported export format {args.format!r}")
    if args.input.endswith(".hlat"):
        if not args.codec:
            raise ValueError("exporting a latent map needs --codec")
        lm = hairio.read_hlat(args.input)
        cparams = codec.load_codec(args.codec)
        grid = _grid_for(mods, args, lm.shape[1], lm.shape[0])
        hm = codec.decode_map(cparams, _clip_to_grid(lm, grid), grid)
    else:
        hm = hairio.read_haar(args.input)
        grid = _grid_for(mods, args, hm.shape[1], hm.shape[0])
    hairio.export_obj(hm, grid, args.out)
    print(f"exported {hm.strands.shape[0]} strands -> {args.out}")
    if args.preview:
        hm2 = mods["geometry"].HairMap(mask=hm.mask, strands=hm.strands,
                                       grid=grid)
        report.save_strand_preview(hm2.world_strands(), args.preview)
        print(f"preview -> {args.preview}")
    return 0


def _read_hlat_dir(hairio, path):
    out = []
    for name in sorted(os.listdir(path)):
        if name.endswith(".hlat"):
            out.append(hairio.read_hlat(os.path.join(path, name)))
    if not out:
        raise ValueError(f"no .hlat files under {path}")
    return out


def cmd_metrics(args, argv):
    mods = _lazy_imports()
    hairio, metrics, report = mods["hairio"], mods["metrics"], mods["report"]
    gen = _read_hlat_dir(hairio, args.generated)
    ref = _read_hlat_dir(hairio, args.reference)
    values = metrics.evaluate(gen, ref)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "metrics.csv")
    fig_path = os.path.join(args.out, "metrics.png")
    dmat = metrics.pairwise_distances(gen, ref)
    report.save_metrics_report(values, csv_path, fig_path,
                               distance_matrix=dmat)
    for name, value in values.items():
        print(f"{name},{value:.8g}")
    return 0


def cmd_edit(args, argv):
    mods = _lazy_imports()
    unet, diffusion, hairio = mods["unet"], mods["diffusion"], mods["hairio"]
    editing, cond = mods["editing"], mods["conditioning"]
    params = unet.load_denoiser(args.model)
    lm = hairio.read_hlat(args.input)
    e_tgt = _load_embedding(mods, args, args.ctx_tokens,
                            params.config.context_dim)
    e_opt, inv_curve = editing.invert_embedding(
        params, lm, e_tgt, steps=args.invert_steps, lr=args.invert_lr,
        seed=args.seed)
    tuned, ft_curve = editing.finetune_for_edit(
        params, e_opt, lm, steps=args.finetune_steps, lr=args.finetune_lr,
        seed=args.seed)
    session = editing.EditSession(input_map=lm, e_tgt=e_tgt, e_opt=e_opt,
                                  params=tuned, inversion_curve=inv_curve,
                                  finetune_curve=ft_curve)
    os.makedirs(args.out, exist_ok=True)
    editing.save_edit_session(session, args.out)
    schedule = diffusion.NoiseSchedule(steps=args.steps,
                                       sigma_data=params.sigma_data)
    edited = editing.edit(session, args.eta, schedule, w=args.guidance,
                          seed=args.seed)
    out_map = os.path.join(args.out, f"edited_eta{args.eta:g}.hlat")
    hairio.write_hlat(out_map, edited)
    print(f"edit session -> {args.out} (map {out_map})")
    return 0


def cmd_interp(args, argv):
    mods = _lazy_imports()
    unet, diffusion, hairio = mods["unet"], mods["diffusion"], mods["hairio"]
    editing, cond = mods["editing"], mods["conditioning"]
    params = unet.load_denoiser(args.model)
    d_ctx = params.config.context_dim
    e1 = cond.embed_text_builtin(args.prompt_a, args.ctx_tokens, d_ctx)
    e2 = cond.embed_text_builtin(args.prompt_b, args.ctx_tokens, d_ctx)
    alphas = [float(a) for a in args.alphas.split(",")]
    schedule = diffusion.NoiseSchedule(steps=args.steps,
                                       sigma_data=params.sigma_data)
    maps = editing.interpolate_prompts(params, e1, e2, alphas, schedule,
                                       w=args.guidance, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    for alpha, lm in zip(alphas, maps):
        path = os.path.join(args.out, f"interp_alpha{alpha:g}.hlat")
        hairio.write_hlat(path, lm)
    print(f"wrote {len(maps)} interpolated maps -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="strandgen",
        description="strand-based text-conditioned hairstyle generation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, default=0)
        return p

    ds = sub.add_parser("dataset", help="dataset tooling")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    p = common(ds_sub.add_parser("build",
                                 help="import/synthesize, align, augment"))
    p.add_argument("--synthetic", type=int, default=0,
                   help="number of synthetic base styles")
    p.add_argument("--cyhair", help="directory of cyHair files to import")
    p.add_argument("--scalp", help="scalp mesh OBJ (default: hemisphere)")
    p.add_argument("--grid-size", type=int, default=256)
    p.add_argument("--strand-points", type=int, default=100)
    p.add_argument("--variants", type=int, default=1,
                   help="augmented variants per style")
    p.add_argument("--ctx-tokens", type=int, default=16)
    p.add_argument("--ctx-dim", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset_build)

    p = common(sub.add_parser("train-vae", help="train the strand codec"))
    p.add_argument("--data", required=True, help="directory of .haar files")
    p.add_argument("--out", required=True)
    p.add_argument("--latent-dim", type=int, default=64)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--beta", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--max-strands", type=int, default=0)
    p.set_defaults(func=cmd_train_vae)

    p = common(sub.add_parser("train-diff", help="train the denoiser"))
    p.add_argument("--data", required=True,
                   help="directory of .haar + .hemb pairs")
    p.add_argument("--codec", required=True, help="codec .hvae checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--model-channels", type=int, default=32)
    p.add_argument("--channel-mult", default="1,2")
    p.add_argument("--res-blocks", type=int, default=1)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--attention", default="1,2")
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--ema-decay", type=float, default=0.999)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.set_defaults(func=cmd_train_diff)

    p = common(sub.add_parser("generate", help="sample a hairstyle"))
    p.add_argument("--model", required=True, help="denoiser .hunt checkpoint")
    p.add_argument("--prompt")
    p.add_argument("--embedding", help=".hemb file instead of --prompt")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--guidance", type=float, default=1.5)
    p.add_argument("--ctx-tokens", type=int, default=16)
    p.add_argument("--out", required=True, help="output .hlat path")
    p.add_argument("--decode", help="also decode to this .haar path")
    p.add_argument("--codec", help="codec .hvae (needed with --decode)")
    p.add_argument("--scalp")
    p.set_defaults(func=cmd_generate)

    p = common(sub.add_parser("upsample", help="densify a latent map"))
    p.add_argument("--input", required=True, help="guide .hlat")
    p.add_argument("--codec", required=True)
    p.add_argument("--target", type=int, default=512)
    p.add_argument("--noise", choices=("on", "off"), default="off")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_upsample)

    p = common(sub.add_parser("export", help="export strands for rendering"))
    p.add_argument("--input", required=True, help=".haar or .hlat")
    p.add_argument("--format", default="obj")
    p.add_argument("--codec", help="codec .hvae (for .hlat input)")
    p.add_argument("--scalp")
    p.add_argument("--out", required=True)
    p.add_argument("--preview", help="optional PNG preview path")
    p.set_defaults(func=cmd_export)

    p = common(sub.add_parser("metrics", help="distribution metrics"))
    p.add_argument("--generated", required=True, help="directory of .hlat")
    p.add_argument("--reference", required=True, help="directory of .hlat")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_metrics)

    p = common(sub.add_parser("edit", help="text-driven editing"))
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="input .hlat")
    p.add_argument("--prompt")
    p.add_argument("--embedding")
    p.add_argument("--eta", type=float, default=0.7)
    p.add_argument("--invert-steps", type=int, default=1500)
    p.add_argument("--invert-lr", type=float, default=1e-3)
    p.add_argument("--finetune-steps", type=int, default=600)
    p.add_argument("--finetune-lr", type=float, default=1e-4)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--guidance", type=float, default=1.5)
    p.add_argument("--ctx-tokens", type=int, default=16)
    p.add_argument("--out", required=True, help="session directory")
    p.set_defaults(func=cmd_edit)

    p = common(sub.add_parser("interp", help="prompt interpolation"))
    p.add_argument("--model", required=True)
    p.add_argument("--prompt-a", required=True)
    p.add_argument("--prompt-b", required=True)
    p.add_argument("--alphas", default="0,0.25,0.5,0.75,1")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--guidance", type=float, default=1.5)
    p.add_argument("--ctx-tokens", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interp)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = apply_config(args, argv, parser)
        return args.func(args, argv)
    except SystemExit as exc:  # argparse errors keep their exit code
        return int(exc.code or 0)
    except Exception as exc:
        line = json.dumps({"error": type(exc).__name__, "message": str(exc),
                           "command": argv[0] if argv else None})
        print(line, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
