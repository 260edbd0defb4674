"""Strand-based, text-conditioned 3D hairstyle generation toolkit.

A hairstyle is a grid of 3D strand polylines over a scalp UV chart.  The
toolkit trains a strand variational autoencoder, trains a conditional
denoising diffusion model over the resulting latent maps, samples new
hairstyles from text embeddings, densifies guide strands by latent-space
interpolation, computes set-to-set distribution metrics, and performs
text-driven editing.  All numerics run on a small built-in reverse-mode
autodiff engine over numpy arrays; a deterministic built-in text embedder
keeps the pipeline self-contained, with external embeddings arriving via
HEMB files (see the annotation bridge).
"""

__version__ = "0.1.0"

from .geometry import (Frame, HairMap, LatentMap, ScalpGrid, Strand,
                       build_scalp_grid, from_local, hemisphere_grid,
                       resample, to_local)
from .conditioning import (PromptEmbedding, average_embeddings,
                           embed_text_builtin, lerp_embeddings,
                           null_embedding, read_embedding_file,
                           write_embedding_file)
from .codec import (CodecParams, CodecTrainConfig, decode, decode_map,
                    encode, encode_map, load_codec, save_codec, train_codec)
from .unet import (DenoiserParams, UNetConfig, cross_attention, init_params,
                   load_denoiser, save_denoiser, unet_forward)
from .diffusion import (NoiseSchedule, Preconditioners, TrainConfig,
                        cfg_combine, denoise, precondition, sample,
                        subsample_map, train, training_loss)
from .upsampler import blend_weight, inject_noise, strand_cosine_similarity, upsample
from .augmentation import AugmentRanges, cut, curl, expand_dataset, scale
from .metrics import cov, evaluate, latent_distance, mmd, one_nna
from .editing import (EditSession, edit, finetune_for_edit,
                      interpolate_prompts, invert_embedding)
from .hairio import (build_hair_map, export_obj, import_cyhair, read_haar,
                     read_hlat, write_haar, write_hlat)
