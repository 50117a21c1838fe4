"""pvkit: explain a frozen image classifier by inverting its latent space.

A trained decoder reconstructs what the model's latent representation
encodes; a class-discriminative saliency map selects which parts of that
reconstruction to show. The composite image answers both "where is the model
looking" and "what does it see there".
"""

from .compose import PVExplanation, compose_pv, explain
from .decoder import DecoderConfig, Reconstruction, build_decoder, decode
from .losses import (LossReport, LossWeights, composite_loss, dsim_loss,
                     mse_loss, ssim_index, ssim_loss)
from .model_core import (ClassScores, Encoder, LatentTensor, ModelBundle,
                         encode, load_classifier, predict, prediction_set,
                         truncate_encoder)
from .saliency import SaliencyMap, grad_cam, normalize_map, upsample_map
from .trainer import TrainConfig, evaluate_reconstruction, train_decoder

__all__ = [
    "ClassScores", "DecoderConfig", "Encoder", "LatentTensor", "LossReport",
    "LossWeights", "ModelBundle", "PVExplanation", "Reconstruction",
    "SaliencyMap", "TrainConfig", "build_decoder", "compose_pv",
    "composite_loss", "decode", "dsim_loss", "encode", "evaluate_reconstruction",
    "explain", "grad_cam", "load_classifier", "mse_loss", "normalize_map",
    "predict", "prediction_set", "ssim_index", "ssim_loss", "train_decoder",
    "truncate_encoder", "upsample_map",
]

__version__ = "0.1.0"
