import json
from pathlib import Path

import numpy as np
import pytest
import torch

from pvkit import synthetic
from pvkit.decoder import DecoderConfig, build_decoder
from pvkit.digests import digest_module
from pvkit.model_core import ModelBundle, new_classifier, truncate_encoder
from pvkit.trainer import TrainConfig, train_decoder

DESK_DECODER_CHANNELS = [64, 32, 32]


@pytest.fixture(scope="session")
def desk_root(tmp_path_factory):
    """Small on-disk synthetic dataset (150 train / 60 eval images)."""
    root = tmp_path_factory.mktemp("desk_data")
    synthetic.make_dataset(root, 150, seed=0, split="train")
    synthetic.make_dataset(root, 60, seed=1, split="eval", append=True)
    return root


@pytest.fixture(scope="session")
def desk_weights(tmp_path_factory):
    path = tmp_path_factory.mktemp("desk_model") / "classifier.pt"
    synthetic.train_desk_classifier(path, seed=0, n_images=1500, epochs=12, lr=2e-3)
    return path


@pytest.fixture(scope="session")
def desk_bundle(desk_weights):
    return synthetic.desk_bundle(desk_weights)


@pytest.fixture(scope="session")
def desk_encoder(desk_bundle):
    return truncate_encoder(desk_bundle)


@pytest.fixture(scope="session")
def train_images():
    return synthetic.images_in_memory(800, seed=42)


@pytest.fixture(scope="session")
def heldout_images():
    return synthetic.images_in_memory(200, seed=7777)


def desk_decoder_config():
    return DecoderConfig.for_shapes((4, 4, 64), (32, 32, 3),
                                    channels=DESK_DECODER_CHANNELS)


@pytest.fixture(scope="session")
def trained_checkpoint(desk_encoder, train_images):
    """The reference desk-scale training run; reused by several suites."""
    dec = build_decoder(desk_decoder_config(), seed=0)
    cfg = TrainConfig(epochs=30, batch_size=16, seed=0, learning_rate=1e-3,
                      dataset_id="desk-mem-42")
    return train_decoder(cfg, desk_encoder, dec, train_images)


@pytest.fixture(scope="session")
def trained_decoder(trained_checkpoint):
    return trained_checkpoint.decoder


@pytest.fixture(scope="session")
def twin_decoders(desk_encoder, train_images):
    """Two decoders trained on disjoint halves of the desk dataset."""
    half = train_images.shape[0] // 2
    out = []
    for seed, imgs in ((1, train_images[:half]), (2, train_images[half:])):
        dec = build_decoder(desk_decoder_config(), seed=seed)
        cfg = TrainConfig(epochs=24, batch_size=16, seed=seed,
                          learning_rate=1e-3, dataset_id=f"half-{seed}")
        train_decoder(cfg, desk_encoder, dec, imgs)
        out.append(dec)
    return tuple(out)


@pytest.fixture()
def untrained_decoder():
    return build_decoder(desk_decoder_config(), seed=999)


def make_tiny_bundle():
    """Single linear feature map, linear head: latent A is one 2x2 plane and
    class-0 score is proportional to mean(A). Class 1 has weight -1."""
    desc = {"name": "tiny", "input_shape": [2, 2], "class_names": ["a", "b"],
            "latent_layer_id": "feat", "head": "sigmoid",
            "layers": [{"id": "feat", "out_channels": 1, "stride": 1,
                        "activation": "linear"}]}
    m = new_classifier(desc, 0)
    with torch.no_grad():
        m.blocks["feat"][0].weight.zero_()
        m.blocks["feat"][0].weight[0, 0, 1, 1] = 4.0
        m.blocks["feat"][0].bias.fill_(-2.0)
        m.fc.weight[:] = torch.tensor([[1.0], [-1.0]])
        m.fc.bias.zero_()
    for p in m.parameters():
        p.requires_grad_(False)
    return ModelBundle(m, ["a", "b"], "feat", (2, 2), digest_module(m))


def tiny_input_for(latent: np.ndarray) -> np.ndarray:
    """Image whose tiny-bundle latent equals the requested 2x2 plane."""
    x = np.zeros((2, 2, 3))
    x[..., 0] = (np.asarray(latent) + 2.0) / 4.0
    return x


@pytest.fixture()
def tiny_bundle():
    return make_tiny_bundle()


@pytest.fixture(scope="session")
def cli_config(tmp_path_factory, desk_root, desk_weights, trained_checkpoint):
    """Shared CLI/service config pointing at the desk fixtures."""
    d = tmp_path_factory.mktemp("cli")
    ckpt_path = d / "decoder.pt"
    trained_checkpoint.save(ckpt_path)
    desc_path = d / "descriptor.json"
    desc_path.write_text(json.dumps(synthetic.DESK_DESCRIPTOR))
    cfg = {
        "model_weights": str(desk_weights),
        "descriptor": str(desc_path),
        "decoder_checkpoint": str(ckpt_path),
        "dataset_root": str(desk_root),
        "asset_dir": str(d / "assets"),
        "threshold": 0.5,
        "train": {"epochs": 2, "batch_size": 16, "seed": 0,
                  "learning_rate": 1e-3},
    }
    path = d / "config.json"
    path.write_text(json.dumps(cfg))
    return path
