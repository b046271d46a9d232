import numpy as np
import pytest
import torch

from tamperdet.data import DatasetManifest
from tamperdet.forge import synthesize_base_image
from tamperdet.model import ModelConfig, TwoBranchNet


def tiny_model_config(seed: int = 0, input_size: int = 64) -> ModelConfig:
    return ModelConfig(
        backbone_stage_channels=(4, 8, 8, 8),
        erb_channels=4,
        da_reduced_channels=4,
        input_size=input_size,
        seed=seed,
    )


@pytest.fixture
def tiny_config() -> ModelConfig:
    return tiny_model_config()


@pytest.fixture
def tiny_net(tiny_config) -> TwoBranchNet:
    return TwoBranchNet(tiny_config)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A small on-disk forged dataset shared by loader/trainer/CLI tests."""
    import tamperdet

    root = tmp_path_factory.mktemp("dataset")
    manifest_path = tamperdet.generate_dataset(
        root, count=6, authentic_count=3, size=64, seed=7
    )
    return DatasetManifest.load(manifest_path)


def random_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    return synthesize_base_image(rng, size)


def seeded_torch(seed: int = 0) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(seed)
    return gen
