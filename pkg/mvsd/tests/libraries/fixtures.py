import os
import shutil
import tempfile

import torch
from torch import nn

from mvsd.enums import ConverterRoleEnum
from mvsd.libraries.checkpoints import save_converters
from mvsd.libraries.dataset import build_dataset
from mvsd.libraries.networks import EncoderConfig, SceneEncoder, freeze
from mvsd.libraries.trainer import TrainConfig, build_converters, schedule_config
from mvsd.tests.libraries.client import MvsdTestClient

TINY_ENCODER = EncoderConfig(widths=(8, 16, 16, 16))

TINY_TRAIN = TrainConfig(batch_size=4, epochs=2, unpaired_warmup=1, diffusion_steps=20, base_channels=4, seed=0)

# 20 paired items split 16/2/2; natural and anechoic split 3/0/1
TINY_DATASET = {"n_paired": 20, "m_natural": 4, "k_anechoic": 4, "duration": 1.0}


def tiny_encoder(seed=0):
    torch.manual_seed(seed)
    return freeze(SceneEncoder(TINY_ENCODER))


def tiny_checkpoint(out_dir, encoder=None, cfg=TINY_TRAIN, name="tiny.pt"):
    """Freshly initialised converters saved as a checkpoint; their zero output layers predict no noise."""
    f, g = build_converters(cfg, encoder or tiny_encoder())
    path = os.path.join(out_dir, name)
    save_converters(path, f, g, schedule_config(cfg), meta={"epoch": 0, "seed": cfg.seed, "steps": 0})
    return path


def reverberate_offset(x):
    return x + 0.25


def dereverberate_offset(x):
    return x - 0.25


def zeros(x):
    return torch.zeros_like(x)


class X0Stub(nn.Module):
    """
    Stand-in converter that ignores noise and scene: it returns exactly the noise that makes
    predict_x0 land on target_fn(source) at whatever step it is queried.
    """

    def __init__(self, schedule, target_fn, role=ConverterRoleEnum.REVERBERATOR):
        super().__init__()
        self.schedule = schedule
        self.target_fn = target_fn
        self.role = role

    def forward(self, x_t, source, t, scene_emb):
        t = torch.as_tensor(t).reshape(-1).expand(x_t.shape[0]).long().cpu()
        alpha_bar = self.schedule.alpha_bar[t - 1].to(x_t).reshape(-1, *([1] * (x_t.ndim - 1)))
        return (x_t - torch.sqrt(alpha_bar) * self.target_fn(source)) / torch.sqrt(1.0 - alpha_bar)


class TinyDatasetTestClient(MvsdTestClient):
    """Builds one small synthetic dataset per test class."""

    DATASET_SEED = 0

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dataset_dir = tempfile.mkdtemp(prefix="mvsd-dataset-")
        cls.manifest = build_dataset(out_dir=cls.dataset_dir, seed=cls.DATASET_SEED, **TINY_DATASET)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.dataset_dir, ignore_errors=True)
        super().tearDownClass()
