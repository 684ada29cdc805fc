import logging
import math
from collections import namedtuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from mvsd.constants import EMBEDDING_DIM, N_MELS, SCENE_SIZE
from mvsd.enums import ConverterRoleEnum

logger = logging.getLogger(__name__)

# All architecture knobs live here. Feature maps go resolution -> /ladder[0] -> /ladder[1] -> /ladder[2]
# with (base, 2 base, 4 base) channels, and back up through the decoder.
UnetConfig = namedtuple(
    "UnetConfig", "base, resolution, ladder, heads, groups, context_dim, full_attention_max, reduction"
)
UnetConfig.__new__.__defaults__ = (32, N_MELS, (4, 4, 2), 4, 8, EMBEDDING_DIM, 8, 4)

EncoderConfig = namedtuple("EncoderConfig", "widths, embedding_dim, temperature")
EncoderConfig.__new__.__defaults__ = ((32, 64, 128, 256), EMBEDDING_DIM, 0.1)


class ArchitectureError(ValueError):
    pass


def _groups(groups: int, channels: int) -> int:
    return math.gcd(groups, channels)


def _heads(heads: int, channels: int) -> int:
    return heads if channels % heads == 0 else 1


def validate_unet_config(config: UnetConfig) -> UnetConfig:
    if len(config.ladder) != 3 or any(factor < 1 for factor in config.ladder):
        raise ArchitectureError(f"ladder needs three positive factors, got {config.ladder}")
    if config.base < 1:
        raise ArchitectureError(f"base width must be positive, got {config.base}")
    total = int(np.prod(config.ladder))
    if config.resolution % total:
        raise ArchitectureError(f"resolution {config.resolution} is not divisible by the ladder {config.ladder}")
    return config


def sinusoidal_embedding(t, dim: int):
    half = dim // 2
    frequencies = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64, device=t.device) / half)
    angles = t.to(torch.float64)[:, None] * frequencies[None, :]
    embedding = torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)
    if dim % 2:
        embedding = F.pad(embedding, (0, 1))
    return embedding


class TimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.linear_1 = nn.Linear(dim, 4 * dim)
        self.linear_2 = nn.Linear(4 * dim, 4 * dim)

    def forward(self, t):
        x = sinusoidal_embedding(t, self.dim).to(self.linear_1.weight.dtype)
        return self.linear_2(F.silu(self.linear_1(x)))


class ResidualBlock(nn.Module):
    def __init__(self, in_channels, out_channels, time_dim, groups):
        super().__init__()
        self.norm_1 = nn.GroupNorm(_groups(groups, in_channels), in_channels)
        self.conv_1 = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)
        self.time = nn.Linear(time_dim, out_channels)
        self.norm_2 = nn.GroupNorm(_groups(groups, out_channels), out_channels)
        self.conv_2 = nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1)
        if in_channels == out_channels:
            self.residual = nn.Identity()
        else:
            self.residual = nn.Conv2d(in_channels, out_channels, kernel_size=1)

    def forward(self, x, time):
        h = self.conv_1(F.silu(self.norm_1(x)))
        h = h + self.time(F.silu(time))[:, :, None, None]
        h = self.conv_2(F.silu(self.norm_2(h)))
        return h + self.residual(x)


class SelfAttention2d(nn.Module):
    """
    Softmax attention over flattened positions. With reduction > 1, keys and values come from a
    space-to-depth reduced copy of the map, so large maps attend over reduction**2 fewer positions.
    """

    def __init__(self, channels, heads, groups, reduction: int = 1):
        super().__init__()
        self.norm = nn.GroupNorm(_groups(groups, channels), channels)
        self.attention = nn.MultiheadAttention(channels, _heads(heads, channels), batch_first=True)
        self.reduction = reduction
        if reduction > 1:
            self.reduce = nn.Sequential(
                nn.PixelUnshuffle(reduction), nn.Conv2d(channels * reduction**2, channels, kernel_size=1)
            )

    def forward(self, x):
        b, c, h, w = x.shape
        normed = self.norm(x)
        queries = normed.flatten(2).transpose(1, 2)
        context = self.reduce(normed).flatten(2).transpose(1, 2) if self.reduction > 1 else queries
        out, _ = self.attention(queries, context, context, need_weights=False)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


class CrossAttention2d(nn.Module):
    """
    Queries from the feature map; keys and values from the scene embedding plus a learned null token.
    The null token keeps the softmax from being a constant 1, so the query and key projections train.
    """

    def __init__(self, channels, context_dim, heads, groups):
        super().__init__()
        self.norm = nn.GroupNorm(_groups(groups, channels), channels)
        self.null = nn.Parameter(torch.randn(context_dim) / math.sqrt(context_dim))
        self.attention = nn.MultiheadAttention(
            channels, _heads(heads, channels), kdim=context_dim, vdim=context_dim, batch_first=True
        )

    def forward(self, x, scene_emb):
        b, c, h, w = x.shape
        queries = self.norm(x).flatten(2).transpose(1, 2)
        context = torch.stack([scene_emb.to(x.dtype), self.null.expand(b, -1)], dim=1)
        out, _ = self.attention(queries, context, context, need_weights=False)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


class Downsample(nn.Module):
    """Dilated 3x3 convolution, space-to-depth by `factor`, then a 1x1 projection."""

    def __init__(self, in_channels, out_channels, factor):
        super().__init__()
        self.dilated = nn.Conv2d(in_channels, in_channels, kernel_size=3, padding=2, dilation=2)
        self.unshuffle = nn.PixelUnshuffle(factor)
        self.project = nn.Conv2d(in_channels * factor**2, out_channels, kernel_size=1)

    def forward(self, x):
        return self.project(self.unshuffle(self.dilated(x)))


class Upsample(nn.Module):
    def __init__(self, in_channels, out_channels, factor):
        super().__init__()
        self.factor = factor
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=self.factor, mode="nearest"))


class EncoderBlock(nn.Module):
    def __init__(self, in_channels, out_channels, factor, time_dim, config: UnetConfig, size, cross):
        super().__init__()
        self.down = Downsample(in_channels, out_channels, factor)
        self.residual = ResidualBlock(out_channels, out_channels, time_dim, config.groups)
        self.attention = SelfAttention2d(out_channels, config.heads, config.groups, _reduction(config, size))
        self.cross = CrossAttention2d(out_channels, config.context_dim, config.heads, config.groups) if cross else None

    def forward(self, x, time, scene_emb):
        h = self.attention(self.residual(self.down(x), time))
        return self.cross(h, scene_emb) if self.cross is not None else h


class DecoderBlock(nn.Module):
    def __init__(self, in_channels, out_channels, up_channels, factor, time_dim, config: UnetConfig, size, cross):
        super().__init__()
        self.residual = ResidualBlock(in_channels, out_channels, time_dim, config.groups)
        self.attention = SelfAttention2d(out_channels, config.heads, config.groups, _reduction(config, size))
        self.cross = CrossAttention2d(out_channels, config.context_dim, config.heads, config.groups) if cross else None
        self.up = Upsample(out_channels, up_channels, factor)

    def forward(self, x, skip, time, scene_emb):
        h = self.attention(self.residual(torch.cat([x, skip], dim=1), time))
        if self.cross is not None:
            h = self.cross(h, scene_emb)
        return self.up(h)


def _reduction(config: UnetConfig, size: int) -> int:
    if size > config.full_attention_max and size % config.reduction == 0:
        return config.reduction
    return 1


class ControllableUnet(nn.Module):
    """
    Noise predictor z_hat(x_t, source, t, scene). Cross-attention on the scene embedding sits in the
    third encoder block and the first decoder block only.
    """

    def __init__(self, config: UnetConfig = UnetConfig()):
        super().__init__()
        self.config = validate_unet_config(config)
        b = config.base
        time_dim = 4 * b
        channels = (b, 2 * b, 4 * b)
        sizes = []
        size = config.resolution
        for factor in config.ladder:
            size //= factor
            sizes.append(size)

        self.time_embedding = TimeEmbedding(b)
        self.stem = nn.Conv2d(2, b, kernel_size=3, padding=1)
        in_channels = (b, channels[0], channels[1])
        self.encoder = nn.ModuleList(
            [
                EncoderBlock(
                    in_channels[level],
                    channels[level],
                    config.ladder[level],
                    time_dim,
                    config,
                    sizes[level],
                    cross=level == 2,
                )
                for level in range(3)
            ]
        )
        up_channels = (b, channels[0], channels[1])
        self.decoder = nn.ModuleList(
            [
                DecoderBlock(
                    2 * channels[level],
                    channels[level],
                    up_channels[level],
                    config.ladder[level],
                    time_dim,
                    config,
                    sizes[level],
                    cross=level == 2,
                )
                for level in (2, 1, 0)
            ]
        )
        self.out_norm = nn.GroupNorm(_groups(config.groups, 2 * b), 2 * b)
        self.out_conv = nn.Conv2d(2 * b, 1, kernel_size=3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def forward(self, x_t, source, t, scene_emb):
        if x_t.shape != source.shape:
            raise ArchitectureError(f"x_t {tuple(x_t.shape)} and source {tuple(source.shape)} differ")
        t = torch.as_tensor(t, device=x_t.device).reshape(-1).expand(x_t.shape[0])
        time = self.time_embedding(t)

        stem = self.stem(torch.cat([x_t, source], dim=1))
        skips = []
        h = stem
        for block in self.encoder:
            h = block(h, time, scene_emb)
            skips.append(h)
        for block, skip in zip(self.decoder, reversed(skips)):
            h = block(h, skip, time, scene_emb)
        h = torch.cat([h, stem], dim=1)
        return self.out_conv(F.silu(self.out_norm(h)))

    def cross_attention_modules(self):
        return [module for module in self.modules() if isinstance(module, CrossAttention2d)]

    def zero_cross_attention(self):
        with torch.no_grad():
            for module in self.cross_attention_modules():
                for parameter in module.attention.parameters():
                    parameter.zero_()


class SceneEncoder(nn.Module):
    """Four stride-2 convolution stages, global average pool and a projection onto the unit sphere."""

    def __init__(self, config: EncoderConfig = EncoderConfig()):
        super().__init__()
        self.config = config
        self.temperature = config.temperature
        stages = []
        in_channels = 3
        for width in config.widths:
            stages += [
                nn.Conv2d(in_channels, width, kernel_size=3, stride=2, padding=1),
                nn.GroupNorm(_groups(8, width), width),
                nn.SiLU(),
            ]
            in_channels = width
        self.stages = nn.Sequential(*stages)
        self.projection = nn.Linear(in_channels, config.embedding_dim)

    def forward(self, images):
        if images.ndim != 4 or tuple(images.shape[1:]) != (3, SCENE_SIZE, SCENE_SIZE):
            raise ArchitectureError(f"wrong image shape {tuple(images.shape)}, expected [N, 3, 64, 64]")
        features = self.stages(images).mean(dim=(2, 3))
        return F.normalize(self.projection(features), dim=1)


def freeze(module: nn.Module) -> nn.Module:
    module.requires_grad_(False)
    module.eval()
    return module


def images_to_tensor(pixels) -> torch.Tensor:
    """uint8 [N, 64, 64, 3] or [64, 64, 3] pixels to float [N, 3, 64, 64] in [0, 1]."""
    array = np.asarray(pixels)
    if array.ndim == 3:
        array = array[None]
    if array.ndim != 4 or array.shape[-1] != 3:
        raise ArchitectureError(f"wrong image shape {array.shape}, expected [N, 64, 64, 3]")
    return torch.from_numpy(array.astype(np.float32) / 255.0).permute(0, 3, 1, 2).contiguous()


def encode_scene(enc: SceneEncoder, img) -> torch.Tensor:
    """256-dim unit embedding of one SceneImage (or raw pixel array)."""
    pixels = img.pixels if hasattr(img, "pixels") else img
    images = images_to_tensor(pixels).to(next(enc.parameters()).device)
    was_training = enc.training
    enc.eval()
    with torch.no_grad():
        embedding = enc(images)[0]
    enc.train(was_training)
    return embedding


class ConverterModel(nn.Module):
    """
    One converter: f_theta (reverberator) or g_phi (dereverberator). The scene encoder is shared and
    frozen; only the Unet is trainable.
    """

    def __init__(self, role: str, config: UnetConfig, encoder: SceneEncoder):
        super().__init__()
        if role not in dict(ConverterRoleEnum.choices):
            raise ArchitectureError(f"unknown converter role {role}")
        self.role = role
        self.unet = ControllableUnet(config)
        self.encoder = freeze(encoder)

    def forward(self, x_t, source, t, scene_emb):
        return self.unet(x_t, source, t, scene_emb)

    def trainable_parameters(self):
        return [parameter for parameter in self.parameters() if parameter.requires_grad]

    def train(self, mode: bool = True):
        super().train(mode)
        self.encoder.eval()
        return self


def gradients(model: nn.Module, loss: torch.Tensor):
    """Gradient of `loss` for every trainable parameter, zeros where the loss doesn't depend on it."""
    named = [(name, parameter) for name, parameter in model.named_parameters() if parameter.requires_grad]
    if not loss.requires_grad:
        return {name: torch.zeros_like(parameter) for name, parameter in named}
    grads = torch.autograd.grad(loss, [parameter for _, parameter in named], allow_unused=True, retain_graph=True)
    return {
        name: torch.zeros_like(parameter) if grad is None else grad for (name, parameter), grad in zip(named, grads)
    }


def parameter_report(model: nn.Module) -> dict:
    tensors = {name: parameter.numel() for name, parameter in model.named_parameters() if parameter.requires_grad}
    return {"total": sum(tensors.values()), "tensors": tensors}
