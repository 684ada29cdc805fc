import csv
import logging
import math
import os
from collections import namedtuple

import numpy as np
import torch

from mvsd.constants import CHECKPOINTS_DIR, DIFFUSION_STEPS, LOSS_LOG_FILENAME, VALIDATION_LOG_FILENAME
from mvsd.enums import ConverterRoleEnum, OptimizerEnum, SplitEnum
from mvsd.libraries.checkpoints import save_converters
from mvsd.libraries.dataset import (
    DatasetManifest,
    in_split,
    load_clean,
    load_reverb,
    scene_path,
)
from mvsd.libraries.diffusion import diffusion_loss, make_schedule
from mvsd.libraries.helpers import derive_seed, ordered_map, write_json
from mvsd.libraries.mutual_learning import (
    LossBreakdown,
    breakdown,
    mutual_loss,
    paired_cycle_losses,
    style_loss,
    unpaired_anechoic_cycle,
    unpaired_natural_cycle,
)
from mvsd.libraries.networks import ConverterModel, SceneEncoder, UnetConfig, images_to_tensor, parameter_report
from mvsd.libraries.scenes import load_scene_png
from mvsd.libraries.spectral import waveform_to_melspec

logger = logging.getLogger(__name__)

TrainConfig = namedtuple(
    "TrainConfig",
    "learning_rate, batch_size, epochs, unpaired_warmup, diffusion_steps, beta_start, beta_end, seed, "
    "base_channels, ladder, optimizer, use_mutual, use_unpaired, use_style, unpaired_fraction, cycle_steps",
)
TrainConfig.__new__.__defaults__ = (
    1e-4,
    8,
    8,
    None,
    DIFFUSION_STEPS,
    None,
    None,
    0,
    32,
    (4, 4, 2),
    OptimizerEnum.ADAM,
    True,
    True,
    True,
    None,
    1,
)

# warmup defaults to this share of the epochs when not given
WARMUP_FRACTION = 0.25

LOSS_LOG_FIELDS = ["step", "epoch"] + list(LossBreakdown._fields)
VALIDATION_FIELDS = ["epoch", "val_l_d", "val_cycle"]

# Tensors of one collection. Missing modalities are None; embeddings are computed once with the frozen encoder.
Collection = namedtuple("Collection", "ids, clean, reverb, embeddings, rt60s")

TrainResult = namedtuple("TrainResult", "loss_log, validation_log, checkpoints, validation")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message, batch_ids):
        super().__init__(f"{message}; batch ids: {', '.join(batch_ids)}")
        self.batch_ids = list(batch_ids)


def resolve_warmup(cfg: TrainConfig) -> int:
    if cfg.unpaired_warmup is not None:
        return cfg.unpaired_warmup
    return int(math.floor(WARMUP_FRACTION * cfg.epochs))


def unet_config_for(cfg: TrainConfig) -> UnetConfig:
    return UnetConfig(base=cfg.base_channels, ladder=tuple(cfg.ladder))


def schedule_config(cfg: TrainConfig) -> dict:
    return {"T": cfg.diffusion_steps, "beta_start": cfg.beta_start, "beta_end": cfg.beta_end}


def build_converters(cfg: TrainConfig, encoder: SceneEncoder, device="cpu"):
    torch.manual_seed(cfg.seed)
    config = unet_config_for(cfg)
    f = ConverterModel(ConverterRoleEnum.REVERBERATOR, config, encoder).to(device)
    g = ConverterModel(ConverterRoleEnum.DEREVERBERATOR, config, encoder).to(device)
    return f, g


def _mel_tensor(waveforms):
    grids = [waveform_to_melspec(w).grid for w in waveforms]
    return torch.from_numpy(np.stack(grids).astype(np.float32))[:, None]


def _embed(encoder: SceneEncoder, manifest: DatasetManifest, scene_ids, device):
    if not scene_ids:
        return torch.zeros((0, encoder.config.embedding_dim), device=device)
    images = images_to_tensor(np.stack([load_scene_png(scene_path(manifest.root, i)) for i in scene_ids]))
    with torch.no_grad():
        return encoder(images.to(device))


def _subset(items, fraction, reference_count, seed, code):
    """Seeded prefix of `items` sized fraction * reference_count; larger fractions keep smaller subsets."""
    if fraction is None:
        return list(items)
    count = min(len(items), int(round(fraction * reference_count)))
    order = np.random.default_rng(derive_seed(seed, code)).permutation(len(items))
    return [items[i] for i in sorted(order[:count])]


def load_collections(manifest: DatasetManifest, encoder, split, unpaired_fraction=None, workers=1, device="cpu"):
    """Paired, natural and anechoic collections of one split as spectrogram tensors."""
    paired = in_split(manifest.paired, split)
    natural = _subset(in_split(manifest.unpaired_natural, split), unpaired_fraction, len(paired), manifest.seed, 2)
    anechoic = _subset(in_split(manifest.unpaired_anechoic, split), unpaired_fraction, len(paired), manifest.seed, 3)

    def clean(items):
        return _mel_tensor(ordered_map(lambda item: load_clean(manifest, item.clean_id), items, workers))

    def reverb(items):
        return _mel_tensor(ordered_map(lambda item: load_reverb(manifest, item.reverb_id), items, workers))

    logger.info(
        "Loading %s split: %s paired, %s natural, %s anechoic", split, len(paired), len(natural), len(anechoic)
    )
    return {
        "paired": Collection(
            ids=[item.scene_id for item in paired],
            clean=clean(paired).to(device) if paired else None,
            reverb=reverb(paired).to(device) if paired else None,
            embeddings=_embed(encoder, manifest, [item.scene_id for item in paired], device),
            rt60s=[item.params.rt60 for item in paired],
        ),
        "natural": Collection(
            ids=[item.scene_id for item in natural],
            clean=None,
            reverb=reverb(natural).to(device) if natural else None,
            embeddings=_embed(encoder, manifest, [item.scene_id for item in natural], device),
            rt60s=[item.params.rt60 for item in natural],
        ),
        "anechoic": Collection(
            ids=[item.clean_id for item in anechoic],
            clean=clean(anechoic).to(device) if anechoic else None,
            reverb=None,
            embeddings=None,
            rt60s=[],
        ),
    }


def make_optimizer(cfg: TrainConfig, parameters):
    if cfg.optimizer == OptimizerEnum.SGD:
        return torch.optim.SGD(parameters, lr=cfg.learning_rate)
    return torch.optim.Adam(parameters, lr=cfg.learning_rate)


def _draw(collection: Collection, size, generator):
    return torch.randint(0, len(collection.ids), (size,), generator=generator)


def training_step(f, g, batch, unpaired, s, generator, cfg: TrainConfig):
    """
    Objective for one paired batch plus, when given, unpaired batches.
    Returns (total loss tensor, LossBreakdown).
    """
    a_c, a_r, scene_emb = batch
    loss_f = diffusion_loss(f, a_r, a_c, scene_emb, s, generator)
    loss_g = diffusion_loss(g, a_c, a_r, scene_emb, s, generator)
    l_d = loss_f.loss + loss_g.loss
    l_sty = style_loss(loss_f.x0_hat, a_r, loss_g.x0_hat, a_c) if cfg.use_style else torch.zeros_like(l_d)

    paired = natural = anechoic = None
    if cfg.use_mutual:
        paired = paired_cycle_losses(f, g, scene_emb, a_c, a_r, s, generator, cfg.cycle_steps)
        if unpaired is not None:
            natural_batch, anechoic_batch, pool = unpaired
            if natural_batch is not None:
                a_r_nat, emb_nat = natural_batch
                natural = unpaired_natural_cycle(f, g, emb_nat, a_r_nat, s, generator, cfg.cycle_steps)
            if anechoic_batch is not None:
                anechoic, _ = unpaired_anechoic_cycle(f, g, pool, anechoic_batch, s, generator, cfg.cycle_steps)
    l_m = mutual_loss(paired, natural, anechoic).to(l_d)
    total = l_d + l_m + l_sty
    return total, breakdown(l_d, l_m, l_sty, paired, natural, anechoic)


def validate(f, g, collection: Collection, s, seed, cfg: TrainConfig):
    """Mean diffusion loss and paired cycle loss on a held-out collection, with a fixed seed."""
    if not collection.ids:
        return None, None
    generator = torch.Generator().manual_seed(derive_seed(seed, 7))
    f.eval()
    g.eval()
    l_d_total = cycle_total = 0.0
    with torch.no_grad():
        for start in range(0, len(collection.ids), cfg.batch_size):
            index = slice(start, start + cfg.batch_size)
            a_c, a_r, emb = collection.clean[index], collection.reverb[index], collection.embeddings[index]
            size = a_c.shape[0]
            l_d = diffusion_loss(f, a_r, a_c, emb, s, generator).loss
            l_d = l_d + diffusion_loss(g, a_c, a_r, emb, s, generator).loss
            delta_c, delta_r = paired_cycle_losses(f, g, emb, a_c, a_r, s, generator, cfg.cycle_steps)
            l_d_total += float(l_d) * size
            cycle_total += float((delta_c + delta_r).sum())
    count = len(collection.ids)
    return l_d_total / count, cycle_total / count


def train(f, g, enc_frozen, manifest: DatasetManifest, cfg: TrainConfig, out_dir, device="cpu", workers=1):
    """
    Joint training of both converters. Unpaired cycles join after `unpaired_warmup` epochs; a loss row is
    logged per step and a checkpoint written per epoch.
    """
    warmup = resolve_warmup(cfg)
    s = make_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)
    generator = torch.Generator().manual_seed(cfg.seed)
    checkpoints_dir = os.path.join(out_dir, CHECKPOINTS_DIR)
    os.makedirs(checkpoints_dir, exist_ok=True)

    data = load_collections(manifest, enc_frozen, SplitEnum.TRAIN, cfg.unpaired_fraction, workers, device)
    validation_set = load_collections(manifest, enc_frozen, SplitEnum.VAL, None, workers, device)["paired"]
    paired, natural, anechoic = data["paired"], data["natural"], data["anechoic"]
    if not paired.ids:
        raise ValueError("the training split has no paired items")
    if anechoic.ids and not natural.ids:
        logger.warning("No natural scenes to pair with anechoic clips; the anechoic cycle is skipped")

    optimizer = make_optimizer(cfg, f.trainable_parameters() + g.trainable_parameters())
    write_json(os.path.join(out_dir, "parameters.json"), {role.role: parameter_report(role) for role in (f, g)})

    loss_log = os.path.join(out_dir, LOSS_LOG_FILENAME)
    validation_log = os.path.join(out_dir, VALIDATION_LOG_FILENAME)
    checkpoints = []
    validation = []
    step = 0
    with open(loss_log, "w", newline="") as loss_file, open(validation_log, "w", newline="") as validation_file:
        loss_writer = csv.DictWriter(loss_file, fieldnames=LOSS_LOG_FIELDS)
        validation_writer = csv.DictWriter(validation_file, fieldnames=VALIDATION_FIELDS)
        loss_writer.writeheader()
        validation_writer.writeheader()

        for epoch in range(1, cfg.epochs + 1):
            use_unpaired = cfg.use_mutual and cfg.use_unpaired and epoch > warmup
            order = torch.randperm(len(paired.ids), generator=generator)
            f.train()
            g.train()
            for start in range(0, len(order), cfg.batch_size):
                index = order[start : start + cfg.batch_size]
                batch_ids = [paired.ids[i] for i in index.tolist()]
                on_device = index.to(device)
                batch = (paired.clean[on_device], paired.reverb[on_device], paired.embeddings[on_device])

                unpaired = None
                if use_unpaired:
                    size = len(index)
                    natural_batch = anechoic_batch = None
                    if natural.ids:
                        drawn = _draw(natural, size, generator).to(device)
                        natural_batch = (natural.reverb[drawn], natural.embeddings[drawn])
                        batch_ids += [natural.ids[i] for i in drawn.tolist()]
                    if anechoic.ids and natural.ids:
                        drawn = _draw(anechoic, size, generator).to(device)
                        anechoic_batch = anechoic.clean[drawn]
                        batch_ids += [anechoic.ids[i] for i in drawn.tolist()]
                    unpaired = (natural_batch, anechoic_batch, natural.embeddings)

                total, row = training_step(f, g, batch, unpaired, s, generator, cfg)
                if not torch.isfinite(total):
                    logger.error("Non-finite loss at epoch %s step %s: %s", epoch, step + 1, row._asdict())
                    raise NonFiniteLossError(f"non-finite loss at epoch {epoch}, step {step + 1}", batch_ids)

                optimizer.zero_grad()
                total.backward()
                optimizer.step()

                step += 1
                loss_writer.writerow({"step": step, "epoch": epoch, **row._asdict()})
            loss_file.flush()

            val_l_d, val_cycle = validate(f, g, validation_set, s, cfg.seed, cfg)
            validation.append({"epoch": epoch, "val_l_d": val_l_d, "val_cycle": val_cycle})
            validation_writer.writerow(validation[-1])
            validation_file.flush()

            path = os.path.join(checkpoints_dir, f"epoch_{epoch:03d}.pt")
            save_converters(path, f, g, schedule_config(cfg), meta={"epoch": epoch, "seed": cfg.seed, "steps": step})
            checkpoints.append(path)
            logger.info(
                "Epoch %s/%s done after %s steps: last l_total %.5f, validation cycle %s",
                epoch,
                cfg.epochs,
                step,
                row.l_total,
                val_cycle,
            )

    return TrainResult(loss_log, validation_log, checkpoints, validation)


def read_loss_log(path):
    with open(path, newline="") as f:
        return [
            {key: (int(value) if key in ("step", "epoch") else float(value)) for key, value in row.items()}
            for row in csv.DictReader(f)
        ]
