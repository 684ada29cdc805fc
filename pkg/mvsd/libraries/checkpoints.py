import io
import logging
from collections import namedtuple

import torch

from mvsd.constants import CHECKPOINT_FORMAT, CHECKPOINT_VERSION
from mvsd.enums import ConverterRoleEnum
from mvsd.libraries.diffusion import make_schedule
from mvsd.libraries.helpers import atomic_write, sha256_file
from mvsd.libraries.networks import ConverterModel, EncoderConfig, SceneEncoder, UnetConfig, freeze

logger = logging.getLogger(__name__)

KIND_ENCODER = "encoder"
KIND_CONVERTERS = "converters"

# schedule holds T, beta_start and beta_end as passed to make_schedule
LoadedConverters = namedtuple("LoadedConverters", "reverberator, dereverberator, encoder, schedule, meta")


class CheckpointError(Exception):
    """Raised for files that aren't checkpoints of this project or of this version"""


def _save(path, kind, payload):
    buffer = io.BytesIO()
    torch.save({"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "kind": kind, **payload}, buffer)
    atomic_write(path, buffer.getvalue())
    logger.info("Saved %s checkpoint to %s", kind, path)


def _load(path, kind):
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=True)
    except Exception as error:  # noqa
        raise CheckpointError(f"{path} is not a readable checkpoint: {error}") from error
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not an mvsd checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path} has checkpoint version {payload.get('version')}, this build reads {CHECKPOINT_VERSION}"
        )
    if payload.get("kind") != kind:
        raise CheckpointError(f"{path} holds a {payload.get('kind')} checkpoint, expected {kind}")
    return payload


def _state(module):
    return {name: tensor.detach().cpu().clone() for name, tensor in module.state_dict().items()}


def save_encoder(path, encoder: SceneEncoder, losses=()):
    config = encoder.config
    _save(
        path,
        KIND_ENCODER,
        {
            "config": {
                "widths": list(config.widths),
                "embedding_dim": config.embedding_dim,
                "temperature": float(encoder.temperature),
            },
            "state": _state(encoder),
            "losses": [float(loss) for loss in losses],
        },
    )


def _encoder_from(payload) -> SceneEncoder:
    config = payload["config"]
    encoder = SceneEncoder(EncoderConfig(tuple(config["widths"]), config["embedding_dim"], config["temperature"]))
    encoder.load_state_dict(payload["state"])
    return freeze(encoder)


def load_encoder(path) -> SceneEncoder:
    return _encoder_from(_load(path, KIND_ENCODER))


def unet_config_to_dict(config: UnetConfig) -> dict:
    return {**config._asdict(), "ladder": list(config.ladder)}


def save_converters(path, reverberator: ConverterModel, dereverberator: ConverterModel, schedule: dict, meta=None):
    """Both converters, the frozen encoder and the schedule parameters in one file."""
    encoder = reverberator.encoder
    _save(
        path,
        KIND_CONVERTERS,
        {
            "unet_config": unet_config_to_dict(reverberator.unet.config),
            "schedule": dict(schedule),
            "encoder": {
                "config": {
                    "widths": list(encoder.config.widths),
                    "embedding_dim": encoder.config.embedding_dim,
                    "temperature": float(encoder.temperature),
                },
                "state": _state(encoder),
            },
            ConverterRoleEnum.REVERBERATOR: _state(reverberator.unet),
            ConverterRoleEnum.DEREVERBERATOR: _state(dereverberator.unet),
            "meta": dict(meta or {}),
        },
    )


def load_converters(path, device="cpu") -> LoadedConverters:
    payload = _load(path, KIND_CONVERTERS)
    encoder = _encoder_from(payload["encoder"])
    config = UnetConfig(**{**payload["unet_config"], "ladder": tuple(payload["unet_config"]["ladder"])})
    converters = {}
    for role in (ConverterRoleEnum.REVERBERATOR, ConverterRoleEnum.DEREVERBERATOR):
        converter = ConverterModel(role, config, encoder)
        converter.unet.load_state_dict(payload[role])
        converters[role] = converter.to(device).eval()
    schedule = payload["schedule"]
    return LoadedConverters(
        reverberator=converters[ConverterRoleEnum.REVERBERATOR],
        dereverberator=converters[ConverterRoleEnum.DEREVERBERATOR],
        encoder=encoder.to(device),
        schedule=make_schedule(schedule["T"], schedule.get("beta_start"), schedule.get("beta_end")),
        meta=payload.get("meta", {}),
    )


def checkpoint_digest(path) -> str:
    return sha256_file(path)
