import logging
import math
from collections import namedtuple

import numpy as np
import torch

from mvsd.constants import RT60_CLASSES, RT60_RANGE
from mvsd.libraries.networks import SceneEncoder, freeze

logger = logging.getLogger(__name__)

PretrainConfig = namedtuple("PretrainConfig", "epochs, temperature, batch_size, learning_rate, seed, classes")
PretrainConfig.__new__.__defaults__ = (20, 0.1, 32, 1e-3, 0, RT60_CLASSES)

PretrainResult = namedtuple("PretrainResult", "encoder, losses")


class ContrastiveBatchError(ValueError):
    pass


def rt60_class(rt60: float, classes: int = RT60_CLASSES) -> int:
    """Index of the log-spaced rt60 bin holding rt60."""
    low, high = RT60_RANGE
    position = (math.log(rt60) - math.log(low)) / (math.log(high) - math.log(low))
    return int(min(classes - 1, max(0, math.floor(position * classes))))


def supcon_loss(embeddings: torch.Tensor, labels, temperature: float) -> torch.Tensor:
    """
    Supervised contrastive loss averaged over anchors that have at least one positive. The softmax for
    anchor i runs over every other sample a != i.
    """
    labels = torch.as_tensor(labels, device=embeddings.device)
    n = embeddings.shape[0]
    similarity = embeddings @ embeddings.T / temperature
    self_mask = torch.eye(n, dtype=torch.bool, device=embeddings.device)
    similarity = similarity.masked_fill(self_mask, float("-inf"))
    log_prob = similarity - torch.logsumexp(similarity, dim=1, keepdim=True)

    positives = (labels[:, None] == labels[None, :]) & ~self_mask
    counts = positives.sum(dim=1)
    anchors = counts > 0
    if not bool(anchors.any()):
        raise ContrastiveBatchError("every class in the batch is a singleton")

    per_anchor = -(log_prob.masked_fill(~positives, 0.0).sum(dim=1)[anchors]) / counts[anchors]
    return per_anchor.mean()


def balanced_batches(labels, batch_size: int, rng: np.random.Generator):
    """
    Batches made of same-class pairs so every anchor has a positive. Classes with a single item can't
    form a pair and are left out; batches holding one class only are dropped.
    """
    labels = np.asarray(labels)
    chunks = []
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        if len(members) < 2:
            logger.warning("rt60 class %s has a single scene, skipping it", label)
            continue
        pairs = [members[i : i + 2] for i in range(0, len(members) - 1, 2)]
        if len(members) % 2:
            pairs[-1] = np.append(pairs[-1], members[-1])
        chunks.extend(pairs)

    order = rng.permutation(len(chunks))
    per_batch = max(2, batch_size // 2)
    batches = []
    for start in range(0, len(order), per_batch):
        batch = np.concatenate([chunks[i] for i in order[start : start + per_batch]])
        if len(np.unique(labels[batch])) >= 2:
            batches.append(batch)
    return batches


def pretrain_encoder(enc: SceneEncoder, images: torch.Tensor, rt60s, config: PretrainConfig = PretrainConfig()):
    """
    Supervised contrastive training on rt60 classes; returns the frozen encoder and per-epoch mean losses.
    """
    labels = np.array([rt60_class(rt60, config.classes) for rt60 in rt60s])
    if len(np.unique(labels)) < 2:
        raise ContrastiveBatchError("pretraining needs scenes from at least two rt60 classes")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    device = next(enc.parameters()).device
    optimizer = torch.optim.Adam(enc.parameters(), lr=config.learning_rate)
    label_tensor = torch.as_tensor(labels)
    losses = []

    enc.train()
    for epoch in range(1, config.epochs + 1):
        batches = balanced_batches(labels, config.batch_size, rng)
        if not batches:
            raise ContrastiveBatchError("no batch with two classes could be formed")
        total = 0.0
        for batch in batches:
            index = torch.as_tensor(batch)
            embeddings = enc(images[index].to(device))
            loss = supcon_loss(embeddings, label_tensor[index].to(device), config.temperature)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss)
        losses.append(total / len(batches))
        logger.info("Encoder epoch %s/%s: contrastive loss %.5f", epoch, config.epochs, losses[-1])

    enc.temperature = config.temperature
    return PretrainResult(freeze(enc), losses)
