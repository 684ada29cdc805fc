"""
Cycle-consistency feedback between the reverberator f and the dereverberator g.

Each hop of a cycle is one x0 estimate from a single noise prediction at an independently drawn step
(or a short ancestral chain when cycle_steps > 1). Nothing is detached, so cycle errors reach both
converters.
"""
import logging
from collections import namedtuple

import torch

from mvsd.libraries.diffusion import predict_x0, q_sample, run_chain

logger = logging.getLogger(__name__)

LossBreakdown = namedtuple("LossBreakdown", "l_d, l_m, l_sty, l_total, delta_c, delta_r, delta_nat, delta_ane")


class CycleError(ValueError):
    pass


def mean_l1(a, b):
    """Per-item mean absolute difference, shape [B]."""
    return (a - b).abs().flatten(1).mean(dim=1)


def estimate_x0(model, noised_from, source, scene_emb, s, generator, cycle_steps: int = 1):
    """
    Clamped x0 prediction of `model` for `source`. With one step, the denoising input is
    q_sample(noised_from, t, z) at a random t; with more, a cycle_steps-long chain starts from noise.
    """
    if cycle_steps > 1:
        return run_chain(model, scene_emb, source, s, generator, cycle_steps)
    batch = noised_from.shape[0]
    t = torch.randint(1, s.T + 1, (batch,), generator=generator).to(noised_from.device)
    z = torch.randn(noised_from.shape, generator=generator, dtype=noised_from.dtype).to(noised_from.device)
    x_t = q_sample(noised_from, t, z, s)
    return predict_x0(x_t, model(x_t, source, t, scene_emb), t, s, clamp=True)


def paired_cycle_losses(f, g, scene_emb, a_c, a_r, s, generator, cycle_steps: int = 1):
    """Forward cycle a_c -> f -> g and backward cycle a_r -> g -> f; per-item errors (delta_c, delta_r)."""
    a_r_hat = estimate_x0(f, a_r, a_c, scene_emb, s, generator, cycle_steps)
    a_c_tilde = estimate_x0(g, a_c, a_r_hat, scene_emb, s, generator, cycle_steps)
    delta_c = mean_l1(a_c_tilde, a_c)

    a_c_hat = estimate_x0(g, a_c, a_r, scene_emb, s, generator, cycle_steps)
    a_r_tilde = estimate_x0(f, a_r, a_c_hat, scene_emb, s, generator, cycle_steps)
    delta_r = mean_l1(a_r_tilde, a_r)
    return delta_c, delta_r


def unpaired_natural_cycle(f, g, scene_emb, a_r, s, generator, cycle_steps: int = 1):
    """
    Natural recordings have no clean target, so g's first hop denoises the noised reverberant source
    itself; f then has to bring the result back to a_r.
    """
    a_c_hat = estimate_x0(g, a_r, a_r, scene_emb, s, generator, cycle_steps)
    a_r_tilde = estimate_x0(f, a_r, a_c_hat, scene_emb, s, generator, cycle_steps)
    return mean_l1(a_r_tilde, a_r)


def unpaired_anechoic_cycle(f, g, scene_pool, a_c, s, generator, cycle_steps: int = 1):
    """
    Clean clips borrow a scene drawn uniformly from `scene_pool` [P, D] on every call. Returns the
    per-item error and the drawn pool indices.
    """
    if scene_pool is None or len(scene_pool) == 0:
        raise CycleError("the unpaired anechoic cycle needs at least one natural scene to draw from")
    drawn = torch.randint(0, len(scene_pool), (a_c.shape[0],), generator=generator)
    scene_emb = scene_pool[drawn.to(scene_pool.device)]
    a_r_hat = estimate_x0(f, a_c, a_c, scene_emb, s, generator, cycle_steps)
    a_c_tilde = estimate_x0(g, a_c, a_r_hat, scene_emb, s, generator, cycle_steps)
    return mean_l1(a_c_tilde, a_c), drawn


def mutual_loss(paired=None, natural=None, anechoic=None):
    """
    Literal unweighted sum of per-collection batch means; collections missing from the step add 0.
    `paired` is a (delta_c, delta_r) pair of per-item tensors.
    """
    total = torch.zeros(())
    if paired is not None:
        delta_c, delta_r = paired
        total = total.to(delta_c) + (delta_c + delta_r).mean()
    if natural is not None:
        total = total.to(natural) + natural.mean()
    if anechoic is not None:
        total = total.to(anechoic) + anechoic.mean()
    return total


def style_loss(a_r_hat, a_r, a_c_hat, a_c):
    return (a_r_hat - a_r).abs().mean() + (a_c_hat - a_c).abs().mean()


def _mean(values):
    return 0.0 if values is None else float(values.detach().mean())


def breakdown(l_d, l_m, l_sty, paired=None, natural=None, anechoic=None) -> LossBreakdown:
    """Logged view of one step; l_total is the sum of the logged terms."""
    l_d, l_m, l_sty = float(l_d), float(l_m), float(l_sty)
    delta_c, delta_r = paired if paired is not None else (None, None)
    return LossBreakdown(
        l_d=l_d,
        l_m=l_m,
        l_sty=l_sty,
        l_total=l_d + l_m + l_sty,
        delta_c=_mean(delta_c),
        delta_r=_mean(delta_r),
        delta_nat=_mean(natural),
        delta_ane=_mean(anechoic),
    )
