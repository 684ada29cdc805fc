import logging
from collections import namedtuple

import torch
import torch.nn.functional as F

from mvsd.constants import BETA_CAP, BETA_END, BETA_START

logger = logging.getLogger(__name__)

# beta, alpha and alpha_bar are float64 tensors of length T; index t - 1 holds step t
NoiseSchedule = namedtuple("NoiseSchedule", "T, beta, alpha, alpha_bar")

DiffusionLoss = namedtuple("DiffusionLoss", "loss, t, z, z_hat, x0_hat")


class DiffusionError(ValueError):
    pass


def default_betas(T: int):
    """Linear 1e-4 -> 0.02 stretched by 1000 / T, capped below 1."""
    scale = 1000.0 / T
    return min(BETA_START * scale, BETA_CAP), min(BETA_END * scale, BETA_CAP)


def schedule_from_betas(beta) -> NoiseSchedule:
    beta = torch.as_tensor(beta, dtype=torch.float64)
    if beta.ndim != 1 or len(beta) < 1:
        raise DiffusionError("a schedule needs at least one step")
    if not bool(torch.all((beta > 0) & (beta < 1))):
        raise DiffusionError("every beta must lie in (0, 1)")
    alpha = 1.0 - beta
    return NoiseSchedule(len(beta), beta, alpha, torch.cumprod(alpha, dim=0))


def make_schedule(T: int, beta_start: float = None, beta_end: float = None) -> NoiseSchedule:
    if T < 1:
        raise DiffusionError(f"T must be >= 1, got {T}")
    if beta_start is None or beta_end is None:
        default_start, default_end = default_betas(T)
        beta_start = default_start if beta_start is None else beta_start
        beta_end = default_end if beta_end is None else beta_end
    if not (0 < beta_start <= beta_end < 1):
        raise DiffusionError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return schedule_from_betas(torch.linspace(beta_start, beta_end, T, dtype=torch.float64))


def respace_schedule(s: NoiseSchedule, steps: int):
    """
    Ancestral chain over `steps` evenly spaced timesteps of `s`. Returns the respaced schedule and the
    original timestep (1-based) each new step stands for, so the model is still queried with the step
    it was trained on.
    """
    if not 1 <= steps <= s.T:
        raise DiffusionError(f"steps must be in [1, {s.T}], got {steps}")
    if steps == s.T:
        return s, list(range(1, s.T + 1))
    timesteps = sorted({int(round(x)) for x in torch.linspace(1, s.T, steps, dtype=torch.float64).tolist()})
    alpha_bar = s.alpha_bar[torch.tensor(timesteps) - 1]
    previous = torch.cat([torch.ones(1, dtype=torch.float64), alpha_bar[:-1]])
    return schedule_from_betas(1.0 - alpha_bar / previous), timesteps


def _check_t(t, s: NoiseSchedule, lowest: int = 1):
    values = torch.as_tensor(t)
    if bool(torch.any(values < lowest)) or bool(torch.any(values > s.T)):
        raise DiffusionError(f"t must be in [{lowest}, {s.T}], got {values.tolist()}")


def _at(values, t, like: torch.Tensor):
    """Schedule entries for step(s) t, shaped to broadcast against `like` ([B, ...] or unbatched)."""
    t = torch.as_tensor(t, device=values.device)
    picked = values[t.long() - 1].to(dtype=like.dtype, device=like.device)
    if picked.ndim == 0:
        return picked
    return picked.reshape(-1, *([1] * (like.ndim - 1)))


def q_sample(x0, t, z, s: NoiseSchedule):
    _check_t(t, s)
    alpha_bar = _at(s.alpha_bar, t, x0)
    return torch.sqrt(alpha_bar) * x0 + torch.sqrt(1.0 - alpha_bar) * z


def predict_x0(x_t, z_hat, t, s: NoiseSchedule, clamp: bool = False):
    _check_t(t, s)
    alpha_bar = _at(s.alpha_bar, t, x_t)
    if bool(torch.any(alpha_bar <= 0)):
        raise DiffusionError("alpha_bar is zero, x0 can't be recovered")
    x0 = (x_t - torch.sqrt(1.0 - alpha_bar) * z_hat) / torch.sqrt(alpha_bar)
    return x0.clamp(-1.0, 1.0) if clamp else x0


def _alpha_bar_prev(s: NoiseSchedule):
    return torch.cat([torch.ones(1, dtype=s.alpha_bar.dtype), s.alpha_bar[:-1]])


def posterior_variance(t, s: NoiseSchedule, like: torch.Tensor):
    """beta-tilde_t, zero at t = 1 because alpha_bar_0 = 1."""
    tilde = (1.0 - _alpha_bar_prev(s)) / (1.0 - s.alpha_bar) * s.beta
    return _at(tilde, t, like)


def posterior_mean(x0, x_t, t, s: NoiseSchedule):
    """Mean of q(x_{t-1} | x_t, x0)."""
    _check_t(t, s)
    prev = _at(_alpha_bar_prev(s), t, x_t)
    alpha_bar = _at(s.alpha_bar, t, x_t)
    beta = _at(s.beta, t, x_t)
    alpha = _at(s.alpha, t, x_t)
    x0_weight = torch.sqrt(prev) * beta / (1.0 - alpha_bar)
    x_t_weight = torch.sqrt(alpha) * (1.0 - prev) / (1.0 - alpha_bar)
    return x0_weight * x0 + x_t_weight * x_t


def denoise_step(x_t, z_hat, t, s: NoiseSchedule, noise_draw):
    _check_t(t, s)
    alpha = _at(s.alpha, t, x_t)
    beta = _at(s.beta, t, x_t)
    alpha_bar = _at(s.alpha_bar, t, x_t)
    mean = (x_t - beta / torch.sqrt(1.0 - alpha_bar) * z_hat) / torch.sqrt(alpha)
    return mean + torch.sqrt(posterior_variance(t, s, x_t)) * noise_draw


def _batched_t(t, batch, device):
    return torch.full((batch,), int(t), dtype=torch.long, device=device)


def run_chain(model, scene_emb, source, s: NoiseSchedule, generator: torch.Generator, steps: int = None):
    """
    Ancestral chain from seeded noise; returns the clamped x0 estimate at the final step. Differentiable
    with respect to the model, which is how multi-step cycles reuse it.
    """
    chain, timesteps = respace_schedule(s, steps or s.T)
    batch = source.shape[0]

    def draw():
        return torch.randn(source.shape, generator=generator, dtype=source.dtype).to(source.device)

    x = draw()
    for index in range(chain.T, 0, -1):
        z_hat = model(x, source, _batched_t(timesteps[index - 1], batch, source.device), scene_emb)
        if index == 1:
            return predict_x0(x, z_hat, 1, chain, clamp=True)
        x = denoise_step(x, z_hat, index, chain, draw())


def sample(model, scene_emb, source, s: NoiseSchedule, seed: int, steps_override: int = None):
    """
    Generate a spectrogram batch for `source` [B, 1, H, W] under `scene_emb` [B, D].
    Deterministic given (weights, seed, source, scene_emb).
    """
    generator = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        return run_chain(model, scene_emb, source, s, generator, steps_override)


def diffusion_loss(model, x0_target, source, scene_emb, s: NoiseSchedule, generator: torch.Generator):
    """Simplified noise-prediction objective with t drawn per example; caches t, z, z_hat and x0_hat."""
    batch = x0_target.shape[0]
    t = torch.randint(1, s.T + 1, (batch,), generator=generator).to(x0_target.device)
    z = torch.randn(x0_target.shape, generator=generator, dtype=x0_target.dtype).to(x0_target.device)
    x_t = q_sample(x0_target, t, z, s)
    z_hat = model(x_t, source, t, scene_emb)
    return DiffusionLoss(F.mse_loss(z_hat, z), t, z, z_hat, predict_x0(x_t, z_hat, t, s))
