"""Forward noising, reverse denoising (ancestral and DDIM), training loop.

Array-level operations are pure numpy functions of explicit rng draws so
they can be checked against closed-form moments; the training loop and the
network live in torch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import NumericError
from .schedules import NoiseSchedule, make_schedule
from .unet import DenoiserModel

@dataclass(frozen=True)
class DiffusionConfig:
    schedule_kind: str = "cosine"
    timesteps: int = 50
    batch_size: int = 32
    epochs: int = 200
    learning_rate: float = 2e-4
    seed: int = 0

    def make_schedule(self) -> NoiseSchedule:
        return make_schedule(self.schedule_kind, self.timesteps)


def forward_sample(x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule
                   ) -> np.ndarray:
    """Noise a clean grid to step t: sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    schedule.check_t(t)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    # eps may carry extra leading (batch) dims over a single x0
    if eps.shape[max(eps.ndim - x0.ndim, 0):] != x0.shape:
        raise ValueError(f"eps shape {eps.shape} incompatible with x0 shape {x0.shape}")
    ab = schedule.alpha_bar[t - 1]
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def reverse_step(x_t: np.ndarray, t: int, eps_hat: np.ndarray, z: np.ndarray,
                 schedule: NoiseSchedule,
                 clip_x0: tuple[float, float] | None = None) -> np.ndarray:
    """One ancestral denoising step; the t = 1 step is deterministic.

    With clip_x0 set, the implied clean-sample prediction is clamped to that
    range before the posterior mean is formed. Late steps divide the
    prediction error by sqrt(1 - beta_t), which explodes when the terminal
    beta is near 1; clamping keeps the chain inside the trained value range.
    """
    schedule.check_t(t)
    beta = schedule.beta[t - 1]
    ab = schedule.alpha_bar[t - 1]
    if clip_x0 is None:
        mu = (x_t - beta / math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(1.0 - beta)
    else:
        x0 = np.clip(predict_x0(x_t, t, eps_hat, schedule), *clip_x0)
        ab_prev = 1.0 if t == 1 else schedule.alpha_bar[t - 2]
        mu = (math.sqrt(ab_prev) * beta * x0
              + math.sqrt(1.0 - beta) * (1.0 - ab_prev) * x_t) / (1.0 - ab)
    sigma = math.sqrt(schedule.posterior_var[t - 1])
    if sigma == 0.0:
        return mu
    return mu + sigma * z


def predict_x0(x_t: np.ndarray, t: int, eps_hat: np.ndarray, schedule: NoiseSchedule
               ) -> np.ndarray:
    """Invert the forward marginal around the predicted noise."""
    ab = schedule.alpha_bar[t - 1]
    return (x_t - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)


def ddim_step(x_t: np.ndarray, t: int, t_prev: int, eps_hat: np.ndarray,
              schedule: NoiseSchedule, eta: float = 0.0, z: np.ndarray | None = None,
              clip_x0: tuple[float, float] | None = None) -> np.ndarray:
    """DDIM update from step t to t_prev (t_prev = 0 lands on the clean sample).

    With clip_x0 set, the clean-sample prediction is clamped and the noise
    direction recomputed from the clamped prediction.
    """
    schedule.check_t(t)
    ab_t = schedule.alpha_bar[t - 1]
    ab_prev = 1.0 if t_prev == 0 else schedule.alpha_bar[t_prev - 1]
    x0_pred = (x_t - math.sqrt(1.0 - ab_t) * eps_hat) / math.sqrt(ab_t)
    if clip_x0 is not None:
        x0_pred = np.clip(x0_pred, *clip_x0)
        eps_hat = (x_t - math.sqrt(ab_t) * x0_pred) / math.sqrt(1.0 - ab_t)
    sigma = eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * math.sqrt(1.0 - ab_t / ab_prev)
    direction = math.sqrt(max(1.0 - ab_prev - sigma**2, 0.0)) * eps_hat
    out = math.sqrt(ab_prev) * x0_pred + direction
    if sigma > 0.0:
        out = out + sigma * z
    return out


def training_loss(model: DenoiserModel, batch: np.ndarray, rng: np.random.Generator,
                  schedule: NoiseSchedule) -> float:
    """Mean squared noise-prediction error on a batch of clean (W, L) grids."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[None]
    if batch.shape[0] == 0:
        raise ValueError("batch is empty")
    ts = rng.integers(1, schedule.T + 1, size=batch.shape[0])
    eps = rng.standard_normal(batch.shape)
    ab = schedule.alpha_bar[ts - 1][:, None, None]
    x_t = np.sqrt(ab) * batch + np.sqrt(1.0 - ab) * eps
    eps_hat = model.predict(x_t, ts)
    return float(np.mean((eps - eps_hat) ** 2))


def loss_given_noise(net: torch.nn.Module, x0: torch.Tensor, ts: torch.Tensor,
                     eps: torch.Tensor, alpha_bar: torch.Tensor) -> torch.Tensor:
    """Differentiable noise-prediction loss for fixed (t, eps) draws."""
    ab = alpha_bar[ts - 1][:, None, None, None]
    x_t = torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * eps
    eps_hat = net(x_t, ts)
    return torch.mean((eps - eps_hat) ** 2)


@dataclass
class TrainResult:
    loss_trace: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]


def train(model: DenoiserModel, grids: np.ndarray, cfg: DiffusionConfig) -> TrainResult:
    """Optimize the denoiser on encoded grids; returns the per-epoch loss trace."""
    schedule = cfg.make_schedule()
    data = torch.from_numpy(np.asarray(grids, dtype=np.float32))[:, None]
    if data.shape[0] == 0:
        raise ValueError("training set is empty")
    alpha_bar = torch.from_numpy(schedule.alpha_bar).to(torch.float32)
    gen = torch.Generator().manual_seed(cfg.seed)
    net = model.net
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    result = TrainResult()
    n = data.shape[0]
    for epoch in range(cfg.epochs):
        perm = torch.randperm(n, generator=gen)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            x0 = data[idx]
            ts = torch.randint(1, schedule.T + 1, (x0.shape[0],), generator=gen)
            eps = torch.randn(x0.shape, generator=gen)
            loss = loss_given_noise(net, x0, ts, eps, alpha_bar)
            if not torch.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch + 1}; "
                    f"lr={cfg.learning_rate}, batch={cfg.batch_size}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
        result.loss_trace.append(float(np.mean(epoch_losses)))
    net.eval()
    return result


# Clean-sample predictions are clamped to the trained intensity range while
# sampling; pass clip_x0=None to run the unclamped textbook updates.
DEFAULT_CLIP_X0 = (0.0, 2.0)


def sample_unconditional(model: DenoiserModel, schedule: NoiseSchedule, n: int,
                         rng: np.random.Generator, shape: tuple[int, int],
                         batch_size: int = 64,
                         clip_x0: tuple[float, float] | None = DEFAULT_CLIP_X0
                         ) -> np.ndarray:
    """Draw n grids by running the full reverse chain from white noise."""
    if n == 0:
        return np.zeros((0,) + tuple(shape))
    outputs = []
    for start in range(0, n, batch_size):
        b = min(batch_size, n - start)
        x = rng.standard_normal((b,) + tuple(shape))
        for t in range(schedule.T, 0, -1):
            eps_hat = model.predict(x, t)
            z = rng.standard_normal(x.shape) if t > 1 else np.zeros_like(x)
            x = reverse_step(x, t, eps_hat, z, schedule, clip_x0=clip_x0)
        outputs.append(x)
    return np.concatenate(outputs, axis=0)


def sample_ddim(model: DenoiserModel, schedule: NoiseSchedule, n: int,
                rng: np.random.Generator, shape: tuple[int, int], eta: float = 0.0,
                batch_size: int = 64,
                clip_x0: tuple[float, float] | None = DEFAULT_CLIP_X0) -> np.ndarray:
    """Draw n grids with the (deterministic when eta = 0) DDIM reverse chain."""
    if n == 0:
        return np.zeros((0,) + tuple(shape))
    outputs = []
    for start in range(0, n, batch_size):
        b = min(batch_size, n - start)
        x = rng.standard_normal((b,) + tuple(shape))
        for t in range(schedule.T, 0, -1):
            eps_hat = model.predict(x, t)
            z = rng.standard_normal(x.shape) if (eta > 0 and t > 1) else None
            x = ddim_step(x, t, t - 1, eps_hat, schedule, eta=eta, z=z, clip_x0=clip_x0)
        outputs.append(x)
    return np.concatenate(outputs, axis=0)
