"""Variance schedules for the forward noising process.

A schedule holds beta_1..beta_T together with the derived cumulative signal
fractions alpha_bar_t = prod_{s<=t}(1 - beta_s) and the reverse-posterior
variances beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t
(zero at t = 1, matching the deterministic final generation step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BETA_CLIP = 0.999
COSINE_OFFSET = 0.008
LINEAR_BETA_START = 1e-4
LINEAR_BETA_END = 0.02
LINEAR_REFERENCE_T = 1000


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    beta: np.ndarray
    alpha_bar: np.ndarray = field(init=False)
    posterior_var: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size == 0:
            raise ValueError("beta must be a nonempty 1-D array")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise ValueError("all beta_t must lie in (0, 1)")
        alpha_bar = np.cumprod(1.0 - beta)
        prev = np.concatenate([[1.0], alpha_bar[:-1]])
        posterior_var = (1.0 - prev) / (1.0 - alpha_bar) * beta
        posterior_var[0] = 0.0
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        object.__setattr__(self, "posterior_var", posterior_var)

    @property
    def T(self) -> int:
        return self.beta.size

    @property
    def fully_noised(self) -> bool:
        """Whether the terminal marginal is effectively pure noise."""
        return bool(self.alpha_bar[-1] < 1e-3)

    def check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"step index {t} outside [1, {self.T}]")


def linear_schedule(T: int) -> NoiseSchedule:
    """Linear betas with endpoints rescaled by 1000/T so noising depth is T-free."""
    scale = LINEAR_REFERENCE_T / T
    beta = np.linspace(LINEAR_BETA_START, LINEAR_BETA_END, T) * scale
    return NoiseSchedule(kind="linear", beta=np.clip(beta, 1e-8, BETA_CLIP))


def cosine_schedule(T: int, offset: float = COSINE_OFFSET) -> NoiseSchedule:
    """Squared-cosine alpha_bar profile with the standard small offset."""
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos((steps / T + offset) / (1 + offset) * np.pi / 2) ** 2
    alpha_bar = f / f[0]
    beta = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
    return NoiseSchedule(kind="cosine", beta=np.clip(beta, 1e-8, BETA_CLIP))


def make_schedule(kind: str, T: int) -> NoiseSchedule:
    if kind == "linear":
        return linear_schedule(T)
    if kind == "cosine":
        return cosine_schedule(T)
    raise ValueError(f"unknown schedule kind {kind!r}")
