"""Normalized perturbation of per-channel feature statistics (NP+)."""

from __future__ import annotations

from dataclasses import dataclass

import torch

DEFAULT_EPS = 1e-5


@dataclass(frozen=True, eq=False)
class ChannelStats:
    mu: torch.Tensor          # (B, C) spatial mean
    sigma: torch.Tensor       # (B, C) sqrt(spatial variance + eps)
    delta_raw: torch.Tensor   # (C,) variance of mu over the batch
    delta_norm: torch.Tensor  # (C,) delta_raw / max(delta_raw), or 0


@dataclass(frozen=True, eq=False)
class StyleCoeffs:
    alpha: torch.Tensor  # (B, C)
    beta: torch.Tensor   # (B, C)
    mean: float = 1.0
    std: float = 0.75
    seed: int | None = None


def channel_stats(x: torch.Tensor, eps: float = DEFAULT_EPS) -> ChannelStats:
    if x.dim() != 4 or x.shape[-1] * x.shape[-2] < 1:
        raise ValueError(f"expected a non-empty (B, C, H, W) tensor, got {tuple(x.shape)}")
    mu = x.mean(dim=(2, 3))
    var = x.var(dim=(2, 3), unbiased=False)
    sigma = torch.sqrt(var + eps)
    delta_raw = ((mu - mu.mean(dim=0, keepdim=True)) ** 2).mean(dim=0)
    peak = delta_raw.max()
    # below this the spread of channel means is summation rounding, not signal
    floor = (x.shape[-1] * x.shape[-2] * torch.finfo(x.dtype).eps * x.detach().abs().max()) ** 2
    if peak > floor:
        delta_norm = delta_raw / peak
    else:
        # every sample shares its channel means; NP+ reduces to y = alpha * x
        delta_norm = torch.zeros_like(delta_raw)
    return ChannelStats(mu, sigma, delta_raw, delta_norm)


def sample_coeffs(batch: int, channels: int, mean: float = 1.0, std: float = 0.75,
                  seed: int | None = None, *, generator: torch.Generator | None = None,
                  dtype: torch.dtype = torch.float32) -> StyleCoeffs:
    if batch < 1 or channels < 1:
        raise ValueError("batch and channels must be positive")
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    if generator is None:
        generator = torch.Generator()
        if seed is not None:
            generator.manual_seed(int(seed))
    alpha = torch.randn((batch, channels), generator=generator, dtype=dtype) * std + mean
    beta = torch.randn((batch, channels), generator=generator, dtype=dtype) * std + mean
    return StyleCoeffs(alpha, beta, mean, std, seed)


def np_plus(x: torch.Tensor, coeffs: StyleCoeffs, stats: ChannelStats | None = None) -> torch.Tensor:
    """``y = alpha * x + delta * (beta - alpha) * mu``, broadcast per (sample, channel)."""
    if stats is None:
        stats = channel_stats(x)
    b, c = x.shape[:2]
    if coeffs.alpha.shape != (b, c) or coeffs.beta.shape != (b, c):
        raise ValueError(
            f"coefficients of shape {tuple(coeffs.alpha.shape)} do not match batch {(b, c)}")
    if stats.mu.shape != (b, c):
        raise ValueError(f"statistics of shape {tuple(stats.mu.shape)} do not match batch {(b, c)}")
    alpha = coeffs.alpha.to(x)
    beta = coeffs.beta.to(x)
    shift = stats.delta_norm[None, :] * (beta - alpha) * stats.mu
    return alpha[:, :, None, None] * x + shift[:, :, None, None]
