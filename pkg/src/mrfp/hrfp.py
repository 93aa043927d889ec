"""Randomly initialised overcomplete conv/BN autoencoder (HRFP).

The encoder upsamples its input geometrically to ``osf`` times the input size
over ``depth_encoder`` layers; the decoder walks the same sizes back down. Every
layer is ``resize -> conv(k x k, same padding) -> batch norm`` with random,
non-learnable weights. Two outputs are produced: ``o1`` with the input's shape
and ``o2``, the largest (last encoder) activation.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F

from .rf_geometry import ScaleSchedule, make_schedule, scaled_size

BN_EPS = 1e-5


@dataclass(frozen=True)
class StackSpec:
    channels: int
    depth_encoder: int = 4
    depth_decoder: int = 4
    kernel_side: int = 3
    osf: float = 2.0
    bn_init_std: float = 0.5
    conv_init: str = "he"
    o2_channels: int | None = None
    schedule: ScaleSchedule = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError(f"channels must be positive, got {self.channels}")
        if self.depth_encoder != self.depth_decoder:
            raise ValueError("encoder and decoder depth must match")
        if self.kernel_side < 1 or self.kernel_side % 2 == 0:
            raise ValueError(f"kernel_side must be odd, got {self.kernel_side}")
        if not self.bn_init_std > 0:
            raise ValueError("bn_init_std must be positive")
        if self.conv_init != "he":
            raise ValueError(f"unsupported conv_init {self.conv_init!r}")
        if self.o2_channels is not None and self.o2_channels < 1:
            raise ValueError("o2_channels must be positive")
        object.__setattr__(self, "schedule", make_schedule(self.depth_encoder, self.osf))

    @property
    def depth(self) -> int:
        return self.depth_encoder

    @property
    def adapter_channels(self) -> int:
        return self.channels if self.o2_channels is None else self.o2_channels

    def as_dict(self) -> dict:
        return {
            "channels": self.channels,
            "depth_encoder": self.depth_encoder,
            "depth_decoder": self.depth_decoder,
            "kernel_side": self.kernel_side,
            "osf": self.osf,
            "bn_init_std": self.bn_init_std,
            "conv_init": self.conv_init,
            "o2_channels": self.o2_channels,
        }


@dataclass(frozen=True, eq=False)
class RandomStack:
    """Sampled weights of one HRFP block.

    ``conv_weights``, ``bn_gammas`` and ``bn_betas`` hold encoder layers first,
    then decoder layers. The tensors do not require grad unless the stack was
    made learnable (see :func:`mrfp.wrapper.wrap` with ``L_MRFP``).
    """

    spec: StackSpec
    conv_weights: tuple[torch.Tensor, ...]
    bn_gammas: tuple[torch.Tensor, ...]
    bn_betas: tuple[torch.Tensor, ...]
    o2_adapter: torch.Tensor
    seed: int

    def tensors(self) -> list[torch.Tensor]:
        return [*self.conv_weights, *self.bn_gammas, *self.bn_betas, self.o2_adapter]

    def num_elements(self) -> int:
        return sum(t.numel() for t in self.tensors())

    def to(self, *args, **kwargs) -> "RandomStack":
        conv = tuple(w.to(*args, **kwargs) for w in self.conv_weights)
        gam = tuple(g.to(*args, **kwargs) for g in self.bn_gammas)
        bet = tuple(b.to(*args, **kwargs) for b in self.bn_betas)
        return replace(self, conv_weights=conv, bn_gammas=gam, bn_betas=bet,
                       o2_adapter=self.o2_adapter.to(*args, **kwargs))

    def equal(self, other: "RandomStack") -> bool:
        """Bit-for-bit equality of spec, seed and all weights."""
        if self.spec != other.spec or self.seed != other.seed:
            return False
        return all(torch.equal(a, b) for a, b in zip(self.tensors(), other.tensors()))


def _layer_count(spec: StackSpec) -> int:
    return spec.depth_encoder + spec.depth_decoder


def sample_stack(spec: StackSpec, seed: int) -> RandomStack:
    """Draw a fresh stack: He-normal conv kernels, N(0, bn_init_std^2) for BN affine."""
    gen = torch.Generator().manual_seed(int(seed) & 0xFFFF_FFFF_FFFF_FFFF)
    c, k = spec.channels, spec.kernel_side
    he_std = (2.0 / (c * k * k)) ** 0.5
    conv, gammas, betas = [], [], []
    for _ in range(_layer_count(spec)):
        conv.append(torch.randn((c, c, k, k), generator=gen) * he_std)
        gammas.append(torch.randn(c, generator=gen) * spec.bn_init_std)
        betas.append(torch.randn(c, generator=gen) * spec.bn_init_std)
    adapter_std = (2.0 / c) ** 0.5
    adapter = torch.randn((spec.adapter_channels, c, 1, 1), generator=gen) * adapter_std
    return RandomStack(spec, tuple(conv), tuple(gammas), tuple(betas), adapter, int(seed))


def layer_sizes(spec: StackSpec, height: int, width: int) -> list[tuple[int, int]]:
    """Spatial size after each of the encoder then decoder layers."""
    cum = spec.schedule.cumulative_scales
    enc = [(scaled_size(height, s), scaled_size(width, s)) for s in cum]
    dec = [(scaled_size(height, s), scaled_size(width, s)) for s in reversed(cum[:-1])]
    dec.append((height, width))
    return enc + dec


def _resize(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def _random_bn(x, gamma, beta, normalize: bool):
    if not normalize:
        return x * gamma[None, :, None, None] + beta[None, :, None, None]
    return F.batch_norm(x, None, None, gamma, beta, training=True, eps=BN_EPS)


def hrfp_forward(x: torch.Tensor, stack: RandomStack, *, normalize: bool = True,
                 return_all: bool = False):
    """Run the HRFP autoencoder on a (B, C, H, W) feature map.

    Returns ``(o1, o2)``; with ``return_all`` a third element lists every
    intermediate activation. ``normalize=False`` skips the batch statistics and
    applies only the affine part of each BN layer.
    """
    spec = stack.spec
    if x.dim() != 4:
        raise ValueError(f"expected a 4-D feature map, got shape {tuple(x.shape)}")
    if x.shape[1] != spec.channels:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, stack expects {spec.channels}")
    h, w = x.shape[-2:]
    if min(h, w) < spec.kernel_side:
        raise ValueError(f"spatial size {(h, w)} smaller than kernel {spec.kernel_side}")
    pad = spec.kernel_side // 2
    sizes = layer_sizes(spec, h, w)
    acts = []
    o2 = None
    out = x
    for idx, size in enumerate(sizes):
        out = _resize(out, size)
        out = F.conv2d(out, stack.conv_weights[idx], padding=pad)
        out = _random_bn(out, stack.bn_gammas[idx], stack.bn_betas[idx], normalize)
        acts.append(out)
        if idx == spec.depth_encoder - 1:
            o2 = out
    if return_all:
        return out, o2, acts
    return out, o2


def apply_o1(stage0_out: torch.Tensor, o1: torch.Tensor) -> torch.Tensor:
    if stage0_out.shape != o1.shape:
        raise ValueError(f"shape mismatch: {tuple(stage0_out.shape)} vs {tuple(o1.shape)}")
    return stage0_out + o1


def apply_o2(decoder_penult: torch.Tensor, o2: torch.Tensor, stack: RandomStack) -> torch.Tensor:
    """Resize ``o2`` to the decoder tap, map channels with the random 1x1 adapter, add."""
    o2 = _resize(o2, tuple(decoder_penult.shape[-2:]))
    if stack.o2_adapter.shape[0] != decoder_penult.shape[1]:
        raise ValueError(
            f"adapter produces {stack.o2_adapter.shape[0]} channels, "
            f"decoder tap has {decoder_penult.shape[1]}")
    return decoder_penult + F.conv2d(o2, stack.o2_adapter)


# Serialisation: a JSON header followed by the weight blobs, in one .npz archive.

def save_stack(stack: RandomStack, path) -> None:
    header = {"format": "mrfp-random-stack", "version": 1, "seed": stack.seed,
              "spec": stack.spec.as_dict()}
    arrays = {"header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for i, t in enumerate(stack.conv_weights):
        arrays[f"conv_{i}"] = t.detach().cpu().numpy()
    for i, t in enumerate(stack.bn_gammas):
        arrays[f"gamma_{i}"] = t.detach().cpu().numpy()
    for i, t in enumerate(stack.bn_betas):
        arrays[f"beta_{i}"] = t.detach().cpu().numpy()
    arrays["o2_adapter"] = stack.o2_adapter.detach().cpu().numpy()
    if isinstance(path, io.IOBase):
        np.savez(path, **arrays)
    else:
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)


def load_stack(path) -> RandomStack:
    with np.load(path) as data:
        header = json.loads(data["header"].tobytes().decode())
        if header.get("format") != "mrfp-random-stack":
            raise ValueError("not a random-stack file")
        spec = StackSpec(**header["spec"])
        n = _layer_count(spec)
        conv = tuple(torch.from_numpy(data[f"conv_{i}"].copy()) for i in range(n))
        gam = tuple(torch.from_numpy(data[f"gamma_{i}"].copy()) for i in range(n))
        bet = tuple(torch.from_numpy(data[f"beta_{i}"].copy()) for i in range(n))
        adapter = torch.from_numpy(data["o2_adapter"].copy())
    return RandomStack(spec, conv, gam, bet, adapter, header["seed"])
