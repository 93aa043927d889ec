"""Plug-in wrapper that installs MRFP perturbations on a segmentation backbone.

Training forward::

    x -> stage0 -> [NP+] -> [+ O1] -> rest of encoder -> decoder -> [+ O2] -> head

NP+ and HRFP are toggled independently per iteration. In evaluation mode the
hooks return early, so the backbone runs untouched.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
import torch
from torch import nn

from .harness.backbone import PENULTIMATE_HOOK, STAGE0_HOOK, add_instance_norms
from .hrfp import RandomStack, StackSpec, apply_o1, apply_o2, hrfp_forward, sample_stack
from .npplus import np_plus, sample_coeffs


class Variant(str, enum.Enum):
    NONE = "NONE"
    HRFP = "HRFP"
    HRFP_PLUS = "HRFP_PLUS"
    SCFP = "SCFP"
    RGN = "RGN"
    L_MRFP = "L_MRFP"


# Which perturbation paths each variant uses.
_USES_NP = {Variant.HRFP, Variant.HRFP_PLUS, Variant.SCFP, Variant.L_MRFP}
_USES_STACK = {Variant.HRFP, Variant.HRFP_PLUS, Variant.SCFP, Variant.L_MRFP}
_USES_O2 = {Variant.HRFP_PLUS, Variant.SCFP}


@dataclass(frozen=True)
class PerturbConfig:
    variant: Variant = Variant.HRFP
    p_hrfp: float = 0.5
    p_np: float = 0.5
    osf: float = 2.0
    rgn_std: float | None = None
    np_mean: float = 1.0
    np_std: float = 0.75
    bn_init_std: float = 0.5
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        for name in ("p_hrfp", "p_np"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if not self.osf > 0:
            raise ValueError(f"osf must be positive, got {self.osf}")
        if self.np_std < 0 or not self.bn_init_std > 0:
            raise ValueError("np_std must be >= 0 and bn_init_std > 0")
        if self.variant is Variant.RGN:
            if self.rgn_std is None or self.rgn_std < 0:
                raise ValueError("RGN needs a non-negative rgn_std")
        elif self.rgn_std is not None:
            raise ValueError(f"rgn_std is only meaningful for RGN, not {self.variant.value}")

    @property
    def effective_osf(self) -> float:
        return 1.0 if self.variant is Variant.SCFP else self.osf


def make_scfp(config: PerturbConfig) -> PerturbConfig:
    """Same configuration with every HRFP layer kept at the input resolution."""
    return replace(config, osf=1.0)


def rgn_perturb(x: torch.Tensor, std: float, seed: int | None = None, *,
                generator: torch.Generator | None = None) -> torch.Tensor:
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    if std == 0:
        return x
    if generator is None:
        generator = torch.Generator()
        if seed is not None:
            generator.manual_seed(int(seed))
    noise = torch.randn(x.shape, generator=generator, dtype=x.dtype) * std
    return x + noise.to(x.device)


@dataclass(frozen=True, eq=False)
class IterationDraw:
    iteration: int
    hrfp_on: bool
    np_on: bool
    stack: RandomStack | None
    np_seed: int
    noise_seed: int


def _iteration_stream(master_seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed) & (2**63 - 1), int(iteration)]))


class WrappedModel(nn.Module):
    def __init__(self, backbone: nn.Module, config: PerturbConfig, channels: dict[str, int] | None = None):
        super().__init__()
        modules = dict(backbone.named_modules())
        missing = [n for n in (STAGE0_HOOK, PENULTIMATE_HOOK) if n not in modules]
        if missing:
            raise KeyError(f"backbone has no layer(s) named {missing}")
        if channels is None:
            channels = getattr(backbone, "hook_channels", None)
            if channels is None:
                raise ValueError("hook channel counts unknown; pass channels=")
        self.backbone = backbone
        self.config = config
        self.iteration = 0
        self.current: IterationDraw | None = None
        self.instance_norms: tuple[nn.Module, ...] = ()
        self._o2 = None
        self._stack = None
        self.stack_spec = StackSpec(
            channels=channels[STAGE0_HOOK], osf=config.effective_osf,
            bn_init_std=config.bn_init_std, o2_channels=channels[PENULTIMATE_HOOK])
        if config.variant is Variant.HRFP_PLUS:
            # Registered on the backbone; tracked here only for bookkeeping.
            self.instance_norms = tuple(add_instance_norms(backbone))
        self.learned_stack = None
        if config.variant is Variant.L_MRFP:
            ref = next(backbone.parameters())
            stack = sample_stack(self.stack_spec, config.master_seed).to(ref.device, ref.dtype)
            self.learned_stack = nn.ParameterList(nn.Parameter(t.clone()) for t in stack.tensors())
        self._handles = [
            modules[STAGE0_HOOK].register_forward_hook(self._stage0_hook),
            modules[PENULTIMATE_HOOK].register_forward_hook(self._penultimate_hook),
        ]

    # -- per-iteration randomness -------------------------------------------------

    def _persistent_stack(self) -> RandomStack:
        n = self.stack_spec.depth_encoder + self.stack_spec.depth_decoder
        p = list(self.learned_stack)
        return RandomStack(self.stack_spec, tuple(p[:n]), tuple(p[n:2 * n]),
                           tuple(p[2 * n:3 * n]), p[3 * n], self.config.master_seed)

    def training_step_setup(self, iteration: int, *, force_hrfp: bool | None = None,
                            force_np: bool | None = None) -> IterationDraw:
        cfg = self.config
        rng = _iteration_stream(cfg.master_seed, iteration)
        hrfp_on = bool(rng.random() < cfg.p_hrfp)
        np_on = bool(rng.random() < cfg.p_np)
        stack_seed, np_seed, noise_seed = (int(s) for s in rng.integers(0, 2**63 - 1, size=3))
        if force_hrfp is not None:
            hrfp_on = force_hrfp
        if force_np is not None:
            np_on = force_np
        if cfg.variant not in _USES_NP:
            np_on = False
        if cfg.variant is Variant.NONE:
            hrfp_on = False
        stack = None
        if hrfp_on and cfg.variant in _USES_STACK:
            if cfg.variant is Variant.L_MRFP:
                stack = self._persistent_stack()
            else:
                stack = sample_stack(self.stack_spec, stack_seed)
        draw = IterationDraw(int(iteration), hrfp_on, np_on, stack, np_seed, noise_seed)
        self.current = draw
        self.iteration = int(iteration)
        return draw

    # -- hooks --------------------------------------------------------------------

    def _active(self) -> bool:
        return self.training and self.config.variant is not Variant.NONE

    def _stage0_hook(self, module, inputs, z):
        self._o2 = None
        self._stack = None
        if not self._active():
            return None
        draw = self.current
        if draw is None or draw.iteration != self.iteration:
            draw = self.training_step_setup(self.iteration)
        out = z
        if draw.np_on:
            gen = torch.Generator().manual_seed(draw.np_seed)
            coeffs = sample_coeffs(z.shape[0], z.shape[1], self.config.np_mean, self.config.np_std,
                                   generator=gen, dtype=z.dtype)
            out = np_plus(out, coeffs)
        if draw.hrfp_on:
            if self.config.variant is Variant.RGN:
                gen = torch.Generator().manual_seed(draw.noise_seed)
                out = rgn_perturb(out, self.config.rgn_std, generator=gen)
            else:
                stack = draw.stack
                if stack.o2_adapter.dtype != z.dtype:
                    stack = stack.to(dtype=z.dtype)
                # HRFP sees the clean tap so the two toggles stay independent.
                o1, o2 = hrfp_forward(z, stack)
                out = apply_o1(out, o1)
                if self.config.variant in _USES_O2:
                    self._o2, self._stack = o2, stack
        return out

    def _penultimate_hook(self, module, inputs, out):
        if not self._active() or self._o2 is None:
            return None
        o2, stack = self._o2, self._stack
        self._o2 = self._stack = None
        return apply_o2(out, o2, stack)

    # -- forward ------------------------------------------------------------------

    def forward(self, x):
        return self.backbone(x)

    def encode(self, x):
        return self.backbone.encode(x)

    def remove_hooks(self) -> nn.Module:
        """Detach the perturbation hooks and return the bare backbone."""
        for h in self._handles:
            h.remove()
        self._handles = []
        return self.backbone


def wrap(backbone: nn.Module, config: PerturbConfig, channels: dict[str, int] | None = None) -> WrappedModel:
    return WrappedModel(backbone, config, channels)


def training_step_setup(model: WrappedModel, iteration: int, **force) -> IterationDraw:
    return model.training_step_setup(iteration, **force)
