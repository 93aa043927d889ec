"""ERM training loop and evaluation for the toy segmentation setup."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from ..metrics import IGNORE_LABEL, ConfusionMatrix, MIoUReport, accumulate, miou


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    poly_power: float = 0.9
    max_iter: int = 2000
    batch_size: int = 8
    seed: int = 0
    hflip: bool = True
    crop_size: int | None = None

    def __post_init__(self):
        if not (self.lr0 > 0 and self.momentum >= 0 and self.weight_decay >= 0
                and self.poly_power > 0 and self.max_iter > 0 and self.batch_size > 0):
            raise ValueError(f"invalid training configuration: {self}")


def poly_lr(iteration: int, cfg: TrainConfig) -> float:
    if not 0 <= iteration <= cfg.max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {cfg.max_iter}]")
    return cfg.lr0 * (1.0 - iteration / cfg.max_iter) ** cfg.poly_power


def segmentation_loss(logits: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Mean over samples of each sample's mean pixel cross-entropy.

    Ignored pixels are dropped; samples with no valid pixel do not count.
    """
    pix = F.cross_entropy(logits, masks, ignore_index=IGNORE_LABEL, reduction="none")
    valid = (masks != IGNORE_LABEL).flatten(1).to(pix.dtype)
    per_sample = (pix.flatten(1) * valid).sum(1) / valid.sum(1).clamp(min=1)
    has_pixels = valid.sum(1) > 0
    return per_sample[has_pixels].mean()


@dataclass
class TrainResult:
    state_dict: dict
    losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    toggles: list[tuple[bool, bool]] = field(default_factory=list)


def _batch(datasets, rng, cfg: TrainConfig):
    """Draw a batch; each sample picks its source domain uniformly at random."""
    images, masks = [], []
    for _ in range(cfg.batch_size):
        ds = datasets[rng.integers(len(datasets))] if len(datasets) > 1 else datasets[0]
        j = rng.integers(len(ds))
        img, m = ds.images[j], ds.masks[j]
        if cfg.crop_size is not None:
            h, w = m.shape
            c = cfg.crop_size
            y0, x0 = rng.integers(0, h - c + 1), rng.integers(0, w - c + 1)
            img, m = img[:, y0:y0 + c, x0:x0 + c], m[y0:y0 + c, x0:x0 + c]
        if cfg.hflip and rng.random() < 0.5:
            img, m = img.flip(-1), m.flip(-1)
        images.append(img)
        masks.append(m)
    return torch.stack(images), torch.stack(masks)


def _param_groups(model):
    return [p for p in model.parameters() if p.requires_grad]


def train(model, data, cfg: TrainConfig, *, log_every: int = 0, logger=None) -> TrainResult:
    """Momentum SGD with weight decay and a poly schedule.

    ``data`` is a dataset or a list of datasets (multi-source). ``model`` may be a
    :class:`~mrfp.wrapper.WrappedModel`; its per-iteration toggles are drawn here.
    """
    datasets = list(data) if isinstance(data, (list, tuple)) else [data]
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x7EA1]))
    params = _param_groups(model)
    opt = torch.optim.SGD(params, lr=cfg.lr0, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    result = TrainResult(state_dict={})
    setup = getattr(model, "training_step_setup", None)
    model.train()
    for it in range(cfg.max_iter):
        lr = poly_lr(it, cfg)
        for g in opt.param_groups:
            g["lr"] = lr
        images, masks = _batch(datasets, rng, cfg)
        if setup is not None:
            draw = setup(it)
            result.toggles.append((draw.hrfp_on, draw.np_on))
        loss = segmentation_loss(model(images), masks)
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss {loss.item()} at iteration {it}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        result.losses.append(float(loss.item()))
        result.lrs.append(lr)
        if log_every and logger is not None and (it + 1) % log_every == 0:
            logger.info("iter %d/%d loss %.4f lr %.5f", it + 1, cfg.max_iter, loss.item(), lr)
    result.state_dict = copy.deepcopy(model.state_dict())
    return result


@torch.no_grad()
def predict(model, images: torch.Tensor) -> torch.Tensor:
    return model(images).argmax(dim=1)


@torch.no_grad()
def evaluate(model, dataset, batch_size: int = 16, num_classes: int | None = None) -> MIoUReport:
    """mIoU of ``model`` in evaluation mode over every sample of ``dataset``."""
    was_training = getattr(model, "training", False)
    if hasattr(model, "eval"):
        model.eval()
    try:
        if num_classes is None:
            num_classes = model.backbone.spec.num_classes if hasattr(model, "backbone") else model.spec.num_classes
        cm = ConfusionMatrix(num_classes)
        for start in range(0, len(dataset), batch_size):
            images = dataset.images[start:start + batch_size]
            masks = dataset.masks[start:start + batch_size]
            accumulate(cm, masks.numpy(), predict(model, images).numpy())
        return miou(cm)
    finally:
        if was_training:
            model.train()


@torch.no_grad()
def final_stage_features(model, dataset, batch_size: int = 16) -> np.ndarray:
    was_training = model.training
    model.eval()
    try:
        out = [model.encode(dataset.images[s:s + batch_size])[-1].numpy()
               for s in range(0, len(dataset), batch_size)]
    finally:
        model.train(was_training)
    return np.concatenate(out)
