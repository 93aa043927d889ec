"""Synthetic sim-to-real style segmentation data.

Every domain shares one generative process for shapes and labels (background,
disk, rectangle, triangle, stripe region); domains differ only in how regions
are textured and coloured and in an optional weather-like corruption applied
after composition.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from ..metrics import IGNORE_LABEL

CLASS_NAMES = ("background", "disk", "rectangle", "triangle", "stripe")
NUM_CLASSES = len(CLASS_NAMES)
TEXTURE_FAMILIES = ("grating", "checker", "noise")
CORRUPTIONS = ("none", "fog", "rain")
RAIN_LEVELS = (1, 2, 3, 4)  # ordinal analogue of 25/50/75/100 mm
FOG_COLOR = 0.7

# Class colours used by "class" palettes.
_PALETTE = np.array([
    [0.45, 0.45, 0.40],
    [0.85, 0.25, 0.20],
    [0.20, 0.55, 0.85],
    [0.25, 0.75, 0.30],
    [0.90, 0.80, 0.25],
])


@dataclass(frozen=True)
class DomainSpec:
    name: str = "source"
    texture: str = "grating"
    freq_range: tuple[float, float] = (0.25, 0.45)
    texture_amplitude: float = 0.25
    palette: str = "class"          # "class": per-class colours, "random": per-region colours
    class_orientation: bool = True  # texture orientation tied to the class label
    color_jitter: float = 0.08
    mean_shift: tuple[float, float, float] = (0.0, 0.0, 0.0)
    std_scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    corruption: str = "none"
    corruption_level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.texture not in TEXTURE_FAMILIES:
            raise ValueError(f"unknown texture family {self.texture!r}")
        if self.palette not in ("class", "random"):
            raise ValueError(f"unknown palette {self.palette!r}")
        if self.corruption not in CORRUPTIONS:
            raise ValueError(f"unknown corruption {self.corruption!r}")
        lo, hi = self.freq_range
        if not 0 < lo <= hi <= 0.5:
            raise ValueError(f"freq_range must satisfy 0 < lo <= hi <= 0.5, got {self.freq_range}")
        if self.corruption == "fog" and not 0 <= self.corruption_level <= 1:
            raise ValueError("fog strength must lie in [0, 1]")
        if self.corruption == "rain" and self.corruption_level not in RAIN_LEVELS:
            raise ValueError(f"rain intensity must be one of {RAIN_LEVELS}")
        for name in ("freq_range", "mean_shift", "std_scale"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "DomainSpec":
        return cls(**d)


@dataclass
class Sample:
    image: np.ndarray  # (3, H, W) float32 in [0, 1]
    mask: np.ndarray   # (H, W) int64

    def __post_init__(self):
        if self.image.shape[1:] != self.mask.shape:
            raise ValueError("image and mask spatial shapes differ")


@dataclass
class SegDataset:
    images: torch.Tensor  # (N, 3, H, W)
    masks: torch.Tensor   # (N, H, W) int64
    spec: DomainSpec | None = None

    def __len__(self):
        return self.images.shape[0]

    @classmethod
    def from_samples(cls, samples, spec=None) -> "SegDataset":
        images = torch.from_numpy(np.stack([s.image for s in samples]))
        masks = torch.from_numpy(np.stack([s.mask for s in samples]))
        return cls(images, masks, spec)

    def samples(self) -> list[Sample]:
        return [Sample(i.numpy(), m.numpy()) for i, m in zip(self.images, self.masks)]


# -- shapes -------------------------------------------------------------------

def _shape_mask(cls: int, rng, yy, xx, h, w) -> np.ndarray:
    s = min(h, w)
    cy, cx = rng.uniform(0.15, 0.85) * h, rng.uniform(0.15, 0.85) * w
    if cls == 1:
        r = rng.uniform(0.10, 0.22) * s
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if cls == 2:
        hh, hw = rng.uniform(0.08, 0.2, size=2) * s
        return (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= hw)
    if cls == 3:
        r = rng.uniform(0.14, 0.28) * s
        theta = rng.uniform(0, 2 * np.pi) + np.array([0, 2 * np.pi / 3, 4 * np.pi / 3])
        vy, vx = cy + r * np.sin(theta), cx + r * np.cos(theta)
        inside = np.ones((h, w), dtype=bool)
        for a in range(3):
            b = (a + 1) % 3
            cross = (vx[b] - vx[a]) * (yy - vy[a]) - (vy[b] - vy[a]) * (xx - vx[a])
            sign = np.sign((vx[b] - vx[a]) * (vy[(a + 2) % 3] - vy[a]) - (vy[b] - vy[a]) * (vx[(a + 2) % 3] - vx[a]))
            inside &= cross * sign >= 0
        return inside
    if cls == 4:
        phi = rng.uniform(0, np.pi)
        width = rng.uniform(0.06, 0.12) * s
        d = (yy - cy) * np.cos(phi) - (xx - cx) * np.sin(phi)
        return np.abs(d) <= width
    raise ValueError(cls)


# -- textures -----------------------------------------------------------------

def _texture(spec: DomainSpec, cls: int, rng, yy, xx) -> np.ndarray:
    lo, hi = spec.freq_range
    f = rng.uniform(lo, hi)
    if spec.class_orientation:
        theta = cls * np.pi / NUM_CLASSES + rng.normal(0, 0.08)
    else:
        theta = rng.uniform(0, np.pi)
    u = xx * np.cos(theta) + yy * np.sin(theta)
    v = -xx * np.sin(theta) + yy * np.cos(theta)
    phase = rng.uniform(0, 2 * np.pi)
    if spec.texture == "grating":
        return np.sin(2 * np.pi * f * u + phase)
    if spec.texture == "checker":
        return np.sign(np.sin(2 * np.pi * f * u + phase) * np.sin(2 * np.pi * f * v + phase))
    # band-limited noise around frequency f
    h, w = yy.shape
    noise = rng.normal(size=(h, w))
    spec2 = np.fft.fft2(noise)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    r = np.sqrt(fy**2 + fx**2)
    band = np.exp(-0.5 * ((r - f) / max(0.25 * f, 0.01)) ** 2)
    out = np.real(np.fft.ifft2(spec2 * band))
    return out / (out.std() + 1e-8)


def _color(spec: DomainSpec, cls: int, rng) -> np.ndarray:
    if spec.palette == "class":
        base = _PALETTE[cls]
    else:
        base = rng.uniform(0.15, 0.9, size=3)
    return np.clip(base + rng.normal(0, spec.color_jitter, size=3), 0, 1)


# -- corruptions --------------------------------------------------------------

def apply_fog(img: np.ndarray, strength: float) -> np.ndarray:
    """Contrast reduction about the image mean, blended toward a flat grey."""
    if strength <= 0:
        return img
    m = img.mean(axis=(1, 2), keepdims=True)
    reduced = m + (1.0 - 0.5 * strength) * (img - m)
    return (1.0 - strength) * reduced + strength * FOG_COLOR


def apply_rain(img: np.ndarray, level: int, rng) -> np.ndarray:
    """Overlay bright, slanted streaks; streak count grows linearly with ``level``."""
    _, h, w = img.shape
    overlay = np.zeros((h, w))
    n_streaks = int(round(level * 0.02 * h * w / 10))
    angle = rng.uniform(-0.35, 0.35)
    for _ in range(n_streaks):
        length = rng.uniform(0.08, 0.2) * h
        y0, x0 = rng.uniform(0, h), rng.uniform(0, w)
        t = np.linspace(0, length, int(length) * 2 + 2)
        ys = np.clip((y0 + t * np.cos(angle)).astype(int), 0, h - 1)
        xs = np.clip((x0 + t * np.sin(angle)).astype(int), 0, w - 1)
        overlay[ys, xs] = 1.0
    alpha = 0.55 * overlay
    out = (1 - 0.05 * level) * img  # rain darkens the scene slightly
    return out * (1 - alpha) + alpha * 0.95


# -- generation ---------------------------------------------------------------

def generate_sample(spec: DomainSpec, index: int, size=(64, 64)) -> Sample:
    h, w = size
    # layout and appearance use separate streams so that domains sharing a seed
    # share their label maps exactly
    layout = np.random.default_rng(np.random.SeedSequence([int(spec.seed), int(index), 0]))
    look = np.random.default_rng(np.random.SeedSequence([int(spec.seed), int(index), 1]))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    mask = np.zeros((h, w), dtype=np.int64)
    img = np.empty((3, h, w))
    color = _color(spec, 0, look)
    tex = _texture(spec, 0, look, yy, xx)
    img[:] = color[:, None, None] + spec.texture_amplitude * tex[None]
    n_objects = layout.integers(2, 6)
    for _ in range(n_objects):
        cls = int(layout.integers(1, NUM_CLASSES))
        region = _shape_mask(cls, layout, yy, xx, h, w)
        color = _color(spec, cls, look)
        tex = _texture(spec, cls, look, yy, xx)
        patch = color[:, None, None] + spec.texture_amplitude * tex[None]
        img[:, region] = patch[:, region]
        mask[region] = cls
    mean = img.mean(axis=(1, 2), keepdims=True)
    img = (img - mean) * np.asarray(spec.std_scale)[:, None, None] + mean
    img = img + np.asarray(spec.mean_shift)[:, None, None]
    img = np.clip(img, 0, 1)
    if spec.corruption == "fog":
        img = apply_fog(img, spec.corruption_level)
    elif spec.corruption == "rain":
        img = apply_rain(img, int(spec.corruption_level), look)
    return Sample(np.clip(img, 0, 1).astype(np.float32), mask)


def generate_dataset(spec: DomainSpec, n: int, size=(64, 64)) -> list[Sample]:
    if n < 1:
        raise ValueError("n must be >= 1")
    return [generate_sample(spec, i, size) for i in range(n)]


def make_dataset(spec: DomainSpec, n: int, size=(64, 64)) -> SegDataset:
    return SegDataset.from_samples(generate_dataset(spec, n, size), spec)


# -- reference domains --------------------------------------------------------

def source_domain(seed: int = 0) -> DomainSpec:
    return DomainSpec(name="source", seed=seed)


def texture_shift_domain(seed: int = 1) -> DomainSpec:
    """Low-frequency noise textures, orientation unrelated to class, shifted colour statistics."""
    return DomainSpec(name="texture_shift", texture="noise", freq_range=(0.04, 0.12),
                      class_orientation=False, color_jitter=0.15,
                      mean_shift=(0.1, -0.06, 0.04), std_scale=(1.25, 0.8, 1.0), seed=seed)


def fog_domain(seed: int = 2, strength: float = 0.5) -> DomainSpec:
    base = texture_shift_domain(seed)
    return DomainSpec(**{**base.to_dict(), "name": "fog", "corruption": "fog",
                         "corruption_level": strength})


def rain_domain(seed: int = 3, level: int = 2) -> DomainSpec:
    base = texture_shift_domain(seed)
    return DomainSpec(**{**base.to_dict(), "name": f"rain{level}", "corruption": "rain",
                         "corruption_level": level})


# -- persistence --------------------------------------------------------------

def save_dataset(samples, spec: DomainSpec, directory, size=None) -> None:
    """Write images/masks as PNGs plus a manifest that can regenerate them."""
    from PIL import Image

    os.makedirs(directory, exist_ok=True)
    if isinstance(samples, SegDataset):
        samples = samples.samples()
    for i, s in enumerate(samples):
        rgb = np.round(np.transpose(s.image, (1, 2, 0)) * 255).astype(np.uint8)
        Image.fromarray(rgb, mode="RGB").save(os.path.join(directory, f"{i:05d}_image.png"))
        Image.fromarray(s.mask.astype(np.uint8), mode="L").save(os.path.join(directory, f"{i:05d}_mask.png"))
    h, w = samples[0].mask.shape
    manifest = {"spec": spec.to_dict(), "count": len(samples), "size": [h, w],
                "classes": list(CLASS_NAMES), "ignore_label": IGNORE_LABEL}
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_dataset(directory, regenerate: bool = False) -> tuple[list[Sample], DomainSpec]:
    """Read a saved domain. Images come back quantised to 8 bits unless regenerated."""
    from PIL import Image

    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    spec = DomainSpec.from_dict({k: tuple(v) if isinstance(v, list) else v
                                 for k, v in manifest["spec"].items()})
    if regenerate:
        return generate_dataset(spec, manifest["count"], tuple(manifest["size"])), spec
    samples = []
    for i in range(manifest["count"]):
        rgb = np.asarray(Image.open(os.path.join(directory, f"{i:05d}_image.png")), dtype=np.float32)
        mask = np.asarray(Image.open(os.path.join(directory, f"{i:05d}_mask.png")), dtype=np.int64)
        samples.append(Sample(np.transpose(rgb, (2, 0, 1)) / 255.0, mask))
    return samples, spec
