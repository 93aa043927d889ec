"""Radial band energy of feature maps in the 2-D Fourier domain."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_EDGES = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)


@dataclass
class BandEnergyReport:
    energies: np.ndarray
    sample_count: int
    band_edges: tuple[float, ...] = field(default=DEFAULT_EDGES)

    def to_dict(self) -> dict:
        return {"band_edges": list(self.band_edges), "energies": [float(e) for e in self.energies],
                "sample_count": int(self.sample_count)}

    @classmethod
    def from_dict(cls, d) -> "BandEnergyReport":
        return cls(np.asarray(d["energies"], dtype=float), int(d["sample_count"]), tuple(d["band_edges"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "BandEnergyReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def radial_frequency(height: int, width: int) -> np.ndarray:
    """Frequency radius of each DFT bin, 1.0 at Nyquist along an axis, clipped to 1."""
    fu = np.fft.fftfreq(height) / 0.5
    fv = np.fft.fftfreq(width) / 0.5
    r = np.sqrt(fu[:, None] ** 2 + fv[None, :] ** 2)
    return np.clip(r, 0.0, 1.0)


def band_index(height: int, width: int, edges=DEFAULT_EDGES) -> np.ndarray:
    r = radial_frequency(height, width)
    # interior edges only; r == 1 falls in the last band
    return np.digitize(r, np.asarray(edges[1:-1]), right=False)


def power_spectrum(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.abs(np.fft.fft2(x, axes=(-2, -1))) ** 2


def band_energy(x, edges=DEFAULT_EDGES) -> BandEnergyReport:
    """Relative spectral energy per radial band, averaged over batch and channels.

    ``x`` may be (B, C, H, W), (C, H, W) or (H, W).
    """
    x = np.asarray(x, dtype=np.float64)
    while x.ndim < 4:
        x = x[None]
    h, w = x.shape[-2:]
    if h < 2 or w < 2:
        raise ValueError("band energy needs spatial dims >= 2")
    power = power_spectrum(x).reshape(*x.shape[:2], -1)
    idx = band_index(h, w, edges).ravel()
    nbands = len(edges) - 1
    per_band = np.stack([power[..., idx == b].sum(axis=-1) for b in range(nbands)], axis=-1)
    per_band = per_band.reshape(-1, nbands)
    total = per_band.sum(axis=-1)
    live = total > 0
    if not live.any():
        raise ValueError("input has zero spectral energy")
    # all-zero channels (e.g. dead ReLUs) carry no spectrum and are skipped
    rel = (per_band[live] / total[live, None]).mean(axis=0)
    return BandEnergyReport(rel, x.shape[0], tuple(edges))


def band_delta(before: BandEnergyReport, after: BandEnergyReport) -> np.ndarray:
    if len(before.band_edges) != len(after.band_edges) or tuple(before.band_edges) != tuple(after.band_edges):
        raise ValueError("band edges differ")
    return np.asarray(after.energies) - np.asarray(before.energies)
