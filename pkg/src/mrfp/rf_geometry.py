"""Receptive-field arithmetic for pooling and upsampling stacks.

Both area formulas return :class:`fractions.Fraction` so that products such as
``rf_undercomplete(i, k) * rf_overcomplete(i, k)`` are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction


@dataclass(frozen=True)
class RFQuery:
    layer_index: int
    kernel_side: int

    def __post_init__(self):
        if int(self.layer_index) != self.layer_index or self.layer_index < 1:
            raise ValueError(f"layer_index must be an integer >= 1, got {self.layer_index!r}")
        if int(self.kernel_side) != self.kernel_side or self.kernel_side < 1:
            raise ValueError(f"kernel_side must be an integer >= 1, got {self.kernel_side!r}")
        if self.kernel_side % 2 == 0:
            raise ValueError(f"kernel_side must be odd, got {self.kernel_side}")


@dataclass(frozen=True)
class ScaleSchedule:
    per_layer_factor: float
    cumulative_scales: tuple[float, ...]
    overall_scale_factor: float

    @property
    def depth(self) -> int:
        return len(self.cumulative_scales)


def _query(q, k=None) -> RFQuery:
    if isinstance(q, RFQuery):
        return q
    return RFQuery(q, k)


def rf_undercomplete(q: RFQuery | int, k: int | None = None) -> Fraction:
    """Receptive-field area of layer ``i`` when each layer halves resolution.

    Accepts either an :class:`RFQuery` or ``(layer_index, kernel_side)``.
    """
    q = _query(q, k)
    return Fraction(2) ** (2 * (q.layer_index - 1)) * q.kernel_side * q.kernel_side


def rf_overcomplete(q: RFQuery | int, k: int | None = None) -> Fraction:
    """Receptive-field area of layer ``i`` when each layer doubles resolution."""
    q = _query(q, k)
    return Fraction(1, 2) ** (2 * (q.layer_index - 1)) * q.kernel_side * q.kernel_side


def make_schedule(depth: int, osf: float) -> ScaleSchedule:
    """Geometric upsampling schedule reaching ``osf`` after ``depth`` layers.

    >>> make_schedule(4, 2.0).per_layer_factor  # doctest: +ELLIPSIS
    1.189207...
    """
    if int(depth) != depth or depth < 1:
        raise ValueError(f"depth must be an integer >= 1, got {depth!r}")
    if not osf > 0 or not math.isfinite(osf):
        raise ValueError(f"overall scale factor must be positive and finite, got {osf!r}")
    osf = float(osf)
    factor = osf ** (1.0 / depth)
    cumulative = [osf ** ((l + 1) / depth) for l in range(depth)]
    cumulative[-1] = osf
    return ScaleSchedule(factor, tuple(cumulative), osf)


def scaled_size(size: int, scale: float) -> int:
    """Round-half-up of ``scale * size`` with a floor of 1."""
    return max(1, math.floor(scale * size + 0.5))
