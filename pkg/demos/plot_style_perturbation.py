"""
Style noise that respects how much each channel varies
======================================================

NP+ rescales each channel by a random alpha and swaps its mean for beta times
that mean. How much of the mean swap is applied depends on how much the channel
mean already changes from sample to sample.
"""

import torch

from mrfp import channel_stats, np_plus, sample_coeffs

g = torch.Generator().manual_seed(0)
x = torch.randn(8, 4, 16, 16, generator=g)
# give channel 0 very different means per sample and leave channel 3 steady
x[:, 0] += torch.linspace(-3, 3, 8)[:, None, None]
x[:, 3] += 2.0

stats = channel_stats(x)
print("normalised spread of channel means:", stats.delta_norm.numpy().round(3))

coeffs = sample_coeffs(8, 4, seed=1)
y = np_plus(x, coeffs, stats)
print("channel means before", x.mean(dim=(0, 2, 3)).numpy().round(3))
print("channel means after ", y.mean(dim=(0, 2, 3)).numpy().round(3))

# alpha = beta = 1 leaves the input untouched
ones = sample_coeffs(8, 4, std=0.0)
assert torch.equal(np_plus(x, ones), x)
