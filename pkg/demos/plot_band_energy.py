"""
Where in the spectrum does a perturbation move energy?
======================================================

Split the 2D power spectrum into low, mid and high radial bands and compare the
share of energy in each before and after a perturbation.
"""

import numpy as np
import torch

from mrfp import band_delta, band_energy, hrfp_forward, np_plus, sample_coeffs, sample_stack, StackSpec
from mrfp.harness import SegBackbone, make_dataset, source_domain

images = make_dataset(source_domain(100), 8).images
backbone = SegBackbone(seed=0).eval()
with torch.no_grad():
    z = backbone.encode(images)[0]

clean = band_energy(z.numpy())
print("clean (low, mid, high):", clean.energies.round(4))

np_d, hr1_d, hr2_d = [], [], []
for s in range(10):
    coeffs = sample_coeffs(z.shape[0], z.shape[1], seed=s)
    np_d.append(band_delta(clean, band_energy(np_plus(z, coeffs).numpy())))
    for osf, out in ((1.0, hr1_d), (2.0, hr2_d)):
        o1, _ = hrfp_forward(z, sample_stack(StackSpec(z.shape[1], osf=osf), s))
        out.append(band_delta(clean, band_energy((z + o1).numpy())))

print("NP+          mean delta:", np.mean(np_d, 0).round(4))
print("stack osf=1  mean delta:", np.mean(hr1_d, 0).round(4))
print("stack osf=2  mean delta:", np.mean(hr2_d, 0).round(4))
# bilinear resizing inside the stack smooths its output, so at osf=2 the
# added signal leans towards the low band
