"""
Scoring segmentations and comparing feature statistics
======================================================

mIoU from an accumulated confusion matrix, and a kernel two-sample distance
between the per-image channel statistics of two feature sets.
"""

import numpy as np

from mrfp import ConfusionMatrix, accumulate, miou, mmd, stat_embedding

rng = np.random.default_rng(0)
gt = rng.integers(0, 3, size=(4, 32, 32))
pred = np.where(rng.random(gt.shape) < 0.8, gt, rng.integers(0, 3, size=gt.shape))
gt[:, :2] = 255  # ignored border

cm = ConfusionMatrix(3)
for g, p in zip(gt, pred):
    cm = accumulate(cm, g, p)
report = miou(cm)
print("per-class IoU", np.round(report.per_class_iou, 3), "mean", round(report.mean_iou, 3))

# every image becomes one vector of channel means and standard deviations
a = stat_embedding(rng.normal(size=(20, 8, 6, 6)))
b = stat_embedding(rng.normal(size=(20, 8, 6, 6)))
c = stat_embedding(rng.normal(loc=0.5, scale=2.0, size=(20, 8, 6, 6)))
print("MMD same distribution   ", round(mmd(a, b), 4))
print("MMD shifted distribution", round(mmd(a, c), 4))
