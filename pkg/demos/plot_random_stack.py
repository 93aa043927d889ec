"""
Perturbing features with a random high-resolution stack
=======================================================

Draw a frozen, randomly initialised encoder-decoder that works at a resolution
above its input. Feed it stage-0 features and look at both of its outputs.
"""

import torch

from mrfp import StackSpec, apply_o1, hrfp_forward, sample_stack

torch.manual_seed(0)
features = torch.randn(4, 16, 32, 32)

spec = StackSpec(channels=16, osf=2.0)
stack = sample_stack(spec, seed=7)
print("layer scales:", [round(s, 3) for s in spec.schedule.cumulative_scales])
print("random weights:", stack.num_elements(), "(none of them trainable)")

o1, o2, acts = hrfp_forward(features, stack, return_all=True)
for i, a in enumerate(acts):
    print(f"  layer {i}: {tuple(a.shape[-2:])}")
print("o1", tuple(o1.shape), "o2", tuple(o2.shape))

# O1 is simply added to the features
perturbed = apply_o1(features, o1)
print("relative change", ((perturbed - features).norm() / features.norm()).item())

# same seed, same weights; a new seed gives a new stack
assert sample_stack(spec, seed=7).equal(stack)
assert not sample_stack(spec, seed=8).equal(stack)
