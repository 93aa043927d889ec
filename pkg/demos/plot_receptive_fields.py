"""
Receptive fields of shrinking and growing conv stacks
=====================================================

A stride-2 encoder sees a patch that quadruples in area at every layer. Run the
same stack on a feature map that is upsampled by 2 at every layer and the patch
it covers, measured in input pixels, shrinks by the same factor instead.
"""

from mrfp import make_schedule, rf_overcomplete, rf_undercomplete

k = 3
print("layer   undercomplete   overcomplete")
for i in range(1, 7):
    print(f"{i:>5}   {str(rf_undercomplete(i, k)):>13}   {str(rf_overcomplete(i, k)):>12}")

# the two grow and shrink at exactly the same rate, so their product never moves
assert all(rf_undercomplete(i, k) * rf_overcomplete(i, k) == k**4 for i in range(1, 7))

# A random stack does not need to double at every layer. The schedule spreads
# an overall scale factor (osf) geometrically over the encoder depth.
for osf in (1.0, 1.5, 2.0, 2.5):
    sched = make_schedule(4, osf)
    print(f"osf {osf}: per layer x{sched.per_layer_factor:.4f}, cumulative",
          [round(s, 4) for s in sched.cumulative_scales])
