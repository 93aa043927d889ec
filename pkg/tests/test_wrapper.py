import copy

import pytest
import torch
from torch import nn

from mrfp.harness import SegBackbone, add_instance_norms, count_trainable
from mrfp.hrfp import hrfp_forward
from mrfp.wrapper import PerturbConfig, Variant, make_scfp, rgn_perturb, wrap


def cfg(variant, **kw):
    if variant == "RGN":
        kw.setdefault("rgn_std", 0.1)
    return PerturbConfig(variant=variant, master_seed=kw.pop("master_seed", 3), **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        PerturbConfig(p_hrfp=1.5)
    with pytest.raises(ValueError):
        PerturbConfig(variant="RGN")
    with pytest.raises(ValueError):
        PerturbConfig(variant="HRFP", rgn_std=0.1)
    with pytest.raises(ValueError):
        PerturbConfig(variant="BOGUS")
    assert PerturbConfig(variant="SCFP").effective_osf == 1.0


def test_missing_hooks():
    class Plain(nn.Module):
        def forward(self, x):
            return x
    with pytest.raises(KeyError):
        wrap(Plain(), PerturbConfig())


def test_none_variant_is_noop(make_backbone):
    ref = make_backbone(1)
    model = wrap(copy.deepcopy(ref), cfg("NONE"))
    x = torch.randn(2, 3, 16, 16)
    ref.train()
    model.train()
    model.training_step_setup(0)
    assert torch.equal(model(x), ref(x))


@pytest.mark.parametrize("variant", [v.value for v in Variant])
def test_eval_mode_strips_perturbations(make_backbone, variant):
    base = make_backbone(2)
    ref = copy.deepcopy(base)
    if variant == "HRFP_PLUS":
        add_instance_norms(ref)
    model = wrap(base, cfg(variant, p_hrfp=1.0, p_np=1.0))
    model.train()
    model.training_step_setup(0)
    model(torch.randn(2, 3, 16, 16))  # exercise the training path once
    ref.load_state_dict(model.backbone.state_dict())
    model.eval()
    ref.eval()
    x = torch.randn(4, 3, 16, 16)
    assert torch.equal(model(x), ref(x))


@pytest.mark.parametrize("variant", ["NONE", "HRFP", "SCFP", "RGN"])
def test_zero_added_parameters(make_backbone, variant):
    base = make_backbone()
    before = count_trainable(base)
    assert count_trainable(wrap(base, cfg(variant))) == before


def test_hrfp_plus_adds_only_instance_norm_affine(make_backbone, small_spec):
    base = make_backbone()
    before = count_trainable(base)
    model = wrap(base, cfg("HRFP_PLUS"))
    expected = 2 * sum(small_spec.widths[:3])
    assert count_trainable(model) - before == expected
    assert len(model.instance_norms) == 3


def test_l_mrfp_adds_stack(make_backbone):
    base = make_backbone()
    before = count_trainable(base)
    model = wrap(base, cfg("L_MRFP"))
    draw = model.training_step_setup(0, force_hrfp=True)
    assert count_trainable(model) - before == draw.stack.num_elements()


def test_toggle_frequencies(make_backbone):
    model = wrap(make_backbone(), cfg("HRFP", master_seed=11))
    draws = [model.training_step_setup(it) for it in range(10_000)]
    # binomial(10000, 0.5): sd 50, so +-300 is a 6-sigma band
    assert 4700 <= sum(d.hrfp_on for d in draws) <= 5300
    assert 4700 <= sum(d.np_on for d in draws) <= 5300
    assert all((d.stack is not None) == d.hrfp_on for d in draws)


def test_stacks_resampled_each_iteration(make_backbone):
    model = wrap(make_backbone(), cfg("HRFP"))
    a = model.training_step_setup(0, force_hrfp=True).stack
    b = model.training_step_setup(1, force_hrfp=True).stack
    assert not a.equal(b)
    again = model.training_step_setup(0, force_hrfp=True)
    assert again.stack.equal(a)


def test_l_mrfp_stack_persists(make_backbone):
    model = wrap(make_backbone(), cfg("L_MRFP"))
    a = model.training_step_setup(0, force_hrfp=True).stack
    b = model.training_step_setup(7, force_hrfp=True).stack
    assert all(x is y for x, y in zip(a.tensors(), b.tensors()))
    assert all(isinstance(t, nn.Parameter) for t in a.tensors())


def test_draw_replay(make_backbone):
    m1 = wrap(make_backbone(), cfg("HRFP_PLUS"))
    m2 = wrap(make_backbone(), cfg("HRFP_PLUS"))
    x = torch.randn(2, 3, 16, 16)
    for it in range(6):
        d1, d2 = m1.training_step_setup(it), m2.training_step_setup(it)
        assert (d1.hrfp_on, d1.np_on) == (d2.hrfp_on, d2.np_on)
        assert torch.equal(m1(x), m2(x))


def test_forward_uses_np_then_o1(make_backbone):
    model = wrap(make_backbone(), cfg("HRFP", p_hrfp=1.0, p_np=0.0))
    model.train()
    captured = {}
    stage = model.backbone.encoder.stage0
    h = stage.register_forward_hook(lambda m, i, o: captured.setdefault("z", o))
    draw = model.training_step_setup(0)
    x = torch.randn(2, 3, 16, 16)
    out = model.backbone.encoder(x)[0]
    h.remove()
    # hooks run in registration order, so the capture sees the perturbed output
    assert draw.hrfp_on and not draw.np_on
    assert out.shape == captured["z"].shape


def test_perturbation_changes_training_output(make_backbone):
    base = make_backbone(4)
    ref = copy.deepcopy(base)
    model = wrap(base, cfg("HRFP_PLUS", p_hrfp=1.0, p_np=1.0))
    add_instance_norms(ref)
    ref.train()
    model.train()
    model.training_step_setup(0)
    x = torch.randn(2, 3, 16, 16)
    assert not torch.allclose(model(x), ref(x))


def test_gradient_reaches_stage0(make_backbone):
    model = wrap(make_backbone(5), cfg("HRFP", p_hrfp=1.0))
    model.train()
    model.training_step_setup(0)
    model(torch.randn(2, 3, 16, 16)).square().mean().backward()
    for name, p in model.backbone.encoder.stage0.named_parameters():
        assert p.grad is not None and p.grad.abs().sum() > 0, name


def test_rgn():
    x = torch.randn(3, 4, 5, 5)
    assert torch.equal(rgn_perturb(x, 0.0, seed=1), x)
    assert torch.equal(rgn_perturb(x, 0.3, seed=1), rgn_perturb(x, 0.3, seed=1))
    big = torch.zeros(1_000_000)
    noise = rgn_perturb(big, 0.2, seed=4)
    assert abs(noise.std().item() - 0.2) / 0.2 < 0.01
    with pytest.raises(ValueError):
        rgn_perturb(x, -1.0)


def test_make_scfp():
    c = PerturbConfig(variant="HRFP_PLUS", osf=2.5, p_np=0.3, master_seed=9)
    s = make_scfp(c)
    assert s.osf == 1.0
    assert (s.variant, s.p_np, s.master_seed, s.p_hrfp) == (c.variant, c.p_np, c.master_seed, c.p_hrfp)


def test_scfp_stack_is_flat(make_backbone):
    model = wrap(make_backbone(), cfg("SCFP"))
    stack = model.training_step_setup(0, force_hrfp=True).stack
    assert stack.spec.schedule.cumulative_scales == (1.0, 1.0, 1.0, 1.0)
    z = torch.randn(2, stack.spec.channels, 8, 8)
    o1, o2 = hrfp_forward(z, stack)
    assert o1.shape == z.shape and o2.shape == z.shape


def test_l_mrfp_stack_follows_backbone_dtype(small_spec):
    model = wrap(SegBackbone(small_spec, seed=0).double(), PerturbConfig(variant="L_MRFP"))
    assert all(p.dtype == torch.float64 for p in model.learned_stack)
