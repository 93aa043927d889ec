import io

import numpy as np
import pytest
import torch

from mrfp.hrfp import (StackSpec, apply_o1, apply_o2, hrfp_forward, layer_sizes, load_stack,
                       sample_stack, save_stack)


@pytest.fixture
def spec():
    return StackSpec(channels=8)


def test_sampling_is_deterministic(spec):
    a, b = sample_stack(spec, 123), sample_stack(spec, 123)
    assert a.equal(b)
    assert not a.equal(sample_stack(spec, 124))


def test_kernel_shapes(spec):
    stack = sample_stack(spec, 0)
    assert len(stack.conv_weights) == 8
    assert all(w.shape == (8, 8, 3, 3) for w in stack.conv_weights)
    assert all(g.shape == (8,) for g in stack.bn_gammas)
    assert not any(t.requires_grad for t in stack.tensors())


def test_he_variance():
    # 64*64*3*3 = 36864 entries per kernel, 8 kernels -> ~3e5 samples
    spec = StackSpec(channels=64)
    w = torch.cat([k.flatten() for k in sample_stack(spec, 7).conv_weights])
    assert w.numel() >= 100_000
    expected = np.sqrt(2.0 / (64 * 9))
    assert abs(w.std().item() - expected) / expected < 0.03
    assert abs(w.mean().item()) < 0.01 * expected * 10


def test_bn_affine_distribution():
    spec = StackSpec(channels=4096, depth_encoder=1, depth_decoder=1, kernel_side=1)
    s = sample_stack(spec, 3)
    g = torch.cat(s.bn_gammas + s.bn_betas)
    assert abs(g.mean().item()) < 0.03
    assert abs(g.std().item() - 0.5) < 0.02


def test_forward_shapes(spec):
    x = torch.randn(1, 8, 16, 16)
    o1, o2 = hrfp_forward(x, sample_stack(spec, 0))
    assert o1.shape == (1, 8, 16, 16)
    assert o2.shape == (1, 8, 32, 32)


@pytest.mark.parametrize("osf", [1.0, 1.5, 2.0, 2.5])
@pytest.mark.parametrize("hw", [(16, 16), (13, 21)])
def test_forward_geometry(osf, hw):
    spec = StackSpec(channels=4, osf=osf)
    x = torch.randn(2, 4, *hw)
    o1, o2, acts = hrfp_forward(x, sample_stack(spec, 1), return_all=True)
    assert o1.shape == x.shape
    h, w = hw
    assert o2.shape[-2:] == (int(np.floor(osf * h + 0.5)), int(np.floor(osf * w + 0.5)))
    areas = [a.shape[-1] * a.shape[-2] for a in acts]
    if osf > 1:
        assert all(a < b for a, b in zip(areas[:4], areas[1:4]))
        assert areas[0] > h * w
    assert areas[-1] == h * w


def test_layer_sizes_symmetric():
    sizes = layer_sizes(StackSpec(channels=1), 16, 16)
    assert sizes == [(19, 19), (23, 23), (27, 27), (32, 32), (27, 27), (23, 23), (19, 19), (16, 16)]


def test_identity_composition():
    spec = StackSpec(channels=3, osf=1.0)
    stack = sample_stack(spec, 0)
    ident = torch.zeros(3, 3, 3, 3)
    for c in range(3):
        ident[c, c, 1, 1] = 1.0
    for w, g, b in zip(stack.conv_weights, stack.bn_gammas, stack.bn_betas):
        w.copy_(ident)
        g.fill_(1.0)
        b.zero_()
    x = torch.randn(2, 3, 9, 7)
    o1, o2 = hrfp_forward(x, stack, normalize=False)
    assert torch.equal(o1, x)
    assert torch.equal(o2, x)


def test_forward_deterministic(spec):
    x = torch.randn(2, 8, 12, 12, generator=torch.Generator().manual_seed(5))
    a = hrfp_forward(x, sample_stack(spec, 9))[0]
    b = hrfp_forward(x, sample_stack(spec, 9))[0]
    assert torch.equal(a, b)


def test_channel_mismatch(spec):
    with pytest.raises(ValueError):
        hrfp_forward(torch.randn(1, 4, 16, 16), sample_stack(spec, 0))
    with pytest.raises(ValueError):
        hrfp_forward(torch.randn(1, 8, 2, 2), sample_stack(spec, 0))


def test_apply_o1():
    z = torch.randn(3, 4, 5, 5)
    o1 = torch.randn(3, 4, 5, 5)
    assert torch.equal(apply_o1(z, torch.zeros_like(z)), z)
    assert torch.equal(apply_o1(z, o1), z + o1)
    per_sample = torch.cat([apply_o1(z[i:i + 1], o1[i:i + 1]) for i in range(3)])
    assert torch.equal(per_sample, apply_o1(z, o1))
    with pytest.raises(ValueError):
        apply_o1(z, o1[:, :2])


def test_apply_o2_identity_and_zero():
    spec = StackSpec(channels=3)
    stack = sample_stack(spec, 0)
    stack.o2_adapter.copy_(torch.eye(3)[:, :, None, None])
    d = torch.randn(2, 3, 6, 6)
    o2 = torch.randn(2, 3, 6, 6)
    assert torch.allclose(apply_o2(d, o2, stack), d + o2, atol=1e-6)
    assert torch.equal(apply_o2(d, torch.zeros(2, 3, 12, 12), stack), d)


def test_apply_o2_adapter_matmul():
    spec = StackSpec(channels=2, o2_channels=3)
    stack = sample_stack(spec, 4)
    a = stack.o2_adapter[:, :, 0, 0].numpy().astype(np.float64)
    o2 = torch.randn(1, 2, 4, 4)
    d = torch.randn(1, 3, 4, 4)
    out = apply_o2(d, o2, stack).numpy()
    for i in range(4):
        for j in range(4):
            expected = d[0, :, i, j].numpy() + a @ o2[0, :, i, j].numpy()
            np.testing.assert_allclose(out[0, :, i, j], expected, rtol=1e-5, atol=1e-6)


def test_gradient_passes_through_o1():
    spec = StackSpec(channels=2)
    stack = sample_stack(spec, 11).to(torch.float64)
    x = torch.randn(2, 2, 4, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(2))
    w = torch.randn(2, 2, 4, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(3))

    def loss(inp):
        return (apply_o1(inp, hrfp_forward(inp, stack)[0]) * w).sum()

    x.requires_grad_(True)
    loss(x).backward()
    analytic = x.grad.detach().clone()
    numeric = torch.zeros_like(x)
    h = 1e-6
    with torch.no_grad():
        flat = x.detach().clone().view(-1)
        for i in range(flat.numel()):
            p, m = flat.clone(), flat.clone()
            p[i] += h
            m[i] -= h
            numeric.view(-1)[i] = (loss(p.view_as(x)) - loss(m.view_as(x))) / (2 * h)
    rel = (analytic - numeric).norm() / numeric.norm()
    assert rel < 1e-4


def test_serialisation_round_trip(tmp_path):
    stack = sample_stack(StackSpec(channels=5, osf=1.5, o2_channels=7), 2**40 + 3)
    path = tmp_path / "stack.npz"
    save_stack(stack, path)
    back = load_stack(path)
    assert back.equal(stack)
    buf = io.BytesIO()
    save_stack(stack, buf)
    buf.seek(0)
    assert load_stack(buf).equal(stack)
