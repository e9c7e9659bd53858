"""Wavelet neural operator: shapes, parameter count, initialisation and the
structure of the kernel-integration block."""
import numpy as np
import pytest
import torch

from piwno.operator import WNO, WnoConfig, band_shapes, spectral_conv
from piwno.wavelets import dtcwt_forward, dtcwt_inverse, dwt_forward, dwt_inverse


def small(**kw):
    base = dict(in_channels=2, out_channels=3, grid_shape=(32, 32), width=6, levels=2, blocks=2,
                lift_hidden=10, project_hidden=12)
    base.update(kw)
    return WnoConfig(**base)


def test_forward_shape_and_dtype():
    model = WNO(small())
    out = model(torch.randn(4, 32, 32, 2))
    assert out.shape == (4, 32, 32, 3)
    model64 = WNO(small()).double()
    assert model64(torch.randn(1, 32, 32, 2, dtype=torch.float64)).dtype == torch.float64


def test_parameter_count_by_hand():
    cfg = small()
    # the first dual-tree level keeps the lowpass at full size, so two levels
    # on 32x32 leave a 16x16 coarse band and 8x8 details per real set
    assert band_shapes(cfg) == {"coarse": (16, 16), "detail": (8, 8)}
    d = 6
    lift = (2 + 2) * 10 + 10 + 10 * d + d
    block = d * d * 256 + 12 * d * d * 64 + d * d + d
    project = d * 12 + 12 + 12 * 3 + 3
    expected = lift + 2 * block + project
    assert WNO.expected_parameter_count(cfg) == expected
    assert sum(p.numel() for p in WNO(cfg).parameters()) == expected


def test_parameter_count_dwt_variant():
    cfg = small(wavelet="db4", grid_shape=(30, 30), include_coordinates=False)
    # padded to 32, two levels -> 8x8 coarse band, no detail kernels
    assert band_shapes(cfg) == {"coarse": (8, 8)}
    model = WNO(cfg)
    assert sum(p.numel() for p in model.parameters()) == WNO.expected_parameter_count(cfg)
    assert model(torch.randn(2, 30, 30, 2)).shape == (2, 30, 30, 3)


def test_kernel_initialisation_range():
    cfg = small()
    model = WNO(cfg)
    bound = 1.0 / (cfg.width * 256)
    for block in model.blocks:
        for r in (block.r_coarse, block.r_detail):
            r = r.detach()
            assert float(r.min()) >= 0.0 and float(r.max()) <= bound
            assert float(r.max()) > 0.5 * bound


def test_seeded_construction_is_deterministic():
    a = WNO(small(seed=3)).state_arrays()
    b = WNO(small(seed=3)).state_arrays()
    c = WNO(small(seed=4)).state_arrays()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)


def test_spectral_conv_touches_only_coarsest_level():
    v = torch.randn(2, 3, 32, 32, dtype=torch.float64)
    coeffs = dtcwt_forward(v, 3)
    hc, wc = coeffs.coarse.shape[-2:]
    hd, wd = coeffs.details[-1].shape[-3:-1]
    out = spectral_conv(coeffs, torch.rand(3, 4, hc, wc, dtype=torch.float64),
                        torch.rand(6, 2, 3, 4, hd, wd, dtype=torch.float64))
    assert out.coarse.shape == (2, 4, hc, wc)
    assert out.details[-1].shape == (2, 4, 6, hd, wd, 2)
    for k in range(2):
        assert torch.equal(out.details[k], coeffs.details[k])


def test_identity_kernel_reproduces_input():
    cfg = small(width=3, levels=3)
    block = WNO(cfg).blocks[0].double()
    eye = torch.eye(3, dtype=torch.float64)
    with torch.no_grad():
        block.r_coarse.copy_(eye[:, :, None, None].expand_as(block.r_coarse))
        block.r_detail.copy_(eye[None, None, :, :, None, None].expand_as(block.r_detail))
    v = torch.randn(2, 3, 32, 32, dtype=torch.float64)
    assert torch.allclose(block.kernel(v), v, atol=1e-10)


def test_kernel_is_linear_and_block_combines_paths():
    block = WNO(small()).blocks[0].double()
    u = torch.randn(1, 6, 32, 32, dtype=torch.float64)
    v = torch.randn(1, 6, 32, 32, dtype=torch.float64)
    assert torch.allclose(block.kernel(2 * u - v), 2 * block.kernel(u) - block.kernel(v), atol=1e-10)
    with torch.no_grad():
        block.r_coarse.zero_()
        block.r_detail.zero_()
    # a zero kernel removes the coarsest bands; finer details pass through
    c = dtcwt_forward(u, 2)
    c.coarse = torch.zeros_like(c.coarse)
    c.details[-1] = torch.zeros_like(c.details[-1])
    passthrough = dtcwt_inverse(c)
    assert torch.allclose(block.kernel(u), passthrough, atol=1e-12)
    expected = torch.nn.functional.gelu(passthrough + block.w(u))
    assert torch.allclose(block(u), expected, atol=1e-12)


def test_dwt_kernel_zero_pads_and_crops():
    cfg = small(wavelet="db2", grid_shape=(30, 28), width=2, levels=2)
    block = WNO(cfg).blocks[0].double()
    with torch.no_grad():
        block.r_coarse.copy_(torch.eye(2, dtype=torch.float64)[:, :, None, None].expand_as(block.r_coarse))
    v = torch.randn(1, 2, 30, 28, dtype=torch.float64)
    # identity weights on the coarse band leave the padded field intact
    assert torch.allclose(block.kernel(v), v, atol=1e-12)
    with torch.no_grad():
        block.r_coarse.zero_()
    padded = torch.nn.functional.pad(v, (0, 0, 0, 2))   # 28 is already a multiple of 4
    c = dwt_forward(padded, 2, "db2", ndim=2)
    c.coarse = torch.zeros_like(c.coarse)
    assert torch.allclose(block.kernel(v), dwt_inverse(c)[..., :30, :28], atol=1e-12)


def test_gradients_reach_every_parameter():
    model = WNO(small())
    model(torch.randn(2, 32, 32, 2)).pow(2).mean().backward()
    assert all(p.grad is not None and float(p.grad.abs().sum()) > 0 for p in model.parameters())


def test_config_validation():
    with pytest.raises(ValueError):
        small(levels=7)
    with pytest.raises(ValueError):
        small(activation="relu6")
    with pytest.raises(ValueError):
        small(blocks=0)
    with pytest.raises(ValueError):
        WnoConfig.from_dict({**small().to_dict(), "bogus": 1})
    assert WnoConfig.from_dict(small().to_dict()) == small()
    model = WNO(small())
    with pytest.raises(ValueError):
        model(torch.zeros(1, 16, 16, 2))
    with pytest.raises(ValueError):
        model(torch.zeros(1, 32, 32, 5))


def test_state_arrays_roundtrip():
    a = WNO(small(seed=1))
    b = WNO(small(seed=2))
    b.load_arrays(a.state_arrays())
    x = torch.randn(1, 32, 32, 2)
    assert torch.equal(a(x), b(x))
