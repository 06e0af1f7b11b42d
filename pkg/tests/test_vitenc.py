import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from navlab.neuralcore import ConfigurationError, DimensionError, grad_check, group_norm_forward, conv2d_forward
from navlab.vitenc import (
    CompressionLayer,
    MaskedAutoencoder,
    ViT,
    ViTConfig,
    batch_masks,
    compression_forward,
    create_compression_layer,
    mae_loss,
    mae_mask,
    patch_reshape,
    patch_unreshape,
    patchify,
    unpatchify,
    vit_forward,
)


@pytest.mark.parametrize(
    "patch_dim,num_patches,approx,channels,out",
    [(384, 64, 2048, 32, 2048), (768, 196, 2048, 10, 1960), (192, 16, 2048, 128, 2048)],
)
def test_compression_sizing(patch_dim, num_patches, approx, channels, out):
    spec = create_compression_layer(patch_dim, num_patches, approx)
    assert (spec.num_channels, spec.output_size) == (channels, out)


@given(st.integers(1, 30).map(lambda s: s * s), st.integers(64, 8192))
def test_compression_rounding_bound(num_patches, approx):
    if round(approx / num_patches) == 0:
        with pytest.raises(ConfigurationError):
            create_compression_layer(8, num_patches, approx)
        return
    spec = create_compression_layer(8, num_patches, approx)
    assert abs(spec.output_size - approx) <= num_patches / 2


def test_compression_rejects_bad_inputs():
    with pytest.raises(ConfigurationError):
        create_compression_layer(8, 15, 2048)
    with pytest.raises(ConfigurationError):
        create_compression_layer(8, 64, 10)


def test_patch_reshape_row_major():
    tokens = torch.arange(4.0).reshape(1, 4, 1)
    grid = patch_reshape(tokens)
    assert grid[0, 0].tolist() == [[0.0, 1.0], [2.0, 3.0]]
    t = torch.randn(2, 16, 8)
    g = patch_reshape(t)
    assert g.shape == (2, 8, 4, 4)
    assert torch.equal(patch_unreshape(g), t)
    n, d, i, j = 1, 5, 2, 3
    assert g[n, d, i, j] == t[n, i * 4 + j, d]
    with pytest.raises(ConfigurationError):
        patch_reshape(torch.zeros(1, 15, 2))


def test_compression_forward_shape_and_nonnegative():
    spec = create_compression_layer(8, 16, 64)
    layer = CompressionLayer(spec)
    out = layer(torch.randn(3, 16, 8))
    assert out.shape == (3, spec.output_size)
    assert (out >= 0).all()
    params = dict(layer.named_parameters())
    assert torch.equal(compression_forward(torch.ones(1, 16, 8), spec, params), layer(torch.ones(1, 16, 8)))
    with pytest.raises(DimensionError):
        layer(torch.randn(1, 9, 8))


def test_compression_flatten_order_is_channel_major():
    spec = create_compression_layer(4, 16, 32)  # 2 channels
    layer = CompressionLayer(spec).double()
    x = torch.randn(1, 16, 4, dtype=torch.float64)
    grid = torch.relu(layer.norm(layer.conv(patch_reshape(x))))
    flat = layer(x)
    assert torch.equal(flat[0, :16].reshape(4, 4), grid[0, 0])
    assert torch.equal(flat[0, 16:].reshape(4, 4), grid[0, 1])


def test_compression_translation_equivariance_interior():
    torch.manual_seed(0)
    spec = create_compression_layer(6, 36, 72)
    layer = CompressionLayer(spec).double()
    tokens = torch.randn(1, 36, 6, dtype=torch.float64)
    grid = patch_reshape(tokens)
    shifted = torch.roll(grid, shifts=1, dims=3)  # one cell right, wrapped
    conv_a = conv2d_forward(grid, layer.conv.weight, 1)
    conv_b = conv2d_forward(shifted, layer.conv.weight, 1)
    # interior cells (away from the border and the wrapped column) move by exactly one column
    assert torch.allclose(conv_b[..., 1:-1, 2:-1], conv_a[..., 1:-1, 1:-2], atol=1e-12)
    # group norm re-standardizes per sample, so the normalized interior maps by one affine transform
    za = group_norm_forward(conv_a, 1)[..., 1:-1, 1:-2].reshape(-1)
    zb = group_norm_forward(conv_b, 1)[..., 1:-1, 2:-1].reshape(-1)
    design = torch.stack([za, torch.ones_like(za)], dim=1)
    coef = torch.linalg.lstsq(design, zb.unsqueeze(1)).solution
    assert torch.allclose(design @ coef, zb.unsqueeze(1), atol=1e-10)
    assert coef[0].item() > 0


def tiny_cfg(**kw):
    base = dict(image_size=16, patch_size=4, embed_dim=8, depth=1, num_heads=2, use_class_token=True)
    base.update(kw)
    return ViTConfig(**base)


def test_vit_config_validation():
    with pytest.raises(ConfigurationError):
        ViTConfig(image_size=30, patch_size=8)
    with pytest.raises(ConfigurationError):
        ViTConfig(embed_dim=10, num_heads=3)
    assert ViTConfig(image_size=32, patch_size=8).num_patches == 16


def test_vit_shapes_and_determinism():
    cfg = ViTConfig(image_size=32, patch_size=8, embed_dim=64, depth=2, num_heads=4)
    model = ViT(cfg)
    img = torch.rand(2, 3, 32, 32)
    out = vit_forward(img, cfg, model)
    assert out.tokens.shape == (2, 16, 64)
    assert out.grid_side == 4
    assert torch.equal(model(img).tokens, out.tokens)
    with pytest.raises(DimensionError):
        model(torch.rand(1, 3, 16, 16))


def test_patchify_roundtrip():
    img = torch.rand(2, 3, 16, 16)
    p = patchify(img, 4)
    assert p.shape == (2, 16, 48)
    assert torch.equal(unpatchify(p, 4), img)
    assert torch.equal(p[0, 1, :3], img[0, :, 0, 4])  # second patch, first pixel, channels last


def test_vit_permutation_equivariance_without_positions():
    torch.manual_seed(0)
    cfg = tiny_cfg(use_class_token=False, use_position_embedding=False)
    model = ViT(cfg).double()
    img = torch.rand(1, 3, 16, 16, dtype=torch.float64)
    perm = torch.randperm(16)
    patches = patchify(img, 4)
    permuted_img = unpatchify(patches[:, perm], 4)
    a = model(img).tokens
    b = model(permuted_img).tokens
    assert torch.allclose(b, a[:, perm], atol=1e-12)


def test_mae_mask_partition_and_seed():
    m = mae_mask(64, 0.75, 3)
    assert len(m.masked_indices) == 48 and len(m.visible_indices) == 16
    assert set(m.masked_indices) | set(m.visible_indices) == set(range(64))
    assert not set(m.masked_indices) & set(m.visible_indices)
    assert mae_mask(64, 0.75, 3) == m
    assert mae_mask(64, 0.75, 4) != m
    with pytest.raises(ValueError):
        mae_mask(64, 1.0, 0)


def test_mae_loss_hand_cases():
    pred = torch.zeros(1, 2, 2)
    target = torch.ones(1, 2, 2)
    mask = torch.tensor([[True, False]])
    assert mae_loss(pred, target, mask, normalize_pixels=False).item() == 1.0
    assert mae_loss(target, target, mask, normalize_pixels=False).item() == 0.0
    with pytest.raises(ValueError):
        mae_loss(pred, target, torch.zeros(1, 2, dtype=torch.bool), normalize_pixels=False)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_mae_loss_ignores_visible_predictions(seed, normalize):
    g = torch.Generator().manual_seed(seed)
    pred = torch.randn(2, 16, 12, generator=g, dtype=torch.float64)
    target = torch.randn(2, 16, 12, generator=g, dtype=torch.float64)
    masks = batch_masks(2, 16, 0.75, np.random.default_rng(seed))
    base = mae_loss(pred, target, masks, normalize)
    bumped = pred.clone()
    for i, m in enumerate(masks):
        bumped[i, list(m.visible_indices)] += torch.randn(len(m.visible_indices), 12, generator=g, dtype=torch.float64)
    assert mae_loss(bumped, target, masks, normalize).item() == base.item()
    # differing on a masked patch makes the loss strictly positive
    exact = target.clone()
    if normalize:
        exact = (exact - exact.mean(-1, keepdim=True)) / (exact.var(-1, keepdim=True) + 1e-6) ** 0.5
    exact[0, masks[0].masked_indices[0], 0] += 0.5
    assert mae_loss(exact, target, masks, normalize).item() > 0


def test_mae_model_forward_and_masked_only_gradient():
    torch.manual_seed(0)
    cfg = tiny_cfg()
    mae = MaskedAutoencoder(cfg)
    img = torch.rand(2, 3, 16, 16)
    masks = batch_masks(2, cfg.num_patches, 0.75, np.random.default_rng(0))
    loss, pred, mask = mae(img, masks)
    assert pred.shape == (2, 16, 48)
    assert mask.sum().item() == 24
    assert torch.isfinite(loss) and loss.item() > 0


def test_encoder_plus_compression_gradcheck():
    torch.manual_seed(1)
    cfg = tiny_cfg(use_class_token=True)
    vit = ViT(cfg).double()
    spec = create_compression_layer(cfg.embed_dim, cfg.num_patches, 64)
    comp = CompressionLayer(spec).double()
    with torch.no_grad():
        for p in list(vit.parameters()) + list(comp.parameters()):
            p.add_(0.2 * torch.randn_like(p))
    img = torch.rand(2, 3, 16, 16, dtype=torch.float64)
    proj = torch.randn(2, spec.output_size, dtype=torch.float64)
    params = {f"vit.{n}": p for n, p in vit.named_parameters()}
    params.update({f"comp.{n}": p for n, p in comp.named_parameters()})

    def loss():
        return (comp(vit(img).tokens) * proj).sum()

    assert grad_check(loss, params, max_checks_per_param=40) < 1e-4


def test_compression_gradcheck_random_two_by_sixteen():
    torch.manual_seed(2)
    spec = create_compression_layer(8, 16, 64)
    comp = CompressionLayer(spec).double()
    x = torch.randn(2, 16, 8, dtype=torch.float64, requires_grad=True)
    proj = torch.randn(2, spec.output_size, dtype=torch.float64)
    params = dict(comp.named_parameters())
    params["x"] = x
    assert grad_check(lambda: (comp(x) * proj).sum(), params) < 1e-4
