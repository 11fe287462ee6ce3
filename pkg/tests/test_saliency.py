import numpy as np
import pytest

from fuselens.autodiff import ImageShape, PixelIndexError
from fuselens.models import analytic_wavg_gradient, build_model
from fuselens.saliency import (
    SCATTER_CSV_HEADER,
    DisplayConfig,
    ForwardPass,
    GuidanceCancelled,
    GuidanceImage,
    display_normalize,
    display_normalize_pair,
    gamma_correct,
    guidance_image,
    guidance_pair,
    guidance_rgb,
    jacobian_pair,
    rf_mask,
    scatter_csv,
    scatter_data,
)

import oracles


def _pair(seed=0, H=16, W=16, lo=0.05):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, 1, (H, W)), rng.uniform(lo, 1, (H, W))


# ------------------------------------------------------------- jacobians

def test_wavg_jacobian_local_and_analytic():
    x1, x2 = _pair(0, 8, 8)
    model = build_model("WeightedAveraging")
    fp = ForwardPass(model, x1, x2)
    for i in (1, 17, 64):
        j1, j2 = fp.jacobian_pair(i)
        assert j1.principle_pixel == i and j1.modality == "x1"
        assert j2.modality == "x2"
        d1, d2 = analytic_wavg_gradient(x1, x2, i)
        r, c = fp.shape.to_rc(i)
        assert abs(j1.values[r, c] - d1) <= 1e-12
        assert abs(j2.values[r, c] - d2) <= 1e-12
        for jac in (j1, j2):
            off = jac.values.copy()
            off[r, c] = 0.0
            assert np.all(off == 0.0)


def test_wavg_jacobian_symmetric_constant():
    half = np.full((8, 8), 0.5)
    j1, j2 = jacobian_pair(build_model("WeightedAveraging"), half, half, 20)
    r, c = ImageShape(8, 8).to_rc(20)
    assert abs(j1.values[r, c] - 0.5) <= 1e-15
    assert abs(j2.values[r, c] - 0.5) <= 1e-15


def test_neural_jacobian_matches_finite_differences():
    x1, x2 = _pair(1, 16, 16)
    model = build_model("MaskNet", seed=2)
    fp = ForwardPass(model, x1, x2)
    shp = fp.shape
    rng = np.random.default_rng(3)

    checked = 0
    while checked < 10:
        i = int(rng.integers(1, shp.n + 1))
        ri, ci = shp.to_rc(i)
        # probe a source pixel inside the receptive field of i
        rj = int(np.clip(ri + rng.integers(-3, 4), 0, 15))
        cj = int(np.clip(ci + rng.integers(-3, 4), 0, 15))
        j1, _ = fp.jacobian_pair(i)
        got = j1.values[rj, cj]

        def f(v):
            xp = x1.copy()
            xp[rj, cj] = v
            from fuselens.models import fuse_images
            return fuse_images(model, xp, x2)[ri, ci]

        h = 1e-5
        want = (f(x1[rj, cj] + h) - f(x1[rj, cj] - h)) / (2 * h)
        assert abs(got - want) <= max(1e-8, 1e-4 * abs(want))
        checked += 1


def test_jacobian_one_backward_per_call_and_reuse():
    x1, x2 = _pair(2, 12, 12)
    model = build_model("DeepFuse", seed=1)
    fp = ForwardPass(model, x1, x2)
    nodes_before = len(fp.graph.nodes)
    assert fp.backward_calls == 0
    fp.jacobian_pair(5)
    assert fp.backward_calls == 1
    fp.jacobian_pair(77)
    fp.jacobian_pair(5)
    assert fp.backward_calls == 3
    # retained forward: no new ops recorded by hover queries
    assert len(fp.graph.nodes) == nodes_before


def test_jacobian_invalid_pixel():
    x1, x2 = _pair(3, 8, 8)
    fp = ForwardPass(build_model("WeightedAveraging"), x1, x2)
    with pytest.raises(PixelIndexError):
        fp.jacobian_pair(0)
    with pytest.raises(PixelIndexError):
        fp.jacobian_pair(65)


def test_forward_pass_exposes_fused_image():
    x1, x2 = _pair(4, 12, 12)
    model = build_model("FunFuseAn", seed=3)
    fp = ForwardPass(model, x1, x2)
    from fuselens.models import fuse_images
    assert np.array_equal(fp.fused, fuse_images(model, x1, x2))


# -------------------------------------------------------------- guidance

def test_wavg_guidance_symmetric_inputs():
    x = np.full((8, 8), 0.7)
    g1, g2 = guidance_pair(build_model("WeightedAveraging"), x, x)
    assert np.allclose(g1.values, 0.5, atol=1e-15)
    assert np.allclose(g2.values, 0.5, atol=1e-15)


def test_guidance_consistency_with_jacobians():
    x1, x2 = _pair(5, 16, 16)
    rng = np.random.default_rng(6)
    for name in ("DeepFuse", "WeightedAveraging"):
        model = build_model(name, seed=4)
        g1, g2 = guidance_pair(model, x1, x2)
        fp = ForwardPass(model, x1, x2)
        for i in rng.integers(1, 257, size=8):
            i = int(i)
            j1, j2 = fp.jacobian_pair(i)
            r, c = fp.shape.to_rc(i)
            assert abs(g1.values[r, c] - j1.values[r, c]) <= 1e-12, name
            assert abs(g2.values[r, c] - j2.values[r, c]) <= 1e-12, name


def test_guidance_block_size_does_not_change_result():
    x1, x2 = _pair(7, 12, 12)
    model = build_model("MaskNet", seed=5)
    a1, a2 = guidance_pair(model, x1, x2, block_size=144)
    b1, b2 = guidance_pair(model, x1, x2, block_size=7)
    c1, c2 = guidance_pair(model, x1, x2, block_size=1)
    assert np.allclose(a1.values, b1.values, atol=1e-12)
    assert np.allclose(a2.values, b2.values, atol=1e-12)
    assert np.allclose(a1.values, c1.values, atol=1e-12)
    assert np.allclose(a2.values, c2.values, atol=1e-12)
    with pytest.raises(ValueError):
        guidance_pair(model, x1, x2, block_size=0)


def test_guidance_progress_and_cancel():
    x1, x2 = _pair(8, 12, 12)
    model = build_model("WeightedAveraging")
    seen = []
    guidance_pair(model, x1, x2, block_size=50, progress=lambda d, t: seen.append((d, t)))
    assert seen[-1] == (144, 144)
    assert [d for d, _ in seen] == sorted({d for d, _ in seen})

    calls = []

    def stop():
        calls.append(1)
        return len(calls) > 1

    with pytest.raises(GuidanceCancelled):
        guidance_pair(model, x1, x2, block_size=10, should_stop=stop)


def test_guidance_image_modality_selector():
    x1, x2 = _pair(9, 12, 12)
    model = build_model("WeightedAveraging")
    g1 = guidance_image(model, x1, x2, "x1")
    g2 = guidance_image(model, x1, x2, "x2")
    both = guidance_pair(model, x1, x2)
    assert np.array_equal(g1.values, both[0].values)
    assert np.array_equal(g2.values, both[1].values)
    with pytest.raises(ValueError):
        guidance_image(model, x1, x2, "x3")


# --------------------------------------------------------------- display

def test_display_normalize_rules():
    assert np.all(display_normalize(np.full((4, 4), 3.3)) == 0.0)
    out = display_normalize(np.array([-2.0, 0.0, 2.0]))
    assert out.tolist() == [1.0, 0.0, 1.0]
    rng = np.random.default_rng(10)
    arr = rng.normal(0, 1, (9, 9))
    out = display_normalize(arr)
    assert out.min() == 0.0 and out.max() == 1.0


def test_display_normalize_pair_joint_scale():
    a = np.array([0.0, 1.0])
    b = np.array([0.0, -2.0])
    na, nb = display_normalize_pair(a, b)
    assert na.tolist() == [0.0, 0.5]
    assert nb.tolist() == [0.0, 1.0]
    za, zb = display_normalize_pair(np.ones(3), -np.ones(3))
    assert np.all(za == 0.0) and np.all(zb == 0.0)


def test_gamma_correct_rules():
    rng = np.random.default_rng(11)
    img = rng.uniform(0, 1, (8, 8))
    assert np.allclose(gamma_correct(img, 1.0), img, atol=1e-15)
    assert gamma_correct(np.array([0.25]), 0.5)[0] == 0.5
    bright = gamma_correct(img, 0.1)
    assert np.all(bright >= img)
    vals = np.sort(rng.uniform(0, 1, 50))
    for gamma in (0.1, 0.5, 1.0, 2.0):
        out = gamma_correct(vals, gamma)
        assert np.all(np.diff(out) >= 0.0)
    with pytest.raises(ValueError):
        gamma_correct(img, 0.05)
    with pytest.raises(ValueError):
        gamma_correct(img, 2.5)
    with pytest.raises(ValueError):
        gamma_correct(img * 2.0, 1.0)


def test_display_config_validation():
    DisplayConfig(0.1, 2.0)
    with pytest.raises(ValueError):
        DisplayConfig(gamma_corr1=0.0)
    with pytest.raises(ValueError):
        DisplayConfig(gamma_corr2=2.1)


def test_guidance_rgb_color_semantics():
    gm = GuidanceImage("x1", np.array([[2.0, 0.0], [0.0, 0.0]]))
    gp = GuidanceImage("x2", np.array([[0.0, 2.0], [0.0, 0.0]]))
    fused = np.array([[0.0, 0.0], [0.0, 1.0]])
    rgb = guidance_rgb(gm, gp, fused)
    # strong x1 influence -> red
    assert (rgb.red[0, 0], rgb.green[0, 0], rgb.blue[0, 0]) == (1.0, 0.0, 0.0)
    # strong x2 influence -> green
    assert (rgb.red[0, 1], rgb.green[0, 1], rgb.blue[0, 1]) == (0.0, 1.0, 0.0)
    # bright fused, weak gradients -> blue
    assert (rgb.red[1, 1], rgb.green[1, 1], rgb.blue[1, 1]) == (0.0, 0.0, 1.0)
    arr = rgb.to_array()
    assert arr.shape == (2, 2, 3)
    assert arr.min() >= 0.0 and arr.max() <= 1.0


def test_guidance_rgb_yellow_when_both_high():
    gm = GuidanceImage("x1", np.array([[3.0, 0.0]]))
    gp = GuidanceImage("x2", np.array([[3.0, 0.0]]))
    rgb = guidance_rgb(gm, gp, np.zeros((1, 2)))
    assert rgb.red[0, 0] == 1.0 and rgb.green[0, 0] == 1.0 and rgb.blue[0, 0] == 0.0


def test_guidance_rgb_shape_mismatch():
    gm = GuidanceImage("x1", np.zeros((2, 2)))
    gp = GuidanceImage("x2", np.zeros((2, 3)))
    with pytest.raises(ValueError):
        guidance_rgb(gm, gp, np.zeros((2, 2)))


# --------------------------------------------------------------- scatter

def _guidance_from(arr, modality="x1"):
    return GuidanceImage(modality, np.asarray(arr, dtype=np.float64))


def test_scatter_correlation_extremes():
    rng = np.random.default_rng(12)
    g = rng.normal(0, 1, (8, 8))
    sd = scatter_data(_guidance_from(g), _guidance_from(g), 30, 2)
    assert abs(sd.correlation - 1.0) <= 1e-12
    sd = scatter_data(_guidance_from(g), _guidance_from(-g), 30, 2)
    assert abs(sd.correlation + 1.0) <= 1e-12
    sd = scatter_data(_guidance_from(np.full((8, 8), 0.3)), _guidance_from(g), 30, 2)
    assert sd.correlation is None


def test_scatter_points_and_highlight():
    rng = np.random.default_rng(13)
    gm = rng.normal(0, 1, (6, 7))
    gp = rng.normal(0, 1, (6, 7))
    sd = scatter_data(_guidance_from(gm), _guidance_from(gp), 1, 2)
    assert sd.points.shape == (42, 2)
    assert np.array_equal(sd.points[:, 0], gm.reshape(-1))
    assert np.array_equal(sd.points[:, 1], gp.reshape(-1))
    # corner pixel: window clips to 3x3
    assert len(sd.highlight) == 9
    assert all(1 <= h <= 42 for h in sd.highlight)
    # center pixel with radius 1: full 3x3 window
    center = 2 * 7 + 3 + 1
    sd = scatter_data(_guidance_from(gm), _guidance_from(gp), center, 1)
    assert sorted(sd.highlight) == sorted(
        r * 7 + c + 1 for r in (1, 2, 3) for c in (2, 3, 4))
    with pytest.raises(ValueError):
        scatter_data(_guidance_from(gm), _guidance_from(gp), 1, -1)


def test_scatter_csv_layout():
    gm = _guidance_from([[0.5, -1.5]])
    gp = _guidance_from([[0.25, 0.75]])
    sd = scatter_data(gm, gp, 1, 0)
    text = scatter_csv(sd)
    lines = text.strip().split("\n")
    assert lines[0] == SCATTER_CSV_HEADER == "pixel,gmri,gpet,highlight"
    assert len(lines) == 3
    assert lines[1] == "1,0.5,0.25,1"
    assert lines[2] == "2,-1.5,0.75,0"


def test_rf_mask_geometry():
    shp = ImageShape(9, 9)
    m = rf_mask(shp, 41, 2)  # center pixel (4,4)
    assert m.sum() == 25
    assert m[4, 4] and m[2, 2] and m[6, 6]
    assert not m[1, 4] and not m[4, 7]
    corner = rf_mask(shp, 1, 3)
    assert corner.sum() == 16


def test_guidance_matches_per_pixel_oracle_small():
    # brute force: one full-image finite difference per pixel on a tiny input
    x1, x2 = _pair(14, 12, 12, lo=0.2)
    model = build_model("WeightedAveraging")
    g1, _ = guidance_pair(model, x1, x2)
    y0, d1, _ = oracles.wavg_ref(x1, x2)
    assert np.allclose(g1.values, d1, atol=1e-12)
    assert y0.shape == (12, 12)
