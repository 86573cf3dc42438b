import numpy as np
import pytest

from oracles import grid_layer, tiny_representation
from proxyvid import appearance, metrics
from proxyvid.exceptions import FrameRangeError
from proxyvid.renderer import (COMPOSITE, RECONSTRUCT, nearest_frame, render_frame, render_sequence,
                               render_superres, render_time)


def bary(p, a, b, c):
    m = np.array([[a[0] - c[0], b[0] - c[0]], [a[1] - c[1], b[1] - c[1]]])
    l1, l2 = np.linalg.solve(m, np.asarray(p) - c)
    return np.array([l1, l2, 1 - l1 - l2])


def pixel_oracle(rep, t, x, y):
    """Decode one pixel by scanning every triangle of the owning layer."""
    owner = 0
    for i, m in enumerate(rep.masks):
        if m.mask_at(t)[y, x]:
            owner = i
    mesh = rep.mesh(owner, t)
    pts = mesh.points
    for tri in mesh.tri.triangles:
        lam = bary((x, y), *pts[tri])
        if lam.min() >= -1e-12:
            break
    else:
        raise AssertionError("pixel outside the hull")
    codes = rep.codes[owner][mesh.node_ids[tri]]
    f = (lam[:, None] * codes).sum(axis=0)
    tn, xn, yn = appearance.normalize_coords(t, x, y, rep.n_frames, rep.height, rep.width)
    raw = np.concatenate([f, [tn, xn, yn]])
    h = appearance.freq_encode(raw, rep.decoder.n_freq)
    for k, (w, b) in enumerate(zip(rep.decoder.weights, rep.decoder.biases)):
        z = h @ w + b
        h = np.maximum(z, 0) if k < rep.decoder.n_layers - 1 else 1 / (1 + np.exp(-z))
    return h


@pytest.fixture(scope="module")
def rep():
    return tiny_representation(seed=11)[0]


def test_render_frame_matches_pixel_oracle(rep):
    img = render_frame(rep, 1)
    assert img.shape == (12, 12, 3)
    for x, y in [(0, 0), (5, 5), (4, 4), (11, 11), (3, 9), (7, 6)]:
        assert np.allclose(img[y, x], pixel_oracle(rep, 1, x, y), atol=1e-12)


def test_outputs_in_unit_range(rep):
    seq = render_sequence(rep)
    assert seq.shape == (3, 12, 12, 3)
    assert np.all((seq >= 0) & (seq <= 1))


def test_composite_all_layers_equals_reconstruct(rep):
    for t in range(3):
        a = render_frame(rep, t)
        assert np.array_equal(a, render_frame(rep, t, COMPOSITE))
        assert np.array_equal(a, render_frame(rep, t, COMPOSITE, layers=[0, 1]))


def test_composite_without_foreground_uses_background(rep):
    img = render_frame(rep, 2, COMPOSITE, layers=[0])
    full = render_frame(rep, 2)
    fg = rep.masks[1].mask_at(2)
    assert np.array_equal(img[~fg], full[~fg])
    for y, x in zip(*np.nonzero(fg)):
        mesh = rep.mesh(0, 2)
        ids, w = mesh.weights([[x, y]])
        f = (w[0][:, None] * rep.codes[0][ids[0]]).sum(axis=0)
        tn, xn, yn = appearance.normalize_coords(2, x, y, 3, 12, 12)
        assert np.allclose(img[y, x], appearance.decode(f, tn, xn, yn, rep.decoder)[0], atol=1e-12)
        break


def test_render_time_integer_is_render_frame(rep):
    for t in range(3):
        assert np.array_equal(render_time(rep, float(t)), render_frame(rep, t))


def test_render_time_fractional(rep):
    img = render_time(rep, 0.5)
    assert img.shape == (12, 12, 3) and np.all((img >= 0) & (img <= 1))
    assert not np.array_equal(img, render_frame(rep, 0))
    assert nearest_frame(0.5) == 0 and nearest_frame(0.51) == 1 and nearest_frame(1.5) == 1


def test_range_and_mode_errors(rep):
    with pytest.raises(FrameRangeError):
        render_frame(rep, 3)
    with pytest.raises(FrameRangeError):
        render_time(rep, 2.5)
    with pytest.raises(ValueError):
        render_frame(rep, 1.5)
    with pytest.raises(ValueError):
        render_frame(rep, 0, mode="blend")
    with pytest.raises(ValueError):
        render_superres(rep, 0, 0)


def test_superres_scale_one_is_identity(rep):
    assert np.array_equal(render_superres(rep, 1, 1.0), render_frame(rep, 1))
    assert render_superres(rep, 1, 1.5).shape == (18, 18, 3)


def test_superres_box_downsample_is_consistent():
    # a smooth single-layer model so the 2x2 box average tracks the centre sample
    rep, _ = tiny_representation(seed=12, two_layers=False, n_freq=1)
    rep.codes = [0.05 * c for c in rep.codes]
    lo = render_frame(rep, 1)
    hi = render_superres(rep, 1, 2)
    down = hi.reshape(12, 2, 12, 2, 3).mean(axis=(1, 3))
    assert metrics.psnr(down, lo) >= 40.0


def test_psnr_metric():
    a = np.random.default_rng(0).random((8, 8, 3)) * 0.8
    assert metrics.psnr(a, a + 0.1) == pytest.approx(20.0)
    assert metrics.psnr(a, a) == metrics.PSNR_CAP
    mask = np.zeros((8, 8), dtype=bool)
    mask[:2] = True
    b = a.copy()
    b[~mask] = 0
    assert metrics.psnr(a, b, mask) == metrics.PSNR_CAP
    with pytest.raises(ValueError):
        metrics.psnr(a, a[:4])
    with pytest.raises(ValueError):
        metrics.psnr(a, a, np.zeros((8, 8), dtype=bool))


def ssim_loop(x, y, size=11, sigma=1.5):
    """Explicit sliding-window SSIM over fully contained windows."""
    win = metrics.gaussian_window(size, sigma)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for r in range(x.shape[0] - size + 1):
        for c in range(x.shape[1] - size + 1):
            px, py = x[r:r + size, c:c + size], y[r:r + size, c:c + size]
            mx, my = (win * px).sum(), (win * py).sum()
            vx = (win * (px - mx) ** 2).sum()
            vy = (win * (py - my) ** 2).sum()
            cv = (win * (px - mx) * (py - my)).sum()
            vals.append((2 * mx * my + c1) * (2 * cv + c2) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def test_ssim_matches_loop_and_skimage():
    rng = np.random.default_rng(1)
    a = rng.random((20, 23, 3))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    want = np.mean([ssim_loop(a[..., k], b[..., k]) for k in range(3)])
    got = metrics.ssim(a, b)
    assert abs(got - want) < 1e-4
    skm = pytest.importorskip("skimage.metrics")
    ref = skm.structural_similarity(a, b, channel_axis=-1, data_range=1.0, gaussian_weights=True,
                                    sigma=1.5, use_sample_covariance=False)
    assert abs(got - ref) < 1e-4
    assert metrics.ssim(a, a) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        metrics.ssim(a[:5, :5], b[:5, :5])


def test_gaussian_window():
    w = metrics.gaussian_window()
    assert w.shape == (11, 11) and w.sum() == pytest.approx(1.0)
    assert np.allclose(w, w.T) and w[5, 5] == w.max()
