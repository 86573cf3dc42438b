"""Image quality metrics on [0, 1] rasters."""
from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

__all__ = ["psnr", "ssim", "gaussian_window", "PSNR_CAP"]

PSNR_CAP = 99.0
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, mask=None):
    """Peak signal-to-noise ratio in dB for unit peak; identical inputs give ``PSNR_CAP``.

    ``mask`` (h, w) restricts the error to selected pixels.
    """
    a, b = _pair(a, b)
    diff = (a - b) ** 2
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("empty mask")
        diff = diff[mask]
    mse = float(diff.mean())
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size=11, sigma=1.5):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_channel(x, y, win):
    pad = win.shape[0] // 2

    def filt(img):
        out = ndimage.correlate(img, win, mode="reflect")
        return out[pad:-pad, pad:-pad] if pad else out

    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float((num / den).mean())


def ssim(a, b, window=11, sigma=1.5):
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Statistics are taken over windows lying fully inside the image; colour
    images average the per-channel scores.
    """
    a, b = _pair(a, b)
    if min(a.shape[:2]) < window:
        raise ValueError(f"images must be at least {window}x{window}")
    win = gaussian_window(window, sigma)
    if a.ndim == 2:
        return _ssim_channel(a, b, win)
    return float(np.mean([_ssim_channel(a[..., k], b[..., k], win) for k in range(a.shape[-1])]))
