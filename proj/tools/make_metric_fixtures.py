#!/usr/bin/env python3
"""Freeze reference quality scores from scikit-image and sewar.

Writes tests/fixtures/metric_pairs.json: a few 64x64x3 8-bit image pairs with
the PSNR and SSIM reported by scikit-image and the VIF-P reported by sewar.
Rerun only when the fixture images change.
"""
import json
import pathlib

import numpy as np
from scipy.ndimage import gaussian_filter
from sewar.full_ref import vifp
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

rng = np.random.default_rng(20240611)


def base_image(h=64, w=64):
    y, x = np.mgrid[0:h, 0:w]
    img = np.stack([
        128 + 70 * np.sin(0.21 * x + 0.05 * y + c) + 25 * np.cos(0.13 * y - 0.4 * c)
        for c in range(3)
    ], axis=-1)
    img += rng.normal(0, 6, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def distort(img, kind):
    f = img.astype(np.float64)
    if kind == "noise":
        f = f + rng.normal(0, 12, f.shape)
    elif kind == "blur":
        f = np.stack([gaussian_filter(f[..., c], 1.2) for c in range(3)], axis=-1)
    elif kind == "contrast":
        f = 0.6 * (f - 128) + 140
    return np.clip(np.rint(f), 0, 255).astype(np.uint8)


pairs = []
for kind in ("noise", "blur", "contrast"):
    a = base_image()
    b = distort(a, kind)
    fa, fb = a.astype(np.float64), b.astype(np.float64)
    pairs.append({
        "kind": kind,
        "shape": list(a.shape),
        "a": a.ravel().tolist(),
        "b": b.ravel().tolist(),
        "psnr": peak_signal_noise_ratio(fa, fb, data_range=255),
        "ssim": structural_similarity(fa, fb, data_range=255, channel_axis=-1, gaussian_weights=True,
                                      sigma=1.5, use_sample_covariance=False),
        "vifp": vifp(fa, fb, sigma_nsq=2),
    })

out = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "metric_pairs.json"
out.write_text(json.dumps({"generator": "scikit-image structural_similarity / sewar vifp", "pairs": pairs}))
print(f"wrote {out}")
for p in pairs:
    print(p["kind"], p["psnr"], p["ssim"], p["vifp"])
