#!/usr/bin/env python3
"""Reference ODOG response for a grayscale stimulus PNG.

Follows the Blakeslee & McCourt (1999) parameterisation directly in
degrees: seven centre space constants from 0.047 to 3.0 deg in octave
steps, surround 2x the centre along the orientation axis, six orientations,
scale weights rising with slope 0.1 in frequency, per-orientation RMS
normalisation. Convolution is scipy's FFT convolution on a mean-padded
canvas.

Usage: odog_reference.py RUN_DIR
RUN_DIR is a demo-canonical output. Exits 0 when the sign of the reference
PQ (right minus left central target area) agrees with the run's report.
"""

import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.signal import fftconvolve

DEGREES = 3.0
ORIENTATIONS = 6
SIGMAS_DEG = 0.047 * 2.0 ** np.arange(7)
SLOPE = 0.1


def gaussian(x, y, su, sv):
    g = np.exp(-0.5 * ((x / su) ** 2 + (y / sv) ** 2))
    return g / g.sum()


def odog(img):
    n = img.shape[0]
    ppd = n / DEGREES
    pad = n
    canvas = np.pad(img - img.mean(), pad, mode="constant")
    half = n
    r = np.arange(-half + 1, half)
    xx, yy = np.meshgrid(r, r)
    total = np.zeros_like(img)
    for o in range(ORIENTATIONS):
        theta = np.pi * o / ORIENTATIONS
        u = np.cos(theta) * xx + np.sin(theta) * yy
        v = -np.sin(theta) * xx + np.cos(theta) * yy
        kernel = np.zeros_like(xx, dtype=float)
        for k, s_deg in enumerate(SIGMAS_DEG):
            s = s_deg * ppd
            w = (2.0 ** -k) ** SLOPE
            kernel += w * (gaussian(u, v, s, s) - gaussian(u, v, 2 * s, s))
        resp = fftconvolve(canvas, kernel, mode="same")[pad:pad + n, pad:pad + n]
        total += resp / (np.sqrt(np.mean(resp ** 2)) + 1e-12)
    return total


def central(mask):
    """Middle half of the mask's bounding box."""
    ys, xs = np.nonzero(mask)
    h, w = ys.max() - ys.min() + 1, xs.max() - xs.min() + 1
    y0, x0 = ys.min() + h // 4, xs.min() + w // 4
    out = np.zeros_like(mask)
    out[y0:y0 + h // 2, x0:x0 + w // 2] = True
    return out & mask


def main():
    run = Path(sys.argv[1])
    img = np.asarray(Image.open(run / "canonical_stimulus.png").convert("L"), dtype=float) / 255.0
    gray = json.loads((run / "manifest.json").read_text())["report"]
    target = np.isclose(img, round(gray["target_gray"] * 255) / 255.0)
    cols = np.arange(img.shape[1])[None, :]
    left = central(target & (cols < img.shape[1] // 2))
    right = central(target & (cols >= img.shape[1] // 2))
    resp = odog(img)
    pq = resp[right].mean() - resp[left].mean()
    ours = gray["pq"]
    agree = np.sign(pq) == np.sign(ours) and pq != 0
    print(json.dumps({"reference_pq": float(pq), "implementation_pq": float(ours), "sign_agrees": bool(agree)}))
    return 0 if agree else 1


if __name__ == "__main__":
    sys.exit(main())
