"""Raster rendering of chromagrams and saliency maps.

Images are written as binary PGM (P5) and PPM (P6) so goldens can be
compared byte for byte without an imaging dependency. Chromagrams map
the lowest value to white and the highest to black; saliency maps use a
diverging scale, red for positive and blue for negative, symmetric
around zero.
"""

import numpy as np

from .formats import write_bytes_atomic


def grayscale_image(data):
    """Feature matrix (n_frames, d) to a P5 pixel grid.

    One pixel per cell: width = n_frames, height = d with the highest
    feature row at the top. min -> 255 (white), max -> 0 (black);
    a constant matrix renders all white.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("expected a 2-d feature matrix")
    lo, hi = data.min(), data.max()
    if hi > lo:
        scaled = (data - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(data)
    pixels = np.round(255.0 * (1.0 - scaled)).astype(np.uint8)
    # transpose to rows = features, then flip so the last feature row is on top
    return pixels.T[::-1]


def diverging_image(data):
    """Signed matrix (n_frames, d) to a P6 pixel grid.

    White at zero; positive values shade toward red, negative toward
    blue, both scaled by the same max |value|.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    grid = data.T[::-1]
    peak = np.abs(grid).max()
    rgb = np.full(grid.shape + (3,), 255, dtype=np.uint8)
    if peak > 0:
        strength = np.round(255.0 * np.abs(grid) / peak).astype(np.uint8)
        pos = grid > 0
        neg = grid < 0
        rgb[pos, 1] = 255 - strength[pos]
        rgb[pos, 2] = 255 - strength[pos]
        rgb[neg, 0] = 255 - strength[neg]
        rgb[neg, 1] = 255 - strength[neg]
    return rgb


def write_pgm(path, pixels):
    """Binary PGM (P5), 8-bit."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise ValueError("PGM needs a 2-d pixel grid")
    h, w = pixels.shape
    header = ("P5\n%d %d\n255\n" % (w, h)).encode("ascii")
    write_bytes_atomic(path, header + pixels.tobytes())


def write_ppm(path, pixels):
    """Binary PPM (P6), 8-bit RGB."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError("PPM needs an (h, w, 3) pixel grid")
    h, w = pixels.shape[:2]
    header = ("P6\n%d %d\n255\n" % (w, h)).encode("ascii")
    write_bytes_atomic(path, header + pixels.tobytes())


def render_chromagram(path, data):
    """Chromagram (n_frames, 12) to PGM, pitch class 11 at the top."""
    write_pgm(path, grayscale_image(data))


def render_saliency(path, saliency_map):
    """Saliency map (context_frames, n_bands) to a diverging PPM."""
    write_ppm(path, diverging_image(saliency_map))
