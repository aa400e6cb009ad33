"""Raster overlays for window inspection, written as binary PPM (P6)."""

from __future__ import annotations

import numpy as np

from .events import SensorGeometry

POS_COLOR = (220, 60, 50)
NEG_COLOR = (60, 110, 230)
RUN_COLOR = (70, 200, 90)
CHASE_COLOR = (240, 170, 40)
UNKNOWN_COLOR = (130, 130, 130)
ELLIPSE_COLOR = (255, 255, 255)
GRID_COLOR = (255, 240, 90)


def blank_canvas(geometry: SensorGeometry) -> np.ndarray:
    return np.zeros((geometry.height, geometry.width, 3), dtype=np.uint8)


def draw_pixels(img: np.ndarray, xs, ys, color) -> None:
    h, w = img.shape[:2]
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    img[ys[keep], xs[keep]] = color


def draw_cross(img: np.ndarray, x: float, y: float, color, arm: int = 2) -> None:
    xi, yi = int(round(x)), int(round(y))
    span = np.arange(-arm, arm + 1)
    draw_pixels(img, xi + span, np.full_like(span, yi), color)
    draw_pixels(img, np.full_like(span, xi), yi + span, color)


def draw_ellipse(img: np.ndarray, ellipse, color, n: int = 180) -> None:
    pts = ellipse.points(np.linspace(0.0, 2.0 * np.pi, n, endpoint=False))
    draw_pixels(img, np.round(pts[:, 0]), np.round(pts[:, 1]), color)


def write_ppm(path, img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("expected (h, w, 3) uint8 image")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
