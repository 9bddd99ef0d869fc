"""Canny edge detection and lifting of edge pixels into a 3-D point cloud."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from . import _accel
from ._accel import njit
from .geometry import CameraIntrinsics, PointCloud, RigidTransform, masked_point_cloud

LUMA = (0.299, 0.587, 0.114)

DEFAULT_SIGMA = 1.4
DEFAULT_T_LOW = 0.1
DEFAULT_T_HIGH = 0.2

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


def rgb_to_gray(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 image, got shape {img.shape}")
    return LUMA[0] * img[..., 0] + LUMA[1] * img[..., 1] + LUMA[2] * img[..., 2]


def gaussian_kernel(sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _correlate1d(img, kernel, axis):
    r = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="edge")
    out = np.zeros_like(img)
    n = img.shape[axis]
    for i, kv in enumerate(kernel):
        out += kv * np.take(padded, np.arange(i, i + n), axis=axis)
    return out


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with edge-replicated borders."""
    k = gaussian_kernel(sigma)
    img = np.asarray(img, dtype=np.float64)
    return _correlate1d(_correlate1d(img, k, 0), k, 1)


def sobel_gradients(img):
    """Return (magnitude, orientation) with orientation = atan2(gy, gx) in radians.

    gx differentiates along columns (left to right), gy along rows (top to
    bottom). Borders are edge-replicated.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError("sobel needs a 2-D image of at least 3x3 pixels")
    p = np.pad(img, 1, mode="edge")
    # separable form: central difference times [1, 2, 1]; exact zero on flat regions
    dx = p[:, 2:] - p[:, :-2]
    dy = p[2:, :] - p[:-2, :]
    gx = dx[:-2] + 2.0 * dx[1:-1] + dx[2:]
    gy = dy[:, :-2] + 2.0 * dy[:, 1:-1] + dy[:, 2:]
    return np.hypot(gx, gy), np.arctan2(gy, gx)


def quantize_orientation(theta) -> np.ndarray:
    """Map gradient angles to 0..3 for 0, 45, 90 and 135 degrees."""
    deg = np.degrees(theta) % 180.0
    return (((deg + 22.5) // 45.0).astype(np.int64)) % 4


# (row, col) step towards the "plus" neighbour for each quantized bin
_NMS_STEPS = np.array([[0, 1], [1, 1], [1, 0], [1, -1]], dtype=np.int64)


@njit(cache=True)
def _nms_numba(mag, bins, steps):
    h, w = mag.shape
    out = np.zeros_like(mag)
    for i in range(1, h - 1):
        for j in range(1, w - 1):
            m = mag[i, j]
            if m <= 0.0:
                continue
            di = steps[bins[i, j], 0]
            dj = steps[bins[i, j], 1]
            # ties go to the plus side so a symmetric plateau stays one pixel wide
            if m >= mag[i - di, j - dj] and m > mag[i + di, j + dj]:
                out[i, j] = m
    return out


def _nms_numpy(mag, bins, steps):
    h, w = mag.shape
    out = np.zeros_like(mag)
    inner = mag[1:-1, 1:-1]
    b = bins[1:-1, 1:-1]
    keep = np.zeros(inner.shape, dtype=bool)
    for q in range(4):
        di, dj = steps[q]
        plus = mag[1 + di : h - 1 + di, 1 + dj : w - 1 + dj]
        minus = mag[1 - di : h - 1 - di, 1 - dj : w - 1 - dj]
        keep |= (b == q) & (inner > 0) & (inner >= minus) & (inner > plus)
    out[1:-1, 1:-1] = np.where(keep, inner, 0.0)
    return out


def non_maximum_suppression(mag, theta) -> np.ndarray:
    mag = np.ascontiguousarray(mag, dtype=np.float64)
    bins = np.ascontiguousarray(quantize_orientation(theta))
    if _accel.use_numba():
        return _nms_numba(mag, bins, _NMS_STEPS)
    return _nms_numpy(mag, bins, _NMS_STEPS)


@njit(cache=True)
def _hysteresis_numba(strong, weak):
    h, w = strong.shape
    out = strong.copy()
    stack = np.empty((h * w, 2), dtype=np.int64)
    top = 0
    for i in range(h):
        for j in range(w):
            if strong[i, j]:
                stack[top, 0] = i
                stack[top, 1] = j
                top += 1
    while top > 0:
        top -= 1
        i = stack[top, 0]
        j = stack[top, 1]
        for di in range(-1, 2):
            for dj in range(-1, 2):
                a = i + di
                b = j + dj
                if 0 <= a < h and 0 <= b < w and weak[a, b] and not out[a, b]:
                    out[a, b] = True
                    stack[top, 0] = a
                    stack[top, 1] = b
                    top += 1
    return out


_EIGHT = np.ones((3, 3), dtype=bool)


def _hysteresis_numpy(strong, weak):
    labels, n = ndimage.label(weak | strong, structure=_EIGHT)
    if n == 0:
        return np.zeros_like(strong)
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[np.unique(labels[strong])] = True
    seeded[0] = False
    return seeded[labels]


def hysteresis(nms, t_low: float, t_high: float) -> np.ndarray:
    """Keep strong pixels and weak pixels 8-connected (through weak pixels) to one."""
    strong = nms >= t_high
    weak = (nms >= t_low) & (nms > 0)
    if _accel.use_numba():
        return _hysteresis_numba(np.ascontiguousarray(strong), np.ascontiguousarray(weak))
    return _hysteresis_numpy(strong, weak)


def canny(img, sigma=DEFAULT_SIGMA, t_low=DEFAULT_T_LOW, t_high=DEFAULT_T_HIGH) -> np.ndarray:
    """Boolean edge mask of an RGB (HxWx3) or grayscale image with values in [0, 1].

    Thresholds apply to the raw Sobel magnitude of the blurred luma image.
    """
    if not 0 < t_low < t_high:
        raise ValueError(f"need 0 < t_low < t_high, got {t_low}, {t_high}")
    gray = rgb_to_gray(img)
    mag, theta = sobel_gradients(gaussian_blur(gray, sigma))
    return hysteresis(non_maximum_suppression(mag, theta), t_low, t_high)


def edges_to_point_cloud(mask, depth, k: CameraIntrinsics, t: RigidTransform) -> PointCloud:
    """Unproject edge pixels using the depth at the same pixel.

    Edge pixels without a depth reading are dropped; their number is kept in
    ``PointCloud.skipped``.
    """
    return masked_point_cloud(mask, depth, k, t)
