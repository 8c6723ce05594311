"""Independent brute-force reference implementations used by the tests.

Everything here is written with explicit Python loops and shares no code
with the library under test, so the two routes can be compared bit-exact
(masks) or to tight float tolerances (scalar results).
"""
import math

import numpy as np


def smooth_replicate(grid, sigma):
    """Two-pass separable Gaussian with clamped (replicate) indexing."""
    radius = math.ceil(3.0 * sigma)
    ks = [math.exp(-(t * t) / (2.0 * sigma * sigma))
          for t in range(-radius, radius + 1)]
    total = sum(ks)
    ks = [k / total for k in ks]
    h, w = grid.shape
    mid = np.zeros_like(grid, dtype=float)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for t in range(-radius, radius + 1):
                ii = min(max(i + t, 0), h - 1)
                acc += ks[t + radius] * grid[ii, j]
            mid[i, j] = acc
    out = np.zeros_like(mid)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for t in range(-radius, radius + 1):
                jj = min(max(j + t, 0), w - 1)
                acc += ks[t + radius] * mid[i, jj]
            out[i, j] = acc
    return out


def gradient_mag(grid):
    """Central differences inside, one-sided at the borders."""
    h, w = grid.shape
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            if 0 < j < w - 1:
                gx = (grid[i, j + 1] - grid[i, j - 1]) / 2.0
            elif j == 0:
                gx = grid[i, 1] - grid[i, 0]
            else:
                gx = grid[i, w - 1] - grid[i, w - 2]
            if 0 < i < h - 1:
                gy = (grid[i + 1, j] - grid[i - 1, j]) / 2.0
            elif i == 0:
                gy = grid[1, j] - grid[0, j]
            else:
                gy = grid[h - 1, j] - grid[h - 2, j]
            out[i, j] = math.hypot(gx, gy)
    return out


def window_vote(sub, window, gamma):
    """Flat iff the clipped window's sub-threshold fraction is >= gamma."""
    h, w = sub.shape
    r = window // 2
    out = np.zeros((h, w), dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            cnt = 0
            size = 0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < h and 0 <= jj < w:
                        size += 1
                        cnt += int(sub[ii, jj])
            out[i, j] = 1 if cnt / size >= gamma else 0
    return out


def erode(mask, size):
    h, w = mask.shape
    r = size // 2
    out = np.zeros((h, w), dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            v = 1
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < h and 0 <= jj < w:
                        v = min(v, int(mask[ii, jj]))
                    # outside the image counts as 1 for erosion
            out[i, j] = v
    return out


def dilate(mask, size):
    h, w = mask.shape
    r = size // 2
    out = np.zeros((h, w), dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            v = 0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < h and 0 <= jj < w:
                        v = max(v, int(mask[ii, jj]))
            out[i, j] = v
    return out


def open_close(mask, size):
    return erode(dilate(dilate(erode(mask, size), size), size), size)


def components_8(mask):
    """Flood-fill 8-connected components; returns a list of pixel lists."""
    h, w = mask.shape
    seen = np.zeros((h, w), dtype=bool)
    comps = []
    for i in range(h):
        for j in range(w):
            if mask[i, j] and not seen[i, j]:
                stack = [(i, j)]
                seen[i, j] = True
                pixels = []
                while stack:
                    y, x = stack.pop()
                    pixels.append((y, x))
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            yy, xx = y + dy, x + dx
                            if (0 <= yy < h and 0 <= xx < w
                                    and mask[yy, xx] and not seen[yy, xx]):
                                seen[yy, xx] = True
                                stack.append((yy, xx))
                comps.append(pixels)
    return comps


def drop_small(mask, min_area):
    out = np.array(mask, dtype=np.uint8, copy=True)
    for pixels in components_8(mask):
        if len(pixels) < min_area:
            for y, x in pixels:
                out[y, x] = 0
    return out


def flat_pipeline(norm, sigma, tau, window, gamma, morph, min_area):
    """The full five-stage flatness reference: smooth, gradient, vote,
    open/close, small-component removal."""
    smooth = smooth_replicate(np.asarray(norm, dtype=float), sigma)
    grad = gradient_mag(smooth)
    sub = (grad < tau).astype(np.uint8)
    flat = window_vote(sub, window, gamma)
    flat = open_close(flat, morph)
    return drop_small(flat, min_area)


def disk_mask(cx, cy, radius, width, height):
    out = np.zeros((height, width), dtype=np.uint8)
    for y in range(height):
        for x in range(width):
            if (x - cx) ** 2 + (y - cy) ** 2 <= radius * radius:
                out[y, x] = 1
    return out
