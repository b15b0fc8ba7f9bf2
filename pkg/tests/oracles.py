"""Slow, direct reference implementations used only by the tests.

Each one evaluates its formula pixel by pixel with plain loops and shares no
code with the package.
"""

import math

import numpy as np


def clamp_index(i, n):
    return min(max(i, 0), n - 1)


def dark_channel_brute(img, s):
    """Nested min over channels and an s x s window, replicate borders."""
    h, w, _ = img.shape
    r = s // 2
    out = np.empty((h, w), dtype=img.dtype)
    for y in range(h):
        for x in range(w):
            best = math.inf
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy, xx = clamp_index(y + dy, h), clamp_index(x + dx, w)
                    for c in range(3):
                        best = min(best, img[yy, xx, c])
            out[y, x] = best
    return out


def window_values(a, y, x, r):
    h, w = a.shape
    return [a[clamp_index(y + dy, h), clamp_index(x + dx, w)] for dy in range(-r, r + 1) for dx in range(-r, r + 1)]


def guided_filter_naive(I, p, r, eps):
    """Per-window coefficients from windowed sums, then averaged per pixel."""
    I = np.asarray(I, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    h, w = I.shape
    n = (2 * r + 1) ** 2
    a = np.empty((h, w))
    b = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            Iw = window_values(I, y, x, r)
            pw = window_values(p, y, x, r)
            mu = sum(Iw) / n
            pbar = sum(pw) / n
            var = sum((v - mu) ** 2 for v in Iw) / n
            cross = sum(i * q for i, q in zip(Iw, pw)) / n
            a[y, x] = (cross - mu * pbar) / (var + eps)
            b[y, x] = pbar - a[y, x] * mu
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = sum(window_values(a, y, x, r)) / n * I[y, x] + sum(window_values(b, y, x, r)) / n
    return out


def box_mean_naive(a, r):
    h, w = a.shape
    n = (2 * r + 1) ** 2
    return np.array([[sum(window_values(a, y, x, r)) / n for x in range(w)] for y in range(h)])


def bilinear_pixel(src, y, x, h_out, w_out):
    """Half-pixel-centre bilinear sample for output pixel (y, x)."""
    h_in, w_in = src.shape[:2]
    sy = min(max((y + 0.5) * h_in / h_out - 0.5, 0.0), h_in - 1)
    sx = min(max((x + 0.5) * w_in / w_out - 0.5, 0.0), w_in - 1)
    y0, x0 = int(math.floor(sy)), int(math.floor(sx))
    y1, x1 = min(y0 + 1, h_in - 1), min(x0 + 1, w_in - 1)
    fy, fx = sy - y0, sx - x0
    return (
        src[y0, x0] * (1 - fy) * (1 - fx)
        + src[y0, x1] * (1 - fy) * fx
        + src[y1, x0] * fy * (1 - fx)
        + src[y1, x1] * fy * fx
    )


def mse_loop(I, J):
    I = np.asarray(I, dtype=np.float64)
    J = np.asarray(J, dtype=np.float64)
    if I.ndim == 2:
        I, J = I[:, :, None], J[:, :, None]
    m, n, c = I.shape
    per_channel = []
    for k in range(c):
        acc = 0.0
        for x in range(m):
            for y in range(n):
                acc += (I[x, y, k] - J[x, y, k]) ** 2
        per_channel.append(acc / (m * n))
    return sum(per_channel) / c


def psnr_formula(I, J, max_value=1.0):
    return 10 * math.log10(max_value**2 / mse_loop(I, J))


def ssim_global_formula(I, J, C1, C2):
    I = np.asarray(I, dtype=np.float64)
    J = np.asarray(J, dtype=np.float64)
    if I.ndim == 3:
        I = I.mean(axis=2)
        J = J.mean(axis=2)
    a, b = I.ravel().tolist(), J.ravel().tolist()
    n = len(a)
    mu_a, mu_b = sum(a) / n, sum(b) / n
    var_a = sum((v - mu_a) ** 2 for v in a) / n
    var_b = sum((v - mu_b) ** 2 for v in b) / n
    cov = sum((u - mu_a) * (v - mu_b) for u, v in zip(a, b)) / n
    return ((2 * mu_a * mu_b + C1) * (2 * cov + C2)) / ((mu_a**2 + mu_b**2 + C1) * (var_a + var_b + C2))


def central_difference(f, theta, index, h=1e-4):
    """(f(theta + h e_i) - f(theta - h e_i)) / 2h for a flat torch parameter view."""
    import torch

    with torch.no_grad():
        orig = theta.view(-1)[index].item()
        theta.view(-1)[index] = orig + h
        up = f()
        theta.view(-1)[index] = orig - h
        down = f()
        theta.view(-1)[index] = orig
    return (up - down) / (2 * h)
