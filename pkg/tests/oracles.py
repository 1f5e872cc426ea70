"""Slow, independent reference implementations used only by the tests."""
import cmath
import math

import numpy as np


def naive_dft2(x):
    """Direct double sum over all pixels for every frequency pair."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=complex)
    for u in range(h):
        for v in range(w):
            acc = 0j
            for r in range(h):
                for c in range(w):
                    acc += x[r, c] * cmath.exp(-2j * math.pi * (u * r / h + v * c / w))
            out[u, v] = acc
    return out


def d2xy(order, d):
    """Classic bit-twiddling Hilbert decoder returning (x, y)."""
    n = 1 << order
    x = y = 0
    s, t = 1, d
    while s < n:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        if ry == 0:
            if rx == 1:
                x, y = s - 1 - x, s - 1 - y
            x, y = y, x
        x += s * rx
        y += s * ry
        t //= 4
        s *= 2
    return x, y


def lsystem_hilbert(order):
    """Turtle walk of the Hilbert L-system A -> +BF-AFA-FB+, B -> -AF+BFB+FA-."""
    rules = {"A": "+BF-AFA-FB+", "B": "-AF+BFB+FA-"}
    s = "A"
    for _ in range(order):
        s = "".join(rules.get(ch, ch) for ch in s)
    pos, heading = (0, 0), (0, 1)
    pts = [pos]
    for ch in s:
        if ch == "F":
            pos = (pos[0] + heading[0], pos[1] + heading[1])
            pts.append(pos)
        elif ch == "+":
            heading = (-heading[1], heading[0])
        elif ch == "-":
            heading = (heading[1], -heading[0])
    pts = np.array(pts)
    return pts - pts.min(axis=0)


def dihedral(points, side, k):
    """One of the eight symmetries of the side x side square applied to (row, col) points."""
    r, c = points[:, 0], points[:, 1]
    m = side - 1
    table = [(r, c), (c, m - r), (m - r, m - c), (m - c, r),
             (c, r), (r, m - c), (m - c, m - r), (m - r, c)]
    a, b = table[k]
    return np.stack([a, b], axis=1)


def gaussian_2d(size, sigma):
    half = (size - 1) / 2.0
    w = np.empty((size, size))
    for i in range(size):
        for j in range(size):
            w[i, j] = math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma * sigma))
    return w / w.sum()


def naive_ssim_terms(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, peak=1.0):
    """Mean SSIM and mean contrast-structure term by an explicit loop over window positions."""
    g = gaussian_2d(window, sigma)
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    h, w = a.shape
    s_sum = cs_sum = 0.0
    count = 0
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            pa = a[i:i + window, j:j + window]
            pb = b[i:i + window, j:j + window]
            ma, mb = (g * pa).sum(), (g * pb).sum()
            va = (g * (pa - ma) ** 2).sum()
            vb = (g * (pb - mb) ** 2).sum()
            cov = (g * (pa - ma) * (pb - mb)).sum()
            lum = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1)
            cs = (2 * cov + c2) / (va + vb + c2)
            s_sum += lum * cs
            cs_sum += cs
            count += 1
    return s_sum / count, cs_sum / count


def naive_pool(x):
    h, w = x.shape[0] // 2, x.shape[1] // 2
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            out[i, j] = x[2 * i:2 * i + 2, 2 * j:2 * j + 2].mean()
    return out


def naive_ms_ssim(a, b, weights, peak, window=11, sigma=1.5):
    """Recursive definition: cs at this scale times the rest computed on pooled images."""
    s, cs = naive_ssim_terms(a, b, window, sigma, peak=peak)
    if len(weights) == 1:
        return max(s, 0.0) ** weights[0]
    rest = naive_ms_ssim(naive_pool(a), naive_pool(b), weights[1:], peak, window, sigma)
    return max(cs, 0.0) ** weights[0] * rest
