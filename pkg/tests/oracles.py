"""Independent reference implementations used to freeze expected values.

Everything here is written the slow, obvious way (nested loops, direct
formulas) and deliberately imports nothing from the package under test.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d_ref(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Nested-loop cross-correlation, stride 1, zero padding (k-1)/2."""
    B, cin, H, W = x.shape
    cout, _, k, _ = w.shape
    p = (k - 1) // 2
    xp = np.zeros((B, cin, H + 2 * p, W + 2 * p))
    xp[:, :, p:p + H, p:p + W] = x
    out = np.zeros((B, cout, H, W))
    for n in range(B):
        for co in range(cout):
            for i in range(H):
                for j in range(W):
                    acc = 0.0
                    for ci in range(cin):
                        for u in range(k):
                            for v in range(k):
                                acc += xp[n, ci, i + u, j + v] * w[co, ci, u, v]
                    out[n, co, i, j] = acc + (b[co] if b is not None else 0.0)
    return out


def finite_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar-valued f at every coordinate."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        fp = f(x)
        flat[i] = keep - h
        fm = f(x)
        flat[i] = keep
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def finite_diff_at(f, x: np.ndarray, coords, h: float = 1e-5) -> list[float]:
    """Central finite differences at selected flat coordinates only."""
    out = []
    flat = x.reshape(-1)
    for i in coords:
        keep = flat[i]
        flat[i] = keep + h
        fp = f(x)
        flat[i] = keep - h
        fm = f(x)
        flat[i] = keep
        out.append((fp - fm) / (2.0 * h))
    return out


def max_abs_rel(got: np.ndarray, want: np.ndarray) -> tuple[float, float]:
    """Worst absolute and relative disagreement between two arrays."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    absd = np.abs(got - want)
    rel = absd / np.maximum(np.abs(want), 1e-300)
    return float(absd.max()), float(rel.max())


def agree(got, want, abs_tol: float, rel_tol: float) -> bool:
    """Pass when every coordinate meets max(abs_tol, rel_tol*|want|)."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    return bool(np.all(np.abs(got - want) <= np.maximum(abs_tol, rel_tol * np.abs(want))))


def gaussian_window_ref(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalized 2d Gaussian sampled on an integer grid centered at (0,0)."""
    half = (size - 1) / 2.0
    win = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            di, dj = i - half, j - half
            win[i, j] = math.exp(-(di * di + dj * dj) / (2.0 * sigma * sigma))
    return win / win.sum()


def ssim_ref(a: np.ndarray, b: np.ndarray, size: int = 11, sigma: float = 1.5,
             c1: float = 0.01 ** 2, c2: float = 0.03 ** 2) -> float:
    """Mean SSIM over valid window positions, Gaussian-weighted moments."""
    win = gaussian_window_ref(size, sigma)
    H, W = a.shape
    vals = []
    for i in range(H - size + 1):
        for j in range(W - size + 1):
            pa = a[i:i + size, j:j + size]
            pb = b[i:i + size, j:j + size]
            mua = float((win * pa).sum())
            mub = float((win * pb).sum())
            va = float((win * pa * pa).sum()) - mua * mua
            vb = float((win * pb * pb).sum()) - mub * mub
            cov = float((win * pa * pb).sum()) - mua * mub
            num = (2 * mua * mub + c1) * (2 * cov + c2)
            den = (mua * mua + mub * mub + c1) * (va + vb + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def wavg_ref(x1: np.ndarray, x2: np.ndarray):
    """Pixelwise weighted-average fusion and its analytic input gradients.

    y = (x1^2 + x2^2) / (x1 + x2), with the zero-sum pixels defined as
    weight 1/2 and output 0 (and zero gradients there).
    """
    s = x1 + x2
    nz = s != 0
    den = np.where(nz, s, 1.0)
    y = np.where(nz, (x1 * x1 + x2 * x2) / den, 0.0)
    d1 = np.where(nz, (x1 * x1 + 2 * x1 * x2 - x2 * x2) / (den * den), 0.0)
    d2 = np.where(nz, (x2 * x2 + 2 * x1 * x2 - x1 * x1) / (den * den), 0.0)
    return y, d1, d2


def adam_step_ref(param, grad, m, v, t, lr=2e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns (param', m', v')."""
    m = beta1 * m + (1 - beta1) * grad
    v = beta2 * v + (1 - beta2) * grad * grad
    mhat = m / (1 - beta1 ** t)
    vhat = v / (1 - beta2 ** t)
    return param - lr * mhat / (np.sqrt(vhat) + eps), m, v
