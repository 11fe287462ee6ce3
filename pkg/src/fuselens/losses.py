"""Differentiable SSIM and the combined SSIM + l2 training objective.

The total loss blends four partial losses, each comparing the fused image
y against one source image:

    l_ssim = gamma_ssim * (1 - SSIM(x1, y)) + (1 - gamma_ssim) * (1 - SSIM(x2, y))
    l_l2   = gamma_l2   * rms(y - x1)       + (1 - gamma_l2)   * rms(y - x2)
    l_total = lambda * l_ssim + (1 - lambda) * l_l2

The l2 terms are root-mean-square rather than bare norms so their scale
is resolution-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


class WindowTooLargeError(ValueError):
    """Image smaller than the SSIM sliding window."""


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


_WINDOW = Tensor(_gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)[None, None])


def _windowed_mean(x: Tensor, margin: int) -> Tensor:
    # same-padding conv cropped to the interior equals a valid-window conv
    return ad.crop(ad.conv2d(x, _WINDOW), margin)


def ssim(a: Tensor, b: Tensor) -> Tensor:
    """Mean structural similarity over all full 11x11 Gaussian windows.

    Inputs are (B,1,H,W) tensors with values in [0,1]; the result is a
    scalar tensor in [-1,1], differentiable through the tape. Identical
    inputs score exactly 1.0.
    """
    if a.data.ndim != 4 or a.data.shape[1] != 1:
        raise ShapeError(f"ssim expects (B,1,H,W) tensors, got {a.data.shape}", axis="rank")
    if a.data.shape != b.data.shape:
        raise ShapeError(f"ssim shapes differ: {a.data.shape} vs {b.data.shape}")
    H, W = a.data.shape[2:]
    if H < SSIM_WINDOW or W < SSIM_WINDOW:
        raise WindowTooLargeError(
            f"image {H}x{W} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    for name, t in (("a", a), ("b", b)):
        if t.data.min() < 0.0 or t.data.max() > 1.0:
            raise ValueError(f"ssim input {name} outside [0,1]")

    m = (SSIM_WINDOW - 1) // 2
    mu_a = _windowed_mean(a, m)
    mu_b = _windowed_mean(b, m)
    e_aa = _windowed_mean(ad.mul(a, a), m)
    e_bb = _windowed_mean(ad.mul(b, b), m)
    e_ab = _windowed_mean(ad.mul(a, b), m)

    var_a = ad.sub(e_aa, ad.mul(mu_a, mu_a))
    var_b = ad.sub(e_bb, ad.mul(mu_b, mu_b))
    cov = ad.sub(e_ab, ad.mul(mu_a, mu_b))

    lum_num = ad.scale_shift(ad.mul(mu_a, mu_b), 2.0, SSIM_C1)
    lum_den = ad.scale_shift(ad.add(ad.mul(mu_a, mu_a), ad.mul(mu_b, mu_b)), 1.0, SSIM_C1)
    con_num = ad.scale_shift(cov, 2.0, SSIM_C2)
    con_den = ad.scale_shift(ad.add(var_a, var_b), 1.0, SSIM_C2)

    ssim_map = ad.div(ad.mul(lum_num, con_num), ad.mul(lum_den, con_den))
    return ad.mean_all(ssim_map)


def rms(diff: Tensor) -> Tensor:
    """Root mean square of a tensor: ||d||_2 / sqrt(n)."""
    return ad.sqrt(ad.mean_all(ad.mul(diff, diff)))


@dataclass(frozen=True)
class LossConfig:
    """Blend weights of Eq.-style combined objective, all in [0,1]."""

    lambda_weight: float = 0.99
    gamma_ssim: float = 0.5
    gamma_l2: float = 0.5

    def __post_init__(self):
        for field in ("lambda_weight", "gamma_ssim", "gamma_l2"):
            v = getattr(self, field)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{field} must be in [0,1], got {v}")


@dataclass(frozen=True)
class LossReport:
    """The seven scalars of one loss evaluation."""

    l_ssim_mri: float
    l_ssim_pet: float
    l_l2_mri: float
    l_l2_pet: float
    l_ssim: float
    l_l2: float
    l_total: float

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in
                   (self.l_ssim_mri, self.l_ssim_pet, self.l_l2_mri,
                    self.l_l2_pet, self.l_ssim, self.l_l2, self.l_total))


def compose_report(l_ssim_mri: float, l_ssim_pet: float, l_l2_mri: float,
                   l_l2_pet: float, cfg: LossConfig) -> LossReport:
    """Affine composition of the four partial losses under cfg."""
    l_ssim_mri, l_ssim_pet = float(l_ssim_mri), float(l_ssim_pet)
    l_l2_mri, l_l2_pet = float(l_l2_mri), float(l_l2_pet)
    l_ssim = cfg.gamma_ssim * l_ssim_mri + (1.0 - cfg.gamma_ssim) * l_ssim_pet
    l_l2 = cfg.gamma_l2 * l_l2_mri + (1.0 - cfg.gamma_l2) * l_l2_pet
    l_total = cfg.lambda_weight * l_ssim + (1.0 - cfg.lambda_weight) * l_l2
    return LossReport(l_ssim_mri, l_ssim_pet, l_l2_mri, l_l2_pet,
                      l_ssim, l_l2, l_total)


def total_loss(y: Tensor, x1: Tensor, x2: Tensor,
               cfg: LossConfig) -> tuple[LossReport, Tensor]:
    """Combined loss of a fused batch against both sources.

    Returns the scalar report and the differentiable total-loss tensor
    (seed it with 1.0 to backpropagate).
    """
    ls_mri = ad.scale_shift(ssim(x1, y), -1.0, 1.0)  # 1 - SSIM
    ls_pet = ad.scale_shift(ssim(x2, y), -1.0, 1.0)
    ll_mri = rms(ad.sub(y, x1))
    ll_pet = rms(ad.sub(y, x2))

    l_ssim = ad.add(ad.scale_shift(ls_mri, cfg.gamma_ssim),
                    ad.scale_shift(ls_pet, 1.0 - cfg.gamma_ssim))
    l_l2 = ad.add(ad.scale_shift(ll_mri, cfg.gamma_l2),
                  ad.scale_shift(ll_pet, 1.0 - cfg.gamma_l2))
    total = ad.add(ad.scale_shift(l_ssim, cfg.lambda_weight),
                   ad.scale_shift(l_l2, 1.0 - cfg.lambda_weight))

    report = LossReport(ls_mri.item(), ls_pet.item(), ll_mri.item(), ll_pet.item(),
                        l_ssim.item(), l_l2.item(), total.item())
    return report, total
