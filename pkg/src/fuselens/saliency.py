"""Gradient-based visualization artifacts for fusion models.

Everything here derives from one idea: seed a backward pass with a
one-hot vector at an output pixel and read the per-pixel influence of
both inputs off the tape. A retained :class:`ForwardPass` amortizes the
forward cost, so interactive hover queries pay one backward pass each.

Raw gradients stay signed (the scatterplot needs them); displays use
magnitude max-min normalization followed by gamma correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Graph, ImageShape, Tensor, backward
from .models import FusionModel

GUIDANCE_BLOCK = 64
NEIGHBORHOOD_RADIUS = 10
GAMMA_MIN, GAMMA_MAX = 0.1, 2.0


class GuidanceCancelled(RuntimeError):
    """Guidance computation stopped by its should_stop callback."""


@dataclass(frozen=True)
class JacobianImage:
    principle_pixel: int
    modality: str
    values: np.ndarray


@dataclass(frozen=True)
class GuidanceImage:
    modality: str
    values: np.ndarray


@dataclass(frozen=True)
class DisplayConfig:
    """Gamma exponents for the two display families, both in [0.1, 2.0]."""

    gamma_corr1: float = 1.0  # Jacobian displays
    gamma_corr2: float = 1.0  # guidance displays

    def __post_init__(self):
        for name in ("gamma_corr1", "gamma_corr2"):
            v = getattr(self, name)
            if not GAMMA_MIN <= v <= GAMMA_MAX:
                raise ValueError(f"{name} must be in [{GAMMA_MIN}, {GAMMA_MAX}], got {v}")


@dataclass(frozen=True)
class GuidanceRGB:
    red: np.ndarray
    green: np.ndarray
    blue: np.ndarray

    def to_array(self) -> np.ndarray:
        """(H,W,3) float composite."""
        return np.stack([self.red, self.green, self.blue], axis=-1)


@dataclass(frozen=True)
class ScatterData:
    points: np.ndarray  # (n, 2): raw signed (g_mri, g_pet) per pixel
    highlight: list[int]  # 1-based pixel indices near the principle pixel
    correlation: float | None


def _as_image(arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2d image, got shape {arr.shape}")
    return arr


class ForwardPass:
    """A model's retained tape on one input pair, ready for many backwards.

    The model runs in eval mode with parameters treated as constants, so
    each backward pass computes input gradients only.
    """

    def __init__(self, model: FusionModel, x1: np.ndarray, x2: np.ndarray):
        x1 = _as_image(x1, "x1")
        x2 = _as_image(x2, "x2")
        self.model = model
        self.shape = ImageShape(*x1.shape)
        self.x1 = Tensor(x1[None, None], requires_grad=True)
        self.x2 = Tensor(x2[None, None], requires_grad=True)
        self.graph = Graph()
        with self.graph:
            self.y = model.fuse(self.x1, self.x2)
        self.fused = self.y.data[0, 0]

    @property
    def backward_calls(self) -> int:
        return self.graph.backward_calls

    def jacobian_pair(self, i: int) -> tuple[JacobianImage, JacobianImage]:
        """Both input gradient images of output pixel i: one backward pass."""
        r, c = self.shape.to_rc(i)
        seed = np.zeros_like(self.y.data)
        seed[0, 0, r, c] = 1.0
        grads = backward(self.y, seed)
        return (JacobianImage(i, "x1", grads[self.x1][0, 0]),
                JacobianImage(i, "x2", grads[self.x2][0, 0]))


def jacobian_pair(model: FusionModel, x1: np.ndarray, x2: np.ndarray,
                  i: int) -> tuple[JacobianImage, JacobianImage]:
    """One-shot convenience over ForwardPass for a single pixel."""
    return ForwardPass(model, x1, x2).jacobian_pair(i)


def guidance_pair(model: FusionModel, x1: np.ndarray, x2: np.ndarray,
                  block_size: int = GUIDANCE_BLOCK, progress=None,
                  should_stop=None) -> tuple[GuidanceImage, GuidanceImage]:
    """Diagonal gradient images: pixel j holds d(y_j)/d(x_j) per modality.

    Inputs are replicated into a batch of ``block_size``, so one backward
    pass seeded with one one-hot row per batch item yields the diagonal
    for a whole block of pixels.
    """
    x1 = _as_image(x1, "x1")
    x2 = _as_image(x2, "x2")
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    H, W = x1.shape
    n = H * W
    block = min(block_size, n)

    x1b = Tensor(np.broadcast_to(x1, (block, 1, H, W)).copy(), requires_grad=True)
    x2b = Tensor(np.broadcast_to(x2, (block, 1, H, W)).copy(), requires_grad=True)
    g = Graph()
    with g:
        y = model.fuse(x1b, x2b)

    out1 = np.empty(n)
    out2 = np.empty(n)
    flat_rows = np.arange(block)
    for start in range(0, n, block):
        if should_stop is not None and should_stop():
            raise GuidanceCancelled(f"stopped after {start}/{n} pixels")
        stop = min(start + block, n)
        count = stop - start
        seed = np.zeros((block, 1, H, W))
        pix = np.arange(start, stop)
        seed[flat_rows[:count], 0, pix // W, pix % W] = 1.0
        grads = backward(y, seed)
        d1 = grads[x1b].reshape(block, n)
        d2 = grads[x2b].reshape(block, n)
        out1[pix] = d1[flat_rows[:count], pix]
        out2[pix] = d2[flat_rows[:count], pix]
        if progress is not None:
            progress(stop, n)
    return (GuidanceImage("x1", out1.reshape(H, W)),
            GuidanceImage("x2", out2.reshape(H, W)))


def guidance_image(model: FusionModel, x1: np.ndarray, x2: np.ndarray,
                   modality: str, block_size: int = GUIDANCE_BLOCK) -> GuidanceImage:
    """Guidance image for one modality ("x1" or "x2")."""
    if modality not in ("x1", "x2"):
        raise ValueError(f"modality must be 'x1' or 'x2', got {modality!r}")
    g1, g2 = guidance_pair(model, x1, x2, block_size=block_size)
    return g1 if modality == "x1" else g2


# ------------------------------------------------------------------ display

def display_normalize(values: np.ndarray) -> np.ndarray:
    """Magnitude max-min normalization into [0,1]; constant maps to zeros."""
    mag = np.abs(np.asarray(values, dtype=np.float64))
    lo, hi = mag.min(), mag.max()
    if hi == lo:
        return np.zeros_like(mag)
    return (mag - lo) / (hi - lo)


def display_normalize_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalize two gradient images by their joint magnitude range.

    Keeps the two modalities comparable on one absolute scale: the same
    gray level means the same gradient magnitude in both outputs.
    """
    ma = np.abs(np.asarray(a, dtype=np.float64))
    mb = np.abs(np.asarray(b, dtype=np.float64))
    lo = min(ma.min(), mb.min())
    hi = max(ma.max(), mb.max())
    if hi == lo:
        return np.zeros_like(ma), np.zeros_like(mb)
    return (ma - lo) / (hi - lo), (mb - lo) / (hi - lo)


def gamma_correct(image: np.ndarray, gamma: float) -> np.ndarray:
    """Elementwise power on a [0,1] display image; gamma in [0.1, 2.0]."""
    if not GAMMA_MIN <= gamma <= GAMMA_MAX:
        raise ValueError(f"gamma must be in [{GAMMA_MIN}, {GAMMA_MAX}], got {gamma}")
    arr = np.asarray(image, dtype=np.float64)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("gamma_correct expects a normalized [0,1] image")
    return arr ** gamma


def guidance_rgb(gmri: GuidanceImage, gpet: GuidanceImage,
                 fused: np.ndarray) -> GuidanceRGB:
    """Composite: red = guidance x1, green = guidance x2, blue = fused.

    The two guidance channels share one normalization scale; bright red
    or green marks strong influence, blue marks bright fused output where
    both influences are weak.
    """
    fused = _as_image(fused, "fused")
    if gmri.values.shape != gpet.values.shape or gmri.values.shape != fused.shape:
        raise ValueError(
            f"shape mismatch: {gmri.values.shape}, {gpet.values.shape}, {fused.shape}")
    red, green = display_normalize_pair(gmri.values, gpet.values)
    return GuidanceRGB(red=red, green=green, blue=fused.copy())


def neighborhood_indices(shape: ImageShape, i: int, radius: int) -> list[int]:
    """1-based indices of the square window around pixel i, bounds-clipped."""
    if radius < 0:
        raise ValueError(f"neighborhood radius must be >= 0, got {radius}")
    r0, c0 = shape.to_rc(i)
    rlo, rhi = max(0, r0 - radius), min(shape.height - 1, r0 + radius)
    clo, chi = max(0, c0 - radius), min(shape.width - 1, c0 + radius)
    return [shape.to_index(r, c)
            for r in range(rlo, rhi + 1) for c in range(clo, chi + 1)]


def scatter_data(gmri: GuidanceImage, gpet: GuidanceImage, principle_pixel: int,
                 neighborhood_radius: int = NEIGHBORHOOD_RADIUS) -> ScatterData:
    """Raw signed gradient pairs per pixel plus the hover neighborhood.

    The highlight set is the square window of the given radius around the
    principle pixel, clipped to image bounds; its Pearson correlation is
    reported when both axes vary on that subset.
    """
    if gmri.values.shape != gpet.values.shape:
        raise ValueError(
            f"shape mismatch: {gmri.values.shape} vs {gpet.values.shape}")
    shape = ImageShape(*gmri.values.shape)
    points = np.column_stack([gmri.values.reshape(-1), gpet.values.reshape(-1)])
    highlight = neighborhood_indices(shape, principle_pixel, neighborhood_radius)

    sel = np.array(highlight) - 1
    xs, ys = points[sel, 0], points[sel, 1]
    if len(sel) < 2 or np.all(xs == xs[0]) or np.all(ys == ys[0]):
        corr = None
    else:
        corr = float(np.corrcoef(xs, ys)[0, 1])
    return ScatterData(points=points, highlight=highlight, correlation=corr)


SCATTER_CSV_HEADER = "pixel,gmri,gpet,highlight"


def scatter_csv(data: ScatterData) -> str:
    """One row per pixel: 1-based index, raw gradients, highlight flag."""
    flags = np.zeros(len(data.points), dtype=int)
    flags[np.array(data.highlight) - 1] = 1
    lines = [SCATTER_CSV_HEADER]
    for idx, ((gm, gp), flag) in enumerate(zip(data.points, flags), start=1):
        lines.append(f"{idx},{float(gm)!r},{float(gp)!r},{flag}")
    return "\n".join(lines) + "\n"


def rf_mask(shape: ImageShape, i: int, radius: int) -> np.ndarray:
    """Boolean mask of pixels within Chebyshev ``radius`` of pixel i."""
    r0, c0 = shape.to_rc(i)
    rows, cols = np.mgrid[0:shape.height, 0:shape.width]
    return np.maximum(np.abs(rows - r0), np.abs(cols - c0)) <= radius
