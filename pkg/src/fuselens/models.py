"""The fusion networks and the closed-form weighted-averaging baseline.

Every model maps two single-channel images in [0,1] to a fused image of
the same shape, also in [0,1]. Neural models end in tanh rescaled to
(0,1); WeightedAveraging is parameter-free pixelwise algebra. Models are
immutable after construction (training mutates parameters under exclusive
access), so concurrent fuse calls are safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .layers import Conv2d, ConvBlock, ResidualBlock, tanh01

MODEL_NAMES = ("FunFuseAn", "MaskNet", "DeepFuse", "DeepPedestrian", "WeightedAveraging")


class DegeneratePixelError(ValueError):
    """Analytic weighted-average gradient requested where x1 + x2 = 0."""


def _check_pair(x1: Tensor, x2: Tensor):
    a, b = x1.data, x2.data
    if a.ndim != 4 or a.shape[1] != 1:
        raise ShapeError(f"inputs must be (B,1,H,W), got {a.shape}", axis="channels")
    if a.shape != b.shape:
        raise ShapeError(f"input shapes differ: {a.shape} vs {b.shape}")
    for name, arr in (("x1", a), ("x2", b)):
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(f"{name} values outside [0,1]: "
                             f"range [{arr.min():.4g}, {arr.max():.4g}]")


class FusionModel:
    """Common interface: named parameters, state blocks, fuse()."""

    name: str = ""
    rf_radius: int = 0

    def _parts(self) -> list[tuple[str, object]]:
        return []

    def _forward(self, x1: Tensor, x2: Tensor, training: bool) -> Tensor:
        raise NotImplementedError

    def fuse(self, x1: Tensor, x2: Tensor, training: bool = False) -> Tensor:
        """Fused image for a batch pair; retains the active graph if any."""
        _check_pair(x1, x2)
        return self._forward(x1, x2, training)

    def parameters(self) -> list[Tensor]:
        out = []
        for _, part in self._parts():
            out.extend(part.params())
        return out

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def state_blocks(self) -> list[tuple[str, np.ndarray]]:
        """Live (name, array) pairs: weights, biases, BN affine + running stats."""
        out = []
        for prefix, part in self._parts():
            out.extend(part.state(prefix))
        return out

    def load_state_blocks(self, blocks: dict[str, np.ndarray]):
        """Copy arrays into the live parameters; names and shapes must match."""
        mine = self.state_blocks()
        missing = [n for n, _ in mine if n not in blocks]
        extra = sorted(set(blocks) - {n for n, _ in mine})
        if missing or extra:
            raise ValueError(f"state block mismatch: missing {missing}, unexpected {extra}")
        for name, live in mine:
            arr = np.asarray(blocks[name], dtype=np.float64)
            if arr.shape != live.shape:
                raise ShapeError(f"block {name}: shape {arr.shape} != {live.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"block {name} contains non-finite values")
            live[...] = arr


class FunFuseAn(FusionModel):
    """Two untied extraction branches, channel-concat fusion, reconstruction."""

    name = "FunFuseAn"
    rf_radius = 6

    def __init__(self, rng: np.random.Generator):
        widths = [(1, 16), (16, 32), (32, 16)]
        self.branch1 = [ConvBlock(rng, ci, co) for ci, co in widths]
        self.branch2 = [ConvBlock(rng, ci, co) for ci, co in widths]
        self.fusion = ConvBlock(rng, 32, 16)
        self.recon = ConvBlock(rng, 16, 8)
        self.out = Conv2d(rng, 8, 1)

    def _parts(self):
        parts = [(f"branch1.{i}", blk) for i, blk in enumerate(self.branch1)]
        parts += [(f"branch2.{i}", blk) for i, blk in enumerate(self.branch2)]
        return parts + [("fusion", self.fusion), ("recon", self.recon), ("out", self.out)]

    def _forward(self, x1, x2, training):
        h1, h2 = x1, x2
        for blk in self.branch1:
            h1 = blk(h1, training)
        for blk in self.branch2:
            h2 = blk(h2, training)
        h = ad.concat_channels(h1, h2)
        h = self.fusion(h, training)
        h = self.recon(h, training)
        return tanh01(self.out(h, training))


class MaskNet(FusionModel):
    """Densely connected blocks: each block sees the inputs and all prior maps."""

    name = "MaskNet"
    rf_radius = 4

    def __init__(self, rng: np.random.Generator):
        cins = [2, 18, 34, 50]
        self.blocks = [ConvBlock(rng, ci, 16) for ci in cins]
        self.out = Conv2d(rng, 66, 1, k=1)

    def _parts(self):
        parts = [(f"dense.{i}", blk) for i, blk in enumerate(self.blocks)]
        return parts + [("out", self.out)]

    def _forward(self, x1, x2, training):
        grown = ad.concat_channels(x1, x2)
        for blk in self.blocks:
            grown = ad.concat_channels(grown, blk(grown, training))
        return tanh01(self.out(grown, training))


class DeepFuse(FusionModel):
    """One tied extraction branch for both inputs, additive fusion."""

    name = "DeepFuse"
    rf_radius = 5

    def __init__(self, rng: np.random.Generator):
        self.extract = [ConvBlock(rng, 1, 16), ConvBlock(rng, 16, 16)]
        self.recon = [ConvBlock(rng, 16, 8), ConvBlock(rng, 8, 4)]
        self.out = Conv2d(rng, 4, 1)

    def _parts(self):
        parts = [(f"extract.{i}", blk) for i, blk in enumerate(self.extract)]
        parts += [(f"recon.{i}", blk) for i, blk in enumerate(self.recon)]
        return parts + [("out", self.out)]

    def _forward(self, x1, x2, training):
        h1, h2 = x1, x2
        for blk in self.extract:
            h1 = blk(h1, training)
        for blk in self.extract:
            h2 = blk(h2, training)
        h = ad.add(h1, h2)
        for blk in self.recon:
            h = blk(h, training)
        return tanh01(self.out(h, training))


class DeepPedestrian(FusionModel):
    """Stem conv then three residual blocks on the concatenated inputs."""

    name = "DeepPedestrian"
    rf_radius = 8

    def __init__(self, rng: np.random.Generator):
        self.stem = ConvBlock(rng, 2, 16)
        self.res = [ResidualBlock(rng, 16) for _ in range(3)]
        self.out = Conv2d(rng, 16, 1)

    def _parts(self):
        parts = [("stem", self.stem)]
        parts += [(f"res.{i}", blk) for i, blk in enumerate(self.res)]
        return parts + [("out", self.out)]

    def _forward(self, x1, x2, training):
        h = self.stem(ad.concat_channels(x1, x2), training)
        for blk in self.res:
            h = blk(h, training)
        return tanh01(self.out(h, training))


class WeightedAveraging(FusionModel):
    """Parameter-free pixelwise fusion: y = (x1^2 + x2^2) / (x1 + x2).

    Equivalent to weighting each pixel by its relative intensity,
    w1 = x1/(x1+x2). Pixels with x1 + x2 = 0 take w1 = w2 = 1/2, y = 0
    (the continuous limit along x1 = x2 -> 0); gradients vanish there.
    """

    name = "WeightedAveraging"
    rf_radius = 0

    def __init__(self, rng: np.random.Generator | None = None):
        pass

    def _forward(self, x1, x2, training):
        num = ad.add(ad.mul(x1, x1), ad.mul(x2, x2))
        return ad.safe_div(num, ad.add(x1, x2))


@dataclass
class WeightedAverageResult:
    fused: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


def weighted_average(x1: np.ndarray, x2: np.ndarray) -> WeightedAverageResult:
    """Closed-form weighted-average fusion of two arrays of equal shape."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise ShapeError(f"input shapes differ: {x1.shape} vs {x2.shape}")
    s = x1 + x2
    nz = s != 0
    den = np.where(nz, s, 1.0)
    w1 = np.where(nz, x1 / den, 0.5)
    w2 = np.where(nz, x2 / den, 0.5)
    fused = np.where(nz, (x1 * x1 + x2 * x2) / den, 0.0)
    return WeightedAverageResult(fused=fused, w1=w1, w2=w2)


def analytic_wavg_gradient(x1: np.ndarray, x2: np.ndarray, i: int) -> tuple[float, float]:
    """Hand-differentiated weighted-average gradient at 1-based pixel i.

    dy/dx1 = (x1^2 + 2 x1 x2 - x2^2) / (x1 + x2)^2, symmetric for x2.
    """
    shp = ad.ImageShape(*x1.shape)
    r, c = shp.to_rc(i)
    a, b = float(x1[r, c]), float(x2[r, c])
    s = a + b
    if s <= 0:
        raise DegeneratePixelError(f"pixel {i}: x1 + x2 = {s}, gradient undefined")
    d1 = (a * a + 2 * a * b - b * b) / (s * s)
    d2 = (b * b + 2 * a * b - a * a) / (s * s)
    return d1, d2


def build_model(name: str, seed: int = 0) -> FusionModel:
    """Construct a fusion model with seeded parameter initialization."""
    builders = {
        "FunFuseAn": FunFuseAn,
        "MaskNet": MaskNet,
        "DeepFuse": DeepFuse,
        "DeepPedestrian": DeepPedestrian,
        "WeightedAveraging": WeightedAveraging,
    }
    if name not in builders:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    return builders[name](np.random.default_rng(seed))


def fuse_images(model: FusionModel, img1: np.ndarray, img2: np.ndarray) -> np.ndarray:
    """Eval-mode fusion of two plain (H,W) arrays; returns an (H,W) array."""
    x1 = Tensor(np.asarray(img1, dtype=np.float64)[None, None])
    x2 = Tensor(np.asarray(img2, dtype=np.float64)[None, None])
    return model.fuse(x1, x2).data[0, 0]
