"""Image I/O, dataset manifests, and the synthetic pair generator.

Synthetic pairs imitate a registered anatomical/functional scan pair:
x1 carries smooth structure with bright ring outlines around round
lesions, x2 is bright overall but collapses to near-black inside the
lesion cores. That combination gives saliency maps the same contrasting
regions of interest that clinical fusion inspection cares about.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageFormatError(ValueError):
    """File is not an 8-bit grayscale PGM/PNG image."""


@dataclass(frozen=True)
class ImagePair:
    x1: np.ndarray
    x2: np.ndarray
    id: str

    def __post_init__(self):
        if self.x1.shape != self.x2.shape:
            raise ValueError(f"pair {self.id}: shapes {self.x1.shape} != {self.x2.shape}")


@dataclass(frozen=True)
class SyntheticSpec:
    resolution: int = 64
    blob_count: int = 3
    rng_seed: int = 0
    core_darkness: float = 0.05

    def __post_init__(self):
        if self.resolution < 32:
            raise ValueError(f"resolution must be >= 32, got {self.resolution}")
        if self.blob_count < 1:
            raise ValueError(f"blob_count must be >= 1, got {self.blob_count}")
        if not 0.0 <= self.core_darkness < 0.5:
            raise ValueError(f"core_darkness must be in [0, 0.5), got {self.core_darkness}")


# ------------------------------------------------------------------ file I/O

def load_image(path: str | Path) -> np.ndarray:
    """Read a PGM (P5) or 8-bit grayscale PNG as float64 in [0,1]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode != "L":
                if mode in ("I", "I;16", "I;16B", "F"):
                    raise ImageFormatError(f"{path}: unsupported bit depth (mode {mode})")
                raise ImageFormatError(f"{path}: not grayscale (mode {mode})")
            arr = np.asarray(img, dtype=np.float64)
    except UnidentifiedImageError as e:
        raise ImageFormatError(f"{path}: not a readable image file") from e
    return arr / 255.0


def save_image(path: str | Path, image: np.ndarray):
    """Quantize [0,1] data to 8 bits and write PGM or PNG by extension."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2d grayscale image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values must be finite and within [0,1]")
    path = Path(path)
    if path.suffix.lower() not in (".pgm", ".png"):
        raise ValueError(f"unsupported image extension {path.suffix!r}; use .pgm or .png")
    quant = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(quant, mode="L").save(path)


# ----------------------------------------------------------------- manifests

def write_manifest(path: str | Path, rows: list[tuple[str, str, str]]):
    """Write 'id<TAB>x1<TAB>x2' lines; paths should be manifest-relative."""
    text = "".join(f"{pid}\t{p1}\t{p2}\n" for pid, p1, p2 in rows)
    Path(path).write_text(text, encoding="utf-8")


def read_manifest(path: str | Path) -> list[tuple[str, str, str]]:
    rows = []
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{ln}: expected 'id<TAB>x1<TAB>x2', got {line!r}")
        rows.append((parts[0], parts[1], parts[2]))
    return rows


def save_pairs(directory: str | Path, pairs: list[ImagePair],
               fmt: str = "pgm") -> Path:
    """Write each pair's images plus a manifest.txt; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for pair in pairs:
        f1 = f"{pair.id}_x1.{fmt}"
        f2 = f"{pair.id}_x2.{fmt}"
        save_image(directory / f1, pair.x1)
        save_image(directory / f2, pair.x2)
        rows.append((pair.id, f1, f2))
    manifest = directory / "manifest.txt"
    write_manifest(manifest, rows)
    return manifest


def load_pairs(manifest_path: str | Path) -> list[ImagePair]:
    """Load every pair listed in a manifest; paths resolve relative to it."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    pairs = []
    for pid, p1, p2 in read_manifest(manifest_path):
        pairs.append(ImagePair(x1=load_image(base / p1), x2=load_image(base / p2), id=pid))
    if not pairs:
        raise ValueError(f"{manifest_path}: manifest lists no pairs")
    return pairs


# ---------------------------------------------------------------- synthesis

def _smooth_noise(rng: np.random.Generator, n: int, sigma: float) -> np.ndarray:
    """Min-max normalized separable Gaussian blur of uniform noise."""
    noise = rng.uniform(0.0, 1.0, (n, n))
    radius = int(3 * sigma)
    coords = np.arange(-radius, radius + 1)
    k = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    k /= k.sum()
    pad = np.pad(noise, radius, mode="reflect")
    rows = np.apply_along_axis(lambda r: np.convolve(r, k, mode="valid"), 1, pad)
    smooth = np.apply_along_axis(lambda c: np.convolve(c, k, mode="valid"), 0, rows)
    lo, hi = smooth.min(), smooth.max()
    return (smooth - lo) / (hi - lo)


def synth_pair(spec: SyntheticSpec, index: int) -> tuple[ImagePair, np.ndarray]:
    """One deterministic synthetic pair plus its boolean lesion-core mask."""
    n = spec.resolution
    rng = np.random.default_rng((spec.rng_seed, index))
    base = _smooth_noise(rng, n, sigma=n / 10)

    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    rings = np.zeros((n, n))
    core = np.zeros((n, n), dtype=bool)
    r_lo, r_hi = n / 12.0, n / 7.0
    for _ in range(spec.blob_count):
        cx = rng.uniform(r_hi + 2, n - r_hi - 2)
        cy = rng.uniform(r_hi + 2, n - r_hi - 2)
        radius = rng.uniform(r_lo, r_hi)
        d = np.hypot(yy - cy, xx - cx)
        rings = np.maximum(rings, np.exp(-((d - radius) ** 2) / (2.0 * 1.5 ** 2)))
        core |= d < radius - 1.5

    # anatomical channel: dim smooth tissue, bright ring outlines, and a
    # moderate fill inside the cores (lesions visible in both modalities)
    x1 = np.clip(0.18 + 0.36 * base + 0.45 * rings + 0.25 * core, 0.0, 1.0)

    # functional channel: bright uptake tracking the same tissue field at
    # a higher level, collapsing inside the lesion cores; sharing the
    # field keeps the pair structurally fusable
    bright = 0.52 + 0.38 * base
    x2 = np.clip(np.where(core, spec.core_darkness * bright, bright), 0.0, 1.0)

    pid = f"synth-{spec.rng_seed}-{index:03d}"
    return ImagePair(x1=x1, x2=x2, id=pid), core


def synth_pairs(spec: SyntheticSpec, count: int) -> list[ImagePair]:
    """Deterministic dataset of synthetic pairs (ids embed seed and index)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return [synth_pair(spec, i)[0] for i in range(count)]
