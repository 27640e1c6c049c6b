"""Image ingestion/export, patch cropping, and synthetic desk-scale corpora.

Loading normalizes to [0, 1]: integer rasters divide by the format maximum,
float rasters pass through unchanged when already inside [0, 1] and are
min-max normalized (offsets recorded) otherwise, so a float export/load
round-trip is the identity. Zero stays at zero in every case, which keeps the
multiplicative speckle model meaningful.

The synthetic recipes build clean images that contain, by construction, the
structures every region metric needs: >= 32x32 perfectly flat areas, straight
vertical/horizontal edges, and (for the shapes recipe) an isolated one-pixel
bright point. Each corpus ships a companion region file describing them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .metrics import Region, write_regions
from .seeds import derive_seed, philox
from .speckle import validate_image

RECIPES = ("piecewise-constant", "gradient", "shapes")

_MIN_SIZE = {"piecewise-constant": 64, "gradient": 80, "shapes": 80}

_GRAY_MODES = {"L": 255.0, "I": 65535.0, "I;16": 65535.0}


@dataclass
class LoadInfo:
    """How a loaded raster was mapped into [0, 1] (for inverse mapping)."""

    mode: str
    scale: float
    offset: float


@dataclass
class Dataset:
    """Ordered image collection with unique identifiers and provenance."""

    ids: list[str]
    images: list[np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ids) != len(self.images):
            raise ValueError("ids and images must have equal length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("dataset identifiers must be unique")

    def __len__(self) -> int:
        return len(self.images)


def load_image(path, return_info: bool = False):
    """Read a single-band raster and normalize it to [0, 1] float32.

    Accepts 8-bit and 16-bit grayscale and single-band 32-bit float images.
    Multi-channel input is rejected outright.
    """
    with PILImage.open(path) as img:
        mode = img.mode
        if mode in _GRAY_MODES:
            arr = np.asarray(img, dtype=np.float64) / _GRAY_MODES[mode]
            info = LoadInfo(mode=mode, scale=_GRAY_MODES[mode], offset=0.0)
        elif mode == "F":
            arr = np.asarray(img, dtype=np.float64)
            lo, hi = float(arr.min()), float(arr.max())
            if lo >= 0.0 and hi <= 1.0:
                info = LoadInfo(mode=mode, scale=1.0, offset=0.0)
            elif hi > lo:
                arr = (arr - lo) / (hi - lo)
                info = LoadInfo(mode=mode, scale=hi - lo, offset=lo)
            else:
                arr = np.zeros_like(arr)
                info = LoadInfo(mode=mode, scale=1.0, offset=lo)
        else:
            raise ValueError(
                f"{path}: mode {mode!r} is not single-channel grayscale "
                "(expected 8/16-bit gray or 32-bit float)"
            )
    out = np.clip(arr, 0.0, 1.0).astype(np.float32)
    validate_image(out, str(path))
    return (out, info) if return_info else out


def export_image(image: np.ndarray, path, depth="float") -> None:
    """Write an image clamped to [0, 1]: 8/16-bit PNG-style or lossless float32.

    Integer depths quantize with round-half-up (0.5 * 255 stores as 128);
    float export preserves every bit.
    """
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if arr.ndim != 2:
        raise ValueError(f"export_image expects a 2-D image, got shape {arr.shape}")
    if depth == 8 or depth == "8":
        data = PILImage.fromarray(np.floor(arr * 255.0 + 0.5).astype(np.uint8), mode="L")
    elif depth == 16 or depth == "16":
        data = PILImage.fromarray(np.floor(arr * 65535.0 + 0.5).astype(np.uint16))
    elif depth == "float":
        data = PILImage.fromarray(arr.astype(np.float32), mode="F")
    else:
        raise ValueError(f"unknown export depth {depth!r} (use 8, 16 or 'float')")
    data.save(path)


def crop_patches(image: np.ndarray, size: int = 96, stride: int | None = None) -> list[np.ndarray]:
    """Regular grid of size x size crops; remainder rows/columns are dropped."""
    arr = validate_image(image)
    if size < 1:
        raise ValueError(f"patch size must be >= 1, got {size}")
    stride = size if stride is None else stride
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    h, w = arr.shape
    if h < size or w < size:
        raise ValueError(f"image {w}x{h} smaller than patch size {size}")
    patches = []
    for top in range(0, h - size + 1, stride):
        for left in range(0, w - size + 1, stride):
            patches.append(arr[top : top + size, left : left + size].copy())
    return patches


def _frac(size: int, f: float) -> int:
    return int(round(size * f))


def _piecewise_layout(size: int) -> list[Region]:
    half = size // 2
    m = (half - 32) // 2
    return [
        Region("R1", "homogeneous", m, m, 32, 32),
        Region("R2", "homogeneous", half + m, half + m, 32, 32),
        Region("R3", "edge", half - 8, m, 16, 32, direction="horizontal"),
        Region("R4", "edge", m, half - 8, 32, 16, direction="vertical"),
    ]


def _gradient_layout(size: int) -> list[Region]:
    half = size // 2
    return [
        Region("R1", "homogeneous", half + 8, 8, 32, 32),
        Region("R2", "homogeneous", half + 8, size - 40, 32, 32),
        Region("R3", "edge", half - 8, (size - 32) // 2, 16, 32, direction="horizontal"),
    ]


def _shapes_layout(size: int) -> list[Region]:
    x1 = _frac(size, 0.52)
    side = min(32, _frac(size, 0.30))
    p = _frac(size, 0.14)
    px, py = _frac(size, 0.82), _frac(size, 0.16)
    return [
        Region("R1", "homogeneous", size - 34, size - 34, 32, 32),
        Region("R2", "homogeneous", p, p, side, side),
        Region("R3", "edge", x1 - 8, _frac(size, 0.18), 16, 24, direction="horizontal"),
        Region("R4", "edge", _frac(size, 0.18), x1 - 8, 24, 16, direction="vertical"),
        Region("R5", "point-target", px - 4, py - 4, 9, 9),
    ]


def _synth_piecewise(size: int, rng: np.random.Generator) -> np.ndarray:
    half = size // 2
    levels = np.clip(rng.permutation([0.15, 0.35, 0.55, 0.75]) + rng.uniform(-0.04, 0.04, 4), 0.05, 0.95)
    img = np.empty((size, size), dtype=np.float32)
    img[:half, :half] = levels[0]
    img[:half, half:] = levels[1]
    img[half:, :half] = levels[2]
    img[half:, half:] = levels[3]
    return img


def _synth_gradient(size: int, rng: np.random.Generator) -> np.ndarray:
    half = size // 2
    v0, v1 = sorted(rng.uniform(0.05, 0.60, 2))
    c = rng.uniform(0.68, 0.95)
    img = np.empty((size, size), dtype=np.float32)
    ramp = np.linspace(v0, v1, half, dtype=np.float32)
    img[:, :half] = ramp[None, :]
    img[:, half:] = c
    return img


def _synth_shapes(size: int, rng: np.random.Generator) -> np.ndarray:
    img = np.full((size, size), rng.uniform(0.12, 0.30), dtype=np.float32)
    a0, a1 = _frac(size, 0.08), _frac(size, 0.52)
    img[a0:a1, a0:a1] = rng.uniform(0.45, 0.70)
    jx, jy = rng.integers(-2, 3, 2)
    bx0, bx1 = _frac(size, 0.64) + jx, _frac(size, 0.76) + jx
    by0, by1 = _frac(size, 0.30) + jy, _frac(size, 0.42) + jy
    img[by0:by1, bx0:bx1] = rng.uniform(0.50, 0.95)
    jx, jy = rng.integers(-2, 3, 2)
    cx0, cx1 = _frac(size, 0.14) + jx, _frac(size, 0.30) + jx
    cy0, cy1 = _frac(size, 0.66) + jy, _frac(size, 0.80) + jy
    img[cy0:cy1, cx0:cx1] = rng.uniform(0.35, 0.85)
    img[_frac(size, 0.16), _frac(size, 0.82)] = 1.0
    return img


_RECIPE_FNS = {
    "piecewise-constant": (_synth_piecewise, _piecewise_layout),
    "gradient": (_synth_gradient, _gradient_layout),
    "shapes": (_synth_shapes, _shapes_layout),
}


def _check_layout(img: np.ndarray, regions: list[Region]) -> None:
    # layout guarantee: declared flat regions are flat, point targets unique
    for r in regions:
        crop = r.crop(img)
        if r.kind == "homogeneous" and not np.all(crop == crop.flat[0]):
            raise AssertionError(f"recipe bug: region {r.name} is not homogeneous")
        if r.kind == "point-target":
            flat = crop.ravel()
            peak = flat.max()
            if (flat == peak).sum() != 1 or peak <= flat[flat < peak].max():
                raise AssertionError(f"recipe bug: region {r.name} lacks a unique bright point")


def synthesize_corpus(recipe: str, count: int, size: int, seed: int) -> tuple[Dataset, list[Region]]:
    """Generate ``count`` deterministic clean images plus their region list.

    A fixed geometric layout per recipe (so one region file covers the corpus)
    with per-image intensities and small position jitter drawn from a stream
    keyed by (seed, index).
    """
    if recipe not in RECIPES:
        raise ValueError(f"unknown recipe {recipe!r}, expected one of {RECIPES}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if size < _MIN_SIZE[recipe]:
        raise ValueError(f"recipe {recipe!r} needs size >= {_MIN_SIZE[recipe]}, got {size}")
    synth_fn, layout_fn = _RECIPE_FNS[recipe]
    regions = layout_fn(size)
    ids, images = [], []
    for idx in range(count):
        # one keyed stream per image so corpora are stable under count changes
        rng = philox(derive_seed(seed, "image", idx))
        img = synth_fn(size, rng)
        _check_layout(img, regions)
        ids.append(f"{recipe}_{idx:04d}")
        images.append(img)
    meta = {"recipe": recipe, "count": count, "size": size, "seed": int(seed)}
    return Dataset(ids=ids, images=images, meta=meta), regions


def save_dataset(dataset: Dataset, out_dir, regions: list[Region] | None = None) -> None:
    """Write a dataset directory: float TIFFs, manifest.json, optional regions.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = []
    for image_id, image in zip(dataset.ids, dataset.images):
        fname = f"{image_id}.tif"
        export_image(image, out / fname, depth="float")
        items.append({"id": image_id, "file": fname})
    manifest = {
        "meta": dataset.meta,
        "normalization": "integer rasters divided by format max; float rasters unchanged "
                         "in [0,1], else min-max with recorded offsets; zero maps to zero",
        "items": items,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    if regions is not None:
        write_regions(regions, out / "regions.txt")


def load_dataset(in_dir) -> Dataset:
    """Read a dataset directory written by save_dataset (or any raster folder)."""
    path = Path(in_dir)
    manifest_path = path / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        ids = [item["id"] for item in manifest["items"]]
        images = [load_image(path / item["file"]) for item in manifest["items"]]
        return Dataset(ids=ids, images=images, meta=manifest.get("meta", {}))
    files = sorted(
        p for p in path.iterdir() if p.suffix.lower() in (".png", ".tif", ".tiff", ".pgm", ".bmp")
    )
    if not files:
        raise ValueError(f"{in_dir}: no manifest.json and no recognizable raster files")
    return Dataset(ids=[p.stem for p in files], images=[load_image(p) for p in files], meta={})
