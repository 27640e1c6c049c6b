"""Multiplicative gamma speckle: fields, the observation model, and speckled pairs.

Images throughout the package are 2-D numpy arrays indexed [row, col] with
finite, non-negative intensities; the canonical dynamic range after ingestion
is [0, 1]. Speckled products are deliberately *not* clipped to [0, 1] here --
clipping happens only at export, so the multiplicative model stays exact.

A speckle field of L looks is i.i.d. gamma with shape L and scale 1/L
(unit mean, variance 1/L). Sampling uses numpy's shape/scale gamma sampler
(Marsaglia-Tsang squeeze, valid for any real L > 0) on a Philox stream keyed
by the field's seed, so equal seeds reproduce fields bit for bit and distinct
seeds give disjoint streams.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeds import philox

_TINY = float(np.finfo(np.float64).tiny)


def validate_image(pixels: np.ndarray, name: str = "image") -> np.ndarray:
    """Check the 2-D / finite / non-negative image contract; returns the array."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise ValueError(f"{name} contains negative intensities")
    return arr


@dataclass
class SpeckleField:
    """One realization of multiplicative gamma noise.

    values: [H, W] strictly positive float64 draws, unit mean, variance 1/looks.
    looks:  the look count L (> 0, non-integer allowed).
    seed:   the stream key that reproduces this field exactly.
    """

    values: np.ndarray
    looks: float
    seed: int

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class S2SPair:
    """Two speckled views of one shared content image.

    first = base * N(seed1) and second = base * N(seed2) elementwise, with the
    two fields drawn from disjoint streams. The base is retained so tests and
    the iterative round can verify pair provenance.
    """

    first: np.ndarray
    second: np.ndarray
    base: np.ndarray
    looks: float
    seeds: tuple[int, int]


def sample_speckle_field(width: int, height: int, looks: float, seed: int) -> SpeckleField:
    """Draw an i.i.d. gamma(L, 1/L) speckle field of the given size.

    Same (width, height, looks, seed) is bit-identical. Values are clamped to
    the smallest positive double so downstream ratios stay finite; at any
    practical L the clamp never fires.
    """
    if not (isinstance(width, (int, np.integer)) and isinstance(height, (int, np.integer))):
        raise ValueError("width and height must be integers")
    if width < 1 or height < 1:
        raise ValueError(f"dimensions must be >= 1, got {width}x{height}")
    looks = float(looks)
    if not np.isfinite(looks) or looks <= 0:
        raise ValueError(f"look count must be a positive finite number, got {looks}")
    rng = philox(seed)
    values = rng.gamma(shape=looks, scale=1.0 / looks, size=(int(height), int(width)))
    np.maximum(values, _TINY, out=values)
    return SpeckleField(values=values, looks=looks, seed=int(seed))


def apply_speckle(clean: np.ndarray, field: SpeckleField) -> np.ndarray:
    """Observation model: entrywise product of a clean image and a speckle field.

    Returns a fresh array; inputs are untouched. The product is computed in
    float64 and cast back to the clean image's float dtype (float32 default).
    """
    arr = validate_image(clean, "clean")
    if arr.shape != field.values.shape:
        raise ValueError(
            f"image shape {arr.shape} does not match speckle field shape {field.values.shape}"
        )
    out_dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float32
    return (arr.astype(np.float64, copy=False) * field.values).astype(out_dtype)


def make_s2s_pair(base: np.ndarray, looks: float, seed1: int, seed2: int) -> S2SPair:
    """Speckle one content image twice with independent fields.

    seed1 and seed2 must differ: equal seeds would produce the same field and
    the pair would carry no noise-averaging information.
    """
    if int(seed1) == int(seed2):
        raise ValueError("seed1 and seed2 must differ (pair members must be independent)")
    arr = validate_image(base, "base")
    h, w = arr.shape
    n1 = sample_speckle_field(w, h, looks, seed1)
    n2 = sample_speckle_field(w, h, looks, seed2)
    return S2SPair(
        first=apply_speckle(arr, n1),
        second=apply_speckle(arr, n2),
        base=np.array(arr, copy=True),
        looks=float(looks),
        seeds=(int(seed1), int(seed2)),
    )
