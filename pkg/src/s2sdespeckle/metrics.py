"""Image-quality metrics: full-reference (PSNR/SSIM) and region-based ratio metrics.

The region metrics mirror standard SAR despeckling practice: equivalent number
of looks over homogeneous regions (speckle suppression), edge-preservation
degree from ratios of adjacent pixels along a direction (1 is ideal),
target-to-clutter-ratio deviation in dB (0 is ideal, smaller is better), and
mean of the original/despeckled ratio (radiometric preservation, 1 is ideal).

Every metric is a pure function. Values that cannot be computed exactly are
either flagged (``saturated``) or raise ValueError, never silently NaN.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.signal import convolve2d

from .speckle import validate_image

PSNR_CAP_DB = 99.0

REGION_KINDS = ("homogeneous", "edge", "point-target")
DIRECTIONS = ("horizontal", "vertical")


class MetricValue(NamedTuple):
    """A metric result plus the flags demanded by the reporting contract."""

    value: float
    saturated: bool = False
    skipped_fraction: float = 0.0


@dataclass(frozen=True)
class Region:
    """Axis-aligned evaluation window: offsets (x, y), extents, and a kind tag."""

    name: str
    kind: str
    x: int
    y: int
    width: int
    height: int
    direction: str | None = None

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ValueError(f"region {self.name!r}: unknown kind {self.kind!r}")
        if self.width < 2 or self.height < 2:
            raise ValueError(f"region {self.name!r}: extents must be >= 2")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"region {self.name!r}: offsets must be >= 0")
        if self.direction is not None and self.direction not in DIRECTIONS:
            raise ValueError(f"region {self.name!r}: unknown direction {self.direction!r}")

    def crop(self, image: np.ndarray) -> np.ndarray:
        h, w = image.shape
        if self.x + self.width > w or self.y + self.height > h:
            raise ValueError(
                f"region {self.name!r} ({self.x},{self.y},{self.width},{self.height}) "
                f"does not fit inside a {w}x{h} image"
            )
        return image[self.y : self.y + self.height, self.x : self.x + self.width]

    def overlaps(self, other: "Region") -> bool:
        return not (
            self.x + self.width <= other.x
            or other.x + other.width <= self.x
            or self.y + self.height <= other.y
            or other.y + other.height <= self.y
        )


def read_regions(path) -> list[Region]:
    """Parse a region file: one ``name kind x y w h [direction]`` per line."""
    regions = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (6, 7):
                raise ValueError(f"{path}:{lineno}: expected 6 or 7 fields, got {len(parts)}")
            name, kind = parts[0], parts[1]
            x, y, w, h = (int(p) for p in parts[2:6])
            direction = parts[6] if len(parts) == 7 else None
            regions.append(Region(name, kind, x, y, w, h, direction))
    return regions


def write_regions(regions: list[Region], path) -> None:
    with open(path, "w") as fh:
        fh.write("# name kind x y w h [direction]\n")
        for r in regions:
            tail = f" {r.direction}" if r.direction else ""
            fh.write(f"{r.name} {r.kind} {r.x} {r.y} {r.width} {r.height}{tail}\n")


def psnr(reference: np.ndarray, test: np.ndarray, peak: float = 1.0) -> MetricValue:
    """Peak signal-to-noise ratio in dB; identical images saturate at 99 dB."""
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise ValueError(f"psnr: shape mismatch {ref.shape} vs {tst.shape}")
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0.0:
        return MetricValue(PSNR_CAP_DB, saturated=True)
    return MetricValue(min(10.0 * math.log10(peak**2 / mse), PSNR_CAP_DB))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(reference: np.ndarray, test: np.ndarray, peak: float = 1.0) -> float:
    """Mean local structural similarity, Gaussian 11x11 window, sigma 1.5.

    Uses the canonical constants K1=0.01, K2=0.03 with dynamic range ``peak``
    and weighted (non-sample) covariances over the valid window positions.
    """
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise ValueError(f"ssim: shape mismatch {ref.shape} vs {tst.shape}")
    win = _gaussian_window()
    if min(ref.shape) < win.shape[0]:
        raise ValueError(f"ssim: image {ref.shape} smaller than the {win.shape[0]}x{win.shape[0]} window")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu1 = convolve2d(ref, win, mode="valid")
    mu2 = convolve2d(tst, win, mode="valid")
    s11 = convolve2d(ref * ref, win, mode="valid") - mu1 * mu1
    s22 = convolve2d(tst * tst, win, mode="valid") - mu2 * mu2
    s12 = convolve2d(ref * tst, win, mode="valid") - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1**2 + mu2**2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


def enl(image: np.ndarray, region: Region) -> MetricValue:
    """Equivalent number of looks over a homogeneous region: mean^2 / variance.

    Uses the population variance; on pure L-look speckle this estimates L.
    A perfectly constant region has no speckle left to measure and reports
    saturated.
    """
    if region.kind != "homogeneous":
        raise ValueError(f"enl needs a homogeneous region, got kind {region.kind!r}")
    crop = region.crop(validate_image(image)).astype(np.float64)
    var = float(crop.var())
    if var == 0.0:
        return MetricValue(math.inf, saturated=True)
    return MetricValue(float(crop.mean()) ** 2 / var)


def _adjacent_ratio_sum(crop: np.ndarray, direction: str) -> tuple[float, int, int]:
    """Sum of |p(i)/p(i+1)| along ``direction``; returns (sum, skipped, total)."""
    if direction == "horizontal":
        num, den = crop[:, :-1], crop[:, 1:]
    else:
        num, den = crop[:-1, :], crop[1:, :]
    valid = den != 0
    skipped = int((~valid).sum())
    total = int(den.size)
    s = float(np.abs(num[valid] / den[valid]).sum())
    return s, skipped, total


def epd_roa(
    original: np.ndarray,
    despeckled: np.ndarray,
    region: Region,
    direction: str | None = None,
) -> MetricValue:
    """Edge-preservation degree: despeckled adjacent-ratio sum over the original's.

    1.0 means edges kept as they were; pairs with a zero denominator are
    skipped and reported via skipped_fraction (over both images' pair sets).
    """
    direction = direction or region.direction
    if direction not in DIRECTIONS:
        raise ValueError(f"epd_roa needs direction 'horizontal' or 'vertical', got {direction!r}")
    o = np.asarray(original, dtype=np.float64)
    d = np.asarray(despeckled, dtype=np.float64)
    if o.shape != d.shape:
        raise ValueError(f"epd_roa: shape mismatch {o.shape} vs {d.shape}")
    sum_d, sk_d, n_d = _adjacent_ratio_sum(region.crop(d), direction)
    sum_o, sk_o, n_o = _adjacent_ratio_sum(region.crop(o), direction)
    if sum_o == 0.0:
        raise ValueError("epd_roa: original region has zero adjacent-ratio sum")
    return MetricValue(sum_d / sum_o, skipped_fraction=(sk_d + sk_o) / (n_d + n_o))


def _tcr_db(image: np.ndarray, target: Region, clutter: Region) -> float:
    t = target.crop(image)
    c = clutter.crop(image)
    peak = float(t.max())
    clutter_mean = float(c.mean())
    if clutter_mean == 0.0:
        raise ValueError("tcr: clutter region mean is zero")
    if peak <= 0.0:
        raise ValueError("tcr: target region has no positive response")
    return 20.0 * math.log10(peak / clutter_mean)


def tcr_deviation(
    original: np.ndarray,
    despeckled: np.ndarray,
    target_region: Region,
    clutter_region: Region,
) -> MetricValue:
    """Absolute change of the target-to-clutter ratio in dB; 0 is ideal.

    TCR(img) = 20 log10(max over target / mean over clutter); invariant under
    global positive scaling, so only genuine point-target damage registers.
    """
    if target_region.overlaps(clutter_region):
        raise ValueError(
            f"tcr regions {target_region.name!r} and {clutter_region.name!r} must be disjoint"
        )
    o = np.asarray(original, dtype=np.float64)
    d = np.asarray(despeckled, dtype=np.float64)
    if o.shape != d.shape:
        raise ValueError(f"tcr_deviation: shape mismatch {o.shape} vs {d.shape}")
    return MetricValue(abs(_tcr_db(d, target_region, clutter_region) - _tcr_db(o, target_region, clutter_region)))


def mor(original: np.ndarray, despeckled: np.ndarray, region: Region) -> MetricValue:
    """Mean of the original/despeckled ratio over a region; 1 preserves radiometry.

    Pixels where the despeckled value is not strictly positive are skipped and
    counted; if nothing remains the ratio is undefined and raises.
    """
    o = np.asarray(original, dtype=np.float64)
    d = np.asarray(despeckled, dtype=np.float64)
    if o.shape != d.shape:
        raise ValueError(f"mor: shape mismatch {o.shape} vs {d.shape}")
    oc = region.crop(o)
    dc = region.crop(d)
    valid = dc > 0
    skipped = int((~valid).sum())
    if not valid.any():
        raise ValueError(f"mor: despeckled region {region.name!r} has no positive pixels")
    return MetricValue(float((oc[valid] / dc[valid]).mean()), skipped_fraction=skipped / dc.size)


def _entry(metric: str, mv, region: Region | None = None, **extra) -> dict:
    entry = {"metric": metric}
    if region is not None:
        entry["region"] = region.name
        entry["region_kind"] = region.kind
    if isinstance(mv, MetricValue):
        entry["value"] = None if math.isinf(mv.value) else mv.value
        if mv.saturated:
            entry["saturated"] = True
        if mv.skipped_fraction:
            entry["skipped_fraction"] = mv.skipped_fraction
    else:
        entry["value"] = float(mv)
    entry.update(extra)
    return entry


def evaluate_reference(reference: np.ndarray, test: np.ndarray, peak: float = 1.0) -> list[dict]:
    """Full-reference block: PSNR and SSIM entries."""
    return [
        _entry("psnr_db", psnr(reference, test, peak)),
        _entry("ssim", ssim(reference, test, peak)),
    ]


def evaluate_regions(original: np.ndarray, despeckled: np.ndarray, regions: list[Region]) -> list[dict]:
    """No-reference block over a region list.

    ENL and MoR run on every homogeneous region (ENL also on the original for
    context), EPD-ROA on every edge region, and TCR deviation pairs each
    point-target region with the first homogeneous region as clutter.
    """
    entries: list[dict] = []
    homogeneous = [r for r in regions if r.kind == "homogeneous"]
    for r in homogeneous:
        entries.append(_entry("enl_original", enl(original, r), r))
        entries.append(_entry("enl_despeckled", enl(despeckled, r), r))
        entries.append(_entry("mor", mor(original, despeckled, r), r))
    for r in regions:
        if r.kind == "edge":
            entries.append(_entry("epd_roa", epd_roa(original, despeckled, r), r, direction=r.direction))
    if homogeneous:
        clutter = homogeneous[0]
        for r in regions:
            if r.kind == "point-target":
                entries.append(
                    _entry("tcr_deviation_db", tcr_deviation(original, despeckled, r, clutter), r, clutter=clutter.name)
                )
    return entries


def report_to_text(report: dict) -> str:
    """Deterministic serialization of a metric report (sorted keys, 2-space indent)."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
