"""Spatially-variant synthetic Gaussian blur for quantitative evaluation.

Each blur spec defines a center, a peak width sigma_s and a spatial decay
sigma_l; the per-pixel blur width rho falls off exponentially with squared
distance from the center, and the image is blurred by a normalized
Gaussian window of that local width.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import DeblurError
from .image_core import validate_image

# Blur widths below this leave pixels untouched (bounds the window sizes).
RHO_CUTOFF = 0.05

DEFAULT_SIGMA_L = 100.0


@dataclass(frozen=True)
class BlurSpec:
    """One synthetic defocus spot: center (row, col), peak width, decay."""

    center: tuple
    sigma_s: float
    sigma_l: float = DEFAULT_SIGMA_L

    def __post_init__(self):
        if self.sigma_s <= 0 or self.sigma_l <= 0:
            raise ValueError("sigma_s and sigma_l must be positive")


@dataclass(frozen=True)
class DistortionLevel:
    """One row of the distortion-level table."""

    name: str
    n_blurs: int
    sigma_s_range: tuple


LEVELS = {
    "I": DistortionLevel("I", 5, (0.5, 1.5)),
    "II": DistortionLevel("II", 10, (1.5, 2.5)),
    "III": DistortionLevel("III", 15, (2.5, 3.5)),
    "IV": DistortionLevel("IV", 20, (3.5, 4.5)),
}


def sigma_field(specs, width: int, height: int) -> np.ndarray:
    """Per-pixel blur width: pointwise max over all specs of
    sigma_s * exp(-dist^2 / (2 sigma_l))."""
    if not specs:
        raise ValueError("at least one blur spec required")
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    rho = np.zeros((height, width))
    for spec in specs:
        a, b = spec.center
        d2 = (rows - a) ** 2 + (cols - b) ** 2
        np.maximum(rho, spec.sigma_s * np.exp(-d2 / (2.0 * spec.sigma_l)), out=rho)
    return rho


def _blur_channel(channel: np.ndarray, rho: np.ndarray) -> np.ndarray:
    h, w = channel.shape
    active = rho >= RHO_CUTOFF
    if not active.any():
        return channel.copy()
    radius = np.zeros((h, w), dtype=np.int64)
    radius[active] = np.ceil(3.0 * rho[active]).astype(np.int64)
    rmax = int(radius.max())
    inv2s2 = np.zeros((h, w))
    inv2s2[active] = 1.0 / (2.0 * rho[active] ** 2)

    # group offsets by squared radius so each exp map is computed once
    offsets = [(di, dj) for di in range(-rmax, rmax + 1) for dj in range(-rmax, rmax + 1)]
    by_r2 = {}
    for di, dj in offsets:
        by_r2.setdefault(di * di + dj * dj, []).append((di, dj))

    num = np.zeros((h, w))
    den = np.zeros((h, w))
    for r2, group in by_r2.items():
        wmap = np.exp(-r2 * inv2s2)
        for di, dj in group:
            need = max(abs(di), abs(dj))
            mask = (radius >= need) & active
            if not mask.any():
                continue
            wm = np.where(mask, wmap, 0.0)
            dr0, dr1 = max(0, -di), h - max(0, di)
            dc0, dc1 = max(0, -dj), w - max(0, dj)
            dst = (slice(dr0, dr1), slice(dc0, dc1))
            src = (slice(dr0 + di, dr1 + di), slice(dc0 + dj, dc1 + dj))
            num[dst] += wm[dst] * channel[src]
            den[dst] += wm[dst]
    out = channel.copy()
    out[active] = num[active] / den[active]
    return out


def apply_variant_blur(sharp: np.ndarray, specs) -> np.ndarray:
    """Blur an image with the per-pixel Gaussian field defined by ``specs``.

    Each output pixel is the normalized Gaussian-weighted average of its
    neighborhood (window radius 3 rho); pixels with rho below the cutoff
    pass through unchanged. Deterministic.
    """
    arr = validate_image(sharp)
    h, w = arr.shape[:2]
    rho = sigma_field(specs, w, h)
    if arr.ndim == 2:
        return _blur_channel(arr, rho)
    return np.stack(
        [_blur_channel(arr[:, :, c], rho) for c in range(arr.shape[2])], axis=2
    )


def make_level_dataset(sharp_images, level: DistortionLevel, rng_seed: int, sigma_in_255_units: bool = False):
    """Blur a batch of sharp images at one distortion level.

    Centers are uniform over each image; sigma_s is uniform over the
    level's half-open interval (lo, hi]. ``sigma_in_255_units`` divides the
    drawn widths by 255 (the paper's stated but physically inert
    convention), kept for fidelity experiments. Returns a list of
    (blurred, sharp, specs) triples; deterministic for a fixed seed.
    """
    if not sharp_images:
        raise ValueError("sharp_images must be non-empty")
    rng = np.random.default_rng(rng_seed)
    lo, hi = level.sigma_s_range
    out = []
    for img in sharp_images:
        arr = validate_image(img)
        h, w = arr.shape[:2]
        specs = []
        for _ in range(level.n_blurs):
            center = (int(rng.integers(0, h)), int(rng.integers(0, w)))
            sigma_s = hi - float(rng.uniform(0.0, hi - lo))
            if sigma_in_255_units:
                sigma_s /= 255.0
            specs.append(BlurSpec(center=center, sigma_s=sigma_s))
        out.append((apply_variant_blur(arr, specs), arr, specs))
    return out


def write_manifest(path, entries) -> None:
    """Persist dataset metadata; ``entries`` are dicts with blurred_path,
    sharp_path, level, specs, rng_seed."""
    doc = []
    for e in entries:
        item = dict(e)
        item["specs"] = [asdict(s) if isinstance(s, BlurSpec) else s for s in e["specs"]]
        doc.append(item)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_manifest(path):
    """Read a dataset manifest back; raises DeblurError on malformed files."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DeblurError(f"malformed manifest {path}: {exc}") from exc
    if not isinstance(doc, list):
        raise DeblurError(f"malformed manifest {path}: expected a JSON list")
    entries = []
    for i, item in enumerate(doc):
        try:
            specs = [
                BlurSpec(center=tuple(s["center"]), sigma_s=s["sigma_s"], sigma_l=s["sigma_l"])
                for s in item["specs"]
            ]
            entries.append(
                {
                    "blurred_path": item["blurred_path"],
                    "sharp_path": item["sharp_path"],
                    "level": item["level"],
                    "specs": specs,
                    "rng_seed": item["rng_seed"],
                }
            )
        except (KeyError, TypeError) as exc:
            raise DeblurError(f"malformed manifest {path}: entry {i}: missing {exc}") from exc
    return entries
