"""PNG/TIFF reading and writing with linear [0, 1] intensity mapping.

Supported: 8-bit grayscale/RGB and 16-bit grayscale, both PNG and TIFF.
RGBA inputs drop the alpha channel. Values are scaled linearly on load
and rounded to the nearest code on save.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import DeblurError
from .image_core import validate_image


def load_image(path) -> np.ndarray:
    """Load an image file as float64 in [0, 1]; (H, W) or (H, W, 3)."""
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGB")
                mode = "RGB"
            if mode == "RGBA":
                im = im.convert("RGB")
                mode = "RGB"
            if mode in ("I;16", "I;16B", "I;16L"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
            elif mode == "I":
                arr = np.asarray(im, dtype=np.float64)
                # PIL reports 16-bit PNG grayscale as mode I with 0..65535 codes
                arr = arr / 65535.0 if arr.max() > 255 else arr / 255.0
            elif mode == "L":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            elif mode == "RGB":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            elif mode == "F":
                arr = np.asarray(im, dtype=np.float64)
            else:
                raise DeblurError(f"unsupported image mode {mode!r} in {path}")
    except FileNotFoundError:
        raise
    except DeblurError:
        raise
    except Exception as exc:
        raise DeblurError(f"cannot read image {path}: {exc}") from exc
    return np.clip(validate_image(arr), 0.0, 1.0)


def save_image(path, img: np.ndarray, bit_depth: int = 8) -> None:
    """Write an image as PNG or TIFF (by extension) at 8 or 16 bits."""
    path = Path(path)
    arr = np.clip(validate_image(img), 0.0, 1.0)
    if bit_depth == 8:
        data = np.rint(arr * 255.0).astype(np.uint8)
        im = PILImage.fromarray(data if data.ndim == 2 else data, mode=None)
    elif bit_depth == 16:
        if arr.ndim != 2:
            raise DeblurError("16-bit output is supported for grayscale only")
        data = np.rint(arr * 65535.0).astype(np.uint16)
        im = PILImage.fromarray(data, mode="I;16")
    else:
        raise ValueError("bit_depth must be 8 or 16")
    try:
        im.save(path)
    except (OSError, ValueError) as exc:
        raise DeblurError(f"cannot write image {path}: {exc}") from exc


def save_kernel_text(path, kernel: np.ndarray) -> None:
    """Plain-text kernel dump: first line the side, then one row per line."""
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("kernel must be square")
    lines = [str(k.shape[0])]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in k]
    Path(path).write_text("\n".join(lines) + "\n")


def load_kernel_text(path) -> np.ndarray:
    """Inverse of :func:`save_kernel_text`."""
    raw = Path(path).read_text().strip().splitlines()
    if not raw:
        raise DeblurError(f"empty kernel file {path}")
    side = int(raw[0])
    rows = [list(map(float, line.split())) for line in raw[1 : side + 1]]
    k = np.asarray(rows, dtype=np.float64)
    if k.shape != (side, side):
        raise DeblurError(f"malformed kernel file {path}: expected {side}x{side}")
    return k
