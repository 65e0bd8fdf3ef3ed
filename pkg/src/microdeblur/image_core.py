"""Image containers and spatial primitives used by the whole pipeline.

Images are plain float64 numpy arrays with intensities in [0, 1]:
``(H, W)`` for single-channel data, ``(H, W, 3)`` for color. All
operations here are pure functions; returned arrays are fresh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DeblurError

# Rec.601 luma weights for RGB -> gray.
GRAY_WEIGHTS = (0.299, 0.587, 0.114)

# boundary name -> scipy.ndimage mode
_NDIMAGE_MODES = {
    "replicate": "nearest",
    "reflect": "reflect",
    "wrap": "wrap",
    "zero": "constant",
}

# Kernel area above which convolve2d switches to the FFT path.
_FFT_KERNEL_AREA = 49


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check shape/dtype conventions and return the array as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim not in (2, 3):
        raise ValueError(f"expected a 2D or 3D image array, got shape {arr.shape}")
    if arr.ndim == 3 and arr.shape[2] != 3:
        raise ValueError(f"color images must have 3 channels, got {arr.shape[2]}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    return arr


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Convert an image to single channel using Rec.601 luma weights.

    Single-channel inputs are returned unchanged.
    """
    arr = validate_image(img)
    if arr.ndim == 2:
        return arr
    w = np.asarray(GRAY_WEIGHTS)
    return arr @ w


@dataclass
class GradientField:
    """Paired horizontal/vertical forward-difference maps of one image."""

    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        if self.gx.shape != self.gy.shape:
            raise ValueError("gx and gy must have identical shapes")

    @property
    def shape(self):
        return self.gx.shape


def gradients(img: np.ndarray) -> GradientField:
    """Forward-difference gradients with replicated edges.

    gx(i, j) = img(i, j+1) - img(i, j) and gy(i, j) = img(i+1, j) - img(i, j);
    the replicated last column/row yields zero gradient there.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("gradients expects a single-channel image")
    gx = np.zeros_like(arr)
    gy = np.zeros_like(arr)
    gx[:, :-1] = arr[:, 1:] - arr[:, :-1]
    gy[:-1, :] = arr[1:, :] - arr[:-1, :]
    return GradientField(gx, gy)


def _check_kernel(kernel: np.ndarray, shape) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2:
        raise ValueError("kernel must be 2D")
    if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ValueError(f"kernel sides must be odd, got {k.shape}")
    if k.shape[0] > shape[0] or k.shape[1] > shape[1]:
        raise DeblurError(
            f"kernel {k.shape} larger than image {tuple(shape[:2])}"
        )
    return k


def _convolve_fft_replicate(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Replicate-padded linear convolution evaluated through the FFT.

    Padding by the kernel half-width keeps the circular wrap-around out of
    the cropped result, so this equals the direct sum up to FFT roundoff.
    """
    h, w = img.shape
    ph, pw = k.shape[0] // 2, k.shape[1] // 2
    padded = np.pad(img, ((ph, ph), (pw, pw)), mode="edge")
    out = np.fft.irfft2(
        np.fft.rfft2(padded) * psf_to_otf(k, padded.shape), s=padded.shape
    )
    return out[ph : ph + h, pw : pw + w]


def convolve2d(img: np.ndarray, kernel: np.ndarray, boundary: str = "replicate") -> np.ndarray:
    """Linear convolution with same-size output and the given boundary mode.

    Large kernels go through an FFT path that matches the direct sum to
    well below 1e-8 per pixel; small kernels use the direct sum.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        return np.stack(
            [convolve2d(arr[:, :, c], kernel, boundary) for c in range(arr.shape[2])],
            axis=2,
        )
    k = _check_kernel(kernel, arr.shape)
    if boundary not in _NDIMAGE_MODES:
        raise ValueError(f"unknown boundary mode {boundary!r}")
    if boundary == "replicate" and k.size > _FFT_KERNEL_AREA:
        return _convolve_fft_replicate(arr, k)
    return ndimage.convolve(arr, k, mode=_NDIMAGE_MODES[boundary])


def convolve2d_adjoint(img: np.ndarray, kernel: np.ndarray, boundary: str = "replicate") -> np.ndarray:
    """Transpose of ``convolve2d`` as a linear operator on the image.

    Away from the border this is convolution with the 180-degree rotated
    kernel; the border bands additionally fold back the contributions the
    padding distributed outward. Supported for replicate/zero/wrap modes.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("adjoint is defined for single-channel images")
    k = _check_kernel(kernel, arr.shape)
    if boundary == "zero":
        return ndimage.correlate(arr, k, mode="constant", cval=0.0)
    if boundary == "wrap":
        return ndimage.correlate(arr, k, mode="wrap")
    if boundary != "replicate":
        raise ValueError(f"adjoint not implemented for boundary {boundary!r}")

    h, w = arr.shape
    ph, pw = k.shape[0] // 2, k.shape[1] // 2
    padded = np.pad(arr, ((ph, ph), (pw, pw)))
    if k.size > _FFT_KERNEL_AREA:
        ext = np.fft.irfft2(
            np.fft.rfft2(padded) * np.conj(psf_to_otf(k, padded.shape)),
            s=padded.shape,
        )
    else:
        ext = ndimage.correlate(padded, k, mode="constant", cval=0.0)
    out = ext[ph : ph + h, pw : pw + w].copy()
    if ph:
        out[0, :] += ext[:ph, pw : pw + w].sum(axis=0)
        out[-1, :] += ext[ph + h :, pw : pw + w].sum(axis=0)
    if pw:
        out[:, 0] += ext[ph : ph + h, :pw].sum(axis=1)
        out[:, -1] += ext[ph : ph + h, pw + w :].sum(axis=1)
    if ph and pw:
        out[0, 0] += ext[:ph, :pw].sum()
        out[0, -1] += ext[:ph, pw + w :].sum()
        out[-1, 0] += ext[ph + h :, :pw].sum()
        out[-1, -1] += ext[ph + h :, pw + w :].sum()
    return out


def psf_to_otf(kernel: np.ndarray, shape) -> np.ndarray:
    """Real-FFT transfer function of a small kernel centered at the origin."""
    k = np.asarray(kernel, dtype=np.float64)
    big = np.zeros(shape)
    kh, kw = k.shape
    rows = (np.arange(kh) - kh // 2) % shape[0]
    cols = (np.arange(kw) - kw // 2) % shape[1]
    big[np.ix_(rows, cols)] = k
    return np.fft.rfft2(big)


def resize_bilinear(img: np.ndarray, out_shape) -> np.ndarray:
    """Bilinear resample to ``out_shape`` with Gaussian anti-alias pre-filter.

    Pixel centers are aligned so constant images stay exactly constant.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        return np.stack(
            [resize_bilinear(arr[:, :, c], out_shape) for c in range(arr.shape[2])],
            axis=2,
        )
    h, w = arr.shape
    oh, ow = int(out_shape[0]), int(out_shape[1])
    if oh < 1 or ow < 1:
        raise ValueError("output shape must be positive")
    if (oh, ow) == (h, w):
        return arr.copy()

    sig_r = max(0.0, (h / oh - 1.0) / 2.0)
    sig_c = max(0.0, (w / ow - 1.0) / 2.0)
    if sig_r > 0 or sig_c > 0:
        arr = ndimage.gaussian_filter(arr, (sig_r, sig_c), mode="nearest")

    rr = np.clip((np.arange(oh) + 0.5) * (h / oh) - 0.5, 0.0, h - 1.0)
    cc = np.clip((np.arange(ow) + 0.5) * (w / ow) - 0.5, 0.0, w - 1.0)
    r0 = np.floor(rr).astype(int)
    c0 = np.floor(cc).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rr - r0)[:, None]
    fc = (cc - c0)[None, :]

    top = arr[r0][:, c0] * (1 - fc) + arr[r0][:, c1] * fc
    bot = arr[r1][:, c0] * (1 - fc) + arr[r1][:, c1] * fc
    return top * (1 - fr) + bot * fr


@dataclass
class Pyramid:
    """Multi-resolution stack; ``levels[0]`` is coarsest, ``levels[-1]`` the input."""

    levels: list
    scale_factor: float
    requested_levels: int
    reduced: bool = False

    @property
    def n_levels(self):
        return len(self.levels)


def build_pyramid(img: np.ndarray, levels: int, scale_factor: float = 1.0 / math.sqrt(2.0)) -> Pyramid:
    """Anti-aliased image pyramid, each coarser level ceil(finer * scale).

    If the requested depth would push the coarsest level below 16x16 the
    pyramid is truncated and flagged via ``reduced``.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if not 0.0 < scale_factor < 1.0:
        raise ValueError("scale_factor must be in (0, 1)")
    arr = validate_image(img)

    stack = [arr]
    while len(stack) < levels:
        ph, pw = stack[-1].shape[:2]
        nh = math.ceil(ph * scale_factor)
        nw = math.ceil(pw * scale_factor)
        if nh < 16 or nw < 16:
            break
        stack.append(resize_bilinear(stack[-1], (nh, nw)))
    reduced = len(stack) < levels
    stack.reverse()
    return Pyramid(stack, scale_factor, levels, reduced)


@dataclass
class Tile:
    """One sub-image: a core rectangle plus clamped overlap margins."""

    index: int
    row0: int
    col0: int
    core_h: int
    core_w: int
    m_top: int
    m_left: int
    m_bottom: int
    m_right: int
    pixels: np.ndarray

    @property
    def full_h(self):
        return self.m_top + self.core_h + self.m_bottom

    @property
    def full_w(self):
        return self.m_left + self.core_w + self.m_right


@dataclass
class TileGrid:
    """Overlapping tiling whose cores partition the image exactly."""

    image_shape: tuple
    core: int
    overlap: int
    rows: int
    cols: int
    tiles: list = field(default_factory=list)

    def __len__(self):
        return len(self.tiles)


def split_tiles(img: np.ndarray, core: int, overlap: int) -> TileGrid:
    """Split an image into core-partitioning tiles with overlap margins.

    Degenerate configurations (core + 2*overlap exceeding the image) fall
    back to a single whole-image tile.
    """
    arr = validate_image(img)
    if core < 64:
        raise ValueError("tile core must be at least 64 px")
    if overlap < 0:
        raise ValueError("overlap must be non-negative")
    h, w = arr.shape[:2]

    if core + 2 * overlap > min(h, w):
        tile = Tile(0, 0, 0, h, w, 0, 0, 0, 0, arr.copy())
        return TileGrid(arr.shape, core, overlap, 1, 1, [tile])

    rows = math.ceil(h / core)
    cols = math.ceil(w / core)
    tiles = []
    for i in range(rows):
        for j in range(cols):
            r0, c0 = i * core, j * core
            r1, c1 = min(r0 + core, h), min(c0 + core, w)
            mt, ml = min(overlap, r0), min(overlap, c0)
            mb, mr = min(overlap, h - r1), min(overlap, w - c1)
            pix = arr[r0 - mt : r1 + mb, c0 - ml : c1 + mr].copy()
            tiles.append(
                Tile(len(tiles), r0, c0, r1 - r0, c1 - c0, mt, ml, mb, mr, pix)
            )
    return TileGrid(arr.shape, core, overlap, rows, cols, tiles)


def stitch_tiles(grid: TileGrid, tile_images) -> np.ndarray:
    """Reassemble processed tiles, averaging wherever margins overlap."""
    shape = tuple(grid.image_shape)
    acc = np.zeros(shape)
    cnt = np.zeros(shape[:2])
    for tile in grid.tiles:
        if tile.index >= len(tile_images) or tile_images[tile.index] is None:
            raise DeblurError(f"missing recovered pixels for tile {tile.index}")
        pix = np.asarray(tile_images[tile.index], dtype=np.float64)
        expect = (tile.full_h, tile.full_w) + shape[2:]
        if pix.shape != expect:
            raise DeblurError(
                f"tile {tile.index}: recovered shape {pix.shape} != expected {expect}"
            )
        rs = tile.row0 - tile.m_top
        cs = tile.col0 - tile.m_left
        acc[rs : rs + tile.full_h, cs : cs + tile.full_w] += pix
        cnt[rs : rs + tile.full_h, cs : cs + tile.full_w] += 1.0
    if acc.ndim == 3:
        cnt = cnt[:, :, None]
    return acc / cnt
