"""Spatially invariant blind kernel estimation on one sub-image.

Alternates sparse gradient-map updates (proximal gradient / ISTA) with
regularized closed-form FFT kernel solves, anchored toward circular
Gaussians while the anchoring weight ``eta`` is positive, and drives the
whole scheme coarse-to-fine over an image pyramid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, SingularSystemError
from .image_core import (
    GradientField,
    build_pyramid,
    convolve2d,
    convolve2d_adjoint,
    gradients,
    psf_to_otf,
    resize_bilinear,
    to_grayscale,
)

# The published sparsity weight (lambda = 80) presupposes 0..255-convention
# data; applied literally to unit-range gradients its threshold exceeds every
# gradient magnitude and the maps collapse. This divisor maps the published
# value onto unit-range data; it was calibrated on synthetic ground truth
# (textures x widths 0..3 px) and sits at the center of the working plateau.
LAMBDA_SCALE = 2.0 * 255.0 * 255.0

# Entries below max/50 are treated as solver noise when fitting a Gaussian
# width to a raw least-squares kernel.
_FIT_PRUNE_RATIO = 0.02

# A raw solve whose negative mass reaches this fraction of its positive mass
# is a sharpening operator, not a blur; its fitted width is meaningless.
_SHARPENER_NEG_RATIO = 0.5


@dataclass(frozen=True)
class EstimationConfig:
    """Tuning knobs for blind kernel estimation (defaults: the published set).

    ``noise_sigma`` documents the assumed white-Gaussian noise level; it is
    folded into ``lam`` and not applied separately.
    """

    lam: float = 80.0
    eta: float = 15.0
    nu: float = 6.0
    eta_decay: float = 2.0
    nu_decay: float = 0.0
    kernel_size: int = 15
    outer_iters: int = 5
    inner_iters: int = 3
    ista_step: float = 0.5
    sigma_search_steps: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)
    pyramid_levels: int = 5
    scale_factor: float = 1.0 / math.sqrt(2.0)
    noise_sigma: float = 0.01

    def __post_init__(self):
        if min(self.lam, self.eta, self.nu, self.eta_decay, self.nu_decay) < 0:
            raise ValueError("weights must be non-negative")
        if self.kernel_size % 2 == 0 or self.kernel_size < 3:
            raise ValueError("kernel_size must be odd and >= 3")
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.ista_step <= 0:
            raise ValueError("ista_step must be positive")
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if not 0.0 < self.scale_factor < 1.0:
            raise ValueError("scale_factor must be in (0, 1)")


@dataclass
class EstimationState:
    """Mutable per-level solver state."""

    grad: GradientField
    kernel: np.ndarray
    eta: float
    nu: float
    level: int
    energy_trace: list = field(default_factory=list)


@dataclass
class LevelTrace:
    """Diagnostics for one pyramid level of a finished estimation."""

    level: int
    image_shape: tuple
    kernel_side: int
    energies: list


@dataclass
class MultiscaleTrace:
    levels: list
    reduced_pyramid: bool = False
    too_small: bool = False


def delta_kernel(side: int) -> np.ndarray:
    """Unit impulse on an odd side x side grid."""
    if side % 2 == 0 or side < 1:
        raise ValueError("side must be odd and positive")
    k = np.zeros((side, side))
    k[side // 2, side // 2] = 1.0
    return k


def normalize_kernel(k: np.ndarray) -> np.ndarray:
    s = float(k.sum())
    if s <= 0:
        raise NumericError("kernel has non-positive mass, cannot normalize")
    return k / s


def total_variation_distance(k1: np.ndarray, k2: np.ndarray) -> float:
    """Half the l1 distance between two normalized kernels."""
    if k1.shape != k2.shape:
        raise ValueError("kernels must share a grid")
    return 0.5 * float(np.abs(k1 - k2).sum())


def data_energy(grad_x: GradientField, kernel: np.ndarray, grad_i: GradientField) -> float:
    """||grad_x (*) k - grad_i||_F^2 summed over both gradient components."""
    if grad_x.shape != grad_i.shape:
        raise ValueError("gradient fields must share dimensions")
    rx = convolve2d(grad_x.gx, kernel) - grad_i.gx
    ry = convolve2d(grad_x.gy, kernel) - grad_i.gy
    return float(np.sum(rx * rx) + np.sum(ry * ry))


def _ista_objective(x: np.ndarray, kernel: np.ndarray, b: np.ndarray, lam_eff: float) -> float:
    """Sparse reconstruction objective for one gradient component.

    Uses the 1/2-scaled least-squares convention so the soft-threshold
    update below is its exact proximal-gradient step.
    """
    r = convolve2d(x, kernel) - b
    return 0.5 * float(np.sum(r * r)) + lam_eff * float(np.abs(x).sum())


def _ista_single(
    b: np.ndarray,
    kernel: np.ndarray,
    x0: np.ndarray,
    lam_eff: float,
    step: float,
    max_iters: int,
    rel_tol: float = 1e-6,
):
    """Proximal-gradient iterations on one gradient component.

    Returns the final iterate and the objective trace (initial value first).
    """
    x = x0
    energies = [_ista_objective(x, kernel, b, lam_eff)]
    thr = lam_eff * step
    for t in range(1, max_iters + 1):
        resid = convolve2d(x, kernel) - b
        y = x - step * convolve2d_adjoint(resid, kernel)
        x_new = np.sign(y) * np.maximum(np.abs(y) - thr, 0.0)
        e = _ista_objective(x_new, kernel, b, lam_eff)
        if not math.isfinite(e):
            raise NumericError("non-finite gradient-map energy", where=f"ista iteration {t}")
        x = x_new
        prev = energies[-1]
        energies.append(e)
        if abs(prev - e) < rel_tol * max(abs(prev), 1e-12):
            break
    return x, energies


def ista_gradient_update(
    grad_i: GradientField,
    kernel: np.ndarray,
    init: GradientField,
    cfg: EstimationConfig,
) -> GradientField:
    """Sparse update of the latent gradient maps given the current kernel.

    The two components are solved independently: a gradient step on the
    data term followed by soft thresholding, stopping early once the
    objective stalls (relative change < 1e-6).
    """
    if grad_i.shape != init.shape:
        raise ValueError("init must match the observed gradients")
    lam_eff = cfg.lam / LAMBDA_SCALE
    gx, _ = _ista_single(grad_i.gx, kernel, init.gx, lam_eff, cfg.ista_step, cfg.inner_iters)
    gy, _ = _ista_single(grad_i.gy, kernel, init.gy, lam_eff, cfg.ista_step, cfg.inner_iters)
    return GradientField(gx, gy)


def _taper_window(shape, width: int) -> np.ndarray:
    """Separable cosine ramp from the borders; 1 in the interior."""

    def profile(n):
        w = np.ones(n)
        t = min(width, n // 2)
        if t > 0:
            ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(t) + 0.5) / t)
            w[:t] = ramp
            w[n - t :] = ramp[::-1]
        return w

    return np.outer(profile(shape[0]), profile(shape[1]))


def _tapered_ffts(grad_x: GradientField, grad_i: GradientField, size: int):
    win = _taper_window(grad_x.shape, min(size, grad_x.shape[0] // 4, grad_x.shape[1] // 4))
    fxx = np.fft.rfft2(win * grad_x.gx)
    fxy = np.fft.rfft2(win * grad_x.gy)
    fix = np.fft.rfft2(win * grad_i.gx)
    fiy = np.fft.rfft2(win * grad_i.gy)
    return fxx, fxy, fix, fiy


def kernel_solve_fft(
    grad_x: GradientField,
    grad_i: GradientField,
    nu: float,
    size: int,
) -> np.ndarray:
    """Closed-form least-squares kernel from the gradient cross-spectra.

    Minimizes ||grad_x (*) k - grad_i||_F^2 + nu ||k||_F^2 via the
    frequency-domain quotient, then crops ``size x size`` around the
    center. Entries may be negative; callers clamp/normalize. Borders are
    cosine-tapered first to suppress wrap-around.
    """
    if size % 2 == 0 or size < 1:
        raise ValueError("kernel size must be odd and positive")
    if grad_x.shape != grad_i.shape:
        raise ValueError("gradient fields must share dimensions")
    if nu < 0:
        raise ValueError("nu must be non-negative")
    h, w = grad_x.shape
    if size > min(h, w):
        raise ValueError("kernel size exceeds the gradient field")

    fxx, fxy, fix, fiy = _tapered_ffts(grad_x, grad_i, size)
    num = np.conj(fxx) * fix + np.conj(fxy) * fiy
    den = np.abs(fxx) ** 2 + np.abs(fxy) ** 2 + nu
    if nu == 0.0 and np.any(den == 0.0):
        raise SingularSystemError(
            "kernel solve is singular: zero latent gradients and nu = 0"
        )
    full = np.fft.irfft2(num / den, s=(h, w))
    half = size // 2
    rows = np.arange(-half, half + 1) % h
    cols = np.arange(-half, half + 1) % w
    return full[np.ix_(rows, cols)]


def _centered_radius_sq(side: int) -> np.ndarray:
    a = np.arange(side) - (side - 1) / 2.0
    return a[:, None] ** 2 + a[None, :] ** 2


def fit_gaussian(kernel: np.ndarray) -> float:
    """Moment-matched width of the circular Gaussian closest to ``kernel``.

    sigma^2 = 1/2 * sum k(a, b) (a^2 + b^2) over center-origin coordinates;
    this is the ML width for a discretized isotropic Gaussian up to
    discretization error. Expects a normalized, non-negative kernel.
    """
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise ValueError("kernel must be square with odd side")
    s = float(k.sum())
    if s <= 0:
        raise ValueError("kernel must have positive mass")
    m2 = 0.5 * float((k * _centered_radius_sq(k.shape[0])).sum()) / s
    return math.sqrt(max(m2, 0.0))


def _sample_gaussian(sigma_r: float, side: int) -> np.ndarray:
    w = np.exp(-_centered_radius_sq(side) / (2.0 * sigma_r * sigma_r))
    return w / w.sum()


def render_gaussian(sigma: float, side: int) -> np.ndarray:
    """Discretized circular Gaussian whose fitted width equals ``sigma``.

    Plain point sampling biases the second moment at small widths, so the
    sampling width is calibrated by bisection until the moment fit returns
    the requested value. sigma <= 0 renders the delta kernel; widths beyond
    what the grid can represent saturate toward a flat kernel.
    """
    if side % 2 == 0 or side < 1:
        raise ValueError("side must be odd and positive")
    if sigma <= 1e-8:
        return delta_kernel(side)
    lo, hi = 1e-6, max(2.0 * sigma, 1.0)
    while fit_gaussian(_sample_gaussian(hi, side)) < sigma:
        hi *= 2.0
        if hi > 64.0 * side:
            return _sample_gaussian(hi, side)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if fit_gaussian(_sample_gaussian(mid, side)) < sigma:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(hi, 1.0):
            break
    return _sample_gaussian(0.5 * (lo + hi), side)


def sigma_window_search(
    grad_x: GradientField,
    grad_i: GradientField,
    sigma: float,
    nu: float,
    size: int,
    cfg: EstimationConfig,
) -> np.ndarray:
    """Brute-force refinement of a Gaussian kernel width.

    Evaluates the kernel objective (replicate-boundary data term plus the
    l2 penalty) for Gaussians of width sigma and sigma +/- each configured
    step: 2 * len(steps) + 1 candidates, negative widths clamping to the
    delta kernel. Returns the winner, normalized.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    h, w = grad_x.shape
    pad = size // 2
    # candidate-independent spectra of the replicate-padded latent gradients
    padded = [
        np.pad(grad_x.gx, pad, mode="edge"),
        np.pad(grad_x.gy, pad, mode="edge"),
    ]
    pshape = padded[0].shape
    spectra = [np.fft.rfft2(p) for p in padded]
    observed = (grad_i.gx, grad_i.gy)

    candidates = [sigma]
    candidates += [sigma + s for s in cfg.sigma_search_steps]
    candidates += [max(sigma - s, 0.0) for s in cfg.sigma_search_steps]

    best_kernel = None
    best_obj = math.inf
    for cand in candidates:
        k = render_gaussian(cand, size)
        otf = psf_to_otf(k, pshape)
        obj = nu * float(np.sum(k * k))
        for spec, obs in zip(spectra, observed):
            conv = np.fft.irfft2(spec * otf, s=pshape)[pad : pad + h, pad : pad + w]
            r = conv - obs
            obj += float(np.sum(r * r))
        if obj < best_obj:
            best_obj = obj
            best_kernel = k
    return normalize_kernel(best_kernel)


def _prepare_for_fit(k_hat: np.ndarray) -> np.ndarray | None:
    """Clamp, denoise and normalize a raw solve result for width fitting.

    Returns None when the solve is not blur-like: nothing positive, or the
    negative mass rivals the positive mass (a sharpening operator, whose
    clamped moments carry no usable width).
    """
    pos = float(np.maximum(k_hat, 0.0).sum())
    neg = float(np.maximum(-k_hat, 0.0).sum())
    if pos <= 0.0 or neg >= _SHARPENER_NEG_RATIO * pos:
        return None
    k = np.maximum(k_hat, 0.0)
    k = np.where(k >= _FIT_PRUNE_RATIO * k.max(), k, 0.0)
    return k / k.sum()


def kernel_update(
    grad_x: GradientField,
    grad_i: GradientField,
    state: EstimationState,
    cfg: EstimationConfig,
) -> np.ndarray:
    """One kernel refinement: FFT least-squares solve plus optional
    Gaussian anchoring while ``state.eta`` is positive.

    The anchored branch fits a width to the raw solve (clamped to a trust
    region around the carried kernel's width), brute-force searches the
    configured window around it and decays eta; either branch ends with
    clamping negatives and l1 normalization. The result is stored on
    ``state`` and returned.
    """
    size = state.kernel.shape[0]
    k_hat = kernel_solve_fft(grad_x, grad_i, state.nu, size)
    if state.eta > 0.0:
        prepared = _prepare_for_fit(k_hat)
        sigma = fit_gaussian(prepared) if prepared is not None else 0.0
        # Trust region: a fresh fit may not teleport the search window more
        # than one window span away from the width carried in the state.
        # Raw solves on freshly-upscaled gradient maps are polluted by the
        # interpolation low-pass and would otherwise ratchet the width up.
        carried = fit_gaussian(state.kernel)
        span = max(cfg.sigma_search_steps) if cfg.sigma_search_steps else 0.0
        sigma = min(max(sigma, carried - span), carried + span)
        k = sigma_window_search(grad_x, grad_i, sigma, state.nu, size, cfg)
        state.eta = max(state.eta - cfg.eta_decay, 0.0)
    else:
        k = k_hat
    state.nu = max(state.nu - cfg.nu_decay, 0.0)
    k = np.maximum(k, 0.0)
    mass = float(k.sum())
    if mass <= 0.0 or not np.isfinite(mass):
        raise NumericError("kernel update collapsed to zero mass")
    k = k / mass
    state.kernel = k
    return k


def _gaussian_misfit(kernel: np.ndarray) -> float:
    """||k - N(0, fitted sigma)||_F^2, the anchoring penalty of the energy."""
    prepared = _prepare_for_fit(kernel)
    sigma = fit_gaussian(prepared) if prepared is not None else 0.0
    ref = render_gaussian(sigma, kernel.shape[0])
    d = kernel - ref
    return float(np.sum(d * d))


def estimation_energy(
    grad_x: GradientField,
    kernel: np.ndarray,
    grad_i: GradientField,
    lam_eff: float,
    eta: float,
    nu: float,
) -> float:
    """Full alternating-minimization energy (1/2-scaled quadratic terms)."""
    e = 0.5 * data_energy(grad_x, kernel, grad_i)
    e += lam_eff * (float(np.abs(grad_x.gx).sum()) + float(np.abs(grad_x.gy).sum()))
    e += 0.5 * nu * float(np.sum(kernel * kernel))
    if eta > 0.0:
        e += 0.5 * eta * _gaussian_misfit(kernel)
    return e


def kernel_side_for_level(cfg: EstimationConfig, level: int, n_levels: int) -> int:
    """Kernel side at pyramid level ``level`` (1 = coarsest): the smallest
    odd integer >= finest side scaled down, never below 3."""
    raw = cfg.kernel_size * cfg.scale_factor ** (n_levels - level)
    side = int(math.ceil(raw))
    if side % 2 == 0:
        side += 1
    return max(side, 3)


def _upscale_kernel(kernel: np.ndarray, new_side: int) -> np.ndarray:
    k = resize_bilinear(kernel, (new_side, new_side))
    k = np.maximum(k, 0.0)
    return normalize_kernel(k)


def _upscale_gradients(grad: GradientField, shape) -> GradientField:
    return GradientField(
        resize_bilinear(grad.gx, shape), resize_bilinear(grad.gy, shape)
    )


# Damping for the inverse-filter initialization of propagated estimations.
_WIENER_INIT_EPS = 0.01


def _wiener_sharpen(comp: np.ndarray, kernel: np.ndarray, eps: float) -> np.ndarray:
    """Regularized inverse filter of one gradient component."""
    h, w = comp.shape
    pad = kernel.shape[0]
    p = np.pad(comp, pad, mode="edge")
    otf = psf_to_otf(kernel, p.shape)
    filt = np.conj(otf) / (np.abs(otf) ** 2 + eps)
    out = np.fft.irfft2(np.fft.rfft2(p) * filt, s=p.shape)
    return out[pad : pad + h, pad : pad + w]


def _wiener_init_gradients(grad_i: GradientField, kernel: np.ndarray, eps: float = _WIENER_INIT_EPS) -> GradientField:
    """Initial latent gradients for a propagated start.

    A propagated estimation runs the finest level only, so there is no
    coarser-level result to inherit; inverse-filtering the observed
    gradients with the propagated kernel supplies an equally sharp start.
    """
    return GradientField(
        _wiener_sharpen(grad_i.gx, kernel, eps),
        _wiener_sharpen(grad_i.gy, kernel, eps),
    )


def estimate_kernel_multiscale(
    img: np.ndarray,
    cfg: EstimationConfig | None = None,
    init_kernel: np.ndarray | None = None,
) -> np.ndarray:
    """Blind kernel estimation, coarse-to-fine.

    With ``init_kernel=None`` (Dirac start) the full pyramid is traversed;
    a propagated initialization runs the finest level only. Returns the
    finest-level kernel, normalized and non-negative.
    """
    k, _ = estimate_kernel_multiscale_traced(img, cfg, init_kernel)
    return k


def estimate_kernel_multiscale_traced(
    img: np.ndarray,
    cfg: EstimationConfig | None = None,
    init_kernel: np.ndarray | None = None,
):
    """Like :func:`estimate_kernel_multiscale` but also returns diagnostics
    (per-level energy traces, pyramid reduction flags)."""
    cfg = cfg or EstimationConfig()
    gray = to_grayscale(img)
    lam_eff = cfg.lam / LAMBDA_SCALE

    too_small = min(gray.shape) < 64
    n_levels = cfg.pyramid_levels
    if too_small:
        n_levels = 1

    if init_kernel is None:
        pyramid = build_pyramid(gray, n_levels, cfg.scale_factor)
        levels = pyramid.levels
        reduced = pyramid.reduced
        n_levels = len(levels)
        level_indices = list(range(1, n_levels + 1))
        kernel = delta_kernel(kernel_side_for_level(cfg, 1, n_levels))
    else:
        # propagated start: skip the coarse levels entirely
        levels = [gray]
        reduced = False
        level_indices = [n_levels]
        side = cfg.kernel_size
        k0 = np.asarray(init_kernel, dtype=np.float64)
        kernel = _upscale_kernel(k0, side) if k0.shape[0] != side else normalize_kernel(np.maximum(k0, 0.0))

    trace = MultiscaleTrace(levels=[], reduced_pyramid=reduced, too_small=too_small)
    grad_x: GradientField | None = None

    for pos, (omega, level_img) in enumerate(zip(level_indices, levels)):
        grad_i = gradients(level_img)
        if grad_x is None:
            if init_kernel is None:
                grad_x = GradientField(grad_i.gx.copy(), grad_i.gy.copy())
            else:
                grad_x = _wiener_init_gradients(grad_i, kernel)
        state = EstimationState(
            grad=grad_x, kernel=kernel, eta=cfg.eta, nu=cfg.nu, level=omega
        )
        energies = [
            estimation_energy(grad_x, kernel, grad_i, lam_eff, state.eta, state.nu)
        ]
        for _ in range(cfg.outer_iters):
            kernel = kernel_update(grad_x, grad_i, state, cfg)
            grad_x = ista_gradient_update(grad_i, kernel, grad_x, cfg)
            state.grad = grad_x
            energies.append(
                estimation_energy(grad_x, kernel, grad_i, lam_eff, state.eta, state.nu)
            )
        state.energy_trace = energies
        trace.levels.append(
            LevelTrace(omega, level_img.shape, kernel.shape[0], energies)
        )
        if pos + 1 < len(levels):
            next_img = levels[pos + 1]
            next_side = kernel_side_for_level(cfg, level_indices[pos + 1], n_levels)
            kernel = _upscale_kernel(kernel, next_side)
            grad_x = _upscale_gradients(grad_x, next_img.shape)
    return kernel, trace
