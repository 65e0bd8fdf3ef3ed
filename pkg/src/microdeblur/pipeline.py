"""End-to-end enhancement pipeline and its run configuration."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .blind_estimation import EstimationConfig
from .nonblind_deconv import DeconvConfig, enhance_image
from .tile_propagation import TilePlan, estimate_all, plan_tiles

THREADS_ENV_VAR = "DEBLUR_THREADS"


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs; defaults are the published set.

    ``n_seeds`` and ``threads`` default to the hardware parallelism when
    left as None ("auto").
    """

    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    deconv: DeconvConfig = field(default_factory=DeconvConfig)
    tile_size: int = 200
    overlap: int = 20
    n_seeds: int | None = None
    rng_seed: int = 0
    threads: int | None = None
    verbose: bool = False

    def __post_init__(self):
        if self.tile_size < 64:
            raise ValueError("tile_size must be at least 64")
        if self.overlap < 0:
            raise ValueError("overlap must be non-negative")
        if self.n_seeds is not None and self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be >= 1")

    def resolved_threads(self) -> int:
        if self.threads is not None:
            return self.threads
        env = os.environ.get(THREADS_ENV_VAR)
        if env and env.isdigit() and int(env) >= 1:
            return int(env)
        return os.cpu_count() or 1

    def resolved_seeds(self) -> int:
        if self.n_seeds is not None:
            return self.n_seeds
        return os.cpu_count() or 1


@dataclass
class EnhanceResult:
    image: np.ndarray
    plan: TilePlan
    stage_seconds: dict
    failed_deconv: list


def enhance(img: np.ndarray, cfg: RunConfig | None = None) -> EnhanceResult:
    """Full non-uniform deblur: plan tiles, estimate kernels, deconvolve."""
    cfg = cfg or RunConfig()
    threads = cfg.resolved_threads()
    timings = {}

    t0 = time.perf_counter()
    plan = plan_tiles(img, cfg.tile_size, cfg.overlap, cfg.resolved_seeds(), cfg.rng_seed)
    timings["plan"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    estimate_all(img, plan, cfg.estimation, threads=threads)
    timings["estimate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    out, failed = enhance_image(img, plan, cfg.deconv, threads=threads)
    timings["deconvolve"] = time.perf_counter() - t0

    return EnhanceResult(out, plan, timings, failed)


# --- flat key=value config surface (CLI flags, config files, dump-config) ---

def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, "g")
    if isinstance(value, (tuple, list)):
        return ",".join(format(v, "g") for v in value)
    return str(value)


def config_items(cfg: RunConfig) -> list:
    """The flat view of a run configuration, in a stable order."""
    e, d = cfg.estimation, cfg.deconv
    return [
        ("tile_size", cfg.tile_size),
        ("overlap", cfg.overlap),
        ("seeds", cfg.n_seeds),
        ("rng_seed", cfg.rng_seed),
        ("threads", cfg.threads),
        ("lambda", e.lam),
        ("eta", e.eta),
        ("nu", e.nu),
        ("eta_decay", e.eta_decay),
        ("nu_decay", e.nu_decay),
        ("kernel_size", e.kernel_size),
        ("outer_iters", e.outer_iters),
        ("inner_iters", e.inner_iters),
        ("ista_step", e.ista_step),
        ("sigma_search_steps", e.sigma_search_steps),
        ("pyramid_levels", e.pyramid_levels),
        ("scale_factor", e.scale_factor),
        ("noise_sigma", e.noise_sigma),
        ("beta", d.beta),
        ("alpha", d.alpha),
        ("hq_weights", d.hq_weights),
        ("inner_tol", d.inner_tol),
        ("verbose", cfg.verbose),
    ]


def dump_config_text(cfg: RunConfig | None = None) -> str:
    cfg = cfg or RunConfig()
    return "\n".join(f"{k}={_fmt(v)}" for k, v in config_items(cfg)) + "\n"


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if raw == "auto":
        return None
    if key in ("tile_size", "overlap", "rng_seed", "kernel_size", "outer_iters",
               "inner_iters", "pyramid_levels", "seeds", "threads"):
        return int(raw)
    if key in ("sigma_search_steps", "hq_weights"):
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if key == "verbose":
        return raw.lower() in ("1", "true", "yes")
    return float(raw)


def parse_config_file(path) -> dict:
    """Flat key=value file -> override dict; '#' starts a comment."""
    overrides = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            overrides[key] = _parse_value(key, raw)
    return overrides


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Produce a new RunConfig with the flat overrides applied."""
    est = cfg.estimation
    dec = cfg.deconv
    est_map = {
        "lambda": "lam", "eta": "eta", "nu": "nu", "eta_decay": "eta_decay",
        "nu_decay": "nu_decay", "kernel_size": "kernel_size",
        "outer_iters": "outer_iters", "inner_iters": "inner_iters",
        "ista_step": "ista_step", "sigma_search_steps": "sigma_search_steps",
        "pyramid_levels": "pyramid_levels", "scale_factor": "scale_factor",
        "noise_sigma": "noise_sigma",
    }
    dec_map = {"beta": "beta", "alpha": "alpha", "hq_weights": "hq_weights",
               "inner_tol": "inner_tol"}
    run_map = {"tile_size": "tile_size", "overlap": "overlap", "seeds": "n_seeds",
               "rng_seed": "rng_seed", "threads": "threads", "verbose": "verbose"}

    est_kw, dec_kw, run_kw = {}, {}, {}
    for key, value in overrides.items():
        if key in est_map:
            est_kw[est_map[key]] = value
        elif key in dec_map:
            dec_kw[dec_map[key]] = value
        elif key in run_map:
            run_kw[run_map[key]] = value
        else:
            raise ValueError(f"unknown configuration key {key!r}")
    if est_kw:
        est = replace(est, **est_kw)
    if dec_kw:
        dec = replace(dec, **dec_kw)
    return replace(cfg, estimation=est, deconv=dec, **run_kw)
