"""Non-uniform estimation orchestration: seed tiles, BFS kernel propagation.

A few random interior tiles are estimated from scratch (full pyramid);
their kernels then spread to 4-neighbors as finest-level initializations,
wave by wave, so most tiles skip the coarse pyramid levels entirely.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DeblurError
from .blind_estimation import (
    EstimationConfig,
    delta_kernel,
    estimate_kernel_multiscale_traced,
    fit_gaussian,
)
from .image_core import TileGrid, split_tiles, to_grayscale


@dataclass
class TilePlan:
    """Per-tile estimation schedule and (once run) results."""

    grid: TileGrid
    seeds: list
    rng_seed: int
    source: list = field(default_factory=list)   # BFS predecessor per tile
    status: list = field(default_factory=list)   # pending | seed | propagated | done
    kernels: list = field(default_factory=list)
    fitted_sigma: list = field(default_factory=list)
    failed: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.grid.tiles)
        if not self.source:
            self.source = [None] * n
        if not self.status:
            self.status = ["seed" if i in set(self.seeds) else "pending" for i in range(n)]
        if not self.kernels:
            self.kernels = [None] * n
        if not self.fitted_sigma:
            self.fitted_sigma = [None] * n

    @property
    def complete(self):
        return all(k is not None for k in self.kernels)


def _interior_tiles(rows: int, cols: int) -> list:
    """Tiles off the boundary ring; every tile when the grid is too thin."""
    if rows <= 2 or cols <= 2:
        return list(range(rows * cols))
    return [r * cols + c for r in range(1, rows - 1) for c in range(1, cols - 1)]


def plan_tiles(img: np.ndarray, core: int, overlap: int, n_seeds: int, rng_seed: int) -> TilePlan:
    """Tile the image and pick seed tiles uniformly among interior tiles.

    Deterministic for a fixed ``rng_seed``; the seed count is clamped to
    the number of eligible tiles.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    grid = split_tiles(img, core, overlap)
    eligible = _interior_tiles(grid.rows, grid.cols)
    rng = np.random.default_rng(rng_seed)
    count = min(n_seeds, len(eligible))
    seeds = sorted(rng.choice(len(eligible), size=count, replace=False).tolist())
    seeds = [eligible[i] for i in seeds]
    return TilePlan(grid=grid, seeds=seeds, rng_seed=rng_seed)


def propagation_order(plan: TilePlan) -> list:
    """Multi-source BFS waves over the 4-connected tile grid.

    Wave 0 holds the seeds (no init source); tiles in later waves carry the
    lowest-index finalized neighbor as their initialization source.
    """
    if not plan.seeds:
        raise ValueError("plan has no seeds")
    rows, cols = plan.grid.rows, plan.grid.cols
    dist = {t: 0 for t in plan.seeds}
    waves = [[(t, None) for t in sorted(plan.seeds)]]
    frontier = set(plan.seeds)
    while len(dist) < rows * cols:
        nxt = {}
        for t in sorted(frontier):
            r, c = divmod(t, cols)
            for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= nr < rows and 0 <= nc < cols:
                    n = nr * cols + nc
                    if n not in dist and (n not in nxt or t < nxt[n]):
                        nxt[n] = t
        wave = []
        for n in sorted(nxt):
            dist[n] = len(waves)
            wave.append((n, nxt[n]))
        waves.append(wave)
        frontier = set(nxt)
    return waves


def estimate_all(
    img: np.ndarray,
    plan: TilePlan,
    cfg: EstimationConfig | None = None,
    threads: int = 1,
) -> TilePlan:
    """Run kernel estimation for every tile following the propagation waves.

    Seeds take the full-pyramid path; propagated tiles start from their
    source's kernel and touch only the finest level. Tiles in one wave run
    concurrently. A failing tile falls back to its initialization kernel
    and is flagged; the run continues.
    """
    cfg = cfg or EstimationConfig()
    gray = to_grayscale(np.asarray(img, dtype=np.float64))
    tiles = plan.grid.tiles

    def tile_gray(tile):
        return gray[
            tile.row0 - tile.m_top : tile.row0 + tile.core_h + tile.m_bottom,
            tile.col0 - tile.m_left : tile.col0 + tile.core_w + tile.m_right,
        ]

    def run_one(idx, source):
        init = None if source is None else plan.kernels[source]
        try:
            kernel, _ = estimate_kernel_multiscale_traced(
                tile_gray(tiles[idx]), cfg, init_kernel=init
            )
            return idx, kernel, False
        except DeblurError:
            fallback = init if init is not None else delta_kernel(cfg.kernel_size)
            return idx, np.array(fallback, copy=True), True

    for wave in propagation_order(plan):
        if threads > 1 and len(wave) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda job: run_one(*job), wave))
        else:
            results = [run_one(idx, src) for idx, src in wave]
        for (idx, src), (_, kernel, failed) in zip(wave, results):
            plan.kernels[idx] = kernel
            plan.fitted_sigma[idx] = fit_gaussian(kernel)
            plan.source[idx] = src
            plan.status[idx] = "done"
            if failed:
                plan.failed.append(idx)
    return plan


def plan_to_json(plan: TilePlan, image_path=None) -> str:
    """Debug sidecar: tile rectangles, seed flags, per-tile fitted widths."""
    doc = {
        "image": str(image_path) if image_path else None,
        "image_shape": list(plan.grid.image_shape),
        "tile_core": plan.grid.core,
        "overlap": plan.grid.overlap,
        "grid": [plan.grid.rows, plan.grid.cols],
        "rng_seed": plan.rng_seed,
        "n_seeds": len(plan.seeds),
        "tiles": [
            {
                "index": t.index,
                "row0": t.row0,
                "col0": t.col0,
                "core_h": t.core_h,
                "core_w": t.core_w,
                "seed": t.index in set(plan.seeds),
                "source": plan.source[t.index],
                "status": plan.status[t.index],
                "fitted_sigma": plan.fitted_sigma[t.index],
                "failed": t.index in set(plan.failed),
            }
            for t in plan.grid.tiles
        ],
    }
    return json.dumps(doc, indent=2)
