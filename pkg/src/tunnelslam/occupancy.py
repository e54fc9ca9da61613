"""Per-key-scan 2D occupancy grids (bird's-eye views) and binary map images.

A grid is 250x250 cells at 0.02 m/cell (a 5 m x 5 m window), centered on
the key-scan origin. Beliefs are deterministic: 0.9 for cells holding a
height-filtered return, 0.1 for cells traversed by a ray, 0.5 untouched.
Binarization thresholds at 0.5 inclusive, so untouched cells binarize to 1
and only observed free space goes to 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import PointCloud

GRID_SIZE = 250
RESOLUTION = 0.02                      # meters per cell
HALF_EXTENT = 0.5 * GRID_SIZE * RESOLUTION

BELIEF_HIT = 0.9
BELIEF_FREE = 0.1
BELIEF_UNKNOWN = 0.5


class EmptySlice(RuntimeError):
    """No point survived the height filter."""


@dataclass(frozen=True)
class OccupancyGrid:
    beliefs: np.ndarray                 # (250, 250), [0, 1]; index [ix, iy]
    resolution: float = RESOLUTION
    origin: tuple[float, float] = (-HALF_EXTENT, -HALF_EXTENT)  # scan-frame coords of cell (0,0) corner

    def __post_init__(self):
        b = np.asarray(self.beliefs, dtype=np.float64)
        if b.shape != (GRID_SIZE, GRID_SIZE):
            raise ValueError(f"grid must be {GRID_SIZE}x{GRID_SIZE}, got {b.shape}")
        if b.min() < 0.0 or b.max() > 1.0:
            raise ValueError("beliefs must lie in [0, 1]")
        b.setflags(write=False)
        object.__setattr__(self, "beliefs", b)

    def unknown_mask(self) -> np.ndarray:
        """Debug channel: cells never touched by a return or a ray."""
        return self.beliefs == BELIEF_UNKNOWN


@dataclass(frozen=True)
class MapImage:
    bits: np.ndarray                    # (250, 250) uint8 in {0, 1}

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.uint8)
        if b.shape != (GRID_SIZE, GRID_SIZE):
            raise ValueError(f"image must be {GRID_SIZE}x{GRID_SIZE}, got {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)


def _cell_indices(xy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ix = np.floor((xy[:, 0] + HALF_EXTENT) / RESOLUTION).astype(np.int64)
    iy = np.floor((xy[:, 1] + HALF_EXTENT) / RESOLUTION).astype(np.int64)
    ok = (ix >= 0) & (ix < GRID_SIZE) & (iy >= 0) & (iy < GRID_SIZE)
    return ix, iy, ok


def build_grid(scan: PointCloud, robot_height: float = 0.8,
               ground_tolerance: float = 0.15) -> OccupancyGrid:
    """Project the height-band slice of a key-scan onto the XY plane.

    Keeps points with z in (ground_tolerance, robot_height]; cells holding a
    return become occupied, cells crossed by the ray toward a return become
    free (rays are clipped to the 5 m window). Raises EmptySlice when the
    band is empty.
    """
    pts = scan.points
    band = (pts[:, 2] > ground_tolerance) & (pts[:, 2] <= robot_height)
    sliced = pts[band][:, :2]
    if sliced.shape[0] == 0:
        raise EmptySlice("no return between ground_tolerance and robot_height")

    beliefs = np.full((GRID_SIZE, GRID_SIZE), BELIEF_UNKNOWN)

    # free space: the beam fan toward the band returns, rasterized as a
    # per-cell visibility test. Each azimuth bin holding returns clears
    # cells out to one cell short of its median return distance (the median
    # keeps the boundary steady at sub-cell level under range noise); bins
    # without any nearby return stay unknown.
    n_bins = 360
    lengths = np.linalg.norm(sliced, axis=1)
    azim = np.arctan2(sliced[:, 1], sliced[:, 0])
    bins = np.minimum(((azim + np.pi) / (2 * np.pi) * n_bins).astype(int), n_bins - 1)
    order = np.argsort(bins, kind="stable")
    free_range = np.full(n_bins, np.inf)
    filled, starts = np.unique(bins[order], return_index=True)
    for b, lo, hi in zip(filled, starts, np.append(starts[1:], len(order))):
        free_range[b] = np.median(lengths[order[lo:hi]])
    # beam continuity: a bin the band skipped borrows its neighbors' range
    empty = ~np.isfinite(free_range)
    neighbor_min = np.minimum(np.roll(free_range, 1), np.roll(free_range, -1))
    free_range[empty] = neighbor_min[empty]

    centers = (np.arange(GRID_SIZE) + 0.5) * RESOLUTION - HALF_EXTENT
    cx, cy = np.meshgrid(centers, centers, indexing="ij")
    cell_r = np.hypot(cx, cy)
    cell_bins = np.minimum(((np.arctan2(cy, cx) + np.pi) / (2 * np.pi) * n_bins).astype(int),
                           n_bins - 1)
    visible = np.isfinite(free_range[cell_bins]) & (cell_r < free_range[cell_bins] - RESOLUTION)
    beliefs[visible] = BELIEF_FREE

    ix, iy, ok = _cell_indices(sliced)
    beliefs[ix[ok], iy[ok]] = BELIEF_HIT
    return OccupancyGrid(beliefs)


def binarize(grid: OccupancyGrid) -> MapImage:
    """Per-cell threshold: 1 where belief >= 0.5, else 0."""
    return MapImage((grid.beliefs >= 0.5).astype(np.uint8))


def occupied_cells(grid: OccupancyGrid) -> np.ndarray:
    """(K, 2) indices of cells with belief above the occupancy threshold."""
    return np.argwhere(grid.beliefs > 0.5)


def save_pgm(image: MapImage, path) -> None:
    """Binary PGM (P5) with bit 1 -> 255, for visual debugging."""
    data = (image.bits.T[::-1] * np.uint8(255))  # rows top-down along +y
    header = f"P5\n{GRID_SIZE} {GRID_SIZE}\n255\n".encode()
    Path(path).write_bytes(header + data.tobytes())
