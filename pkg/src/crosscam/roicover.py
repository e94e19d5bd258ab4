"""Tile partitioning, object coverage, minimum set cover and RoI masks.

The offline phase aggregates, per camera, which tiles each globally
identified object ever touches, selects a tile set, merges adjacent tiles
into rectangles, and the online phase blacks out everything else.

Cover modes: ``full`` keeps every tile any object touches (intact RoIs,
the pipeline default), ``min-exact`` and ``min-greedy`` solve the
one-tile-per-object set cover literally.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from crosscam.errors import ConfigError, InfeasibleCoverError, ShapeError
from crosscam.scenario import Frame

COVER_MODES = ("full", "min-exact", "min-greedy")


@dataclass(frozen=True)
class TileGrid:
    width: int
    height: int
    rows: int = 4
    cols: int = 6

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("frame dimensions must be >= 1")
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("grid must have >= 1 row and column")
        # ceiling-division tiles must leave a non-empty last row/col
        if (self.cols - 1) * self.tile_width >= self.width:
            raise ConfigError(f"{self.cols} columns over width {self.width} leaves empty tiles")
        if (self.rows - 1) * self.tile_height >= self.height:
            raise ConfigError(f"{self.rows} rows over height {self.height} leaves empty tiles")

    @property
    def tile_width(self) -> int:
        return -(-self.width // self.cols)

    @property
    def tile_height(self) -> int:
        return -(-self.height // self.rows)

    @property
    def num_tiles(self) -> int:
        return self.rows * self.cols

    def tile_rect(self, index: int):
        """Half-open pixel rectangle of a row-major tile index."""
        if not 0 <= index < self.num_tiles:
            raise IndexError(f"tile index {index} outside grid of {self.num_tiles}")
        r, c = divmod(index, self.cols)
        x0 = c * self.tile_width
        y0 = r * self.tile_height
        return (x0, y0, min(x0 + self.tile_width, self.width), min(y0 + self.tile_height, self.height))

    def tiles_for_bbox(self, bbox):
        """Row-major indices of tiles with positive-area bbox overlap."""
        x0, y0, x1, y1 = bbox
        x0 = max(float(x0), 0.0)
        y0 = max(float(y0), 0.0)
        x1 = min(float(x1), float(self.width))
        y1 = min(float(y1), float(self.height))
        if x1 <= x0 or y1 <= y0:
            return []
        c0 = int(x0 // self.tile_width)
        c1 = min(int(np.ceil(x1 / self.tile_width)), self.cols)
        r0 = int(y0 // self.tile_height)
        r1 = min(int(np.ceil(y1 / self.tile_height)), self.rows)
        return [r * self.cols + c for r in range(r0, r1) for c in range(c0, c1)]


@dataclass
class CoverageMatrix:
    objects: list  # appearance keys, e.g. (global_id, camera_id)
    grid: TileGrid
    bits: np.ndarray  # bool, shape (len(objects), grid.num_tiles)


@dataclass
class RoiMask:
    camera_id: int
    grid: TileGrid
    selected_tiles: tuple  # sorted tile indices
    merged_rects: tuple  # disjoint half-open pixel rectangles

    def to_dict(self):
        return {
            "camera_id": self.camera_id,
            "width": self.grid.width,
            "height": self.grid.height,
            "rows": self.grid.rows,
            "cols": self.grid.cols,
            "selected_tiles": list(self.selected_tiles),
            "merged_rects": [list(r) for r in self.merged_rects],
        }

    @classmethod
    def from_dict(cls, doc):
        grid = TileGrid(
            width=doc["width"], height=doc["height"], rows=doc["rows"], cols=doc["cols"]
        )
        return cls(
            camera_id=doc["camera_id"],
            grid=grid,
            selected_tiles=tuple(doc["selected_tiles"]),
            merged_rects=tuple(tuple(r) for r in doc["merged_rects"]),
        )


def partition_tiles(width: int, height: int, rows: int = 4, cols: int = 6) -> TileGrid:
    """Exact tiling with ceiling-division tile sizes; last row/col clipped."""
    return TileGrid(width=width, height=height, rows=rows, cols=cols)


def build_coverage(labeled_bboxes, grid: TileGrid) -> CoverageMatrix:
    """Object x tile incidence over a window of ID-labeled boxes.

    ``labeled_bboxes`` is an iterable of (object_key, bbox); a bit is set
    iff the tile intersects some box of that object with positive area.
    """
    keys = []
    key_rows = {}
    rows = []
    for key, bbox in labeled_bboxes:
        if key not in key_rows:
            key_rows[key] = len(keys)
            keys.append(key)
            rows.append(np.zeros(grid.num_tiles, dtype=bool))
        for tile in grid.tiles_for_bbox(bbox):
            rows[key_rows[key]][tile] = True
    bits = np.stack(rows) if rows else np.zeros((0, grid.num_tiles), dtype=bool)
    return CoverageMatrix(objects=keys, grid=grid, bits=bits)


def _object_masks(coverage: CoverageMatrix):
    """Per-tile object bitmask plus per-object covering tile lists."""
    m, n = coverage.bits.shape
    for o in range(m):
        if not coverage.bits[o].any():
            raise InfeasibleCoverError(coverage.objects[o])
    tile_masks = [0] * n
    object_tiles = [[] for _ in range(m)]
    for o in range(m):
        for tau in np.flatnonzero(coverage.bits[o]):
            tile_masks[tau] |= 1 << o
            object_tiles[o].append(int(tau))
    return tile_masks, object_tiles


def solve_cover_greedy(coverage: CoverageMatrix):
    """Classic greedy cover: most uncovered objects first, lowest index on ties."""
    m, n = coverage.bits.shape
    if m == 0:
        return []
    tile_masks, _ = _object_masks(coverage)
    full = (1 << m) - 1
    covered = 0
    chosen = []
    while covered != full:
        best_tile = -1
        best_gain = 0
        for tau in range(n):
            gain = bin(tile_masks[tau] & ~covered).count("1")
            if gain > best_gain:
                best_gain = gain
                best_tile = tau
        chosen.append(best_tile)
        covered |= tile_masks[best_tile]
    return sorted(chosen)


def solve_cover_exact(coverage: CoverageMatrix):
    """Minimum-cardinality cover by branch and bound.

    Branches on an uncovered object with the fewest remaining covering
    tiles; bounds with ceil(uncovered / max tile coverage) against the
    greedy incumbent. Ties between minimum covers resolve to the
    lexicographically smallest sorted tile-index set.
    """
    m, n = coverage.bits.shape
    if m == 0:
        return []
    tile_masks, object_tiles = _object_masks(coverage)
    full = (1 << m) - 1
    max_cover = max(bin(mask).count("1") for mask in tile_masks)

    best = sorted(solve_cover_greedy(coverage))
    best_size = len(best)

    def uncovered_objects(covered: int):
        remaining = full & ~covered
        objs = []
        while remaining:
            low = remaining & -remaining
            objs.append(low.bit_length() - 1)
            remaining ^= low
        return objs

    def dfs(chosen, covered):
        nonlocal best, best_size
        if covered == full:
            cand = sorted(chosen)
            if len(cand) < best_size or (len(cand) == best_size and cand < best):
                best = cand
                best_size = len(cand)
            return
        remaining = uncovered_objects(covered)
        bound = len(chosen) + -(-len(remaining) // max_cover)
        if bound > best_size:
            return
        # branch on the most constrained object for a small tree
        branch_obj = min(
            remaining, key=lambda o: (sum(1 for t in object_tiles[o] if t not in chosen), o)
        )
        for tau in object_tiles[branch_obj]:
            if tau in chosen:
                continue
            chosen.append(tau)
            dfs(chosen, covered | tile_masks[tau])
            chosen.pop()

    dfs([], 0)
    return best


def full_cover_tiles(coverage: CoverageMatrix):
    """Every tile touched by any object (keeps RoIs intact)."""
    if len(coverage.objects) == 0:
        return []
    for o, row in enumerate(coverage.bits):
        if not row.any():
            raise InfeasibleCoverError(coverage.objects[o])
    return [int(t) for t in np.flatnonzero(coverage.bits.any(axis=0))]


def merge_tiles(selected, grid: TileGrid):
    """Merge selected tiles into disjoint rectangles covering the same pixels.

    Horizontal runs per tile row are merged first, then vertically
    adjacent runs with identical column extents.
    """
    selected = set(selected)
    for tau in selected:
        if not 0 <= tau < grid.num_tiles:
            raise ConfigError(f"tile index {tau} outside grid")
    rects = []
    active = {}  # (c0, c1) -> y0 of the growing rect
    for r in range(grid.rows):
        runs = []
        c = 0
        while c < grid.cols:
            if r * grid.cols + c in selected:
                c0 = c
                while c < grid.cols and r * grid.cols + c in selected:
                    c += 1
                runs.append((c0, c))
            else:
                c += 1
        row_y0 = r * grid.tile_height
        row_y1 = min(row_y0 + grid.tile_height, grid.height)
        next_active = {}
        for c0, c1 in runs:
            if (c0, c1) in active:
                next_active[(c0, c1)] = active.pop((c0, c1))
            else:
                next_active[(c0, c1)] = row_y0
        for (c0, c1), y0 in active.items():
            rects.append((c0 * grid.tile_width, y0, min(c1 * grid.tile_width, grid.width), row_y0))
        active = {key: y0 for key, y0 in next_active.items()}
        if r == grid.rows - 1:
            for (c0, c1), y0 in active.items():
                rects.append(
                    (c0 * grid.tile_width, y0, min(c1 * grid.tile_width, grid.width), row_y1)
                )
    return sorted(rects, key=lambda rc: (rc[1], rc[0]))


def make_mask(camera_id: int, labeled_bboxes, grid: TileGrid, mode: str = "full") -> RoiMask:
    """Run the offline tile pipeline for one camera."""
    if mode not in COVER_MODES:
        raise ConfigError(f"unknown cover mode {mode!r}")
    coverage = build_coverage(labeled_bboxes, grid)
    if mode == "full":
        selected = full_cover_tiles(coverage)
    elif mode == "min-exact":
        selected = solve_cover_exact(coverage)
    else:
        selected = solve_cover_greedy(coverage)
    return RoiMask(
        camera_id=camera_id,
        grid=grid,
        selected_tiles=tuple(sorted(selected)),
        merged_rects=tuple(merge_tiles(selected, grid)),
    )


def apply_mask(frame: Frame, mask: RoiMask) -> Frame:
    """Copy pixels inside the mask rectangles, zero everything else."""
    h, w = frame.pixels.shape
    if (w, h) != (mask.grid.width, mask.grid.height):
        raise ShapeError(
            f"frame {w}x{h} does not match mask grid {mask.grid.width}x{mask.grid.height}"
        )
    out = np.zeros_like(frame.pixels)
    for x0, y0, x1, y1 in mask.merged_rects:
        out[y0:y1, x0:x1] = frame.pixels[y0:y1, x0:x1]
    return Frame(camera_id=frame.camera_id, t=frame.t, pixels=out)


def write_masks(masks, path) -> None:
    with open(path, "w") as fh:
        json.dump({"masks": [m.to_dict() for m in masks]}, fh, indent=2)
        fh.write("\n")


def read_masks(path):
    with open(path) as fh:
        doc = json.load(fh)
    return [RoiMask.from_dict(d) for d in doc["masks"]]
