"""Window transform engine for ERP feature maps.

A small node grid ("template") is laid out around the equator / prime
meridian, where ERP distortion is minimal.  For every window of the image
the template is carried to the window center by a rotation of the sphere,
which preserves all inter-node great-circle distances, and the rotated node
positions are quantized to pixel indices.  Sampling a feature map through
the resulting index map replaces each regular window's neighborhood with a
spherically faithful one.

Because a yaw rotation is exactly a horizontal roll of the ERP image, maps
for a full ``nH x nW`` window tiling only need ``nH`` rotations (one column
of windows); every other column is an integer column shift.  The fast
builder exploits this and produces indices bit-identical to the per-window
brute-force builder.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .sphere import (
    ErpGrid,
    angles_to_unit,
    apply_rotation,
    rotation_to,
    unit_to_angles,
    wrap_lon,
)
from .tensor import FeatureMap, WindowSet


@dataclass(frozen=True)
class TemplateConfig:
    """Node-grid configuration: ``rows x cols`` nodes, every ``dilation``-th
    pixel, expressed against a specific ERP grid."""

    grid: ErpGrid
    rows: int = 4
    cols: int = 4
    dilation: int = 1

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"need at least one node per side, got {self.rows}x{self.cols}")
        if self.dilation < 1:
            raise ConfigError(f"dilation must be >= 1, got {self.dilation}")
        if (
            self.rows * self.dilation > self.grid.height
            or self.cols * self.dilation > self.grid.width
        ):
            raise ConfigError(
                f"{self.rows}x{self.cols} template at dilation {self.dilation} "
                f"exceeds the {self.grid.height}x{self.grid.width} grid"
            )

    @property
    def window_extent(self):
        """Window tile size in pixels, ``(rows_px, cols_px)``."""
        return self.rows * self.dilation, self.cols * self.dilation

    def layout(self):
        """Window tiling ``(nH, nW)``; the tile must divide the grid."""
        rows_px, cols_px = self.window_extent
        h, w = self.grid.height, self.grid.width
        if h % rows_px != 0 or w % cols_px != 0:
            raise ConfigError(
                f"window extent {rows_px}x{cols_px} does not divide {h}x{w}"
            )
        return h // rows_px, w // cols_px


@dataclass(frozen=True)
class Template:
    """Equator node grid; angles plus cached unit vectors."""

    config: TemplateConfig
    lat: np.ndarray
    lon: np.ndarray
    xyz: np.ndarray

    def __post_init__(self):
        for name in ("lat", "lon", "xyz"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class SampleGrid:
    """Continuous transformed node coordinates for one window."""

    lat: np.ndarray
    lon: np.ndarray


def build_template(cfg: TemplateConfig) -> Template:
    """Lay out the node grid around (0, 0) with one-pixel angular spacing.

    Node row 0 is the northernmost row and node column 0 the westernmost,
    matching image-row/column order, so an equator window's transformed
    nodes quantize back onto the window's own pixels in reading order.
    """
    d = cfg.dilation
    row_off = ((cfg.rows - 1) / 2.0 - np.arange(cfg.rows)) * (cfg.grid.lat_step * d)
    col_off = (np.arange(cfg.cols) - (cfg.cols - 1) / 2.0) * (cfg.grid.lon_step * d)
    lat = np.broadcast_to(row_off[:, None], (cfg.rows, cfg.cols)).copy()
    lon = np.broadcast_to(col_off[None, :], (cfg.rows, cfg.cols)).copy()
    return Template(config=cfg, lat=lat, lon=lon, xyz=angles_to_unit(lat, lon))


def window_center(cfg: TemplateConfig, row: int, col: int):
    """Angle of the continuous pixel center of window ``(row, col)``."""
    rows_px, cols_px = cfg.window_extent
    u = row * rows_px + (rows_px - 1) / 2.0
    v = col * cols_px + (cols_px - 1) / 2.0
    return cfg.grid.pixel_to_angle(u, v)


def transform_window(template: Template, center_lat: float, center_lon: float) -> SampleGrid:
    """Rotate the template to ``center`` and return continuous coordinates.

    All pairwise great-circle distances of the template are preserved
    exactly (to float64 rounding), whatever the target latitude.
    """
    rot = rotation_to(center_lat, center_lon)
    mr, mc = template.lat.shape
    rotated = apply_rotation(rot, template.xyz.reshape(mr * mc, 3))
    lat, lon = unit_to_angles(rotated)
    return SampleGrid(lat=lat.reshape(mr, mc), lon=lon.reshape(mr, mc))


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest with .5 ties away from zero (deterministic,
    shift-commuting — ``np.round`` would round ties to even)."""
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def quantize_grid(grid: SampleGrid, erp: ErpGrid):
    """Nearest-pixel indices for a sample grid: rows clamped at the poles,
    columns wrapped modulo the image width."""
    u, v = erp.angle_to_pixel(grid.lat, grid.lon)
    rows = np.clip(round_half_away(u), 0, erp.height - 1)
    cols = np.mod(round_half_away(v), erp.width)
    return rows, cols


@dataclass(frozen=True)
class IndexMap:
    """Per-window gather indices realizing the transform as a memory gather.

    ``indices`` has shape ``(nH, nW, rows, cols)`` and holds flat uint32
    pixel indices into the generating grid.  ``lat``/``lon`` optionally keep
    the continuous pre-quantization coordinates (required by bilinear
    sampling).  Instances are immutable and safe to share across threads.
    """

    config: TemplateConfig
    indices: np.ndarray
    lat: np.ndarray | None = None
    lon: np.ndarray | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.uint32)
        nh, nw = self.config.layout()
        expect = (nh, nw, self.config.rows, self.config.cols)
        if idx.shape != expect:
            raise ShapeError(f"indices shape {idx.shape}, expected {expect}")
        if idx.size and int(idx.max()) >= self.grid.height * self.grid.width:
            raise ShapeError("index map refers to pixels outside its grid")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        for name in ("lat", "lon"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != expect:
                raise ShapeError(f"{name} sidecar shape {arr.shape}, expected {expect}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if (self.lat is None) != (self.lon is None):
            raise ShapeError("lat/lon sidecars must be stored together")

    @property
    def grid(self) -> ErpGrid:
        return self.config.grid

    @property
    def layout(self):
        return self.indices.shape[0], self.indices.shape[1]

    @property
    def has_coords(self) -> bool:
        return self.lat is not None


def _flat(rows: np.ndarray, cols: np.ndarray, width: int) -> np.ndarray:
    return (rows * width + cols).astype(np.uint32)


def build_index_map_naive(cfg: TemplateConfig, include_coords: bool = True) -> IndexMap:
    """Brute-force builder: one full rotation per window (``nH * nW`` total)."""
    nh, nw = cfg.layout()
    template = build_template(cfg)
    w = cfg.grid.width
    indices = np.empty((nh, nw, cfg.rows, cfg.cols), dtype=np.uint32)
    lat = np.empty_like(indices, dtype=np.float64) if include_coords else None
    lon = np.empty_like(indices, dtype=np.float64) if include_coords else None
    for r in range(nh):
        for c in range(nw):
            grid = transform_window(template, *window_center(cfg, r, c))
            rows, cols = quantize_grid(grid, cfg.grid)
            indices[r, c] = _flat(rows, cols, w)
            if include_coords:
                lat[r, c] = grid.lat
                lon[r, c] = grid.lon
    return IndexMap(config=cfg, indices=indices, lat=lat, lon=lon)


def build_index_map_fast(
    cfg: TemplateConfig, include_coords: bool = True, threads: int = 1
) -> IndexMap:
    """Decomposed builder: rotations for the ``nH`` windows of column 0 only,
    every other column derived by an integer column shift modulo the width.

    The shift equals the window pixel width, so quantization commutes with
    it and the indices are bit-identical to :func:`build_index_map_naive`
    for any tiling with an even window-row count.  (An odd count centers
    one row exactly on the equator; with an even dilation that row's nodes
    land exactly on half-pixel rounding ties, where the brute-force path's
    last-ulp noise is not reproducible.)  Worker count never changes the
    output (pure per-row computation, deterministic assembly).
    """
    nh, nw = cfg.layout()
    template = build_template(cfg)
    h, w = cfg.grid.height, cfg.grid.width
    cols_px = cfg.window_extent[1]

    ref_rows = np.empty((nh, cfg.rows, cfg.cols), dtype=np.int64)
    ref_cols = np.empty_like(ref_rows)
    ref_lat = np.empty((nh, cfg.rows, cfg.cols), dtype=np.float64)
    ref_lon = np.empty_like(ref_lat)

    def reference(r: int):
        grid = transform_window(template, *window_center(cfg, r, 0))
        ref_rows[r], ref_cols[r] = quantize_grid(grid, cfg.grid)
        ref_lat[r] = grid.lat
        ref_lon[r] = grid.lon

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(reference, range(nh)))
    else:
        for r in range(nh):
            reference(r)

    shifts = np.arange(nw, dtype=np.int64) * cols_px
    cols = np.mod(ref_cols[:, None] + shifts[None, :, None, None], w)
    rows = np.broadcast_to(ref_rows[:, None], cols.shape)
    indices = _flat(rows, cols, w)

    lat = lon = None
    if include_coords:
        lat = np.broadcast_to(ref_lat[:, None], indices.shape).copy()
        lon = wrap_lon(ref_lon[:, None] + shifts[None, :, None, None] * cfg.grid.lon_step)
    return IndexMap(config=cfg, indices=indices, lat=lat, lon=lon)


def identity_index_map(cfg: TemplateConfig, include_coords: bool = True) -> IndexMap:
    """Gather map of the plain window partition (no spherical transform);
    node ``(i, j)`` of window ``(r, c)`` points at its own lattice pixel."""
    nh, nw = cfg.layout()
    rows_px, cols_px = cfg.window_extent
    d = cfg.dilation
    r0 = np.arange(nh, dtype=np.int64)[:, None, None, None] * rows_px
    c0 = np.arange(nw, dtype=np.int64)[None, :, None, None] * cols_px
    ni = np.arange(cfg.rows, dtype=np.int64)[None, None, :, None] * d
    nj = np.arange(cfg.cols, dtype=np.int64)[None, None, None, :] * d
    rows = np.broadcast_to(r0 + ni, (nh, nw, cfg.rows, cfg.cols))
    cols = np.broadcast_to(c0 + nj, (nh, nw, cfg.rows, cfg.cols))
    indices = _flat(rows, cols, cfg.grid.width)
    lat = lon = None
    if include_coords:
        lat, lon = cfg.grid.pixel_to_angle(
            rows.astype(np.float64), cols.astype(np.float64)
        )
    return IndexMap(config=cfg, indices=indices, lat=lat, lon=lon)


def roll_lon(index_map: IndexMap, pixels: int) -> IndexMap:
    """Shift every stored column index by ``pixels`` modulo the width;
    rows are untouched.  Coordinate sidecars shift in longitude to match."""
    w = index_map.grid.width
    rows = index_map.indices.astype(np.int64) // w
    cols = np.mod(index_map.indices.astype(np.int64) % w + pixels, w)
    lat = lon = None
    if index_map.has_coords:
        lat = index_map.lat
        lon = wrap_lon(index_map.lon + pixels * index_map.grid.lon_step)
    return IndexMap(
        config=index_map.config, indices=_flat(rows, cols, w), lat=lat, lon=lon
    )


def sample(f: FeatureMap, index_map: IndexMap, mode: str = "nearest") -> WindowSet:
    """Gather a feature map through an index map into per-window node values.

    ``nearest`` reads the stored indices directly.  ``bilinear`` re-derives
    continuous pixel positions from the coordinate sidecar and blends the
    four neighbors, wrapping horizontally across the seam and clamping rows
    at the poles; it requires the map to carry coordinates.
    """
    erp = index_map.grid
    if (f.height, f.width) != (erp.height, erp.width):
        raise ShapeError(
            f"feature map {f.height}x{f.width} does not match index map grid "
            f"{erp.height}x{erp.width}"
        )
    if mode == "nearest":
        flat = f.values.reshape(-1, f.channels)
        return WindowSet(flat[index_map.indices])
    if mode != "bilinear":
        raise ConfigError(f"unknown sampling mode {mode!r}")
    if not index_map.has_coords:
        raise ConfigError(
            "bilinear sampling needs an index map built with coordinates"
        )
    u, v = erp.angle_to_pixel(index_map.lat, index_map.lon)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    fu = (u - u0).astype(np.float32)
    fv = (v - v0).astype(np.float32)
    r0 = np.clip(u0, 0, erp.height - 1)
    r1 = np.clip(u0 + 1, 0, erp.height - 1)
    c0 = np.mod(v0, erp.width)
    c1 = np.mod(v0 + 1, erp.width)
    flat = f.values.reshape(-1, f.channels)
    w = erp.width
    tl = flat[r0 * w + c0]
    tr = flat[r0 * w + c1]
    bl = flat[r1 * w + c0]
    br = flat[r1 * w + c1]
    fu = fu[..., None]
    fv = fv[..., None]
    # lerp form keeps constant inputs bit-exact
    top = tl + fv * (tr - tl)
    bottom = bl + fv * (br - bl)
    return WindowSet(top + fu * (bottom - top))
