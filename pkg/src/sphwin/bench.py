"""Timing studies: decomposed vs brute-force map construction, per-pixel
tangent-grid generation, and a cube-face resampling stand-in.

Wall time uses the monotonic high-resolution clock; the median of the
repetitions is the headline statistic (min is reported alongside).  Every
timed transform path is validated for correctness before it is timed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError
from .sphere import ErpGrid, unit_to_angles
from .transform import (
    TemplateConfig,
    build_index_map_fast,
    build_index_map_naive,
    round_half_away,
)


@dataclass(frozen=True)
class BenchCase:
    name: str
    height: int
    width: int
    window: int  # window or kernel size, whichever the case varies
    reps: int
    times: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) != self.reps or any(t <= 0 for t in times):
            raise ConfigError(f"case {self.name}: invalid timing list")
        object.__setattr__(self, "times", times)

    @property
    def median(self) -> float:
        return float(np.median(self.times))

    @property
    def best(self) -> float:
        return min(self.times)


@dataclass
class BenchReport:
    threads: int = 1
    cases: list = field(default_factory=list)

    def add(self, case: BenchCase):
        self.cases.append(case)

    def case(self, name: str) -> BenchCase:
        for c in self.cases:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_csv(self) -> str:
        lines = [f"# threads={self.threads}"]
        lines.append("name,height,width,window,reps,median_s,min_s,times")
        for c in self.cases:
            times = ";".join(repr(t) for t in c.times)
            lines.append(
                f"{c.name},{c.height},{c.width},{c.window},{c.reps},"
                f"{c.median!r},{c.best!r},{times}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "BenchReport":
        threads = 1
        cases = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("name,"):
                continue
            if line.startswith("#"):
                if "threads=" in line:
                    threads = int(line.split("threads=")[1])
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise FormatError(f"malformed bench CSV row: {line!r}")
            times = tuple(float(t) for t in parts[7].split(";"))
            cases.append(
                BenchCase(
                    name=parts[0],
                    height=int(parts[1]),
                    width=int(parts[2]),
                    window=int(parts[3]),
                    reps=int(parts[4]),
                    times=times,
                )
            )
        report = cls(threads=threads)
        report.cases = cases
        return report

    def to_key_values(self) -> str:
        lines = [f"threads={self.threads}"]
        for c in self.cases:
            lines.append(f"{c.name}.median_s={c.median!r}")
            lines.append(f"{c.name}.min_s={c.best!r}")
            lines.append(f"{c.name}.reps={c.reps}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        rows = [
            f"{'case':<28} {'size':>10} {'win':>4} {'median':>10} {'min':>10}"
        ]
        for c in self.cases:
            rows.append(
                f"{c.name:<28} {f'{c.height}x{c.width}':>10} {c.window:>4} "
                f"{c.median:>10.4f} {c.best:>10.4f}"
            )
        return "\n".join(rows)


def _timed(fn, reps: int) -> tuple:
    times = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return tuple(times)


def tangent_pixel_maps(grid: ErpGrid, kernel: int) -> np.ndarray:
    """Per-pixel tangent-plane (inverse gnomonic) gather maps.

    Builds, for every pixel of the grid, the ``kernel x kernel`` lattice of
    nearest-pixel indices obtained by projecting a regular tangent-plane
    neighborhood back onto the sphere.  This is the look-up table style of
    pixel-wise spherical attention and scales with kernel^2 * H * W.
    Returns flat indices of shape ``(kernel, kernel, H, W)``.
    """
    if kernel < 1:
        raise ConfigError(f"kernel must be >= 1, got {kernel}")
    h, w = grid.height, grid.width
    u = np.arange(h, dtype=np.float64)
    v = np.arange(w, dtype=np.float64)
    lat = (np.pi / 2 - np.pi * (u + 0.5) / h)[:, None]
    lon = (2 * np.pi * (v + 0.5) / w - np.pi)[None, :]
    sin_lat, cos_lat = np.sin(lat), np.cos(lat)
    step = grid.lat_step
    half = (kernel - 1) / 2.0
    out = np.empty((kernel, kernel, h, w), dtype=np.int32)
    for i in range(kernel):
        for j in range(kernel):
            x = (j - half) * step
            y = (half - i) * step
            rho = np.hypot(x, y)
            if rho == 0.0:
                lat_t = np.broadcast_to(lat, (h, w))
                lon_t = np.broadcast_to(lon, (h, w))
            else:
                c = np.arctan(rho)
                cos_c, sin_c = np.cos(c), np.sin(c)
                lat_t = np.arcsin(
                    np.clip(cos_c * sin_lat + (y * sin_c / rho) * cos_lat, -1, 1)
                )
                lon_t = lon + np.arctan2(
                    x * sin_c, rho * cos_lat * cos_c - y * sin_lat * sin_c
                )
            rows = np.clip(
                round_half_away((np.pi / 2 - lat_t) * h / np.pi - 0.5), 0, h - 1
            )
            cols = np.mod(round_half_away((lon_t + np.pi) * w / (2 * np.pi) - 0.5), w)
            out[i, j] = (rows * w + cols).astype(np.int32)
    return out


_CUBE_FACES = (
    # (forward, right, down) basis per face
    ((1, 0, 0), (0, 1, 0), (0, 0, -1)),
    ((-1, 0, 0), (0, -1, 0), (0, 0, -1)),
    ((0, 1, 0), (-1, 0, 0), (0, 0, -1)),
    ((0, -1, 0), (1, 0, 0), (0, 0, -1)),
    ((0, 0, 1), (0, 1, 0), (1, 0, 0)),
    ((0, 0, -1), (0, 1, 0), (-1, 0, 0)),
)


def cube_face_maps(grid: ErpGrid) -> np.ndarray:
    """Face-to-ERP gather maps for a 6-face cube at face size H/2.

    Stand-in for cube-map reprojection cost: each face pixel's ray is
    intersected with the sphere and quantized to the nearest ERP pixel.
    Returns flat indices of shape ``(6, S, S)``.
    """
    s = max(1, grid.height // 2)
    h, w = grid.height, grid.width
    t = (np.arange(s, dtype=np.float64) + 0.5) * 2.0 / s - 1.0
    a = t[None, :, None]  # rightward
    b = t[:, None, None]  # downward
    out = np.empty((6, s, s), dtype=np.int32)
    for face, (fwd, right, down) in enumerate(_CUBE_FACES):
        d = (
            np.asarray(fwd, dtype=np.float64)
            + a * np.asarray(right, dtype=np.float64)
            + b * np.asarray(down, dtype=np.float64)
        )
        d /= np.sqrt(np.sum(d * d, axis=-1))[..., None]
        lat, lon = unit_to_angles(d)
        rows = np.clip(round_half_away((np.pi / 2 - lat) * h / np.pi - 0.5), 0, h - 1)
        cols = np.mod(round_half_away((lon + np.pi) * w / (2 * np.pi) - 0.5), w)
        out[face] = (rows * w + cols).astype(np.int32)
    return out


def bench_swt(cfg: TemplateConfig, reps: int = 5, threads: int = 1) -> BenchReport:
    """Time the decomposed and brute-force map builders.

    The equivalence of the two paths is asserted before any timing; a
    mismatch aborts the benchmark.
    """
    if reps < 3:
        raise ConfigError(f"need at least 3 repetitions, got {reps}")
    fast = build_index_map_fast(cfg, include_coords=False, threads=threads)
    naive = build_index_map_naive(cfg, include_coords=False)
    if not np.array_equal(fast.indices, naive.indices):
        raise ConfigError("fast/naive maps disagree; refusing to time a broken path")

    grid = cfg.grid
    report = BenchReport(threads=threads)
    size = f"{grid.height}x{grid.width}"
    report.add(
        BenchCase(
            name=f"swt_fast_{size}_m{cfg.rows}",
            height=grid.height,
            width=grid.width,
            window=cfg.rows,
            reps=reps,
            times=_timed(
                lambda: build_index_map_fast(cfg, include_coords=False, threads=threads),
                reps,
            ),
        )
    )
    report.add(
        BenchCase(
            name=f"swt_naive_{size}_m{cfg.rows}",
            height=grid.height,
            width=grid.width,
            window=cfg.rows,
            reps=reps,
            times=_timed(lambda: build_index_map_naive(cfg, include_coords=False), reps),
        )
    )
    return report


def bench_baselines(grid: ErpGrid, kernels=(3, 5, 7, 9), reps: int = 5) -> BenchReport:
    """Time per-pixel tangent-grid generation per kernel size, plus the
    cube-face gather-map stand-in."""
    if reps < 3:
        raise ConfigError(f"need at least 3 repetitions, got {reps}")
    if any(k not in (3, 5, 7, 9) for k in kernels):
        raise ConfigError(f"kernel sizes must be within (3, 5, 7, 9), got {kernels}")
    report = BenchReport()
    size = f"{grid.height}x{grid.width}"
    for k in kernels:
        report.add(
            BenchCase(
                name=f"tangent_k{k}_{size}",
                height=grid.height,
                width=grid.width,
                window=k,
                reps=reps,
                times=_timed(lambda k=k: tangent_pixel_maps(grid, k), reps),
            )
        )
    report.add(
        BenchCase(
            name=f"cubemap_{size}",
            height=grid.height,
            width=grid.width,
            window=grid.height // 2,
            reps=reps,
            times=_timed(lambda: cube_face_maps(grid), reps),
        )
    )
    return report


def speedup(report: BenchReport, fast_name: str, slow_name: str) -> float:
    """Median-over-median ratio of two cases (> 1 means ``fast_name`` wins)."""
    return report.case(slow_name).median / report.case(fast_name).median
