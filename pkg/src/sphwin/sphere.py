"""Spherical geometry for equirectangular (ERP) images.

Conventions used throughout the package:

* Latitude ``lat`` lies in ``[-pi/2, pi/2]`` with the equator at 0 and the
  north pole at ``+pi/2``; longitude ``lon`` lies in ``(-pi, pi]``.
* Angle pairs travel as ``(lat, lon)`` scalars or numpy arrays, radians.
* Points on the unit sphere are arrays of shape ``(..., 3)`` with
  ``x = cos(lat) * cos(lon)``, ``y = cos(lat) * sin(lon)``, ``z = sin(lat)``.
* Pixel row ``u`` runs north to south, column ``v`` west to east, both with
  half-pixel centers: pixel ``(0, 0)`` of an ``H x W`` grid is centered at
  ``lat = pi/2 - pi/(2H)``, ``lon = -pi + pi/W``.

All geometry is computed in float64; the rotation constructors satisfy
``R^T R = I`` and ``det R = 1`` to 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

TWO_PI = 2.0 * np.pi

# Unit-norm tolerance below which inputs are accepted as-is; beyond it the
# vector is renormalized (a zero vector is a domain error).
_UNIT_NORM_TOL = 1e-9


def wrap_lon(lon):
    """Wrap longitudes into ``(-pi, pi]``.

    Values already inside the range are returned bit-unchanged, which keeps
    wrapped and unwrapped code paths numerically identical.
    """
    arr = np.asarray(lon, dtype=np.float64)
    need = (arr <= -np.pi) | (arr > np.pi)
    if not need.any():
        return float(arr) if arr.ndim == 0 else arr
    rem = np.remainder(arr, TWO_PI)  # [0, 2pi)
    wrapped = np.where(rem > np.pi, rem - TWO_PI, rem)
    out = np.where(need, wrapped, arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ErpGrid:
    """Pixel lattice of an equirectangular image (``height`` x ``width``)."""

    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 2:
            raise ConfigError(
                f"ERP grid must be at least 1x2, got {self.height}x{self.width}"
            )
        if self.height * self.width > 0xFFFFFFFF:
            raise ConfigError("grid too large for 32-bit pixel indices")

    @property
    def is_canonical(self) -> bool:
        """True for the standard 2:1 aspect ratio."""
        return self.width == 2 * self.height

    @property
    def lat_step(self) -> float:
        """Latitude extent of one pixel row."""
        return np.pi / self.height

    @property
    def lon_step(self) -> float:
        """Longitude extent of one pixel column."""
        return TWO_PI / self.width

    def pixel_to_angle(self, u, v):
        """Map continuous pixel coordinates to ``(lat, lon)``.

        Accepts the full continuous lattice extent including pixel edges,
        ``u in [-0.5, H-0.5]`` and ``v in [-0.5, W-0.5]``; the top edge
        (``u = -0.5``) maps to the north-pole latitude.
        """
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if ((u < -0.5) | (u > self.height - 0.5)).any() or (
            (v < -0.5) | (v > self.width - 0.5)
        ).any():
            raise DomainError(
                f"pixel coordinates outside the {self.height}x{self.width} grid"
            )
        lat = np.pi / 2 - np.pi * (u + 0.5) / self.height
        lon = wrap_lon(TWO_PI * (v + 0.5) / self.width - np.pi)
        if lat.ndim == 0:
            return float(lat), float(lon)
        return lat, np.asarray(lon, dtype=np.float64)

    def angle_to_pixel(self, lat, lon):
        """Inverse of :meth:`pixel_to_angle`; returns continuous ``(u, v)``."""
        lat = np.asarray(lat, dtype=np.float64)
        lon = np.asarray(lon, dtype=np.float64)
        u = (np.pi / 2 - lat) * self.height / np.pi - 0.5
        v = (lon + np.pi) * self.width / TWO_PI - 0.5
        if u.ndim == 0:
            return float(u), float(v)
        return u, v


def angles_to_unit(lat, lon) -> np.ndarray:
    """Project ``(lat, lon)`` onto the unit sphere; returns shape ``(..., 3)``."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    cos_lat = np.cos(lat)
    return np.stack(
        (cos_lat * np.cos(lon), cos_lat * np.sin(lon), np.sin(lat)), axis=-1
    )


def unit_to_angles(points: np.ndarray):
    """Inverse spherical projection of unit vectors to ``(lat, lon)``.

    Longitude uses the full-quadrant two-argument arctangent, so the whole
    ``(-pi, pi]`` range is recovered.  Latitude is computed as
    ``atan2(z, hypot(x, y))`` — identical to ``arcsin(z)`` for unit vectors
    but accurate near the poles, where arcsin loses ~4 digits.  At the
    exact poles the longitude is unconstrained and canonicalized to 0.
    Vectors whose norm deviates from 1 by more than 1e-9 are renormalized;
    a zero vector is a domain error.
    """
    p = np.asarray(points, dtype=np.float64)
    if p.shape[-1] != 3:
        raise DomainError(f"expected (..., 3) vectors, got shape {p.shape}")
    norm_sq = np.sum(p * p, axis=-1)
    if (norm_sq == 0.0).any():
        raise DomainError("cannot project the zero vector")
    if (np.abs(norm_sq - 1.0) > 2.0 * _UNIT_NORM_TOL).any():
        p = p / np.sqrt(norm_sq)[..., None]
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    lat = np.arctan2(z, np.hypot(x, y))
    lon = np.arctan2(y, x)
    lon = np.where((x == 0.0) & (y == 0.0), 0.0, lon)
    if lat.ndim == 0:
        return float(lat), float(lon)
    return lat, lon


def yaw_matrix(alpha: float) -> np.ndarray:
    """Rotation about the polar axis; adds ``alpha`` to every longitude."""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def pitch_matrix(beta: float) -> np.ndarray:
    """Rotation about the y axis; positive ``beta`` moves (1,0,0) north."""
    c, s = np.cos(beta), np.sin(beta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rotation_to(lat: float, lon: float) -> np.ndarray:
    """Rotation carrying the equator/prime-meridian point to ``(lat, lon)``.

    Composed pitch-first-then-yaw, ``R = yaw(lon) @ pitch(lat)``, so that
    the yaw factor is a pure longitude shift of the pitched result.
    """
    return yaw_matrix(lon) @ pitch_matrix(lat)


def apply_rotation(rot: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 3x3 rotation to vectors of shape ``(..., 3)``."""
    return np.asarray(points, dtype=np.float64) @ rot.T


def great_circle_distance(a: np.ndarray, b: np.ndarray):
    """Angular distance in radians between unit vectors, elementwise.

    Uses ``atan2(|a x b|, a . b)``, accurate for both nearly-parallel and
    nearly-antipodal pairs.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cross = np.cross(a, b)
    sin_d = np.sqrt(np.sum(cross * cross, axis=-1))
    cos_d = np.sum(a * b, axis=-1)
    d = np.arctan2(sin_d, cos_d)
    return float(d) if d.ndim == 0 else d


def gnomonic_grid(center_lat: float, center_lon: float, size: int, step: float):
    """Inverse gnomonic projection of a regular ``size x size`` tangent lattice.

    The lattice has spacing ``step`` (tangent-plane units, i.e. radians for
    small offsets) and is centered on the tangency point.  Row 0 is the
    northernmost row, matching image-row order.  Returns ``(lat, lon)``
    arrays of shape ``(size, size)``.

    Every finite lattice point projects inside the open hemisphere around
    the center; non-finite offsets (the hemisphere boundary) are rejected.
    """
    if size < 1:
        raise ConfigError(f"kernel size must be >= 1, got {size}")
    if not (step > 0.0 and np.isfinite(step)):
        raise ConfigError(f"step must be positive and finite, got {step}")
    half = (size - 1) / 2.0
    east_off = (np.arange(size) - half) * step
    north_off = (half - np.arange(size)) * step
    if not (np.isfinite(east_off).all() and np.isfinite(north_off).all()):
        raise DomainError("tangent-plane offset beyond the hemisphere")

    center = angles_to_unit(center_lat, center_lon)
    sin_lat, cos_lat = np.sin(center_lat), np.cos(center_lat)
    sin_lon, cos_lon = np.sin(center_lon), np.cos(center_lon)
    east = np.array([-sin_lon, cos_lon, 0.0])
    north = np.array([-sin_lat * cos_lon, -sin_lat * sin_lon, cos_lat])

    pts = (
        center
        + east_off[None, :, None] * east
        + north_off[:, None, None] * north
    )
    pts = pts / np.sqrt(np.sum(pts * pts, axis=-1))[..., None]
    return unit_to_angles(pts)
