"""Dense H x W x C feature maps, window partitioning, and window attention.

Values are float32; attention dot products and softmax normalizers
accumulate in float64 and results are cast back to float32, which keeps
forward passes deterministic and stable at the scales this package runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, ShapeError


def _as_float32(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype != np.float32:
        arr = arr.astype(np.float32)
    if not np.isfinite(arr).all():
        raise DomainError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class FeatureMap:
    """Dense feature grid of shape ``(height, width, channels)``, float32."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_float32(self.values, "feature map")
        if arr.ndim != 3:
            raise ShapeError(f"feature map must be 3-D, got shape {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class WindowSet:
    """Windowed view of a feature map: ``(nH, nW, rows, cols, channels)``."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_float32(self.values, "window set")
        if arr.ndim != 5:
            raise ShapeError(f"window set must be 5-D, got shape {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def layout(self):
        """Number of windows as ``(nH, nW)``."""
        return self.values.shape[0], self.values.shape[1]

    @property
    def window_shape(self):
        """Nodes per window as ``(rows, cols)``."""
        return self.values.shape[2], self.values.shape[3]

    @property
    def channels(self) -> int:
        return self.values.shape[4]


def partition_windows(f: FeatureMap, rows: int, cols: int) -> WindowSet:
    """Split a feature map into non-overlapping ``rows x cols`` windows.

    Pure reshaping: ``merge_windows(partition_windows(f)) == f`` bit-exactly.
    """
    h, w, c = f.values.shape
    if rows < 1 or cols < 1 or h % rows != 0 or w % cols != 0:
        raise ShapeError(
            f"window {rows}x{cols} does not tile a {h}x{w} feature map"
        )
    nh, nw = h // rows, w // cols
    v = f.values.reshape(nh, rows, nw, cols, c).swapaxes(1, 2)
    return WindowSet(np.ascontiguousarray(v))


def merge_windows(w: WindowSet) -> FeatureMap:
    """Exact inverse of :func:`partition_windows`."""
    nh, nw, rows, cols, c = w.values.shape
    v = w.values.swapaxes(1, 2).reshape(nh * rows, nw * cols, c)
    return FeatureMap(np.ascontiguousarray(v))


def default_head_count(channels: int) -> int:
    """Head count used when a configuration leaves it unspecified."""
    return max(1, channels // 32)


@dataclass(frozen=True)
class AttentionParams:
    """Projection weights and head configuration for window attention.

    All four projections are square ``(C, C)`` float32 matrices applied as
    ``x @ w``; ``heads`` must divide ``C``.
    """

    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray
    w_out: np.ndarray
    heads: int = 1

    def __post_init__(self):
        mats = {}
        for name in ("w_query", "w_key", "w_value", "w_out"):
            arr = _as_float32(getattr(self, name), name)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise ConfigError(f"{name} must be square, got shape {arr.shape}")
            mats[name] = arr
        sizes = {m.shape[0] for m in mats.values()}
        if len(sizes) != 1:
            raise ConfigError("projection matrices disagree on channel count")
        c = sizes.pop()
        if self.heads < 1 or c % self.heads != 0:
            raise ConfigError(
                f"head count {self.heads} does not divide {c} channels"
            )
        for name, arr in mats.items():
            object.__setattr__(self, name, arr)

    @property
    def channels(self) -> int:
        return self.w_query.shape[0]


def stable_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Softmax with per-row max subtraction, computed in float64."""
    x = np.asarray(logits, dtype=np.float64)
    x = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(x)
    return e / np.sum(e, axis=axis, keepdims=True)


def window_attention(
    q: WindowSet,
    k: WindowSet,
    v: WindowSet,
    params: AttentionParams,
    return_weights: bool = False,
):
    """Multi-head scaled dot-product attention, independently per window.

    ``q`` and ``v`` must share window geometry; ``k`` may hold differently
    positioned nodes (e.g. spherically resampled) but the node count per
    window must match.  Heads are split along channels, attended, concatenated
    and mixed by the output projection.  With ``return_weights`` the float64
    attention tensor ``(nH, nW, heads, N, N)`` is returned alongside.
    """
    if q.values.shape != v.values.shape:
        raise ShapeError(
            f"query/value window shapes differ: {q.values.shape} vs {v.values.shape}"
        )
    if k.layout != q.layout or k.channels != q.channels:
        raise ShapeError(
            f"key windows {k.values.shape} incompatible with query {q.values.shape}"
        )
    n_nodes = q.window_shape[0] * q.window_shape[1]
    if k.window_shape[0] * k.window_shape[1] != n_nodes:
        raise ShapeError("key node count per window must match query")
    c = q.channels
    if params.channels != c:
        raise ShapeError(f"params expect {params.channels} channels, map has {c}")

    nh, nw = q.layout
    heads = params.heads
    d = c // heads
    batch = nh * nw

    def split_heads(ws: WindowSet) -> np.ndarray:
        flat = ws.values.reshape(batch, n_nodes, c).astype(np.float64)
        return flat.reshape(batch, n_nodes, heads, d).transpose(0, 2, 1, 3)

    qh, kh, vh = split_heads(q), split_heads(k), split_heads(v)
    logits = qh @ kh.swapaxes(-1, -2) / np.sqrt(d)
    weights = stable_softmax(logits, axis=-1)
    out = weights @ vh  # (batch, heads, N, d)
    out = out.transpose(0, 2, 1, 3).reshape(batch, n_nodes, c)
    out = out @ params.w_out.astype(np.float64)
    result = WindowSet(
        out.astype(np.float32).reshape(nh, nw, *q.window_shape, c)
    )
    if return_weights:
        return result, weights.reshape(nh, nw, heads, n_nodes, n_nodes)
    return result
