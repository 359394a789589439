"""Forward-only window-refinement blocks and the toy depth decoder.

Each block refines a feature map the way a windowed fully-connected CRF
step would: an identity unary branch, a pairwise branch realized as window
attention between the regular windows (queries/values) and their
spherically transformed counterparts (keys), and an MLP optimization stage.
A conditional positional embedding (depthwise 3x3, input-dependent) is
added before the branches.  Training is out of scope; parameters are
seeded for reproducible forward passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ShapeError
from .tensor import (
    AttentionParams,
    FeatureMap,
    _as_float32,
    default_head_count,
    merge_windows,
    partition_windows,
    window_attention,
)
from .transform import IndexMap, TemplateConfig, build_index_map_fast, sample
from .sphere import ErpGrid

LAYER_NORM_EPS = 1e-5


def gelu(x: np.ndarray) -> np.ndarray:
    x64 = np.asarray(x, dtype=np.float64)
    return (0.5 * x64 * (1.0 + erf(x64 / np.sqrt(2.0)))).astype(np.float32)


def softplus(x: np.ndarray) -> np.ndarray:
    """Numerically stable log(1 + e^x); strictly positive."""
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64)).astype(np.float32)


def layer_norm(values: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Per-node normalization over channels, float64 statistics."""
    x = np.asarray(values, dtype=np.float64)
    mean = x.mean(axis=-1, keepdims=True)
    var = np.mean((x - mean) ** 2, axis=-1, keepdims=True)
    normed = (x - mean) / np.sqrt(var + LAYER_NORM_EPS)
    return (normed * gain + bias).astype(np.float32)


def apply_cpe(f: FeatureMap, kernel: np.ndarray) -> FeatureMap:
    """Add an input-conditioned positional signal: ``f + dwconv3x3(f)``.

    The depthwise convolution pads horizontally by wrapping across the seam
    (the ERP image is periodic in longitude) and vertically with zeros.
    """
    kernel = np.asarray(kernel, dtype=np.float32)
    if kernel.shape != (3, 3, f.channels):
        raise ShapeError(
            f"CPE kernel must be (3, 3, {f.channels}), got {kernel.shape}"
        )
    v = f.values
    padded = np.pad(v, ((1, 1), (0, 0), (0, 0)))
    padded = np.pad(padded, ((0, 0), (1, 1), (0, 0)), mode="wrap")
    acc = np.zeros_like(v, dtype=np.float64)
    h, w = f.height, f.width
    for di in range(3):
        for dj in range(3):
            acc += padded[di : di + h, dj : dj + w] * kernel[di, dj]
    return FeatureMap(v + acc.astype(np.float32))


def _project(values: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Per-pixel channel projection ``x @ w`` with float64 accumulation."""
    out = values.astype(np.float64) @ weight.astype(np.float64)
    return out.astype(np.float32)


def plain_window_attention(f: FeatureMap, params: AttentionParams, rows: int, cols: int) -> FeatureMap:
    """Ordinary window self-attention: keys from the regular windows."""
    q = partition_windows(FeatureMap(_project(f.values, params.w_query)), rows, cols)
    k = partition_windows(FeatureMap(_project(f.values, params.w_key)), rows, cols)
    v = partition_windows(FeatureMap(_project(f.values, params.w_value)), rows, cols)
    return merge_windows(window_attention(q, k, v, params))


def spherical_window_attention(
    f: FeatureMap, params: AttentionParams, index_map: IndexMap
) -> FeatureMap:
    """Window attention with spherically resampled keys.

    Queries and values come from the regular window partition; the key map
    is projected first and then gathered through the index map (nearest),
    so each window attends from its planar nodes onto the equator-faithful
    spherical neighborhood around its center.
    """
    cfg = index_map.config
    if cfg.dilation != 1:
        raise ConfigError(
            "attention needs one node per window pixel (dilation 1)"
        )
    if (f.height, f.width) != (cfg.grid.height, cfg.grid.width):
        raise ShapeError(
            f"feature map {f.height}x{f.width} does not match index map grid "
            f"{cfg.grid.height}x{cfg.grid.width}"
        )
    q = partition_windows(
        FeatureMap(_project(f.values, params.w_query)), cfg.rows, cfg.cols
    )
    v = partition_windows(
        FeatureMap(_project(f.values, params.w_value)), cfg.rows, cfg.cols
    )
    k_map = FeatureMap(_project(f.values, params.w_key))
    k_t = sample(k_map, index_map, mode="nearest")
    return merge_windows(window_attention(q, k_t, v, params))


@dataclass(frozen=True)
class BlockParams:
    """Learned state of one refinement block.

    ``mlp_w1/w2`` expand ``C -> r*C -> C``; the two norms carry gain/bias
    vectors; ``cpe_kernel`` is the (3, 3, C) depthwise kernel.
    """

    attention: AttentionParams
    norm1_gain: np.ndarray
    norm1_bias: np.ndarray
    norm2_gain: np.ndarray
    norm2_bias: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray
    cpe_kernel: np.ndarray

    def __post_init__(self):
        c = self.attention.channels
        arrays = {
            "norm1_gain": (c,),
            "norm1_bias": (c,),
            "norm2_gain": (c,),
            "norm2_bias": (c,),
            "mlp_b2": (c,),
            "cpe_kernel": (3, 3, c),
        }
        for name, shape in arrays.items():
            arr = _as_float32(getattr(self, name), name)
            if arr.shape != shape:
                raise ConfigError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        w1 = _as_float32(self.mlp_w1, "mlp_w1")
        b1 = _as_float32(self.mlp_b1, "mlp_b1")
        w2 = _as_float32(self.mlp_w2, "mlp_w2")
        hidden = w1.shape[1] if w1.ndim == 2 else -1
        if w1.ndim != 2 or w1.shape[0] != c or hidden < c:
            raise ConfigError(f"mlp_w1 must be (C, r*C) with r >= 1, got {w1.shape}")
        if b1.shape != (hidden,) or w2.shape != (hidden, c):
            raise ConfigError("MLP shapes are inconsistent")
        object.__setattr__(self, "mlp_w1", w1)
        object.__setattr__(self, "mlp_b1", b1)
        object.__setattr__(self, "mlp_w2", w2)

    @property
    def channels(self) -> int:
        return self.attention.channels


def _mlp(values: np.ndarray, p: BlockParams) -> np.ndarray:
    h = gelu(values.astype(np.float64) @ p.mlp_w1.astype(np.float64) + p.mlp_b1)
    out = h.astype(np.float64) @ p.mlp_w2.astype(np.float64) + p.mlp_b2
    return out.astype(np.float32)


def decoder_block(f: FeatureMap, p: BlockParams, index_map: IndexMap) -> FeatureMap:
    """One refinement step.

    Positional signal is added first, the (identity) unary branch and the
    attention pairwise branch are summed, and the MLP stage refines the sum.
    With all-zero learned parameters the block is the identity map.
    """
    x = apply_cpe(f, p.cpe_kernel).values
    attn_in = FeatureMap(layer_norm(x, p.norm1_gain, p.norm1_bias))
    pairwise = spherical_window_attention(attn_in, p.attention, index_map)
    s = x + pairwise.values
    out = s + _mlp(layer_norm(s, p.norm2_gain, p.norm2_bias), p)
    return FeatureMap(out)


@dataclass(frozen=True)
class DecoderConfig:
    """Decoder stack layout: ``channels`` are per level, finest first.

    Level ``i`` runs at 1/4 * 1/2^i of the full resolution.  The window is
    clamped per level so it always tiles the level (the coarsest levels can
    be smaller than the configured window).
    """

    height: int
    width: int
    channels: tuple = (16, 24, 32, 48)
    window: int = 4
    expansion: int = 4
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if len(self.channels) < 1:
            raise ConfigError("need at least one decoder level")
        if self.window < 1 or self.expansion < 1:
            raise ConfigError("window and expansion must be >= 1")
        for level in range(self.levels):
            h, w = self.level_shape(level)
            win = self.level_window(level)
            if h < 1 or w < 1 or h % win != 0 or w % win != 0:
                raise ConfigError(
                    f"window {win} does not tile level {level} ({h}x{w})"
                )

    @property
    def levels(self) -> int:
        return len(self.channels)

    def level_shape(self, level: int):
        scale = 4 * (1 << level)
        return self.height // scale, self.width // scale

    def level_window(self, level: int) -> int:
        h, w = self.level_shape(level)
        return min(self.window, h, w)


@dataclass(frozen=True)
class LevelParams:
    """Per-level state: optional skip-fusion projection plus two blocks."""

    blocks: tuple
    fuse: np.ndarray | None = None


@dataclass(frozen=True)
class DecoderParams:
    levels: tuple
    head: np.ndarray
    seed: int | None = None


def _uniform(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape).astype(np.float32)


def init_block_params(channels: int, expansion: int, rng: np.random.Generator) -> BlockParams:
    """Seeded initialization: uniform(-1/sqrt(C), 1/sqrt(C)) projections,
    unit norm gains, zero biases and zero CPE kernel."""
    scale = 1.0 / np.sqrt(channels)
    hidden = channels * expansion
    attention = AttentionParams(
        w_query=_uniform(rng, (channels, channels), scale),
        w_key=_uniform(rng, (channels, channels), scale),
        w_value=_uniform(rng, (channels, channels), scale),
        w_out=_uniform(rng, (channels, channels), scale),
        heads=default_head_count(channels),
    )
    return BlockParams(
        attention=attention,
        norm1_gain=np.ones(channels, dtype=np.float32),
        norm1_bias=np.zeros(channels, dtype=np.float32),
        norm2_gain=np.ones(channels, dtype=np.float32),
        norm2_bias=np.zeros(channels, dtype=np.float32),
        mlp_w1=_uniform(rng, (channels, hidden), scale),
        mlp_b1=np.zeros(hidden, dtype=np.float32),
        mlp_w2=_uniform(rng, (hidden, channels), 1.0 / np.sqrt(hidden)),
        mlp_b2=np.zeros(channels, dtype=np.float32),
        cpe_kernel=np.zeros((3, 3, channels), dtype=np.float32),
    )


def init_decoder_params(cfg: DecoderConfig) -> DecoderParams:
    """Deterministic parameter set for the whole stack from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    levels = []
    # processing order: coarsest level first
    order = list(range(cfg.levels - 1, -1, -1))
    prev_channels = None
    for level in order:
        c = cfg.channels[level]
        fuse = None
        if prev_channels is not None:
            fuse = _uniform(rng, (prev_channels + c, c), 1.0 / np.sqrt(prev_channels + c))
        blocks = (
            init_block_params(c, cfg.expansion, rng),
            init_block_params(c, cfg.expansion, rng),
        )
        levels.append(LevelParams(blocks=blocks, fuse=fuse))
        prev_channels = c
    head = _uniform(rng, (cfg.channels[0], 1), 1.0 / np.sqrt(cfg.channels[0]))
    return DecoderParams(levels=tuple(levels), head=head, seed=cfg.seed)


def nearest_upsample(values: np.ndarray, factor: int) -> np.ndarray:
    return values.repeat(factor, axis=0).repeat(factor, axis=1)


def bilinear_upsample(values: np.ndarray, factor: int) -> np.ndarray:
    """Separable bilinear upsampling with edge clamping."""
    h, w, _ = values.shape
    out_shape = (h * factor, w * factor)

    def axis_coords(n_out, n_in):
        src = (np.arange(n_out) + 0.5) / factor - 0.5
        i0 = np.clip(np.floor(src).astype(np.int64), 0, n_in - 1)
        i1 = np.clip(i0 + 1, 0, n_in - 1)
        frac = np.clip(src - np.floor(src), 0.0, 1.0).astype(np.float32)
        frac[src < 0] = 0.0
        return i0, i1, frac

    r0, r1, fr = axis_coords(out_shape[0], h)
    c0, c1, fc = axis_coords(out_shape[1], w)
    rows = values[r0] + fr[:, None, None] * (values[r1] - values[r0])
    out = rows[:, c0] + fc[None, :, None] * (rows[:, c1] - rows[:, c0])
    return out


def _level_maps(cfg: DecoderConfig, threads: int = 1):
    maps = []
    for level in range(cfg.levels):
        h, w = cfg.level_shape(level)
        win = cfg.level_window(level)
        tcfg = TemplateConfig(grid=ErpGrid(h, w), rows=win, cols=win, dilation=1)
        maps.append(build_index_map_fast(tcfg, include_coords=False, threads=threads))
    return maps


def decoder_forward(
    pyramid,
    cfg: DecoderConfig,
    params: DecoderParams,
    index_maps=None,
    threads: int = 1,
) -> FeatureMap:
    """Run the decoder over an encoder pyramid and emit a positive depth map.

    ``pyramid`` lists one FeatureMap per level, finest (quarter resolution)
    first.  The coarsest level runs two blocks; each finer level upsamples
    the previous output x2 (nearest), concatenates the skip feature,
    projects back to the level width and runs two blocks.  The head projects
    to one channel, applies softplus and upsamples x4 bilinearly.
    """
    if len(pyramid) != cfg.levels:
        raise ShapeError(f"expected {cfg.levels} pyramid levels, got {len(pyramid)}")
    for level, f in enumerate(pyramid):
        expect = (*cfg.level_shape(level), cfg.channels[level])
        if f.values.shape != expect:
            raise ShapeError(
                f"pyramid level {level} has shape {f.values.shape}, expected {expect}"
            )
    if index_maps is None:
        index_maps = _level_maps(cfg, threads=threads)
    if len(index_maps) != cfg.levels:
        raise ShapeError("need one index map per level")

    x = None
    for step, level in enumerate(range(cfg.levels - 1, -1, -1)):
        lp = params.levels[step]
        skip = pyramid[level]
        if x is None:
            x = skip
        else:
            up = nearest_upsample(x.values, 2)
            fused = np.concatenate([up, skip.values], axis=-1)
            x = FeatureMap(_project(fused, lp.fuse))
        for bp in lp.blocks:
            x = decoder_block(x, bp, index_maps[level])
    logits = _project(x.values, params.head)
    depth = softplus(logits)
    return FeatureMap(bilinear_upsample(depth, 4))
