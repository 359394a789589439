"""On-disk formats: SWTM index maps, FMAP tensors, PFM/PNG depth rasters,
and the decoder parameter bundle.

All multi-byte fields are little-endian.  SWTM layout: magic ``SWTM``,
u16 version, u32 H, W, nH, nW, rows, cols, dilation, u8 coords flag, then
``nH*nW*rows*cols`` u32 flat indices (window-row, window-col, node-row,
node-col order) and, when flagged, the same count of float64 (lat, lon)
pairs.  FMAP layout: magic ``FMAP``, u16 version, u32 H, W, C, then
``H*W*C`` float32 values in (row, col, channel) order.
"""

from __future__ import annotations

import os
import struct

import numpy as np
from PIL import Image

from .blocks import BlockParams, DecoderParams, LevelParams
from .errors import FormatError
from .sphere import ErpGrid
from .tensor import AttentionParams, FeatureMap
from .transform import IndexMap, TemplateConfig

SWTM_MAGIC = b"SWTM"
FMAP_MAGIC = b"FMAP"
FORMAT_VERSION = 1


def write_index_map(index_map: IndexMap, path: str, include_coords: bool | None = None):
    """Serialize an index map; coordinates are written when present unless
    explicitly suppressed."""
    if include_coords is None:
        include_coords = index_map.has_coords
    if include_coords and not index_map.has_coords:
        raise FormatError("index map carries no coordinates to write")
    cfg = index_map.config
    nh, nw = index_map.layout
    with open(path, "wb") as fh:
        fh.write(SWTM_MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(
            struct.pack(
                "<7I",
                cfg.grid.height,
                cfg.grid.width,
                nh,
                nw,
                cfg.rows,
                cfg.cols,
                cfg.dilation,
            )
        )
        fh.write(struct.pack("<B", 1 if include_coords else 0))
        fh.write(np.ascontiguousarray(index_map.indices, dtype="<u4").tobytes())
        if include_coords:
            coords = np.stack([index_map.lat, index_map.lon], axis=-1)
            fh.write(np.ascontiguousarray(coords, dtype="<f8").tobytes())


def read_index_map(path: str) -> IndexMap:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != SWTM_MAGIC:
        raise FormatError(f"{path}: not an SWTM file")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported SWTM version {version}")
    h, w, nh, nw, rows, cols, dilation = struct.unpack_from("<7I", data, 6)
    (flag,) = struct.unpack_from("<B", data, 34)
    count = nh * nw * rows * cols
    offset = 35
    need = offset + 4 * count + (16 * count if flag else 0)
    if len(data) < need:
        raise FormatError(f"{path}: truncated SWTM payload")
    indices = np.frombuffer(data, dtype="<u4", count=count, offset=offset)
    indices = indices.reshape(nh, nw, rows, cols)
    lat = lon = None
    if flag:
        coords = np.frombuffer(
            data, dtype="<f8", count=2 * count, offset=offset + 4 * count
        ).reshape(nh, nw, rows, cols, 2)
        lat = coords[..., 0]
        lon = coords[..., 1]
    cfg = TemplateConfig(grid=ErpGrid(h, w), rows=rows, cols=cols, dilation=dilation)
    if cfg.layout() != (nh, nw):
        raise FormatError(f"{path}: window layout inconsistent with header")
    return IndexMap(config=cfg, indices=indices.copy(), lat=lat, lon=lon)


def write_feature_map(f: FeatureMap, path: str):
    with open(path, "wb") as fh:
        fh.write(FMAP_MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<3I", f.height, f.width, f.channels))
        fh.write(np.ascontiguousarray(f.values, dtype="<f4").tobytes())


def read_feature_map(path: str) -> FeatureMap:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != FMAP_MAGIC:
        raise FormatError(f"{path}: not an FMAP file")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported FMAP version {version}")
    h, w, c = struct.unpack_from("<3I", data, 6)
    count = h * w * c
    if len(data) < 18 + 4 * count:
        raise FormatError(f"{path}: truncated FMAP payload")
    values = np.frombuffer(data, dtype="<f4", count=count, offset=18)
    return FeatureMap(values.reshape(h, w, c).copy())


def write_pfm(values: np.ndarray, path: str):
    """Single-channel PFM, little-endian, bottom row first (scale -1)."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise FormatError(f"PFM writer takes a 2-D map, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(np.flipud(arr), dtype="<f4").tobytes())


def read_pfm(path: str) -> np.ndarray:
    """Read a PFM file; color files are rejected (depth maps are scalar)."""
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"PF":
            raise FormatError(f"{path}: color PFM is not a depth map")
        if header != b"Pf":
            raise FormatError(f"{path}: not a PFM file")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError(f"{path}: malformed PFM dimensions")
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        payload = fh.read(4 * w * h)
    if len(payload) < 4 * w * h:
        raise FormatError(f"{path}: truncated PFM payload")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(np.float64)


def write_depth_png(values: np.ndarray, path: str, units_per_meter: float = 1000.0):
    """16-bit grayscale PNG; depth in meters scaled by ``units_per_meter``."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise FormatError(f"depth PNG writer takes a 2-D map, got {arr.shape}")
    raw = np.clip(np.round(arr * units_per_meter), 0, 65535).astype(np.uint16)
    Image.fromarray(raw).save(path)  # uint16 maps to 16-bit grayscale


def read_depth_png(path: str, units_per_meter: float = 1000.0) -> np.ndarray:
    img = Image.open(path)
    if img.mode not in ("I;16", "I", "L"):
        raise FormatError(f"{path}: expected grayscale depth PNG, got mode {img.mode}")
    return np.asarray(img, dtype=np.float64) / units_per_meter


def read_depth(path: str, units_per_meter: float = 1000.0) -> np.ndarray:
    """Dispatch on extension: FMAP (single channel), PFM, or 16-bit PNG."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".fmap":
        f = read_feature_map(path)
        if f.channels != 1:
            raise FormatError(f"{path}: depth FMAP must have one channel")
        return f.values[:, :, 0].astype(np.float64)
    if ext == ".pfm":
        return read_pfm(path)
    if ext == ".png":
        return read_depth_png(path, units_per_meter)
    raise FormatError(f"{path}: unsupported depth format {ext!r}")


def read_image(path: str) -> FeatureMap:
    """8-bit PNG (gray or RGB) or FMAP as a float32 feature map."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".fmap":
        return read_feature_map(path)
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return FeatureMap(arr)


def write_image(f: FeatureMap, path: str):
    """Write a 1- or 3-channel feature map as an 8-bit PNG (values 0..255)."""
    arr = np.clip(np.round(f.values), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path)
    elif arr.shape[2] == 3:
        Image.fromarray(arr, mode="RGB").save(path)
    else:
        raise FormatError(f"cannot encode {arr.shape[2]} channels as PNG")


def _bundle_tensors(params: DecoderParams) -> dict:
    tensors = {}
    for i, lp in enumerate(params.levels):
        if lp.fuse is not None:
            tensors[f"level{i}.fuse"] = lp.fuse
        for j, bp in enumerate(lp.blocks):
            prefix = f"level{i}.block{j}"
            tensors[f"{prefix}.w_query"] = bp.attention.w_query
            tensors[f"{prefix}.w_key"] = bp.attention.w_key
            tensors[f"{prefix}.w_value"] = bp.attention.w_value
            tensors[f"{prefix}.w_out"] = bp.attention.w_out
            tensors[f"{prefix}.norm1_gain"] = bp.norm1_gain
            tensors[f"{prefix}.norm1_bias"] = bp.norm1_bias
            tensors[f"{prefix}.norm2_gain"] = bp.norm2_gain
            tensors[f"{prefix}.norm2_bias"] = bp.norm2_bias
            tensors[f"{prefix}.mlp_w1"] = bp.mlp_w1
            tensors[f"{prefix}.mlp_b1"] = bp.mlp_b1
            tensors[f"{prefix}.mlp_w2"] = bp.mlp_w2
            tensors[f"{prefix}.mlp_b2"] = bp.mlp_b2
            tensors[f"{prefix}.cpe_kernel"] = bp.cpe_kernel
    tensors["head"] = params.head
    return tensors


def _to_3d(arr: np.ndarray) -> np.ndarray:
    while arr.ndim < 3:
        arr = arr[..., None]
    return arr


def save_decoder_params(params: DecoderParams, directory: str):
    """Write one FMAP per tensor plus a ``manifest.txt`` mapping parameter
    names to file names (and recording the seed)."""
    os.makedirs(directory, exist_ok=True)
    tensors = _bundle_tensors(params)
    lines = []
    if params.seed is not None:
        lines.append(f"seed={params.seed}")
    for i, lp in enumerate(params.levels):
        lines.append(f"level{i}.heads={lp.blocks[0].attention.heads}")
    for name, arr in sorted(tensors.items()):
        fname = name.replace(".", "_") + ".fmap"
        write_feature_map(FeatureMap(_to_3d(arr)), os.path.join(directory, fname))
        lines.append(f"{name}={fname}")
    with open(os.path.join(directory, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_decoder_params(directory: str) -> DecoderParams:
    manifest = os.path.join(directory, "manifest.txt")
    if not os.path.exists(manifest):
        raise FormatError(f"{directory}: missing manifest.txt")
    entries = {}
    seed = None
    with open(manifest) as fh:
        for line in fh:
            line = line.strip()
            if not line or "=" not in line:
                continue
            key, value = line.split("=", 1)
            if key == "seed":
                seed = int(value)
            else:
                entries[key] = value

    def tensor(name: str, squeeze_to: int) -> np.ndarray:
        if name not in entries:
            raise FormatError(f"{directory}: manifest missing {name}")
        arr = read_feature_map(os.path.join(directory, entries[name])).values
        while arr.ndim > squeeze_to:
            if arr.shape[-1] != 1:
                raise FormatError(f"{name}: cannot squeeze shape {arr.shape}")
            arr = arr[..., 0]
        return arr

    levels = []
    i = 0
    while f"level{i}.block0.w_query" in entries:
        fuse = tensor(f"level{i}.fuse", 2) if f"level{i}.fuse" in entries else None
        heads = int(entries.get(f"level{i}.heads", 1))
        blocks = []
        for j in range(2):
            prefix = f"level{i}.block{j}"
            attention = AttentionParams(
                w_query=tensor(f"{prefix}.w_query", 2),
                w_key=tensor(f"{prefix}.w_key", 2),
                w_value=tensor(f"{prefix}.w_value", 2),
                w_out=tensor(f"{prefix}.w_out", 2),
                heads=heads,
            )
            blocks.append(
                BlockParams(
                    attention=attention,
                    norm1_gain=tensor(f"{prefix}.norm1_gain", 1),
                    norm1_bias=tensor(f"{prefix}.norm1_bias", 1),
                    norm2_gain=tensor(f"{prefix}.norm2_gain", 1),
                    norm2_bias=tensor(f"{prefix}.norm2_bias", 1),
                    mlp_w1=tensor(f"{prefix}.mlp_w1", 2),
                    mlp_b1=tensor(f"{prefix}.mlp_b1", 1),
                    mlp_w2=tensor(f"{prefix}.mlp_w2", 2),
                    mlp_b2=tensor(f"{prefix}.mlp_b2", 1),
                    cpe_kernel=tensor(f"{prefix}.cpe_kernel", 3),
                )
            )
        levels.append(LevelParams(blocks=tuple(blocks), fuse=fuse))
        i += 1
    if not levels:
        raise FormatError(f"{directory}: bundle holds no levels")
    head = tensor("head", 2)
    return DecoderParams(levels=tuple(levels), head=head, seed=seed)
