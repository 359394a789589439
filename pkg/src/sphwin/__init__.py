"""Spherical window transform toolkit for equirectangular images.

Builds rotation-replicated window sampling maps for ERP images (with a
decomposed fast path that is bit-identical to the brute-force one), runs
forward-only window-attention refinement blocks over them, evaluates depth
maps, and benchmarks the transform against tangent/cube-map baselines.
"""

from .bench import BenchCase, BenchReport, bench_baselines, bench_swt, speedup
from .blocks import (
    BlockParams,
    DecoderConfig,
    DecoderParams,
    LevelParams,
    apply_cpe,
    decoder_block,
    decoder_forward,
    init_block_params,
    init_decoder_params,
    plain_window_attention,
    spherical_window_attention,
)
from .errors import ConfigError, DomainError, FormatError, ShapeError, SphwinError
from .metrics import DepthMetrics, DepthPair, evaluate, median_align, silog_loss
from .sphere import (
    ErpGrid,
    angles_to_unit,
    gnomonic_grid,
    great_circle_distance,
    pitch_matrix,
    rotation_to,
    unit_to_angles,
    wrap_lon,
    yaw_matrix,
)
from .tensor import (
    AttentionParams,
    FeatureMap,
    WindowSet,
    merge_windows,
    partition_windows,
    window_attention,
)
from .transform import (
    IndexMap,
    SampleGrid,
    Template,
    TemplateConfig,
    build_index_map_fast,
    build_index_map_naive,
    build_template,
    identity_index_map,
    roll_lon,
    sample,
    transform_window,
    window_center,
)

__version__ = "0.1.0"
