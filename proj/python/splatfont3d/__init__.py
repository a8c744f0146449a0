"""Python bindings for the SplatFont3D engine."""

from ._core import (
    BehindCamera,
    Camera,
    ConfigError,
    EmptyMask,
    Error,
    FormatError,
    GaussianCloud,
    IoError,
    PipelineConfig,
    ProviderFailure,
    ShapeMismatch,
    area_lambdas,
    blend_latents,
    build_label_map,
    cmd_assign,
    cmd_export,
    cmd_init,
    cmd_metrics,
    cmd_optimize,
    cmd_render,
    fallback_segment,
    front_camera,
    load_config,
    orbit_camera,
    parse_config,
    read_ply,
    render,
    turntable_cameras,
    write_ply,
)

__version__ = "0.1.0"
