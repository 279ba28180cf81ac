"""Python bindings for the camera-trap recognition toolkit core."""

from ._ctrec import (  # noqa: F401
    ConfigError,
    ContractViolation,
    argmax_logits,
    detect_domain,
    downscale_flow,
    flo_roundtrip,
    focal_loss,
    fuse,
    imbalanced_classes,
    make_night,
    photometric_loss,
    scale_sub_logits,
    scaled_lr,
    shot_split,
    ssim,
    warp,
)

__all__ = [
    "ConfigError",
    "ContractViolation",
    "argmax_logits",
    "detect_domain",
    "downscale_flow",
    "flo_roundtrip",
    "focal_loss",
    "fuse",
    "imbalanced_classes",
    "make_night",
    "photometric_loss",
    "scale_sub_logits",
    "scaled_lr",
    "shot_split",
    "ssim",
    "warp",
]
