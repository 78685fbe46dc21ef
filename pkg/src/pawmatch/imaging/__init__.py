"""Raster operations: decode/encode, crop, square-fit, and augmentation."""

from .kernels import BACKEND as KERNEL_BACKEND
from .ops import OP_KINDS, apply_op
from .policy import (
    BUILTIN_POLICY_NAMES,
    AugmentOp,
    AugmentPolicy,
    apply_policy,
    builtin_policies,
    builtin_policy,
    load_policy,
    save_policy,
)
from .raster import (
    BoundingBox,
    ImageTensor,
    crop,
    encode_png,
    fit_square,
    load_image,
    save_png,
    to_model_input,
)

__all__ = [
    "KERNEL_BACKEND",
    "OP_KINDS",
    "apply_op",
    "BUILTIN_POLICY_NAMES",
    "AugmentOp",
    "AugmentPolicy",
    "apply_policy",
    "builtin_policies",
    "builtin_policy",
    "load_policy",
    "save_policy",
    "BoundingBox",
    "ImageTensor",
    "crop",
    "encode_png",
    "fit_square",
    "load_image",
    "save_png",
    "to_model_input",
]
