"""Augmentation policies: named lists of two-op sub-policies.

A policy application draws one sub-policy uniformly, then fires each of its
two ops independently with the op's probability. The rng draw order is part
of the reproducibility contract:

1. one ``below(len(sub_policies))`` draw selecting the sub-policy,
2. per op, one ``uniform()`` draw deciding whether it fires,
3. if it fired and the kind is signed, one sign draw inside ``apply_op``.

The CIFAR10, ImageNet, and SVHN policies found by the auto-augmentation
search ship as JSON data files alongside this module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import FormatError
from ..rng import SplitMix64
from . import ops
from .raster import ImageTensor

BUILTIN_POLICY_NAMES = ("CIFAR10", "ImageNet", "SVHN")


@dataclass(frozen=True)
class AugmentOp:
    kind: str
    probability: float
    magnitude: int

    def __post_init__(self):
        if self.kind not in ops.OP_KINDS:
            raise ValueError(f"unknown op kind {self.kind!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {self.probability}")
        if not 0 <= self.magnitude <= 9:
            raise ValueError(f"magnitude level must be in 0..9, got {self.magnitude}")


@dataclass(frozen=True)
class AugmentPolicy:
    name: str
    sub_policies: tuple[tuple[AugmentOp, AugmentOp], ...]

    def __post_init__(self):
        if len(self.sub_policies) < 1:
            raise ValueError("policy needs at least one sub-policy")
        for sub in self.sub_policies:
            if len(sub) != 2:
                raise ValueError("each sub-policy must contain exactly 2 ops")


def apply_policy(img: ImageTensor, policy: AugmentPolicy, rng: SplitMix64) -> ImageTensor:
    sub = policy.sub_policies[rng.below(len(policy.sub_policies))]
    out = img
    for op in sub:
        fired = rng.chance(op.probability)
        if fired:
            out = ops.apply_op(out, op.kind, op.magnitude, rng)
    return out


def policy_from_dict(data: dict) -> AugmentPolicy:
    try:
        subs = tuple(
            tuple(AugmentOp(o["kind"], float(o["probability"]), int(o["magnitude"])) for o in sub)
            for sub in data["sub_policies"]
        )
        return AugmentPolicy(name=str(data["name"]), sub_policies=subs)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid policy: {exc}") from exc


def policy_to_dict(policy: AugmentPolicy) -> dict:
    return {
        "name": policy.name,
        "sub_policies": [
            [
                {"kind": o.kind, "probability": o.probability, "magnitude": o.magnitude}
                for o in sub
            ]
            for sub in policy.sub_policies
        ],
    }


def load_policy(path: str | Path) -> AugmentPolicy:
    with open(path, "r", encoding="utf-8") as fh:
        return policy_from_dict(json.load(fh))


def save_policy(policy: AugmentPolicy, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(policy_to_dict(policy), fh, indent=2)
        fh.write("\n")


def builtin_policy(name: str) -> AugmentPolicy:
    if name not in BUILTIN_POLICY_NAMES:
        raise ValueError(f"unknown builtin policy {name!r}; have {BUILTIN_POLICY_NAMES}")
    text = resources.files(__package__).joinpath(f"policies/{name.lower()}.json").read_text()
    return policy_from_dict(json.loads(text))


def builtin_policies() -> list[AugmentPolicy]:
    return [builtin_policy(name) for name in BUILTIN_POLICY_NAMES]
