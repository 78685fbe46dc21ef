"""The trainable projection head: three dense layers with ELU between them.

Hidden layers are twice the latent size; the output layer has no
activation so latent coordinates may go negative. Weights are stored as
(in, out) matrices applied as ``x @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..errors import NonFiniteError
from ..rng import SplitMix64


def elu(x):
    """ELU with alpha = 1: x for x > 0, else exp(x) - 1. Elementwise on arrays."""
    x = np.asarray(x)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    """Derivative of elu: 1 for x > 0, else exp(x)."""
    x = np.asarray(x)
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass
class HeadParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        fin, h1 = self.w1.shape
        if self.b1.shape != (h1,):
            raise ValueError("b1 shape mismatch")
        if self.w2.shape != (h1, h1) or self.b2.shape != (h1,):
            raise ValueError("layer 2 must map hidden -> hidden")
        h2, latent = self.w3.shape
        if h2 != h1 or self.b3.shape != (latent,):
            raise ValueError("layer 3 shape mismatch")
        if h1 != 2 * latent:
            raise ValueError(f"hidden width {h1} must be twice the latent size {latent}")

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def latent_size(self) -> int:
        return self.w3.shape[1]

    @property
    def dtype(self):
        return self.w1.dtype

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def copy(self) -> "HeadParams":
        return HeadParams(**{name: arr.copy() for name, arr in self.arrays()})

    def astype(self, dtype) -> "HeadParams":
        return HeadParams(**{name: arr.astype(dtype) for name, arr in self.arrays()})


def init_head(
    feature_dim: int, latent_size: int, rng: SplitMix64, dtype=np.float32
) -> HeadParams:
    """Uniform weights in +/-sqrt(1/fan_in), zero biases.

    Weight draws come from ``rng`` in a fixed order (w1, w2, w3, each
    row-major), so a seed pins the exact initialization.
    """
    hidden = 2 * latent_size

    def draw(fan_in: int, fan_out: int) -> np.ndarray:
        bound = (1.0 / fan_in) ** 0.5
        u = rng.fill_uniform(fan_in * fan_out).reshape(fan_in, fan_out)
        return ((2.0 * u - 1.0) * bound).astype(dtype)

    return HeadParams(
        w1=draw(feature_dim, hidden),
        b1=np.zeros(hidden, dtype=dtype),
        w2=draw(hidden, hidden),
        b2=np.zeros(hidden, dtype=dtype),
        w3=draw(hidden, latent_size),
        b3=np.zeros(latent_size, dtype=dtype),
    )


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} produced non-finite values")


def head_forward(params: HeadParams, features: np.ndarray) -> np.ndarray:
    """Map features to latent vectors; accepts a single vector or a batch."""
    single = features.ndim == 1
    x = np.atleast_2d(features)
    if x.shape[1] != params.feature_dim:
        raise ValueError(
            f"feature dim {x.shape[1]} does not match head input {params.feature_dim}"
        )
    z, _ = _forward_cached(params, x)
    return z[0] if single else z


def _forward_cached(params: HeadParams, x: np.ndarray):
    a1 = x @ params.w1 + params.b1
    _check_finite("head layer 1", a1)
    h1 = elu(a1)
    a2 = h1 @ params.w2 + params.b2
    _check_finite("head layer 2", a2)
    h2 = elu(a2)
    z = h2 @ params.w3 + params.b3
    _check_finite("head layer 3", z)
    return z, (x, a1, h1, a2, h2)


def head_backward(params: HeadParams, cache, dz: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given dL/dz; keys match HeadParams fields."""
    x, a1, h1, a2, h2 = cache
    gw3 = h2.T @ dz
    gb3 = dz.sum(axis=0)
    dh2 = dz @ params.w3.T
    da2 = dh2 * elu_grad(a2)
    gw2 = h1.T @ da2
    gb2 = da2.sum(axis=0)
    dh1 = da2 @ params.w2.T
    da1 = dh1 * elu_grad(a1)
    gw1 = x.T @ da1
    gb1 = da1.sum(axis=0)
    grads = {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2, "w3": gw3, "b3": gb3}
    for name, g in grads.items():
        _check_finite(f"gradient of {name}", g)
    return grads
