"""Procedurally generated pet identities for desk-scale experiments.

Each identity carries a distinct signature: a unique stripe orientation and
frequency, a two-color palette spaced around the hue wheel, and a low-res
block overlay. Images of one identity vary in size, stripe phase, rotation
jitter, and brightness, so same-pairs are non-trivial while identities stay
separable. All randomness flows through SplitMix64, so a seed pins the
corpus exactly.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .imaging import ImageTensor, save_png
from .rng import derive


def _hsv_to_rgb(h: float, s: float, v: float) -> np.ndarray:
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return np.array(rgb, dtype=np.float64) * 255.0


def identity_palette(index: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Two saturated colors, golden-angle spaced so identities stay distinct."""
    h1 = (index * 0.6180339887498949) % 1.0
    h2 = (h1 + 0.33) % 1.0
    return _hsv_to_rgb(h1, 0.95, 0.95), _hsv_to_rgb(h2, 0.9, 0.55)


def render_identity_image(
    identity: int,
    image: int,
    n_identities: int,
    seed: int,
    min_side: int = 200,
    max_side: int = 320,
) -> ImageTensor:
    """One image of one identity; deterministic in (seed, identity, image)."""
    rng = derive(seed, "identity", str(identity), "image", str(image))
    c1, c2 = identity_palette(identity, n_identities)
    angle = identity * math.pi / n_identities
    freq = 3.0 + (identity % 5)

    width = min_side + rng.below(max_side - min_side + 1)
    height = min_side + rng.below(max_side - min_side + 1)
    phase = rng.uniform() * 2.0 * math.pi
    jitter = (rng.uniform() - 0.5) * (math.pi / 18.0)
    brightness = 0.85 + 0.3 * rng.uniform()

    ys, xs = np.meshgrid(
        np.linspace(0.0, 1.0, height, endpoint=False),
        np.linspace(0.0, 1.0, width, endpoint=False),
        indexing="ij",
    )
    a = angle + jitter
    stripe = 0.5 + 0.5 * np.sin(
        2.0 * math.pi * freq * (xs * math.cos(a) + ys * math.sin(a)) + phase
    )

    # identity-specific 4x4 block overlay, bilinearly implied by repetition
    grid_rng = derive(seed, "identity", str(identity), "grid")
    grid = grid_rng.fill_uniform(16).reshape(4, 4)
    blocks = np.kron(grid, np.ones((height // 4 + 1, width // 4 + 1)))[:height, :width]

    weight = np.clip(0.65 * stripe + 0.35 * blocks, 0.0, 1.0)[:, :, None]
    base = weight * c1[None, None, :] + (1.0 - weight) * c2[None, None, :]

    noise = (rng.fill_uniform(height * width * 3).reshape(height, width, 3) - 0.5) * 16.0
    pixels = np.clip(base * brightness + noise, 0.0, 255.0)
    return ImageTensor(np.floor(pixels + 0.5).astype(np.uint8))


def generate_corpus_dir(
    out_dir: str | Path,
    identities: int = 32,
    images_per_identity: int = 4,
    seed: int = 0,
    min_side: int = 200,
    max_side: int = 320,
) -> Path:
    """Write pet_<i>/img_<j>.png source images; returns the directory."""
    out_dir = Path(out_dir)
    for identity in range(identities):
        pet_dir = out_dir / f"pet_{identity:03d}"
        pet_dir.mkdir(parents=True, exist_ok=True)
        for image in range(images_per_identity):
            img = render_identity_image(
                identity, image, identities, seed, min_side, max_side
            )
            save_png(img, pet_dir / f"img_{image}.png")
    return out_dir
