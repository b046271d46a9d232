"""Synthetic manipulation forge: copy-move, splice and diffusion inpainting on numpy images.

Images are float32 RGB arrays of shape (H, W, 3) with values in [0, 1];
masks are uint8 arrays of shape (H, W) with values in {0, 1}.
"""
from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import ConfigurationError, GenerationError, InputError

KINDS = ("copy-move", "splice", "inpaint")

MIN_REGION_AREA = 16
MAX_PLACEMENT_TRIES = 16
INPAINT_MAX_ITERS = 200
INPAINT_TOL = 1e-5


@dataclass
class ManipulationSpec:
    """What to forge: a kind, a target region, and (for splices) a donor reference.

    region is either an axis-aligned rectangle (x, y, w, h) or a polygon
    given as an (K, 2) array of (x, y) vertices in pixel coordinates.
    """

    kind: str
    region: tuple[int, int, int, int] | np.ndarray
    donor: str | int | None = None


def region_mask(
    region: tuple[int, int, int, int] | np.ndarray, shape: tuple[int, int]
) -> np.ndarray:
    """Rasterize a region spec into a {0,1} uint8 mask, validating bounds and area."""
    h, w = shape
    mask = np.zeros((h, w), dtype=np.uint8)
    if isinstance(region, tuple) or (
        isinstance(region, (list, np.ndarray)) and np.asarray(region).ndim == 1
    ):
        x, y, rw, rh = (int(v) for v in region)
        if rw <= 0 or rh <= 0 or x < 0 or y < 0 or x + rw > w or y + rh > h:
            raise ConfigurationError(
                f"rectangle {(x, y, rw, rh)} does not fit inside image of size {(h, w)}"
            )
        mask[y : y + rh, x : x + rw] = 1
    else:
        pts = np.asarray(region, dtype=np.int64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ConfigurationError(f"polygon must be (K, 2) vertices, got {pts.shape}")
        if pts[:, 0].min() < 0 or pts[:, 1].min() < 0 or pts[:, 0].max() >= w or pts[:, 1].max() >= h:
            raise ConfigurationError("polygon vertices fall outside the image")
        cv2.fillPoly(mask, [pts.astype(np.int32)], 1)
    if int(mask.sum()) < MIN_REGION_AREA:
        raise ConfigurationError(
            f"region area {int(mask.sum())} is below the minimum of {MIN_REGION_AREA} pixels"
        )
    return mask


def _check_image(image: np.ndarray, name: str = "image") -> np.ndarray:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InputError(f"{name} must have shape (H, W, 3), got {image.shape}")
    return image


def _copy_move(
    image: np.ndarray, region: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    h, w = region.shape
    ys, xs = np.nonzero(region)
    y0, y1 = int(ys.min()), int(ys.max())
    x0, x1 = int(xs.min()), int(xs.max())
    for _ in range(MAX_PLACEMENT_TRIES):
        dy = int(rng.integers(-y0, h - 1 - y1 + 1))
        dx = int(rng.integers(-x0, w - 1 - x1 + 1))
        if dy == 0 and dx == 0:
            continue
        shifted = np.zeros_like(region)
        shifted[ys + dy, xs + dx] = 1
        if int((shifted & region).sum()) == 0:
            out = image.copy()
            out[ys + dy, xs + dx] = image[ys, xs]
            return out, shifted
    raise GenerationError(
        f"no non-overlapping destination found in {MAX_PLACEMENT_TRIES} tries"
    )


def _splice(
    image: np.ndarray, region: np.ndarray, donor: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    if donor.shape[:2] != image.shape[:2]:
        donor = cv2.resize(
            donor, (image.shape[1], image.shape[0]), interpolation=cv2.INTER_LINEAR
        )
    out = image.copy()
    sel = region > 0
    out[sel] = donor[sel]
    return out, region.copy()


def _neighbor_average(img: np.ndarray) -> np.ndarray:
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    return (
        padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
    ) / 4.0


def _inpaint(image: np.ndarray, region: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # float64 fill so a constant image is an exact fixed point after the cast back
    out = image.astype(np.float64)
    sel = region > 0
    ring = (cv2.dilate(region, np.ones((3, 3), np.uint8)) > 0) & ~sel
    seed = out[ring].mean(axis=0) if ring.any() else out.mean(axis=(0, 1))
    out[sel] = seed
    for _ in range(INPAINT_MAX_ITERS):
        prev = out[sel]
        out[sel] = _neighbor_average(out)[sel]
        if np.abs(out[sel] - prev).max() < INPAINT_TOL:
            break
    result = image.copy()
    result[sel] = out[sel].astype(np.float32)
    return result, region.copy()


def forge(
    spec: ManipulationSpec,
    source: np.ndarray,
    donor: np.ndarray | None = None,
    rng: np.random.Generator | int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Apply one manipulation to `source`; returns (forged image, destination mask)."""
    source = _check_image(source, "source")
    rng = np.random.default_rng(rng)
    region = region_mask(spec.region, source.shape[:2])
    if spec.kind == "copy-move":
        return _copy_move(source, region, rng)
    if spec.kind == "splice":
        if donor is None:
            raise ConfigurationError("splice requires a donor image")
        return _splice(source, region, _check_image(donor, "donor"))
    if spec.kind == "inpaint":
        return _inpaint(source, region)
    raise ConfigurationError(f"unknown manipulation kind {spec.kind!r}; expected one of {KINDS}")


def random_spec(
    rng: np.random.Generator,
    shape: tuple[int, int],
    kinds: tuple[str, ...] = KINDS,
    min_size: int = 16,
    max_size: int = 48,
    polygon_prob: float = 0.3,
) -> ManipulationSpec:
    """Draw a random manipulation spec that fits inside an image of `shape`."""
    h, w = shape
    kind = str(rng.choice(list(kinds)))
    # copy-move additionally needs room for a disjoint destination
    cap = min(h, w) // 3 if kind == "copy-move" else min(h, w) // 2
    max_size = max(min(max_size, cap), 4)
    min_size = min(min_size, max_size)
    rw = int(rng.integers(min_size, max_size + 1))
    rh = int(rng.integers(min_size, max_size + 1))
    x = int(rng.integers(0, w - rw + 1))
    y = int(rng.integers(0, h - rh + 1))
    if min(rw, rh) >= 8 and rng.random() < polygon_prob:
        # star-shaped polygon inscribed in the rectangle
        k = int(rng.integers(5, 9))
        angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=k))
        radii = rng.uniform(0.6, 1.0, size=k)
        cx, cy = x + rw / 2.0, y + rh / 2.0
        px = np.clip(cx + radii * (rw / 2.0 - 1) * np.cos(angles), 0, w - 1)
        py = np.clip(cy + radii * (rh / 2.0 - 1) * np.sin(angles), 0, h - 1)
        region: tuple[int, int, int, int] | np.ndarray = np.stack(
            [px, py], axis=1
        ).astype(np.int64)
    else:
        region = (x, y, rw, rh)
    return ManipulationSpec(kind=kind, region=region)


def _binary_neighborhood_op(mask: np.ndarray, op: str) -> np.ndarray:
    padded = np.pad(mask, 1, mode="constant", constant_values=0)
    views = [
        padded[dy : dy + mask.shape[0], dx : dx + mask.shape[1]]
        for dy in range(3)
        for dx in range(3)
    ]
    stacked = np.stack(views)
    return stacked.max(axis=0) if op == "dilate" else stacked.min(axis=0)


def edge_label_from_mask(mask: np.ndarray) -> np.ndarray:
    """Derive the quarter-resolution boundary label from a pixel mask.

    The mask is max-pooled 4x, then the morphological gradient (3x3 dilation
    minus 3x3 erosion, zero padding) marks the boundary band. An empty mask
    yields an empty label; a full-frame mask yields the one-pixel border.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise InputError(f"mask must be 2-D, got shape {mask.shape}")
    h, w = mask.shape
    if h % 4 != 0 or w % 4 != 0:
        raise InputError(f"mask dimensions must be divisible by 4, got {(h, w)}")
    binary = (mask > 0).astype(np.uint8)
    pooled = binary.reshape(h // 4, 4, w // 4, 4).max(axis=(1, 3))
    gradient = _binary_neighborhood_op(pooled, "dilate") - _binary_neighborhood_op(
        pooled, "erode"
    )
    return (gradient > 0).astype(np.uint8)


def synthesize_base_image(
    rng: np.random.Generator, size: int, noise_sigma: float | None = None
) -> np.ndarray:
    """Paint a random smooth scene with shapes plus per-image sensor-like noise.

    Each image gets its own noise level, so spliced content carries a noise
    statistic that differs from its destination.
    """
    gx = np.linspace(0.0, 1.0, size, dtype=np.float32)
    grad = np.outer(
        rng.uniform(0.2, 0.8) + rng.uniform(-0.3, 0.3) * gx,
        np.ones(size, dtype=np.float32),
    )
    if rng.random() < 0.5:
        grad = grad.T
    img = np.ascontiguousarray(
        np.stack([grad * rng.uniform(0.5, 1.0) for _ in range(3)], axis=2)
    )
    for _ in range(int(rng.integers(4, 10))):
        color = rng.uniform(0.0, 1.0, size=3).astype(np.float32)
        shape_kind = int(rng.integers(0, 3))
        if shape_kind == 0:
            x, y = int(rng.integers(0, size)), int(rng.integers(0, size))
            wdt, hgt = int(rng.integers(8, size // 2)), int(rng.integers(8, size // 2))
            cv2.rectangle(img, (x, y), (min(x + wdt, size - 1), min(y + hgt, size - 1)), color.tolist(), -1)
        elif shape_kind == 1:
            center = (int(rng.integers(0, size)), int(rng.integers(0, size)))
            cv2.circle(img, center, int(rng.integers(6, size // 3)), color.tolist(), -1)
        else:
            pts = rng.integers(0, size, size=(int(rng.integers(3, 7)), 2))
            cv2.fillPoly(img, [pts.astype(np.int32)], color.tolist())
    img = cv2.GaussianBlur(img, (0, 0), float(rng.uniform(0.8, 1.6)))
    sigma = float(rng.uniform(0.01, 0.05)) if noise_sigma is None else noise_sigma
    img = img + rng.normal(0.0, sigma, size=img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.0).astype(np.float32)
