"""Dataset plumbing: samples, manifests, ingestion, augmentation and forge emission.

Manifest format (line-oriented text, one entry per line):

    image_path,mask_path_or_AUTH,split

Relative paths are resolved against the manifest's directory. Masks are
single-channel PNGs; pixels > 127 count as manipulated. `AUTH` marks an
authentic image (all-zero mask).
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator

import cv2
import numpy as np

from .errors import ConfigurationError, GenerationError, InputError
from .forge import KINDS, edge_label_from_mask, forge, random_spec, synthesize_base_image

logger = logging.getLogger(__name__)

AUTHENTIC_TOKEN = "AUTH"
MASK_BINARIZE_THRESHOLD = 127  # of 255, for ingested grayscale masks


@dataclass
class Sample:
    """One training/evaluation record: image plus derived supervision targets."""

    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    mask: np.ndarray  # (H, W) uint8 in {0, 1}
    edge_label: np.ndarray  # (H/4, W/4) uint8 in {0, 1}
    image_label: int  # 1 iff the mask has at least one positive pixel
    path: str | None = None


def make_sample(image: np.ndarray, mask: np.ndarray, path: str | None = None) -> Sample:
    mask = (np.asarray(mask) > 0).astype(np.uint8)
    return Sample(
        image=np.asarray(image, dtype=np.float32),
        mask=mask,
        edge_label=edge_label_from_mask(mask),
        image_label=int(mask.max()) if mask.size else 0,
        path=path,
    )


# ---------------------------------------------------------------------------
# image file IO (RGB float32 in [0, 1] internally; cv2 speaks BGR uint8)


def load_image(path: str | Path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if raw is None:
        raise InputError(f"cannot read image {path}")
    return cv2.cvtColor(raw, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0


def save_image(path: str | Path, image: np.ndarray) -> None:
    bgr = cv2.cvtColor(
        (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8), cv2.COLOR_RGB2BGR
    )
    if not cv2.imwrite(str(path), bgr):
        raise OSError(f"cannot write image {path}")


def load_mask(path: str | Path) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise InputError(f"cannot read mask {path}")
    return (raw > MASK_BINARIZE_THRESHOLD).astype(np.uint8)


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    if not cv2.imwrite(str(path), (np.asarray(mask) > 0).astype(np.uint8) * 255):
        raise OSError(f"cannot write mask {path}")


# ---------------------------------------------------------------------------
# manifests


@dataclass
class ManifestEntry:
    image_path: str
    mask_path: str | None  # None marks an authentic image
    split: str

    @property
    def authentic(self) -> bool:
        return self.mask_path is None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = field(default_factory=Path)

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        entries = []
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected 'image,mask_or_{AUTHENTIC_TOKEN},split', got {line!r}"
                )
            image_path, mask_path, split = (p.strip() for p in parts)
            entries.append(
                ManifestEntry(
                    image_path=image_path,
                    mask_path=None if mask_path == AUTHENTIC_TOKEN else mask_path,
                    split=split,
                )
            )
        return cls(entries=entries, root=path.parent)

    def save(self, path: str | Path) -> None:
        lines = [
            f"{e.image_path},{e.mask_path if e.mask_path is not None else AUTHENTIC_TOKEN},{e.split}"
            for e in self.entries
        ]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

    def filter_split(self, split: str) -> "DatasetManifest":
        return DatasetManifest(
            entries=[e for e in self.entries if e.split == split], root=self.root
        )

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p


@dataclass
class IngestError:
    path: str
    reason: str


def _resize_pair(
    image: np.ndarray, mask: np.ndarray, size: int
) -> tuple[np.ndarray, np.ndarray]:
    image = cv2.resize(image, (size, size), interpolation=cv2.INTER_LINEAR)
    mask = cv2.resize(mask, (size, size), interpolation=cv2.INTER_NEAREST)
    return image, mask


def load_entry(manifest: DatasetManifest, entry: ManifestEntry, size: int | None = None) -> Sample:
    """Load one manifest entry; raises on missing/corrupt files or size mismatches."""
    image_path = manifest.resolve(entry.image_path)
    image = load_image(image_path)
    if entry.authentic:
        mask = np.zeros(image.shape[:2], dtype=np.uint8)
    else:
        mask = load_mask(manifest.resolve(entry.mask_path))
        if mask.shape != image.shape[:2]:
            raise InputError(
                f"mask size {mask.shape} does not match image size {image.shape[:2]}"
            )
    if size is not None:
        image, mask = _resize_pair(image, mask, size)
    return make_sample(image, mask, path=str(image_path))


def iter_samples(
    manifest: DatasetManifest,
    size: int | None = None,
    error_sink: list[IngestError] | None = None,
) -> Iterator[Sample]:
    """Yield samples in manifest order; per-entry failures are recorded and skipped.

    When `size` is given, images and masks are resized to (size, size) before
    labels are derived, so the edge label lives on the stride-4 grid of the
    resized image.
    """
    for entry in manifest.entries:
        try:
            yield load_entry(manifest, entry, size=size)
        except Exception as exc:  # noqa: BLE001 - per-entry fault isolation
            image_path = manifest.resolve(entry.image_path)
            logger.warning("skipping %s: %s", image_path, exc)
            if error_sink is not None:
                error_sink.append(IngestError(path=str(image_path), reason=str(exc)))


def load_samples(
    manifest: DatasetManifest,
    size: int | None = None,
    error_sink: list[IngestError] | None = None,
) -> list[Sample]:
    return list(iter_samples(manifest, size=size, error_sink=error_sink))


# ---------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class AugmentOps:
    """A fully specified augmentation to apply to one sample."""

    flip: str | None = None  # "h" | "v" | None
    blur_sigma: float = 0.0
    jpeg_quality: int | None = None


@dataclass(frozen=True)
class AugmentPolicy:
    """Probabilities and ranges from which per-sample AugmentOps are drawn."""

    flip_prob: float = 0.5
    blur_prob: float = 0.2
    blur_sigma_max: float = 3.0
    jpeg_prob: float = 0.2
    jpeg_quality_min: int = 50
    jpeg_quality_max: int = 100

    def draw(self, rng: np.random.Generator) -> AugmentOps:
        flip = None
        if rng.random() < self.flip_prob:
            flip = "h" if rng.random() < 0.5 else "v"
        sigma = 0.0
        if rng.random() < self.blur_prob:
            sigma = float(rng.uniform(0.0, self.blur_sigma_max))
        quality = None
        if rng.random() < self.jpeg_prob:
            quality = int(rng.integers(self.jpeg_quality_min, self.jpeg_quality_max + 1))
        return AugmentOps(flip=flip, blur_sigma=sigma, jpeg_quality=quality)


def apply_jpeg(image: np.ndarray, quality: int) -> np.ndarray:
    """JPEG-compress and decode an RGB float image at the given quality."""
    if not 1 <= int(quality) <= 100:
        raise ConfigurationError(f"JPEG quality must be in [1, 100], got {quality}")
    bgr = cv2.cvtColor(
        (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8), cv2.COLOR_RGB2BGR
    )
    ok, encoded = cv2.imencode(".jpg", bgr, [cv2.IMWRITE_JPEG_QUALITY, int(quality)])
    if not ok:
        raise InputError("JPEG encoding failed")
    decoded = cv2.imdecode(encoded, cv2.IMREAD_COLOR)
    return cv2.cvtColor(decoded, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0


def apply_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur; sigma 0 is the identity."""
    if sigma < 0:
        raise ConfigurationError(f"blur sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return image
    return cv2.GaussianBlur(image, (0, 0), sigma)


def augment(sample: Sample, ops: AugmentOps) -> Sample:
    """Apply augmentations; geometric ops move the labels, photometric ops do not."""
    image, mask, edge = sample.image, sample.mask, sample.edge_label
    if ops.flip is not None:
        if ops.flip not in ("h", "v"):
            raise ConfigurationError(f"flip must be 'h' or 'v', got {ops.flip!r}")
        axis = 1 if ops.flip == "h" else 0
        image = np.flip(image, axis=axis).copy()
        mask = np.flip(mask, axis=axis).copy()
        edge = np.flip(edge, axis=axis).copy()
    if ops.blur_sigma:
        image = apply_blur(image, ops.blur_sigma)
    if ops.jpeg_quality is not None:
        image = apply_jpeg(image, ops.jpeg_quality)
    return replace(sample, image=image, mask=mask, edge_label=edge)


# ---------------------------------------------------------------------------
# deterministic, optionally parallel batch loading


def num_workers_from_env() -> int:
    raw = os.environ.get("MVSS_NUM_WORKERS", "0")
    try:
        return max(0, int(raw))
    except ValueError:
        logger.warning("ignoring invalid MVSS_NUM_WORKERS=%r", raw)
        return 0


def map_ordered(fn: Callable, items: list, workers: int | None = None) -> list:
    """Order-preserving map, threaded when workers > 1; output independent of worker count."""
    if workers is None:
        workers = num_workers_from_env()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# forged dataset emission


def generate_dataset(
    out_dir: str | Path,
    count: int,
    authentic_count: int = 0,
    size: int = 128,
    kinds: tuple[str, ...] = KINDS,
    split: str = "train",
    seed: int = 0,
    min_region: int = 16,
    max_region: int = 48,
) -> Path:
    """Emit a forged dataset tree and return the path of its manifest.

    Layout: images/ and masks/ subdirectories, manifest.txt listing every
    entry, and gen_params.txt recording the generation parameters.
    Forged files are named <kind>_<index>.png so that per-kind subsets can be
    selected by filename.
    """
    if count < 0 or authentic_count < 0:
        raise ConfigurationError("counts must be non-negative")
    unknown = set(kinds) - set(KINDS)
    if unknown:
        raise ConfigurationError(f"unknown manipulation kinds: {sorted(unknown)}")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries: list[ManifestEntry] = []
    for i in range(count):
        source = synthesize_base_image(rng, size)
        for _ in range(32):  # redraw specs whose placement fails
            spec = random_spec(
                rng, (size, size), kinds=kinds, min_size=min_region, max_size=max_region
            )
            donor = synthesize_base_image(rng, size) if spec.kind == "splice" else None
            try:
                forged, mask = forge(spec, source, donor=donor, rng=rng)
                break
            except GenerationError:
                continue
        else:
            raise GenerationError(f"could not place a manipulation for entry {i}")
        kind_tag = spec.kind.replace("-", "")
        image_rel = f"images/{kind_tag}_{i:05d}.png"
        mask_rel = f"masks/{kind_tag}_{i:05d}.png"
        save_image(out_dir / image_rel, forged)
        save_mask(out_dir / mask_rel, mask)
        entries.append(ManifestEntry(image_rel, mask_rel, split))
    for i in range(authentic_count):
        image_rel = f"images/auth_{i:05d}.png"
        save_image(out_dir / image_rel, synthesize_base_image(rng, size))
        entries.append(ManifestEntry(image_rel, None, split))
    manifest = DatasetManifest(entries=entries, root=out_dir)
    manifest_path = out_dir / "manifest.txt"
    manifest.save(manifest_path)
    params = {
        "count": count,
        "authentic_count": authentic_count,
        "size": size,
        "kinds": ",".join(kinds),
        "split": split,
        "seed": seed,
        "min_region": min_region,
        "max_region": max_region,
    }
    (out_dir / "gen_params.txt").write_text(
        "".join(f"{k}={v}\n" for k, v in params.items())
    )
    return manifest_path
