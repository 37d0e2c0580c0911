"""Image ingestion, class balancing, and split planning for the fish dataset.

The expected on-disk layout is one subdirectory per class under a root
directory, holding PNG/JPEG files.  Images are squashed (no aspect-ratio
preservation) to the network input size with bilinear interpolation and
scaled to [0, 1].

The training protocol built from these pieces:

1. ``holdout_split``          -- remove a balanced evaluation set (150 images
   by default, uneven per class) before anything else.
2. ``balance_by_replication`` -- replicate scarce classes cyclically up to a
   common target count (400 by default); larger classes are untouched.
3. ``kfold_split``            -- stratified 5-fold assignment of the balanced
   entries, recorded in a ``SplitPlan`` that serializes to JSON so an
   experiment can be reproduced exactly.

Every randomized step is a pure function of (input, seed).
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

FISH_CLASSES: tuple[str, ...] = (
    "ALB", "BET", "DOL", "LAG", "NoF", "Outros", "Shark", "YFT",
)

# Per-class sizes of the default 150-image holdout, in FISH_CLASSES order.
DEFAULT_HOLDOUT_COUNTS: tuple[int, ...] = (25, 20, 15, 10, 20, 20, 20, 20)

DEFAULT_BALANCE_TARGET = 400

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass(eq=False)
class LabeledImage:
    """A C*H*W float tensor in [0, 1] with its class index and a stable id."""

    pixels: np.ndarray
    label: int
    source_id: str

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[0] != 3:
            raise ValueError(f"pixels must be 3xHxW, got {self.pixels.shape}")
        if not 0 <= self.label < len(FISH_CLASSES):
            raise ValueError(f"label must be in [0, {len(FISH_CLASSES)}), got {self.label}")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel values must lie in [0, 1], got [{lo}, {hi}]")


@dataclass
class ClassTable:
    names: tuple[str, ...]
    counts: list[int]

    def __post_init__(self) -> None:
        if len(self.names) != len(self.counts):
            raise ValueError("one count per class name required")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return sum(self.counts)


def resize_image(raw: np.ndarray, size: tuple[int, int] = (48, 48)) -> np.ndarray:
    """Squash an H*W*3 image (0..255) to 3*out_h*out_w floats in [0, 1].

    Bilinear interpolation over pixel centers (half-pixel convention) with
    edge clamping; aspect ratio is intentionally not preserved.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise ValueError(f"raw image must be HxWx3, got {raw.shape}")
    h_in, w_in = raw.shape[:2]
    if h_in < 1 or w_in < 1:
        raise ValueError("image must have positive dimensions")
    out_h, out_w = size

    def axis_coords(n_in: int, n_out: int):
        centers = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(centers)
        frac = centers - lo
        i0 = np.clip(lo, 0, n_in - 1).astype(np.int64)
        i1 = np.clip(lo + 1, 0, n_in - 1).astype(np.int64)
        return i0, i1, frac

    y0, y1, fy = axis_coords(h_in, out_h)
    x0, x1, fx = axis_coords(w_in, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = raw[y0][:, x0] * (1 - fx) + raw[y0][:, x1] * fx
    bottom = raw[y1][:, x0] * (1 - fx) + raw[y1][:, x1] * fx
    blended = top * (1 - fy) + bottom * fy
    return np.ascontiguousarray(blended.transpose(2, 0, 1) / 255.0)


def decode_image(path) -> np.ndarray:
    """Decode a PNG/JPEG file to an H*W*3 uint8 array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise ValueError(f"cannot decode image file: {path}") from exc


def load_dataset(
    root, size: int = 48, classes: tuple[str, ...] = FISH_CLASSES
) -> tuple[list[LabeledImage], ClassTable]:
    """Load a directory-per-class image tree in deterministic (sorted) order."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    known = set(classes)
    for sub in sorted(root.iterdir()):
        if sub.is_dir() and sub.name not in known:
            log.warning("skipping unknown class directory: %s", sub)
    images: list[LabeledImage] = []
    counts: list[int] = []
    for label, name in enumerate(classes):
        class_dir = root / name
        n = 0
        if class_dir.is_dir():
            for path in sorted(class_dir.iterdir()):
                if not path.is_file() or path.suffix.lower() not in _IMAGE_SUFFIXES:
                    continue
                pixels = resize_image(decode_image(path), (size, size))
                images.append(LabeledImage(pixels, label, f"{name}/{path.name}"))
                n += 1
        counts.append(n)
    return images, ClassTable(tuple(classes), counts)


def _by_class(dataset: list[LabeledImage], n_classes: int) -> list[list[LabeledImage]]:
    groups: list[list[LabeledImage]] = [[] for _ in range(n_classes)]
    for img in dataset:
        groups[img.label].append(img)
    return groups


def holdout_split(
    dataset: list[LabeledImage],
    per_class_counts=DEFAULT_HOLDOUT_COUNTS,
    seed: int = 0,
    classes: tuple[str, ...] = FISH_CLASSES,
) -> tuple[list[LabeledImage], list[LabeledImage]]:
    """Seeded per-class sampling without replacement; returns (holdout, remainder)."""
    if len(per_class_counts) != len(classes):
        raise ValueError("need one holdout count per class")
    rng = np.random.default_rng(seed)
    groups = _by_class(dataset, len(classes))
    chosen: set[str] = set()
    for label, need in enumerate(per_class_counts):
        avail = groups[label]
        if need > len(avail):
            raise ValueError(
                f"holdout wants {need} images of class {classes[label]}, "
                f"only {len(avail)} available"
            )
        if need:
            picks = rng.choice(len(avail), size=need, replace=False)
            chosen.update(avail[i].source_id for i in picks)
    holdout = [img for img in dataset if img.source_id in chosen]
    remainder = [img for img in dataset if img.source_id not in chosen]
    return holdout, remainder


def balance_by_replication(
    remainder: list[LabeledImage],
    target: int = DEFAULT_BALANCE_TARGET,
    classes: tuple[str, ...] = FISH_CLASSES,
) -> list[LabeledImage]:
    """Replicate classes below `target` cyclically (whole copies, then truncate).

    Classes at or above the target pass through untouched.  Replicated entries
    reference the original objects; no pixel data is copied or fabricated.
    """
    if target < 1:
        raise ValueError(f"target must be >= 1, got {target}")
    groups = _by_class(remainder, len(classes))
    balanced: list[LabeledImage] = []
    for label, entries in enumerate(groups):
        if not entries:
            raise ValueError(
                f"class {classes[label]} has no samples to replicate to {target}"
            )
        if len(entries) < target:
            copies = -(-target // len(entries))
            balanced.extend((entries * copies)[:target])
        else:
            balanced.extend(entries)
    return balanced


@dataclass
class SplitPlan:
    """Reproducible record of the holdout, replication, and fold assignment."""

    class_names: tuple[str, ...]
    seed: int
    k: int
    holdout_ids: dict[str, list[str]]
    entries: list[str]
    folds: list[int]

    def __post_init__(self) -> None:
        if len(self.entries) != len(self.folds):
            raise ValueError("one fold id per entry required")
        if self.folds and not all(0 <= f < self.k for f in self.folds):
            raise ValueError(f"fold ids must lie in [0, {self.k})")
        held = {sid for ids in self.holdout_ids.values() for sid in ids}
        if held & set(self.entries):
            raise ValueError("holdout and training entries must be disjoint")

    @property
    def multiplicity(self) -> dict[str, int]:
        return dict(Counter(self.entries))

    def to_json(self) -> str:
        return json.dumps(
            {
                "class_names": list(self.class_names),
                "seed": self.seed,
                "k": self.k,
                "holdout_ids": self.holdout_ids,
                "entries": self.entries,
                "folds": self.folds,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        d = json.loads(text)
        return cls(
            class_names=tuple(d["class_names"]),
            seed=int(d["seed"]),
            k=int(d["k"]),
            holdout_ids={k: list(v) for k, v in d["holdout_ids"].items()},
            entries=list(d["entries"]),
            folds=[int(f) for f in d["folds"]],
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SplitPlan":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def kfold_split(
    balanced: list[LabeledImage],
    k: int = 5,
    seed: int = 0,
    holdout: list[LabeledImage] | None = None,
    classes: tuple[str, ...] = FISH_CLASSES,
) -> SplitPlan:
    """Stratified fold assignment: shuffle each class, deal round-robin into k folds."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(balanced), dtype=np.int64)
    positions: list[list[int]] = [[] for _ in range(len(classes))]
    for pos, img in enumerate(balanced):
        positions[img.label].append(pos)
    for label, pos_list in enumerate(positions):
        if 0 < len(pos_list) < k:
            raise ValueError(
                f"class {classes[label]} has {len(pos_list)} samples, fewer than k={k}"
            )
        perm = rng.permutation(len(pos_list))
        for deal, which in enumerate(perm):
            folds[pos_list[which]] = deal % k
    holdout_ids: dict[str, list[str]] = {name: [] for name in classes}
    for img in holdout or []:
        holdout_ids[classes[img.label]].append(img.source_id)
    return SplitPlan(
        class_names=tuple(classes),
        seed=seed,
        k=k,
        holdout_ids=holdout_ids,
        entries=[img.source_id for img in balanced],
        folds=[int(f) for f in folds],
    )


def build_split_plan(
    dataset: list[LabeledImage],
    seed: int = 0,
    holdout_counts=DEFAULT_HOLDOUT_COUNTS,
    target: int = DEFAULT_BALANCE_TARGET,
    k: int = 5,
    classes: tuple[str, ...] = FISH_CLASSES,
) -> SplitPlan:
    """Holdout, balance, and fold a dataset in one deterministic pass."""
    holdout, remainder = holdout_split(dataset, holdout_counts, seed, classes)
    balanced = balance_by_replication(remainder, target, classes)
    return kfold_split(balanced, k, seed, holdout, classes)


# corners of the RGB cube: eight maximally separated solid colors
_SOLID_PALETTE = (
    (0.1, 0.1, 0.1), (0.9, 0.1, 0.1), (0.1, 0.9, 0.1), (0.1, 0.1, 0.9),
    (0.9, 0.9, 0.1), (0.9, 0.1, 0.9), (0.1, 0.9, 0.9), (0.9, 0.9, 0.9),
)


def solid_color_dataset(
    per_class: int,
    size: int = 48,
    classes: tuple[str, ...] = FISH_CLASSES,
) -> list[LabeledImage]:
    """Synthetic trivially-separable dataset: each class one solid RGB color.

    Colors sit at the corners of the RGB cube, so any two classes are far
    apart; useful for smoke tests and convergence checks.
    """
    images = []
    for label, name in enumerate(classes):
        # one shared pixel buffer per class; entries are never mutated
        base = np.ones((3, size, size)) * np.asarray(_SOLID_PALETTE[label])[:, None, None]
        for i in range(per_class):
            images.append(LabeledImage(base, label, f"{name}/synth_{i:05d}"))
    return images
