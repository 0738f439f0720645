"""Synthetic blob images: a stand-in corpus with exact localisation masks.

Each image is split into four quadrants, one class per quadrant (0 top-left,
1 top-right, 2 bottom-left, 3 bottom-right). A class is positive when its
quadrant contains a bright axis-aligned rectangle, and that rectangle's
pixels form the class's ground-truth mask.

Each class's rectangle also carries dark stripes at its own orientation
(horizontal, vertical, diagonal, anti-diagonal). Convolutional features are
translation-equivariant, so without this a position-pooled network has no
per-channel signal telling the classes apart, and Grad-CAM cannot
separate co-occurring blobs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError

NUM_CLASSES = 4
CLASS_NAMES = ("top_left", "top_right", "bottom_left", "bottom_right")
STRIPE_PERIOD = 3


@dataclass
class BlobDataset:
    images_u8: np.ndarray  # (n, H, W) uint8
    labels: np.ndarray  # (n, 4) int64 in {0,1}
    masks: np.ndarray  # (n, 4, H, W) uint8 in {0,1}
    boxes: np.ndarray  # (n, 4, 4) int64 (top, left, height, width); zeros when absent

    def __len__(self):
        return len(self.labels)

    @property
    def areas(self) -> np.ndarray:
        return self.boxes[..., 2] * self.boxes[..., 3]

    def images(self, channels: int = 1) -> np.ndarray:
        """Float images in [0,1], shape (n, channels, H, W)."""
        return to_model_input(self.images_u8, channels)


def to_model_input(images_u8: np.ndarray, channels: int = 1) -> np.ndarray:
    """Map 8-bit gray to [0,1] and replicate across ``channels``."""
    x = np.asarray(images_u8, dtype=np.float64) / 255.0
    if x.ndim == 2:
        return np.repeat(x[None], channels, axis=0)
    return np.repeat(x[:, None], channels, axis=1)


def generate_blob_dataset(
    n: int,
    image_size: int = 32,
    seed: int = 0,
    blob_prob: float = 0.5,
    noise: float = 10.0,
    stripe_depth: float = 120.0,
) -> BlobDataset:
    """Draw ``n`` images of side ``image_size``.

    Every quadrant independently holds a blob with probability
    ``blob_prob``. Background gray level is about 40 with Gaussian noise of
    std ``noise`` (in 8-bit units); blobs are 190-250 with every third
    line (in the class's stripe orientation) darkened by ``stripe_depth``.
    """
    if image_size < 8:
        raise DataError(f"image_size must be >= 8, got {image_size}")
    if n < 0:
        raise DataError(f"n must be >= 0, got {n}")
    rng = np.random.default_rng(seed)
    half = image_size // 2
    origins = [(0, 0), (0, half), (half, 0), (half, half)]
    extents = [(half, half), (half, image_size - half), (image_size - half, half), (image_size - half, image_size - half)]
    lo = max(2, (3 * half) // 8)
    hi = max(lo, (3 * half) // 4)

    images = np.zeros((n, image_size, image_size), dtype=np.uint8)
    labels = np.zeros((n, NUM_CLASSES), dtype=np.int64)
    masks = np.zeros((n, NUM_CLASSES, image_size, image_size), dtype=np.uint8)
    boxes = np.zeros((n, NUM_CLASSES, 4), dtype=np.int64)
    for i in range(n):
        img = 40.0 + noise * rng.standard_normal((image_size, image_size))
        present = rng.random(NUM_CLASSES) < blob_prob
        for c in range(NUM_CLASSES):
            if not present[c]:
                continue
            (oy, ox), (qh, qw) = origins[c], extents[c]
            h = int(rng.integers(lo, min(hi, qh - 1) + 1))
            w = int(rng.integers(lo, min(hi, qw - 1) + 1))
            # keep a one-pixel margin inside the quadrant
            top = oy + int(rng.integers(1, qh - h + 1))
            left = ox + int(rng.integers(1, qw - w + 1))
            top = min(top, oy + qh - h)
            left = min(left, ox + qw - w)
            level = rng.uniform(190.0, 250.0)
            patch = level - stripe_depth * stripes(c, h, w) + noise * rng.standard_normal((h, w))
            img[top : top + h, left : left + w] = patch
            masks[i, c, top : top + h, left : left + w] = 1
            labels[i, c] = 1
            boxes[i, c] = (top, left, h, w)
        images[i] = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return BlobDataset(images, labels, masks, boxes)


def stripes(class_index: int, h: int, w: int) -> np.ndarray:
    """0/1 pattern marking the dark lines of a class's rectangle."""
    yy, xx = np.mgrid[0:h, 0:w]
    phase = (yy, xx, xx + yy, xx - yy)[class_index]
    return (phase % STRIPE_PERIOD == 0).astype(np.float64)
