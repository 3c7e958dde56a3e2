""" IDX (MNIST) reader and writer

Data format (big endian):
    images: u32 magic 0x00000803 | u32 count | u32 rows | u32 cols | u8 pixels, row-wise
    labels: u32 magic 0x00000801 | u32 count | u8 labels
"""
import logging
import struct
from typing import Optional, Tuple

import numpy as np

from ..core.exceptions import IdxFormatError
from ..models.data_models import Dataset

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MNIST_CLASSES = 10


def _read_u32(buffer: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(buffer):
        raise IdxFormatError(f"{path}: truncated at byte offset {len(buffer)}, "
                             f"header field needs bytes {offset}..{offset + 3}")
    return struct.unpack_from(">I", buffer, offset)[0]


def _read_payload(buffer: bytes, offset: int, size: int, path: str) -> np.ndarray:
    if offset + size > len(buffer):
        raise IdxFormatError(f"{path}: truncated at byte offset {len(buffer)}, "
                             f"expected {offset + size} bytes")
    return np.frombuffer(buffer, dtype=np.uint8, count=size, offset=offset)


def read_idx_images(path: str) -> np.ndarray:
    """ Returns (count, rows, cols) uint8 pixels """
    with open(path, "rb") as f:
        buffer = f.read()
    magic = _read_u32(buffer, 0, path)
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x} (image file)")
    count = _read_u32(buffer, 4, path)
    rows = _read_u32(buffer, 8, path)
    cols = _read_u32(buffer, 12, path)
    pixels = _read_payload(buffer, 16, count * rows * cols, path)
    return pixels.reshape(count, rows, cols)


def read_idx_labels(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        buffer = f.read()
    magic = _read_u32(buffer, 0, path)
    if magic != LABEL_MAGIC:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x} (label file)")
    count = _read_u32(buffer, 4, path)
    return _read_payload(buffer, 8, count, path)


def downscale(images: np.ndarray, factor: int = 2) -> np.ndarray:
    """ Average-pools (count, rows, cols) images by factor, e.g. 28x28 -> 14x14 """
    count, rows, cols = images.shape
    rows, cols = rows - rows % factor, cols - cols % factor
    trimmed = images[:, :rows, :cols]
    return trimmed.reshape(count, rows // factor, factor, cols // factor, factor).mean(axis=(2, 4))


def load_idx(images_path: str, labels_path: str, downscale_factor: Optional[int] = None,
             num_classes: int = MNIST_CLASSES) -> Dataset:
    """ Loads an IDX image/label pair into a Dataset with pixels scaled into [0, 1] """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    pixels = images.astype(np.float64) / 255.0
    if downscale_factor and downscale_factor > 1:
        pixels = downscale(pixels, downscale_factor)
    image_shape: Tuple[int, int] = (pixels.shape[1], pixels.shape[2])
    logger.info("loaded %d images of %dx%d from %s", pixels.shape[0], *image_shape, images_path)
    return Dataset(inputs=pixels.reshape(pixels.shape[0], -1),
                   labels=labels.astype(np.int64),
                   num_classes=num_classes,
                   image_shape=image_shape)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: str, labels_path: str) -> None:
    """ Writes uint8 images (count, rows, cols) and labels in IDX format """
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())
