"""Linear radiance images and the two file formats the tool writes.

PPM output is 8-bit with a display gamma applied; PFM keeps the raw
linear float values (little-endian, bottom row first, as readers
expect). PFM files round-trip through :func:`read_pfm` exactly at
float32 precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = ["Image", "write_ppm", "write_pfm", "read_pfm"]


@dataclass(frozen=True)
class Image:
    """Rectangle of linear RGB radiance, row-major, top row first."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if vals.shape != (self.height, self.width, 3):
            raise ValueError(
                f"values shape {vals.shape} does not match "
                f"{(self.height, self.width, 3)}"
            )
        if not np.isfinite(vals).all():
            raise ValueError("image values must be finite")
        if vals.min() < 0.0:
            raise ValueError("image values must be nonnegative")
        object.__setattr__(self, "values", vals)

    @property
    def mean(self) -> float:
        return float(self.values.mean())


def write_ppm(path, image: Image, display_gamma: float = 2.2,
              comments: Sequence[str] = ()) -> None:
    """Write an 8-bit binary PPM, clipping to [0, 1] before encoding.

    ``comments`` become ``#`` lines between the magic and the size,
    where the format allows them.
    """
    if display_gamma <= 0.0:
        raise ValueError("display gamma must be positive")
    for line in comments:
        if "\n" in line:
            raise ValueError("comment lines cannot contain newlines")
    encoded = np.clip(image.values, 0.0, 1.0) ** (1.0 / display_gamma)
    quantized = (encoded * 255.0 + 0.5).astype(np.uint8)
    noted = "".join(f"# {line}\n" for line in comments)
    header = f"P6\n{noted}{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + quantized.tobytes())


def write_pfm(path, image: Image) -> None:
    """Write a little-endian color PFM with the full linear values."""
    header = f"PF\n{image.width} {image.height}\n-1.0\n".encode("ascii")
    rows = image.values[::-1].astype("<f4")
    Path(path).write_bytes(header + rows.tobytes())


def read_pfm(path) -> Image:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"PF":
        raise ValueError(f"{path}: not a color PFM file")
    try:
        width, height = (int(tok) for tok in parts[1].split())
        scale = float(parts[2])
    except ValueError:
        raise ValueError(f"{path}: malformed PFM header") from None
    if scale >= 0.0:
        raise ValueError(f"{path}: big-endian PFM is not supported")
    count = width * height * 3
    payload = parts[3][: 4 * count]
    if len(payload) != 4 * count:
        raise ValueError(f"{path}: truncated PFM payload")
    vals = np.frombuffer(payload, dtype="<f4").reshape(height, width, 3)
    return Image(width, height, vals[::-1].astype(np.float64))
