"""Image file I/O: a bit-exact float32 raster format plus binary PGM previews.

Float raster layout: one ASCII header line ``IMGF32 <width> <height>\\n``
followed by width*height little-endian IEEE-754 float32 values, row-major.

PGM (P5) export maps [0, 1] linearly onto the integer range with
round-half-to-even; values outside [0, 1] are clamped first.  16-bit PGM
stores the most significant byte first, per the format.
"""

from __future__ import annotations

import numpy as np

from .forward import ImageGrid

_MAGIC = b"IMGF32"


def write_float_raster(image: ImageGrid, path) -> None:
    header = f"IMGF32 {image.width} {image.height}\n".encode("ascii")
    payload = image.data.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_float_raster(path) -> ImageGrid:
    with open(path, "rb") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 3 or parts[0] != _MAGIC:
            raise ValueError(f"not an IMGF32 file: {path}")
        width, height = int(parts[1]), int(parts[2])
        payload = fh.read(4 * width * height)
        if len(payload) != 4 * width * height:
            raise ValueError(f"truncated IMGF32 payload in {path}")
    data = np.frombuffer(payload, dtype="<f4").astype(float).reshape(height, width)
    return ImageGrid(data)


def write_pgm(image: ImageGrid, path, bits: int = 8) -> None:
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    maxval = (1 << bits) - 1
    clamped = np.clip(image.data, 0.0, 1.0)
    quantized = np.rint(clamped * maxval)
    if bits == 8:
        payload = quantized.astype(np.uint8).tobytes()
    else:
        payload = quantized.astype(">u2").tobytes()
    header = f"P5\n{image.width} {image.height}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def _read_pgm_tokens(fh, count):
    """Read whitespace-separated header tokens, skipping '#' comments."""
    tokens = []
    while len(tokens) < count:
        line = fh.readline()
        if not line:
            raise ValueError("unexpected end of PGM header")
        stripped = line.split(b"#", 1)[0]
        tokens.extend(stripped.split())
    return tokens[:count]


def read_pgm(path) -> ImageGrid:
    with open(path, "rb") as fh:
        magic, w, h, maxval = _read_pgm_tokens(fh, 4)
        if magic != b"P5":
            raise ValueError(f"not a binary PGM (P5) file: {path}")
        width, height, maxval = int(w), int(h), int(maxval)
        if maxval < 1 or maxval > 65535:
            raise ValueError(f"unsupported PGM maxval {maxval}")
        dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
        payload = fh.read(width * height * dtype.itemsize)
        raw = np.frombuffer(payload, dtype=dtype)
        if raw.size != width * height:
            raise ValueError(f"truncated PGM payload in {path}")
    data = raw.astype(float).reshape(height, width) / maxval
    return ImageGrid(data)
