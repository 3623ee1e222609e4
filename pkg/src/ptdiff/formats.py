"""Bit-exact file formats: PTT1 raw tensors and P5 (binary) PGM images.

PTT1 layout: magic ``PTT1`` | u32 LE rank | rank * u32 LE dims |
row-major little-endian float32 payload. Trivially parseable from any
language and byte-stable for reproducibility tests.
"""

import struct

import numpy as np

from .errors import DataError

PTT1_MAGIC = b"PTT1"


def write_ptt(path, arr):
    """Write an array as a PTT1 file (converted to float32)."""
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(PTT1_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def read_ptt(path):
    """Read a PTT1 file into a float32 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != PTT1_MAGIC:
        raise DataError(f"{path}: bad magic {data[:4]!r}, expected {PTT1_MAGIC!r}")
    (rank,) = struct.unpack_from("<I", data, 4)
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    offset = 8 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    expected = offset + 4 * count
    if len(data) != expected:
        raise DataError(f"{path}: expected {expected} bytes, got {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    return arr.reshape(dims).astype(np.float32)


def write_pgm(path, image):
    """Write a grayscale image (H, W) of [0, 1] reals as binary PGM, maxval 255."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise DataError(f"PGM output must be 2-D grayscale, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise DataError("PGM output contains non-finite values")
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes(order="C"))


def read_pgm(path):
    """Read a binary (P5) PGM with maxval 255 into an (H, W) array in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise DataError(f"{path}: not a P5 PGM (magic {data[:2]!r})")

    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments running to end of line.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval

    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 supported, got {maxval}")
    if len(data) - pos < w * h:
        raise DataError(f"{path}: expected {w * h} pixel bytes, got {len(data) - pos}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return pixels.reshape(h, w).astype(np.float64) / 255.0
