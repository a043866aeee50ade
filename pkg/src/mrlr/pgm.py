"""Binary PGM (P5) reading and writing.

Readers accept maxval up to 65535 (two-byte big-endian samples above 255)
and scale intensities into [0, 1].  The writer always emits 8-bit maxval-255
payloads with round-half-to-even quantization, so read-write round trips on
8-bit files are byte-identical.
"""

from __future__ import annotations

import numpy as np

from .errors import PgmFormatError
from .imageops import Image

__all__ = ["read_pgm", "write_pgm", "read_pgm_file", "write_pgm_file"]


def _read_header_tokens(data: bytes, count: int, pos: int):
    """Read whitespace/comment-separated ASCII integer tokens from a PNM header."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in (0x0A, 0x0D):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        tok = data[start:pos]
        if not tok or not tok.isdigit():
            raise PgmFormatError(f"malformed header token {tok!r}")
        tokens.append(int(tok))
    return tokens, pos


def read_pgm(data: bytes) -> Image:
    """Decode binary PGM bytes into an image with intensities in [0, 1]."""
    if len(data) < 2 or data[:2] != b"P5":
        magic = data[:2].decode("ascii", "replace") if len(data) >= 2 else ""
        raise PgmFormatError(f"unsupported magic {magic!r}; only binary P5 is accepted")
    (width, height, maxval), pos = _read_header_tokens(data, 3, 2)
    if width <= 0 or height <= 0:
        raise PgmFormatError(f"non-positive dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise PgmFormatError(f"maxval {maxval} out of range [1, 65535]")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise PgmFormatError("missing whitespace before raster")
    pos += 1
    count = width * height
    if maxval < 256:
        raster = data[pos : pos + count]
        if len(raster) != count or len(data) != pos + count:
            raise PgmFormatError("raster size does not match header")
        samples = np.frombuffer(raster, dtype=np.uint8)
    else:
        raster = data[pos : pos + 2 * count]
        if len(raster) != 2 * count or len(data) != pos + 2 * count:
            raise PgmFormatError("raster size does not match header")
        samples = np.frombuffer(raster, dtype=">u2")
    if samples.max(initial=0) > maxval:
        raise PgmFormatError("sample exceeds declared maxval")
    px = samples.astype(np.float64).reshape(height, width) / maxval
    return Image(px)


def write_pgm(img: Image) -> bytes:
    """Encode as 8-bit binary PGM (maxval 255, round half to even)."""
    px = np.clip(img.pixels, 0.0, 1.0)
    quant = np.rint(px * 255.0).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + quant.tobytes()


def read_pgm_file(path) -> Image:
    with open(path, "rb") as fh:
        return read_pgm(fh.read())


def write_pgm_file(img: Image, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_pgm(img))
