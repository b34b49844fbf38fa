"""Binary PGM (P5) and PPM (P6) image files.

Images travel as float64 in [0, 1] with channel-first shape (3, H, W); label
maps travel as integer (H, W) arrays. Writes quantize with round-half-up to
8 bits, so a load after a save returns exactly k/255 values and a second save
reproduces the first file byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DatasetError


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _read_header(blob: bytes, magic: bytes, where: str):
    """Parse 'P5'/'P6', width, height, maxval; returns data offset too."""
    pos = 0

    def token():
        nonlocal pos
        while pos < len(blob):
            c = blob[pos:pos + 1]
            if c == b"#":  # comment runs to end of line
                while pos < len(blob) and blob[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DatasetError(f"{where}: truncated header")
        return blob[start:pos]

    if token() != magic:
        raise DatasetError(f"{where}: expected {magic.decode()} file")
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ValueError as e:
        raise DatasetError(f"{where}: non-numeric header field") from e
    if w <= 0 or h <= 0:
        raise DatasetError(f"{where}: bad dimensions {w}x{h}")
    if maxval != 255:
        raise DatasetError(f"{where}: only maxval 255 is supported, got {maxval}")
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise DatasetError(f"{where}: missing whitespace before pixel data")
    return w, h, pos + 1


def ppm_bytes(img: np.ndarray) -> bytes:
    """Encode a (3, H, W) float image in [0, 1] as binary PPM bytes."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DatasetError(f"expected (3, H, W) image, got {img.shape}")
    _, h, w = img.shape
    data = _quantize(img).transpose(1, 2, 0)  # H, W, C interleaved
    return b"P6\n%d %d\n255\n" % (w, h) + data.tobytes()


def write_ppm(path, img: np.ndarray) -> None:
    """Write a (3, H, W) float image in [0, 1] as binary PPM."""
    Path(path).write_bytes(ppm_bytes(img))


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into a (3, H, W) float image in [0, 1]."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise DatasetError(f"cannot read {path}: {e}") from e
    w, h, off = _read_header(blob, b"P6", str(path))
    need = w * h * 3
    raw = blob[off:off + need]
    if len(raw) != need:
        raise DatasetError(f"{path}: expected {need} pixel bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def pgm_bytes(labels: np.ndarray) -> bytes:
    """Encode an integer (H, W) map with values in [0, 255] as binary PGM."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DatasetError(f"expected (H, W) label map, got {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise DatasetError("label values must fit in one byte")
    h, w = labels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + labels.astype(np.uint8).tobytes()


def write_pgm(path, labels: np.ndarray) -> None:
    """Write an integer (H, W) map with values in [0, 255] as binary PGM."""
    Path(path).write_bytes(pgm_bytes(labels))


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into an integer (H, W) array."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise DatasetError(f"cannot read {path}: {e}") from e
    w, h, off = _read_header(blob, b"P5", str(path))
    need = w * h
    raw = blob[off:off + need]
    if len(raw) != need:
        raise DatasetError(f"{path}: expected {need} pixel bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).astype(np.int64)
