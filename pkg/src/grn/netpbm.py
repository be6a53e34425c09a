"""Binary PPM (P6) and PGM (P5) readers/writers, bit-exact round trips."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an [H,W,3] uint8 array as binary PPM, maxval 255."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise DataError(f"write_ppm needs [H,W,3] uint8, got {rgb.shape} {rgb.dtype}")
    h, w = rgb.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes())


def write_pgm(path, gray: np.ndarray) -> None:
    """Write an [H,W] uint8 array as binary PGM, maxval 255."""
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise DataError(f"write_pgm needs [H,W] uint8, got {gray.shape} {gray.dtype}")
    h, w = gray.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + gray.tobytes())


def _parse_header(blob: bytes, magic: bytes, path) -> tuple[int, int, int]:
    """Returns (width, height, offset of raster)."""
    if not blob.startswith(magic):
        raise DataError(f"{path}: expected {magic.decode()} file")
    fields: list[int] = []
    at = 2
    while len(fields) < 3:
        # skip whitespace and comments
        while at < len(blob) and blob[at:at + 1].isspace():
            at += 1
        if at < len(blob) and blob[at:at + 1] == b"#":
            while at < len(blob) and blob[at] != 0x0A:
                at += 1
            continue
        start = at
        while at < len(blob) and not blob[at:at + 1].isspace():
            at += 1
        if start == at:
            raise DataError(f"{path}: truncated header")
        fields.append(int(blob[start:at]))
    if fields[2] != 255:
        raise DataError(f"{path}: only maxval 255 is supported, got {fields[2]}")
    return fields[0], fields[1], at + 1


def read_ppm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    w, h, at = _parse_header(blob, b"P6", path)
    need = w * h * 3
    raster = blob[at:at + need]
    if len(raster) != need:
        raise DataError(f"{path}: raster has {len(raster)} bytes, expected {need}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def read_pgm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    w, h, at = _parse_header(blob, b"P5", path)
    need = w * h
    raster = blob[at:at + need]
    if len(raster) != need:
        raise DataError(f"{path}: raster has {len(raster)} bytes, expected {need}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()
