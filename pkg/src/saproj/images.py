"""Grayscale image files and synthetic test patterns.

Images in memory are float arrays in [0, 1]; quantisation to 8 or 16 bits
happens only here.  8-bit PNG goes through Pillow.  16-bit PNG with one or
two channels uses a small zlib writer/reader because Pillow has no
two-channel 16-bit mode.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np
from PIL import Image

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def quantize(img, bits: int = 8) -> np.ndarray:
    """Round-half-up quantisation of [0, 1] values (clipped) to integer levels."""
    top = (1 << bits) - 1
    q = np.floor(np.clip(np.asarray(img, dtype=float), 0.0, 1.0) * top + 0.5)
    return q.astype(np.uint16 if bits > 8 else np.uint8)


def dequantize(levels, bits: int = 8) -> np.ndarray:
    return np.asarray(levels, dtype=float) / ((1 << bits) - 1)


# -- PNG ---------------------------------------------------------------------


def _chunk(tag: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)


def write_png16(path, data) -> None:
    """Write (h, w) or (h, w, 2) uint16 data as 16-bit gray / gray+alpha PNG."""
    a = np.asarray(data)
    if a.ndim == 2:
        a = a[..., None]
    if a.ndim != 3 or a.shape[2] not in (1, 2):
        raise ValueError("16-bit PNG export takes one or two channels")
    h, w, c = a.shape
    color = 0 if c == 1 else 4
    raw = a.astype(">u2").reshape(h, w * c)
    rows = np.concatenate([np.zeros((h, 1), dtype=np.uint8), raw.view(np.uint8).reshape(h, -1)], axis=1)
    ihdr = struct.pack(">IIBBBBB", w, h, 16, color, 0, 0, 0)
    payload = PNG_SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", zlib.compress(rows.tobytes(), 9)) + _chunk(b"IEND", b"")
    Path(path).write_bytes(payload)


def _paeth(a, b, c):
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _unfilter(raw: bytes, h: int, stride: int, bpp: int) -> np.ndarray:
    out = np.zeros((h, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int64)
    pos = 0
    for j in range(h):
        ftype = raw[pos]
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos + 1).astype(np.int64)
        pos += stride + 1
        cur = line.copy()
        if ftype == 1:
            for i in range(bpp, stride):
                cur[i] = (cur[i] + cur[i - bpp]) & 0xFF
        elif ftype == 2:
            cur = (cur + prev) & 0xFF
        elif ftype == 3:
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                cur[i] = (cur[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif ftype == 4:
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                ul = prev[i - bpp] if i >= bpp else 0
                cur[i] = (cur[i] + _paeth(left, prev[i], ul)) & 0xFF
        elif ftype != 0:
            raise ValueError(f"bad PNG filter type {ftype}")
        out[j] = cur
        prev = cur
    return out


def read_png16(path) -> np.ndarray:
    """Read a 16-bit gray or gray+alpha PNG; returns (h, w) or (h, w, 2) uint16."""
    buf = Path(path).read_bytes()
    if not buf.startswith(PNG_SIGNATURE):
        raise ValueError(f"{path} is not a PNG file")
    pos = len(PNG_SIGNATURE)
    idat = []
    hdr = None
    while pos < len(buf):
        (n,) = struct.unpack(">I", buf[pos:pos + 4])
        tag = buf[pos + 4:pos + 8]
        data = buf[pos + 8:pos + 8 + n]
        pos += 12 + n
        if tag == b"IHDR":
            hdr = struct.unpack(">IIBBBBB", data)
        elif tag == b"IDAT":
            idat.append(data)
        elif tag == b"IEND":
            break
    if hdr is None:
        raise ValueError("PNG without header")
    w, h, depth, color, _, _, interlace = hdr
    if depth != 16 or color not in (0, 4) or interlace:
        raise ValueError("only non-interlaced 16-bit gray or gray+alpha PNG is supported")
    c = 1 if color == 0 else 2
    rows = _unfilter(zlib.decompress(b"".join(idat)), h, w * c * 2, c * 2)
    a = rows.view(">u2").reshape(h, w, c).astype(np.uint16)
    return a[..., 0] if c == 1 else a


# -- PGM ---------------------------------------------------------------------


def write_pgm(path, img, bits: int = 8) -> None:
    q = quantize(img, bits)
    h, w = q.shape
    head = f"P5\n{w} {h}\n{(1 << bits) - 1}\n".encode("ascii")
    body = q.astype(">u2" if bits > 8 else np.uint8).tobytes()
    Path(path).write_bytes(head + body)


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        start = pos
        while not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos].decode("ascii"))
    pos += 1
    if tokens[0] != "P5":
        raise ValueError("only binary PGM (P5) is supported")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else np.uint8
    data = np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return data.astype(float) / maxval


# -- generic gray I/O ----------------------------------------------------------


def write_gray(path, img, bits: int = 8) -> None:
    """Save a [0, 1] image as PNG or PGM (by suffix) with 8 or 16 bits."""
    path = Path(path)
    if bits not in (8, 16):
        raise ValueError("bit depth must be 8 or 16")
    if path.suffix.lower() == ".pgm":
        write_pgm(path, img, bits)
    elif bits == 16:
        write_png16(path, quantize(img, 16))
    else:
        Image.fromarray(quantize(img, 8)).save(path, format="PNG")


def read_gray(path) -> np.ndarray:
    """Load a grayscale PNG/PGM as floats in [0, 1]; RGB is averaged."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            return np.asarray(im, dtype=float) / 65535.0
        if im.mode in ("RGB", "RGBA"):
            return np.asarray(im.convert("RGB"), dtype=float).mean(axis=2) / 255.0
        return np.asarray(im.convert("L"), dtype=float) / 255.0


def write_rgb(path, rgb) -> None:
    Image.fromarray(quantize(rgb, 8)).save(path, format="PNG")


# -- test patterns -------------------------------------------------------------


def make_pattern(shape, kind: str = "blocks", seed: int = 0) -> np.ndarray:
    """Synthetic content in [0, 1].

    ``blocks``: random rectangles of random gray; ``checker``: 8-pixel checker;
    ``text``: thin bars and dots exercising fine detail; ``ramp``: horizontal ramp.
    """
    h, w = shape
    rng = np.random.default_rng(seed)
    if kind == "blocks":
        img = np.zeros((h, w))
        for _ in range(40):
            y0 = rng.integers(0, max(h - 8, 1))
            x0 = rng.integers(0, max(w - 8, 1))
            bh, bw = rng.integers(3, max(h // 4, 4)), rng.integers(3, max(w // 4, 4))
            img[y0:y0 + bh, x0:x0 + bw] = rng.uniform()
        return img
    if kind == "checker":
        yy, xx = np.mgrid[0:h, 0:w]
        return (((yy // 8) + (xx // 8)) % 2).astype(float)
    if kind == "text":
        img = np.zeros((h, w))
        for j in range(2, h - 2, 6):
            n = rng.integers(2, 6)
            xs = np.sort(rng.integers(0, w, 2 * n))
            for a, b in zip(xs[0::2], xs[1::2]):
                img[j:j + 2, a:b] = 1.0
        return img
    if kind == "ramp":
        return np.broadcast_to(np.linspace(0.0, 1.0, w), (h, w)).copy()
    raise ValueError(f"unknown test pattern {kind!r}")
