"""Minimal DICOM I/O for uncompressed single-frame grayscale images.

Supports the two uncompressed little-endian transfer syntaxes (implicit
and explicit VR), 8/16-bit MONOCHROME1/MONOCHROME2 pixel data. Anything
else (compressed syntaxes, multi-frame, color) is rejected with a clear
error. Covers the DR chest radiograph files this toolkit ingests without
pulling in a full DICOM stack.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMPLICIT_VR_LE = "1.2.840.10008.1.2"
EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"

# VRs whose explicit encoding uses a 2-byte reserved field + 4-byte length
_LONG_VRS = {b"OB", b"OW", b"OF", b"SQ", b"UT", b"UN"}

_TAG_TRANSFER_SYNTAX = (0x0002, 0x0010)
_TAG_SAMPLES_PER_PIXEL = (0x0028, 0x0002)
_TAG_PHOTOMETRIC = (0x0028, 0x0004)
_TAG_NUM_FRAMES = (0x0028, 0x0008)
_TAG_ROWS = (0x0028, 0x0010)
_TAG_COLS = (0x0028, 0x0011)
_TAG_BITS_ALLOCATED = (0x0028, 0x0100)
_TAG_PIXEL_REPRESENTATION = (0x0028, 0x0103)
_TAG_RESCALE_INTERCEPT = (0x0028, 0x1052)
_TAG_RESCALE_SLOPE = (0x0028, 0x1053)
_TAG_PIXEL_DATA = (0x7FE0, 0x0010)

_UNDEFINED_LENGTH = 0xFFFFFFFF


class DicomError(ValueError):
    """Raised for files this minimal reader cannot handle."""


@dataclass
class DicomImage:
    pixels: np.ndarray  # 2-D, raw stored values after rescale
    inverted: bool  # True for MONOCHROME1 (low value = bright)


class _Cursor:
    def __init__(self, buf: bytes, pos: int, path: Path):
        self.buf = buf
        self.pos = pos
        self.path = path

    def remaining(self) -> int:
        return len(self.buf) - self.pos

    def peek_group(self) -> int:
        if self.remaining() < 8:
            return -1
        return struct.unpack_from("<H", self.buf, self.pos)[0]

    def take(self, n: int) -> bytes:
        if self.remaining() < n:
            raise DicomError(f"{self.path}: truncated DICOM stream")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def next_element(self, explicit: bool) -> tuple[tuple[int, int], bytes]:
        group, elem = struct.unpack("<HH", self.take(4))
        if explicit:
            vr = self.take(2)
            if vr in _LONG_VRS:
                self.take(2)  # reserved
                (length,) = struct.unpack("<I", self.take(4))
            else:
                (length,) = struct.unpack("<H", self.take(2))
        else:
            (length,) = struct.unpack("<I", self.take(4))
        if length == _UNDEFINED_LENGTH:
            raise DicomError(
                f"{self.path}: undefined-length element "
                f"({group:04x},{elem:04x}) (sequences unsupported)"
            )
        return (group, elem), self.take(length)


def _decode_us(value: bytes) -> int:
    if len(value) < 2:
        raise DicomError("short US value")
    return struct.unpack("<H", value[:2])[0]


def _decode_int_string(value: bytes) -> int:
    return int(value.decode("ascii").strip("\x00 ").strip() or 0)


def _decode_float_string(value: bytes, default: float) -> float:
    text = value.decode("ascii").strip("\x00 ").strip()
    return float(text) if text else default


def read_dicom(path: str | Path) -> DicomImage:
    """Decode an uncompressed grayscale DICOM file.

    Raises DicomError for compressed transfer syntaxes, multi-frame
    objects, color images, or malformed streams.
    """
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < 132 or buf[128:132] != b"DICM":
        raise DicomError(f"{path}: missing DICM marker")

    cur = _Cursor(buf, 132, path)
    # File meta group (0002,xxxx) is always explicit VR little endian.
    transfer_syntax = EXPLICIT_VR_LE
    while cur.peek_group() == 0x0002:
        tag, value = cur.next_element(explicit=True)
        if tag == _TAG_TRANSFER_SYNTAX:
            transfer_syntax = value.decode("ascii").rstrip("\x00 ")

    if transfer_syntax == EXPLICIT_VR_LE:
        explicit = True
    elif transfer_syntax == IMPLICIT_VR_LE:
        explicit = False
    else:
        raise DicomError(
            f"{path}: unsupported transfer syntax {transfer_syntax!r} "
            "(compressed pixel data is not supported)"
        )

    fields: dict[tuple[int, int], bytes] = {}
    while cur.remaining() >= 8:
        tag, value = cur.next_element(explicit)
        fields[tag] = value

    if _TAG_PIXEL_DATA not in fields:
        raise DicomError(f"{path}: no pixel data element")

    samples = _decode_us(fields.get(_TAG_SAMPLES_PER_PIXEL, b"\x01\x00"))
    if samples != 1:
        raise DicomError(f"{path}: {samples} samples per pixel (grayscale only)")

    if _TAG_NUM_FRAMES in fields:
        frames = _decode_int_string(fields[_TAG_NUM_FRAMES])
        if frames > 1:
            raise DicomError(f"{path}: multi-frame object ({frames} frames) unsupported")

    rows = _decode_us(fields[_TAG_ROWS])
    cols = _decode_us(fields[_TAG_COLS])
    bits = _decode_us(fields[_TAG_BITS_ALLOCATED])
    signed = _decode_us(fields.get(_TAG_PIXEL_REPRESENTATION, b"\x00\x00"))
    if bits == 8:
        dtype = np.int8 if signed else np.uint8
    elif bits == 16:
        dtype = np.int16 if signed else np.uint16
    else:
        raise DicomError(f"{path}: {bits}-bit pixel data unsupported")

    raw = np.frombuffer(fields[_TAG_PIXEL_DATA], dtype=np.dtype(dtype).newbyteorder("<"))
    if raw.size < rows * cols:
        raise DicomError(f"{path}: pixel data shorter than Rows*Columns")
    pixels = raw[: rows * cols].reshape(rows, cols).astype(np.float64)

    slope = _decode_float_string(fields.get(_TAG_RESCALE_SLOPE, b""), 1.0)
    intercept = _decode_float_string(fields.get(_TAG_RESCALE_INTERCEPT, b""), 0.0)
    if slope != 1.0 or intercept != 0.0:
        pixels = pixels * slope + intercept

    photometric = (
        fields.get(_TAG_PHOTOMETRIC, b"MONOCHROME2").decode("ascii").rstrip("\x00 ")
    )
    if photometric not in ("MONOCHROME1", "MONOCHROME2"):
        raise DicomError(f"{path}: photometric interpretation {photometric!r} unsupported")

    return DicomImage(pixels=pixels, inverted=photometric == "MONOCHROME1")


def looks_like_dicom(path: str | Path) -> bool:
    try:
        with open(path, "rb") as fh:
            head = fh.read(132)
    except OSError:
        return False
    return len(head) == 132 and head[128:132] == b"DICM"


def _encode_element(group: int, elem: int, vr: bytes, value: bytes) -> bytes:
    if len(value) % 2:
        value += b"\x00"
    head = struct.pack("<HH", group, elem)
    if vr in _LONG_VRS:
        return head + vr + b"\x00\x00" + struct.pack("<I", len(value)) + value
    return head + vr + struct.pack("<H", len(value)) + value


def write_dicom(
    path: str | Path,
    pixels: np.ndarray,
    *,
    inverted: bool = False,
    num_frames: int | None = None,
) -> None:
    """Write a minimal explicit-VR little-endian grayscale DICOM file.

    Intended for test fixtures and small synthetic studies; passing
    `num_frames` > 1 produces a multi-frame header (which `read_dicom`
    deliberately rejects) over the same pixel buffer.
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise DicomError("write_dicom expects a 2-D array")
    if pixels.dtype == np.uint8:
        bits = 8
    elif pixels.dtype == np.uint16:
        bits = 16
    else:
        raise DicomError(f"write_dicom supports uint8/uint16, got {pixels.dtype}")

    photometric = b"MONOCHROME1" if inverted else b"MONOCHROME2"
    body = b""
    body += _encode_element(0x0008, 0x0060, b"CS", b"DX")
    body += _encode_element(0x0028, 0x0002, b"US", struct.pack("<H", 1))
    body += _encode_element(0x0028, 0x0004, b"CS", photometric)
    if num_frames is not None:
        body += _encode_element(0x0028, 0x0008, b"IS", str(num_frames).encode())
    body += _encode_element(0x0028, 0x0010, b"US", struct.pack("<H", pixels.shape[0]))
    body += _encode_element(0x0028, 0x0011, b"US", struct.pack("<H", pixels.shape[1]))
    body += _encode_element(0x0028, 0x0100, b"US", struct.pack("<H", bits))
    body += _encode_element(0x0028, 0x0101, b"US", struct.pack("<H", bits))
    body += _encode_element(0x0028, 0x0102, b"US", struct.pack("<H", bits - 1))
    body += _encode_element(0x0028, 0x0103, b"US", struct.pack("<H", 0))
    pixel_bytes = pixels.astype(pixels.dtype.newbyteorder("<")).tobytes()
    body += _encode_element(0x7FE0, 0x0010, b"OW", pixel_bytes)

    meta = _encode_element(0x0002, 0x0010, b"UI", EXPLICIT_VR_LE.encode())

    with open(path, "wb") as fh:
        fh.write(b"\x00" * 128)
        fh.write(b"DICM")
        fh.write(meta)
        fh.write(body)
