"""Wire and file formats shared by all pipeline stages.

Report wire format (bit exact):
    version (1) || crowd_id_kind (1) || crowd_id bytes (width by kind)
    || outer envelope bytes

Batch file format:
    magic (8) || record_length (u32 LE) || count (u64 LE) || records

All reports within one pipeline run serialize to the same length, so an
observer learns nothing from record sizes.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

from anonpipe.crypto.group import GroupParams
from anonpipe.errors import DecryptionError, PayloadTooLarge

REPORT_VERSION = 1

# Crowd-ID kinds and their serialized widths.
KIND_PLAIN = 0
KIND_HASHED = 1
KIND_FIXED = 2
KIND_BLINDED = 3

PLAIN_CROWD_WIDTH = 24  # 1 length byte + up to 23 key bytes, zero padded
HASHED_CROWD_WIDTH = 8
FIXED_CROWD_WIDTH = 8
FIXED_CROWD_SENTINEL = b"\x00" * FIXED_CROWD_WIDTH

BATCH_MAGIC = b"APBATCH1"
_BATCH_HEADER = struct.Struct("<8sIQ")


def crowd_id_width(kind: int, group: GroupParams | None = None) -> int:
    if kind == KIND_PLAIN:
        return PLAIN_CROWD_WIDTH
    if kind == KIND_HASHED:
        return HASHED_CROWD_WIDTH
    if kind == KIND_FIXED:
        return FIXED_CROWD_WIDTH
    if kind == KIND_BLINDED:
        if group is None:
            raise ValueError("blinded crowd IDs need group parameters")
        return 2 * group.element_len
    raise DecryptionError(f"unknown crowd-ID kind {kind}")


def encode_plain_crowd(key: bytes) -> bytes:
    if len(key) > PLAIN_CROWD_WIDTH - 1:
        raise PayloadTooLarge("plain crowd key longer than 23 bytes")
    return bytes([len(key)]) + key.ljust(PLAIN_CROWD_WIDTH - 1, b"\x00")


def decode_plain_crowd(data: bytes) -> bytes:
    return data[1 : 1 + data[0]]


def pad_payload(payload: bytes, pad_to: int) -> bytes:
    """Length-prefixed, zero-padded payload of exactly pad_to bytes."""
    if len(payload) + 2 > pad_to:
        raise PayloadTooLarge(f"{len(payload)}-byte payload exceeds pad_to={pad_to}")
    return struct.pack("<H", len(payload)) + payload.ljust(pad_to - 2, b"\x00")


def unpad_payload(padded: bytes) -> bytes:
    (n,) = struct.unpack_from("<H", padded)
    if n + 2 > len(padded):
        raise DecryptionError("corrupt padded payload")
    return padded[2 : 2 + n]


@dataclass(frozen=True)
class WireReport:
    """A serialized-form report: clear kind/crowd-ID plus the outer envelope."""

    kind: int
    crowd_id: bytes
    outer: bytes  # serialized AeadEnvelope

    def to_bytes(self) -> bytes:
        return bytes([REPORT_VERSION, self.kind]) + self.crowd_id + self.outer


def parse_report(data: bytes, group: GroupParams | None = None) -> WireReport:
    if len(data) < 2 or data[0] != REPORT_VERSION:
        raise DecryptionError("bad report header")
    kind = data[1]
    width = crowd_id_width(kind, group)
    if len(data) < 2 + width:
        raise DecryptionError("truncated report")
    return WireReport(kind=kind, crowd_id=data[2 : 2 + width], outer=data[2 + width :])


def write_batch(path: str | Path, records: list[bytes]) -> None:
    record_len = len(records[0]) if records else 0
    with open(path, "wb") as fh:
        fh.write(_BATCH_HEADER.pack(BATCH_MAGIC, record_len, len(records)))
        for rec in records:
            if len(rec) != record_len:
                raise ValueError("batch records must share one length")
            fh.write(rec)


def read_batch(path: str | Path) -> list[bytes]:
    with open(path, "rb") as fh:
        header = fh.read(_BATCH_HEADER.size)
        magic, record_len, count = _BATCH_HEADER.unpack(header)
        if magic != BATCH_MAGIC:
            raise DecryptionError("bad batch magic")
        if record_len == 0:
            return []
        body = fh.read()
    if len(body) != record_len * count:
        raise DecryptionError("batch truncated")
    return [body[i * record_len : (i + 1) * record_len] for i in range(count)]


def batch_to_bytes(records: list[bytes]) -> bytes:
    buf = io.BytesIO()
    record_len = len(records[0]) if records else 0
    buf.write(_BATCH_HEADER.pack(BATCH_MAGIC, record_len, len(records)))
    for rec in records:
        buf.write(rec)
    return buf.getvalue()
