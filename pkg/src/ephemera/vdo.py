"""The vanishing data object and its on-disk container.

Layout, all integers big-endian::

    "SDD1" | version u8 | mode u8
    modes 0 (vanish) and 2 (hybrid): L[16] | n u16 | k u16
    mode 1 (ephemerizer):            ID u16
    ciphertext length u64 | ciphertext
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .errors import MalformedVdo

MAGIC = b"SDD1"
VERSION = 1
EXTENSION = ".vdo"


class Mode(enum.IntEnum):
    VANISH = 0
    EPHEMERIZER = 1
    HYBRID = 2

    @classmethod
    def parse(cls, name: str) -> "Mode":
        try:
            return {"vanish": cls.VANISH, "ephemerizer": cls.EPHEMERIZER,
                    "ephemerizer-only": cls.EPHEMERIZER, "hybrid": cls.HYBRID}[name.lower()]
        except KeyError:
            raise ValueError(f"unknown mode {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class Vdo:
    mode: Mode
    c: bytes
    l: bytes | None = None
    n: int | None = None
    k: int | None = None
    id: int | None = None

    def __post_init__(self):
        if self.mode is Mode.EPHEMERIZER:
            if self.id is None or self.l is not None or self.n is not None:
                raise MalformedVdo("ephemerizer VDOs carry an ID and nothing else")
        else:
            if self.l is None or self.n is None or self.k is None or self.id is not None:
                raise MalformedVdo(f"{self.mode.label} VDOs carry L, n and k")
            if len(self.l) != 16:
                raise MalformedVdo("access key must be 16 bytes")
            if not 1 <= self.k <= self.n:
                raise MalformedVdo("threshold must satisfy 1 <= k <= n")

    def with_access_key(self, l: bytes) -> "Vdo":
        """Same ciphertext re-issued under a refreshed access key."""
        return Vdo(self.mode, self.c, l, self.n, self.k, self.id)


_SHARED = struct.Struct(">16sHH")
_ID = struct.Struct(">H")
_LEN = struct.Struct(">Q")


def header_size(mode: Mode) -> int:
    body = _ID.size if mode is Mode.EPHEMERIZER else _SHARED.size
    return len(MAGIC) + 2 + body + _LEN.size


def encode(vdo: Vdo) -> bytes:
    head = MAGIC + bytes([VERSION, int(vdo.mode)])
    if vdo.mode is Mode.EPHEMERIZER:
        head += _ID.pack(vdo.id)
    else:
        head += _SHARED.pack(vdo.l, vdo.n, vdo.k)
    return head + _LEN.pack(len(vdo.c)) + vdo.c


def decode(data: bytes) -> Vdo:
    if len(data) < 6 or data[:4] != MAGIC:
        raise MalformedVdo("bad magic")
    if data[4] != VERSION:
        raise MalformedVdo(f"unsupported version {data[4]}")
    try:
        mode = Mode(data[5])
    except ValueError:
        raise MalformedVdo(f"unknown mode byte {data[5]}") from None
    if len(data) < header_size(mode):
        raise MalformedVdo("truncated header")
    offset = 6
    fields: dict = {}
    if mode is Mode.EPHEMERIZER:
        (fields["id"],) = _ID.unpack_from(data, offset)
        offset += _ID.size
    else:
        fields["l"], fields["n"], fields["k"] = _SHARED.unpack_from(data, offset)
        offset += _SHARED.size
    (length,) = _LEN.unpack_from(data, offset)
    offset += _LEN.size
    if len(data) - offset != length:
        raise MalformedVdo(f"ciphertext length {length} does not match {len(data) - offset} bytes present")
    return Vdo(mode, data[offset:], **fields)
