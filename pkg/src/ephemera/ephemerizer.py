"""The Ephemerizer: a key server that forgets.

It mints (N_t, ID_t, S_t) per request, hands out H = h(N_t, S_t) once at
creation, spreads recursive shares of (N_t, ID_t) over the DHT, and answers
key requests until the record's expiry.  Erasure of S_t is what makes the
data unrecoverable, so expired records are dropped unconditionally and never
written to snapshots.

The server itself is a plain single-threaded state machine; the network
service wraps it in a lock.
"""

from __future__ import annotations

import logging
import os
import secrets
import struct
import zlib
from dataclasses import dataclass
from typing import NamedTuple

from . import crypto
from .errors import (
    AlreadyDistributed,
    IdSpaceExhausted,
    InsufficientShares,
    InvalidExpiry,
    InvalidParams,
    KeyConsumed,
    KeyExpired,
    NoAccessKeyRetained,
    SnapshotError,
    UnknownId,
    UnknownKey,
    VersionMismatch,
)
from .sharing import Share, SharingParams, pad_bundle, recursive_deal, recursive_reconstruct, share_width
from .timing import Timings, section

log = logging.getLogger(__name__)

HYBRID = "hybrid"
PLAIN = "plain"  # ephemerizer-only baseline: the record holds the data key itself

SNAPSHOT_MAGIC = b"EPH1"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct(">4sBBdI")
_RECORD = struct.Struct(">HBBd16s16s16sHH")
_KINDS = {HYBRID: 0, PLAIN: 1}
_F_READ_ONCE, _F_CONSUMED, _F_NT, _F_L, _F_SECRET = 1, 2, 4, 8, 16


@dataclass
class EphemeralRecord:
    id_t: int
    s_t: bytes | None
    expires_at: float
    kind: str = HYBRID
    n_t_temp: bytes | None = None
    access_key: bytes | None = None
    read_once: bool = False
    consumed: bool = False
    n: int = 0
    k: int = 0


@dataclass(frozen=True)
class KeyGrant:
    h: bytes
    id_t: int
    n_t: bytes


class Placement(NamedTuple):
    l: bytes
    k: int


class Ephemerizer:
    def __init__(self, clock, rng=None, *, id_bits: int = crypto.EPHEMERAL_ID_BITS,
                 clamp_share_ttl: bool = False):
        """``clock`` is anything with a ``now`` attribute in virtual seconds.

        With ``clamp_share_ttl`` the DHT shares expire with the record; without
        it they live for the DHT's full fixed timeout.
        """
        if not 1 <= id_bits <= crypto.EPHEMERAL_ID_BITS:
            raise ValueError("id_bits must be in 1..16")
        self.clock = clock
        self.rng = rng or secrets.SystemRandom()
        self.id_bits = id_bits
        self.clamp_share_ttl = clamp_share_ttl
        self.records: dict[int, EphemeralRecord] = {}

    @property
    def now(self) -> float:
        return self.clock.now

    def attach(self, network, interval: float = 60.0) -> None:
        """Run ``sweep_expired`` every ``interval`` virtual seconds on ``network``'s loop."""
        network.every(interval, self.sweep_expired)

    # -- record lifecycle --------------------------------------------------

    def _fresh_id(self) -> int:
        space = 1 << self.id_bits
        if len(self.records) >= space:
            raise IdSpaceExhausted(f"all {space} ephemeral IDs are live")
        while True:
            candidate = self.rng.randrange(space)
            if candidate not in self.records:
                return candidate

    def _check_expiry(self, expires_at: float) -> None:
        if expires_at <= self.now:
            raise InvalidExpiry("expiry must lie in the future")

    def create_key(self, expires_at: float, *, read_once: bool = False) -> KeyGrant:
        self._check_expiry(expires_at)
        id_t = self._fresh_id()
        n_t = crypto.random_bytes(crypto.NONCE_SIZE, self.rng)
        s_t = crypto.random_bytes(crypto.NONCE_SIZE, self.rng)
        self.records[id_t] = EphemeralRecord(id_t, s_t, expires_at, n_t_temp=n_t,
                                             read_once=read_once)
        return KeyGrant(crypto.derive_key(n_t, s_t), id_t, n_t)

    def create_plain_key(self, expires_at: float) -> tuple[bytes, int]:
        """Baseline mode: returns (K, ID) and remembers K until expiry."""
        self._check_expiry(expires_at)
        id_t = self._fresh_id()
        key = crypto.random_bytes(crypto.KEY_SIZE, self.rng)
        self.records[id_t] = EphemeralRecord(id_t, key, expires_at, kind=PLAIN)
        return key, id_t

    def _live(self, id_t: int, kind: str) -> EphemeralRecord:
        rec = self.records.get(id_t)
        if rec is None or rec.kind != kind:
            raise UnknownId(id_t)
        if rec.expires_at <= self.now:
            self._erase(id_t)
            raise UnknownId(id_t)
        return rec

    def _erase(self, id_t: int) -> None:
        rec = self.records.pop(id_t, None)
        if rec is not None:
            rec.s_t = rec.n_t_temp = rec.access_key = None

    def abort(self, id_t: int) -> None:
        """Drop a half-built record after a failed encapsulation."""
        self._erase(id_t)

    def _store_shares(self, rec: EphemeralRecord, n_t: bytes, params: SharingParams, dht,
                      timings: Timings | None) -> bytes:
        access_key = crypto.random_bytes(crypto.KEY_SIZE, self.rng)
        with section(timings, "sharing"):
            bundle = pad_bundle(int.from_bytes(n_t, "big"), [rec.id_t], params, self.rng)
            shares = recursive_deal(bundle, params, self.rng)
        remaining = rec.expires_at - self.now
        ttl = dht.config.entry_ttl
        if self.clamp_share_ttl:
            ttl = min(remaining, ttl)
        with section(timings, "dht"):
            for index, share in zip(crypto.derive_indices(access_key, params.n), shares):
                dht.store(index, share.to_bytes(params.field), ttl)
        rec.access_key = access_key if remaining > dht.config.entry_ttl else None
        rec.n, rec.k = params.n, params.k
        return access_key

    def distribute_shares(self, id_t: int, params: SharingParams, dht,
                          timings: Timings | None = None) -> Placement:
        """Handle the sender's acknowledgment: share (N_t, ID_t) into the DHT."""
        if params.k < 3:
            raise InvalidParams("hybrid sharing needs k >= 3 to carry ID_t")
        rec = self._live(id_t, HYBRID)
        if rec.n_t_temp is None:
            raise AlreadyDistributed(id_t)
        try:
            access_key = self._store_shares(rec, rec.n_t_temp, params, dht, timings)
        except Exception:
            self._erase(id_t)
            raise
        rec.n_t_temp = None
        return Placement(access_key, params.k)

    # -- key release -------------------------------------------------------

    def request_key(self, n_t: bytes, id_t: int) -> bytes:
        rec = self.records.get(id_t)
        if rec is None or rec.kind != HYBRID:
            raise UnknownKey(f"no record for id {id_t}")
        if rec.expires_at <= self.now:
            self._erase(id_t)
            raise KeyExpired(f"record {id_t} expired")
        if rec.consumed:
            raise KeyConsumed(f"record {id_t} was read once already")
        h = crypto.derive_key(n_t, rec.s_t)
        if rec.read_once:
            # keep a tombstone so a second read reports "consumed"
            rec.consumed = True
            rec.s_t = rec.access_key = rec.n_t_temp = None
        return h

    def fetch_plain_key(self, id_t: int) -> bytes:
        rec = self.records.get(id_t)
        if rec is None or rec.kind != PLAIN:
            raise UnknownKey(f"no record for id {id_t}")
        if rec.expires_at <= self.now:
            self._erase(id_t)
            raise KeyExpired(f"record {id_t} expired")
        return rec.s_t

    def sweep_expired(self) -> list[int]:
        """Erase every record with expires_at <= now.  Returns the erased IDs."""
        now = self.now
        gone = [i for i, rec in self.records.items() if rec.expires_at <= now]
        for id_t in gone:
            self._erase(id_t)
        if gone:
            log.debug("swept %d expired records at t=%.0f", len(gone), now)
        return gone

    # -- lifetime extension ------------------------------------------------

    def refresh(self, id_t: int, dht, timings: Timings | None = None) -> bytes:
        """Pull the shares back, re-deal them under a fresh access key."""
        rec = self._live(id_t, HYBRID)
        if rec.access_key is None:
            raise NoAccessKeyRetained(id_t)
        params = SharingParams(rec.n, rec.k)
        width = share_width(params.field)
        found: list[Share] = []
        with section(timings, "dht"):
            for index in crypto.derive_indices(rec.access_key, rec.n):
                raw = dht.retrieve(index)
                if raw is not None and len(raw) == width:
                    found.append(Share.from_bytes(raw, params.field))
                    if len(found) == rec.k:
                        break
        if len(found) < rec.k:
            raise InsufficientShares(f"only {len(found)} of {rec.k} shares left for id {id_t}")
        with section(timings, "sharing"):
            bundle = recursive_reconstruct(found, params)
        if bundle.additional[0] != id_t:
            raise InsufficientShares(f"shares under the retained key do not belong to id {id_t}")
        n_t = bundle.main.to_bytes(crypto.NONCE_SIZE, "big")
        return self._store_shares(rec, n_t, params, dht, timings)

    # -- persistence -------------------------------------------------------

    def to_bytes(self) -> bytes:
        self.sweep_expired()
        parts = [_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, self.id_bits, self.now,
                              len(self.records))]
        zero = bytes(16)
        for id_t in sorted(self.records):
            rec = self.records[id_t]
            flags = ((_F_READ_ONCE if rec.read_once else 0) | (_F_CONSUMED if rec.consumed else 0)
                     | (_F_NT if rec.n_t_temp else 0) | (_F_L if rec.access_key else 0)
                     | (_F_SECRET if rec.s_t else 0))
            parts.append(_RECORD.pack(id_t, _KINDS[rec.kind], flags, rec.expires_at,
                                      rec.s_t or zero, rec.n_t_temp or zero,
                                      rec.access_key or zero, rec.n, rec.k))
        body = b"".join(parts)
        return body + struct.pack(">I", zlib.crc32(body))

    def persist(self, path) -> None:
        data = self.to_bytes()
        tmp = f"{path}.tmp"
        try:
            with open(tmp, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except OSError as exc:
            raise SnapshotError(f"cannot write snapshot {path}: {exc}") from exc

    @classmethod
    def from_bytes(cls, data: bytes, clock=None, rng=None, **kwargs) -> "Ephemerizer":
        if len(data) < _HEADER.size + 4:
            raise SnapshotError("snapshot truncated")
        magic, version, id_bits, now, count = _HEADER.unpack_from(data)
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotError("not an EPH1 snapshot")
        if version != SNAPSHOT_VERSION:
            raise VersionMismatch(f"snapshot version {version}, expected {SNAPSHOT_VERSION}")
        body_len = _HEADER.size + count * _RECORD.size
        if len(data) != body_len + 4:
            raise SnapshotError("snapshot length does not match record count")
        (crc,) = struct.unpack_from(">I", data, body_len)
        if crc != zlib.crc32(data[:body_len]):
            raise SnapshotError("snapshot checksum mismatch")
        kinds = {v: k for k, v in _KINDS.items()}
        records = {}
        for i in range(count):
            (id_t, kind, flags, expires_at, secret, n_t, l, n, k) = _RECORD.unpack_from(
                data, _HEADER.size + i * _RECORD.size)
            if kind not in kinds:
                raise SnapshotError(f"unknown record kind {kind}")
            records[id_t] = EphemeralRecord(
                id_t, secret if flags & _F_SECRET else None, expires_at, kinds[kind],
                n_t if flags & _F_NT else None, l if flags & _F_L else None,
                bool(flags & _F_READ_ONCE), bool(flags & _F_CONSUMED), n, k)
        if clock is None:
            from .dht import VirtualClock
            clock = VirtualClock(now)
        elif clock.now < now:
            clock.advance_to(now)
        server = cls(clock, rng, id_bits=id_bits, **kwargs)
        server.records = records
        return server

    @classmethod
    def restore(cls, path, clock=None, rng=None, **kwargs) -> "Ephemerizer":
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
        return cls.from_bytes(data, clock, rng, **kwargs)
