"""Sybil crawling attack against the simulated DHT.

Each identity joins at a random ID, soaks up whatever the network replicates
to it (join-time copies and periodic pushes), and hops to a fresh ID every
``hop_interval``.  Everything received is kept in an append-only log that
outlives the entries' expiry.  Once the window closes, the harness tries to
turn the log into plaintext for each target VDO.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Sequence

from . import crypto
from .dht import HOUR, ID_BITS, as_bytes
from .errors import EphemeraError, KeyRefused
from .field import production_prime
from .protocol import abscissas, parse_share
from .sharing import Share, SharingParams, recursive_reconstruct, shamir_reconstruct, share_width
from .vdo import Mode, Vdo

DEFAULT_SHARE_WIDTH = share_width(production_prime())


@dataclass
class AttackConfig:
    identity_count: int = 10
    hop_interval: float = 180.0
    duration: float = 8 * HOUR
    # keep only values of this byte width; None keeps everything
    size_filter: int | None = DEFAULT_SHARE_WIDTH
    seed: int = 0
    # optional scripted IDs: placements[i][h] is identity i's ID on hop h
    placements: Sequence[Sequence[int]] | None = None
    probe_live: bool = True

    def __post_init__(self):
        if self.identity_count < 1:
            raise ValueError("identity_count must be >= 1")
        if self.hop_interval <= 0:
            raise ValueError("hop_interval must be positive")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.placements is not None and len(self.placements) < self.identity_count:
            raise ValueError("need a placement schedule for every identity")


@dataclass(frozen=True)
class HarvestRecord:
    dht_key: bytes
    value: bytes
    seen_at: float
    identity: int


class HarvestLog:
    """Append-only; one record per (identity, key)."""

    def __init__(self):
        self.entries: list[HarvestRecord] = []
        self._seen: set = set()
        self._by_key: dict[bytes, list[bytes]] = {}

    def append(self, key: bytes, value: bytes, seen_at: float, identity: int) -> bool:
        if (identity, key) in self._seen:
            return False
        self._seen.add((identity, key))
        self.entries.append(HarvestRecord(key, value, seen_at, identity))
        values = self._by_key.setdefault(key, [])
        if value not in values:
            values.append(value)
        return True

    def values_for(self, key: bytes) -> list[bytes]:
        return list(self._by_key.get(key, ()))

    def keys(self) -> set[bytes]:
        return set(self._by_key)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class Target:
    vdo: Vdo
    plaintext: bytes | None = None
    label: str = ""


@dataclass
class TargetOutcome:
    label: str
    mode: str
    n: int
    k: int
    shares_harvested: int
    k_reached: bool
    secrets_recovered: bool
    plaintext_recovered: bool
    # hybrid only: H obtained from the server while the record was live
    lifetime_access: bool | None = None
    # hybrid only: plaintext from (N_t, ID_t) and C without the server
    offline_recovered: bool | None = None


@dataclass
class SybilReport:
    targets: list[TargetOutcome]
    config: AttackConfig
    log: HarvestLog = field(repr=False)
    window: tuple = (0.0, 0.0)
    filtered_out: int = 0
    coverage: float = 0.0

    @property
    def raw_values(self) -> int:
        return len(self.log)

    def to_json(self) -> str:
        cfg = asdict(self.config)
        cfg.pop("placements", None)
        doc = {
            "config": cfg,
            "window": list(self.window),
            "raw_values": self.raw_values,
            "filtered_out": self.filtered_out,
            "coverage": self.coverage,
            "targets": [asdict(t) for t in self.targets],
        }
        return json.dumps(doc, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(TargetOutcome.__dataclass_fields__)
        writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        for t in self.targets:
            writer.writerow(asdict(t))
        return buf.getvalue()


class _Identity:
    def __init__(self, harness: "_Harness", index: int):
        self.harness = harness
        self.index = index
        self.rng = random.Random(f"sybil:{harness.config.seed}:{index}")
        self.node = None
        self.hops = 0

    def next_id(self) -> int:
        cfg = self.harness.config
        if cfg.placements is not None:
            schedule = cfg.placements[self.index]
            return schedule[self.hops % len(schedule)]
        return self.rng.getrandbits(ID_BITS)

    def __call__(self, node, entry) -> None:
        self.harness.observe(self.index, node, entry)


class _Harness:
    def __init__(self, dht, config: AttackConfig, targets: list[Target], server):
        self.dht = dht
        self.config = config
        self.targets = targets
        self.server = server
        self.log = HarvestLog()
        self.filtered_out = 0
        self.identities = [_Identity(self, i) for i in range(config.identity_count)]
        self.lifetime: dict[int, bool] = {}

    def observe(self, index: int, node, entry) -> None:
        width = self.config.size_filter
        if width is not None and len(entry.value) != width:
            self.filtered_out += 1
            return
        self.log.append(as_bytes(entry.key), entry.value, self.dht.now, index)

    def _place(self, ident: _Identity) -> None:
        nid = ident.next_id()
        while nid in self.dht.nodes:
            if self.config.placements is not None:
                raise ValueError(f"scripted sybil id {nid:040x} collides with a live node")
            nid = ident.rng.getrandbits(ID_BITS)
        ident.node = self.dht.join(nid, sybil=True, observer=ident)
        ident.hops += 1

    def _retire(self, ident: _Identity) -> None:
        if ident.node is not None and ident.node.alive:
            self.dht.leave(ident.node.id)
        ident.node = None

    def hop(self) -> None:
        for ident in self.identities:
            self._retire(ident)
            self._place(ident)
        self.probe()

    def finish(self) -> None:
        for ident in self.identities:
            self._retire(ident)
        self.probe()

    def probe(self) -> None:
        """Try the live server for hybrid targets we can already reconstruct."""
        if not self.config.probe_live or self.server is None:
            return
        for i, target in enumerate(self.targets):
            if target.vdo.mode is not Mode.HYBRID or self.lifetime.get(i):
                continue
            shares = harvested_shares(self.log, target.vdo)
            if len(shares) < target.vdo.k:
                continue
            secrets_ = _hybrid_secrets(shares, target.vdo)
            if secrets_ is None:
                continue
            try:
                h = self.server.request_key(*secrets_)
            except KeyRefused:
                continue
            self.lifetime[i] = _matches(crypto.decrypt(h, target.vdo.c), target.plaintext)

    def run(self) -> None:
        start = self.dht.now
        end = start + self.config.duration
        for ident in self.identities:
            self._place(ident)
        hops = math.ceil(self.config.duration / self.config.hop_interval)
        for h in range(1, hops):
            self.dht.schedule(start + h * self.config.hop_interval, self.hop)
        self.dht.schedule(end, self.finish)
        self.dht.run_until(end)
        self.window = (start, end)


def harvested_shares(log: HarvestLog, vdo: Vdo) -> list[Share]:
    """Distinct well-formed shares the log holds for the VDO's indices."""
    valid = abscissas(vdo)
    shares: list[Share] = []
    seen_x: set[int] = set()
    for index in crypto.derive_indices(vdo.l, vdo.n):
        for value in log.values_for(index):
            share = parse_share(value, valid)
            if share is not None and share.x not in seen_x:
                seen_x.add(share.x)
                shares.append(share)
                break
    return shares


def _matches(candidate: bytes, truth: bytes | None) -> bool:
    return True if truth is None else candidate == truth


def _hybrid_secrets(shares: list[Share], vdo: Vdo):
    try:
        bundle = recursive_reconstruct(shares, SharingParams(vdo.n, vdo.k))
    except EphemeraError:
        return None
    if bundle.main >= 1 << 128 or not bundle.additional or bundle.additional[0] >= 1 << 16:
        return None
    return bundle.main.to_bytes(16, "big"), bundle.additional[0]


def _offline_guesses(n_t: bytes, id_t: int) -> list[bytes]:
    """Keys an attacker might try from (N_t, ID_t) alone."""
    id_bytes = id_t.to_bytes(16, "big")
    return [
        n_t,
        crypto.sha1(n_t)[:16],
        crypto.derive_key(n_t, bytes(16)),
        crypto.derive_key(n_t, id_bytes),
        crypto.derive_key(id_bytes, n_t),
        crypto.sha1(n_t + id_t.to_bytes(2, "big"))[:16],
    ]


def _evaluate(harness: _Harness, index: int, target: Target) -> TargetOutcome:
    vdo = target.vdo
    shares = harvested_shares(harness.log, vdo)
    k_reached = vdo.k is not None and len(shares) >= vdo.k
    outcome = TargetOutcome(target.label or f"target{index}", vdo.mode.label, vdo.n or 0,
                            vdo.k or 0, len(shares), k_reached, False, False)
    if vdo.mode is Mode.VANISH:
        if k_reached:
            secret = shamir_reconstruct(shares, vdo.k, production_prime())
            if secret < 1 << 128:
                outcome.secrets_recovered = True
                key = secret.to_bytes(16, "big")
                outcome.plaintext_recovered = _matches(crypto.decrypt(key, vdo.c), target.plaintext)
    elif vdo.mode is Mode.HYBRID:
        outcome.lifetime_access = harness.lifetime.get(index, False)
        outcome.offline_recovered = False
        secrets_ = _hybrid_secrets(shares, vdo) if k_reached else None
        if secrets_ is not None:
            outcome.secrets_recovered = True
            n_t, id_t = secrets_
            truth = target.plaintext
            if truth is not None:
                outcome.offline_recovered = any(
                    crypto.decrypt(g, vdo.c) == truth for g in _offline_guesses(n_t, id_t))
            if harness.server is not None:
                try:
                    h = harness.server.request_key(n_t, id_t)
                except KeyRefused:
                    pass
                else:
                    outcome.plaintext_recovered = _matches(crypto.decrypt(h, vdo.c), truth)
            outcome.plaintext_recovered = outcome.plaintext_recovered or bool(outcome.offline_recovered)
    return outcome


def run_attack(dht, config: AttackConfig, targets: Sequence, *, server=None) -> SybilReport:
    """Crawl ``dht`` for ``config.duration`` virtual seconds, then attack ``targets``.

    ``targets`` holds :class:`Target` objects or bare VDOs.  Without a known
    plaintext, a target counts as recovered once the attacker holds its
    data key.  ``server`` is the honest key server, queried like any
    client at the end of the window.
    """
    wrapped = [t if isinstance(t, Target) else Target(t) for t in targets]
    harness = _Harness(dht, config, wrapped, server)
    harness.run()
    outcomes = [_evaluate(harness, i, t) for i, t in enumerate(wrapped)]
    report = SybilReport(outcomes, config, harness.log, harness.window, harness.filtered_out)
    report.coverage = coverage(report, dht)
    return report


def coverage(report: SybilReport, dht) -> float:
    """Fraction of share-sized client entries live during the window that were harvested."""
    start, end = report.window
    width = report.config.size_filter
    population = [
        as_bytes(key) for key, info in dht.stored_keys.items()
        if (width is None or info.width == width) and info.stored_at <= end and info.expires_at > start
    ]
    if not population:
        return 0.0
    harvested = report.log.keys()
    return sum(1 for key in population if key in harvested) / len(population)
