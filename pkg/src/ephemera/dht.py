"""Deterministic in-process Chord-style DHT with churn and replica expiry.

The ring is a sorted list of 160-bit node IDs; a key lives on its successor
and the following ``replication_factor - 1`` alive nodes.  There are no finger
tables, since only placement and replication matter here, not lookup cost.

Everything runs off a :class:`VirtualClock` and a seeded event heap, so a
given configuration plus scripted events always produces the same state.
"""

from __future__ import annotations

import bisect
import hashlib
import heapq
import logging
import random
import struct
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple

from .errors import EmptyNetwork, ScenarioError

log = logging.getLogger(__name__)

ID_BITS = 160
ID_SPACE = 1 << ID_BITS
HOUR = 3600.0


def as_int(key) -> int:
    if isinstance(key, int):
        return key
    if len(key) != ID_BITS // 8:
        raise ValueError("DHT ids are 20 bytes")
    return int.from_bytes(key, "big")


def as_bytes(key) -> bytes:
    if isinstance(key, bytes):
        return key
    return key.to_bytes(ID_BITS // 8, "big")


class VirtualClock:
    """Monotone virtual seconds.  ``time_scale`` > 0 sleeps that many wall
    seconds per virtual second while advancing (for demos)."""

    def __init__(self, now: float = 0.0, time_scale: float = 0.0):
        self._now = float(now)
        self.time_scale = time_scale

    @property
    def now(self) -> float:
        return self._now

    def advance_to(self, t: float) -> None:
        if t < self._now:
            raise ValueError("virtual time cannot run backwards")
        if self.time_scale > 0 and t > self._now:
            time.sleep((t - self._now) * self.time_scale)
        self._now = float(t)

    def __getstate__(self):
        return {"now": self._now, "time_scale": self.time_scale}

    def __setstate__(self, state):
        self._now = state["now"]
        self.time_scale = state["time_scale"]


@dataclass
class DhtConfig:
    node_count: int = 200
    replication_factor: int = 20
    replication_interval: float = 1800.0
    entry_ttl: float = 8 * HOUR
    join_rate: float = 0.0  # Poisson, events per virtual second
    leave_rate: float = 0.0
    seed: int = 0
    time_scale: float = 0.0

    def __post_init__(self):
        if self.node_count < 0:
            raise ValueError("node_count must be >= 0")
        if self.replication_factor < 1:
            raise ValueError("replication_factor must be >= 1")
        if self.replication_interval <= 0:
            raise ValueError("replication_interval must be positive")


@dataclass(frozen=True)
class DhtEntry:
    key: int
    value: bytes
    stored_at: float
    expires_at: float

    def live(self, now: float) -> bool:
        return now < self.expires_at


@dataclass(eq=False)
class Node:
    id: int
    joined_at: float
    alive: bool = True
    sybil: bool = False
    store: dict = field(default_factory=dict)
    # called as observer(node, entry) for every replica this node receives
    observer: Callable | None = None

    @property
    def dht_id(self) -> bytes:
        return as_bytes(self.id)


class StoredKey(NamedTuple):
    width: int
    stored_at: float
    expires_at: float


@dataclass(frozen=True)
class StoreReceipt:
    key: bytes
    replicas: tuple
    expires_at: float


class _Periodic:
    """Self-rescheduling event; a class rather than a closure so networks pickle."""

    def __init__(self, network: "DhtNetwork", interval: float, callback: Callable):
        self.network = network
        self.interval = interval
        self.callback = callback

    def __call__(self):
        self.callback()
        self.network.schedule(self.network.now + self.interval, self)


class DhtNetwork:
    def __init__(self, config: DhtConfig, clock: VirtualClock | None = None):
        self.config = config
        self.clock = clock or VirtualClock(time_scale=config.time_scale)
        self.rng = random.Random(config.seed)
        self.nodes: dict[int, Node] = {}
        self.ring: list[int] = []
        self.departed: list[Node] = []
        self._events: list = []
        self._seq = 0
        # every key ever stored by a client, latest store wins
        self.stored_keys: dict[int, StoredKey] = {}

    # -- construction ------------------------------------------------------

    @classmethod
    def bootstrap(cls, config: DhtConfig, clock: VirtualClock | None = None) -> "DhtNetwork":
        net = cls(config, clock)
        while len(net.nodes) < config.node_count:
            nid = net.rng.getrandbits(ID_BITS)
            if nid not in net.nodes:
                net._insert(Node(nid, net.now))
        net.every(config.replication_interval, net.replicate)
        if config.join_rate > 0:
            net.schedule(net.now + net.rng.expovariate(config.join_rate), net._churn_join)
        if config.leave_rate > 0:
            net.schedule(net.now + net.rng.expovariate(config.leave_rate), net._churn_leave)
        return net

    @property
    def now(self) -> float:
        return self.clock.now

    def alive_nodes(self) -> list[Node]:
        return [self.nodes[i] for i in self.ring]

    # -- ring geometry -----------------------------------------------------

    def _index_of_successor(self, key: int) -> int:
        if not self.ring:
            raise EmptyNetwork("no alive nodes")
        return bisect.bisect_left(self.ring, key) % len(self.ring)

    def successor(self, key) -> Node:
        return self.nodes[self.ring[self._index_of_successor(as_int(key))]]

    def replica_nodes(self, key) -> list[Node]:
        """Successor of ``key`` and the next r-1 alive nodes clockwise."""
        start = self._index_of_successor(as_int(key))
        count = min(self.config.replication_factor, len(self.ring))
        size = len(self.ring)
        return [self.nodes[self.ring[(start + j) % size]] for j in range(count)]

    # -- client operations -------------------------------------------------

    def store(self, key, value: bytes, ttl: float | None = None) -> StoreReceipt:
        """Place ``value`` on the key's replica range.  TTL is capped at the
        network's fixed entry timeout."""
        k = as_int(key)
        ttl = self.config.entry_ttl if ttl is None else min(ttl, self.config.entry_ttl)
        replicas = self.replica_nodes(k)
        entry = DhtEntry(k, bytes(value), self.now, self.now + max(ttl, 0.0))
        for node in replicas:
            self._deliver(node, entry, overwrite=True)
        self.stored_keys[k] = StoredKey(len(value), entry.stored_at, entry.expires_at)
        return StoreReceipt(as_bytes(k), tuple(n.dht_id for n in replicas), entry.expires_at)

    def retrieve(self, key) -> bytes | None:
        k = as_int(key)
        if not self.ring:
            return None
        now = self.now
        for node in self.replica_nodes(k):
            entry = node.store.get(k)
            if entry is not None and entry.live(now):
                return entry.value
        return None

    # -- membership --------------------------------------------------------

    def _insert(self, node: Node) -> None:
        self.nodes[node.id] = node
        bisect.insort(self.ring, node.id)

    def join(self, node_id=None, *, sybil: bool = False, observer: Callable | None = None) -> Node:
        """Add a node now; it immediately receives replicas of every key whose
        replica range it falls into."""
        if node_id is None:
            nid = self.rng.getrandbits(ID_BITS)
            while nid in self.nodes:
                nid = self.rng.getrandbits(ID_BITS)
        else:
            nid = as_int(node_id)
            if nid in self.nodes:
                raise ValueError(f"node {nid:040x} already on the ring")
        node = Node(nid, self.now, sybil=sybil, observer=observer)
        self._insert(node)
        self._replicate_to_newcomer(node)
        return node

    def _replicate_to_newcomer(self, node: Node) -> None:
        size = len(self.ring)
        r = self.config.replication_factor
        if size == 1:
            return
        idx = bisect.bisect_left(self.ring, node.id)
        now = self.now
        seen: set[int] = set()
        for step in range(1, min(r, size - 1) + 1):
            holder = self.nodes[self.ring[(idx + step) % size]]
            for key, entry in list(holder.store.items()):
                if key in seen or not entry.live(now):
                    continue
                seen.add(key)
                if (idx - self._index_of_successor(key)) % size < r:
                    self._deliver(node, entry)

    def leave(self, node_id) -> Node:
        """Remove a node from the ring.  Its store is kept, stale and unserved."""
        nid = as_int(node_id)
        node = self.nodes.pop(nid, None)
        if node is None:
            raise KeyError(f"node {nid:040x} is not alive")
        self.ring.pop(bisect.bisect_left(self.ring, nid))
        node.alive = False
        self.departed.append(node)
        return node

    def _deliver(self, node: Node, entry: DhtEntry, overwrite: bool = False) -> None:
        current = node.store.get(entry.key)
        if current is not None and not overwrite and current.expires_at >= entry.expires_at:
            return
        node.store[entry.key] = entry
        if node.observer is not None:
            node.observer(node, entry)

    # -- periodic behaviour ------------------------------------------------

    def replicate(self) -> None:
        """One replication round.

        Expired entries are purged from alive nodes, every live key is pushed
        to its current replica range, and alive nodes outside that range drop
        their copy.
        """
        now = self.now
        best: dict[int, DhtEntry] = {}
        holding: dict[int, list[int]] = {}
        for nid in self.ring:
            store = self.nodes[nid].store
            for key in [k for k, e in store.items() if not e.live(now)]:
                del store[key]
            for key, entry in store.items():
                holding.setdefault(key, []).append(nid)
                cur = best.get(key)
                if cur is None or entry.expires_at > cur.expires_at:
                    best[key] = entry
        for key in sorted(best):
            entry = best[key]
            replicas = self.replica_nodes(key)
            keep = {n.id for n in replicas}
            for node in replicas:
                self._deliver(node, entry)
            for nid in holding[key]:
                if nid not in keep:
                    del self.nodes[nid].store[key]

    def _honest_ids(self) -> list[int]:
        return [i for i in self.ring if not self.nodes[i].sybil]

    def _churn_join(self) -> None:
        self.join()
        self.schedule(self.now + self.rng.expovariate(self.config.join_rate), self._churn_join)

    def _churn_leave(self) -> None:
        honest = self._honest_ids()
        if len(honest) > 1:
            self.leave(self.rng.choice(honest))
        self.schedule(self.now + self.rng.expovariate(self.config.leave_rate), self._churn_leave)

    # -- event loop --------------------------------------------------------

    def schedule(self, at: float, callback: Callable, *args) -> None:
        if at < self.now:
            raise ValueError("cannot schedule in the past")
        self._seq += 1
        heapq.heappush(self._events, (at, self._seq, callback, args))

    def every(self, interval: float, callback: Callable, start: float | None = None) -> None:
        first = self.now + interval if start is None else start
        self.schedule(first, _Periodic(self, interval, callback))

    def tick(self, dt: float) -> None:
        if dt < 0:
            raise ValueError("dt must be non-negative")
        self.run_until(self.now + dt)

    def run_until(self, target: float) -> None:
        while self._events and self._events[0][0] <= target:
            at, _, callback, args = heapq.heappop(self._events)
            self.clock.advance_to(at)
            callback(*args)
        self.clock.advance_to(target)

    # -- scripted churn ----------------------------------------------------

    def _scripted_leave(self, nid: int) -> None:
        if nid in self.nodes:
            self.leave(nid)
        else:
            log.warning("scripted LEAVE for %040x: node not alive", nid)

    def _scripted_join(self, nid: int) -> None:
        if nid in self.nodes:
            log.warning("scripted JOIN for %040x: node already alive", nid)
        else:
            self.join(nid)

    def apply_scenario(self, scenario: "Scenario") -> None:
        for ev in scenario.events:
            handler = self._scripted_join if ev.action == "JOIN" else self._scripted_leave
            self.schedule(ev.at, handler, ev.node_id)

    # -- inspection --------------------------------------------------------

    def holders(self, key) -> list[Node]:
        k = as_int(key)
        return [self.nodes[i] for i in self.ring if k in self.nodes[i].store]

    def canonical_state(self) -> bytes:
        """Byte serialization of the whole network, for determinism checks."""
        out = [struct.pack(">d", self.now)]

        def dump(node: Node) -> Iterator[bytes]:
            yield as_bytes(node.id)
            yield struct.pack(">d??I", node.joined_at, node.alive, node.sybil, len(node.store))
            for key in sorted(node.store):
                e = node.store[key]
                yield as_bytes(key) + struct.pack(">ddI", e.stored_at, e.expires_at, len(e.value)) + e.value

        for nid in self.ring:
            out.extend(dump(self.nodes[nid]))
        out.append(b"|departed|")
        for node in self.departed:
            out.extend(dump(node))
        out.append(struct.pack(">I", len(self._events)))
        for at, seq, _, _ in sorted(self._events, key=lambda e: (e[0], e[1])):
            out.append(struct.pack(">dQ", at, seq))
        return b"".join(out)

    def state_digest(self) -> str:
        return hashlib.sha256(self.canonical_state()).hexdigest()


# -- scenario scripts --------------------------------------------------------

@dataclass(frozen=True)
class ScenarioEvent:
    at: float
    action: str
    node_id: int


@dataclass(frozen=True)
class Scenario:
    seed: int | None
    events: tuple


def parse_scenario(text: str) -> Scenario:
    """Parse ``SEED <u64>`` and ``AT <secs> JOIN|LEAVE <hex-id>`` lines.

    Blank lines and ``#`` comments are ignored.
    """
    seed = None
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0].upper() == "SEED" and len(parts) == 2:
                seed = int(parts[1])
                if not 0 <= seed < 1 << 64:
                    raise ValueError("seed must be a u64")
            elif parts[0].upper() == "AT" and len(parts) == 4:
                at = float(parts[1])
                action = parts[2].upper()
                if action not in ("JOIN", "LEAVE"):
                    raise ValueError(f"unknown action {parts[2]!r}")
                if at < 0:
                    raise ValueError("negative time")
                nid = int(parts[3], 16)
                if len(parts[3]) > 40 or nid >= ID_SPACE:
                    raise ValueError("node id wider than 160 bits")
                events.append(ScenarioEvent(at, action, nid))
            else:
                raise ValueError("expected SEED <u64> or AT <secs> JOIN|LEAVE <hex-id>")
        except ValueError as exc:
            raise ScenarioError(f"line {lineno}: {exc}") from None
    return Scenario(seed, tuple(events))
