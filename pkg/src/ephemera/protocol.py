"""Encapsulation and decapsulation for the three architectures.

* vanish: data key Shamir-shared into the DHT, nothing central.
* ephemerizer: data key held by the key server until expiry.
* hybrid: the key server holds S_t, the DHT holds shares of (N_t, ID_t);
  the data key H = h(N_t, S_t) needs both.
"""

from __future__ import annotations

from . import crypto
from .errors import InsufficientShares, InvalidParams
from .field import production_prime
from .sharing import (
    Share,
    SharingParams,
    recursive_reconstruct,
    shamir_deal,
    shamir_reconstruct,
    share_width,
)
from .timing import Timings, section
from .vdo import Mode, Vdo

VANISH_DEFAULTS = (10, 7)
HYBRID_DEFAULTS = (50, 45)


def abscissas(vdo: Vdo) -> range:
    """Share x-coordinates the VDO's scheme can produce."""
    if vdo.mode is Mode.HYBRID:
        return range(vdo.k, vdo.k + vdo.n)
    return range(1, vdo.n + 1)


def parse_share(raw: bytes | None, valid: range) -> Share | None:
    """A share from a DHT value, or None if the value cannot be one of ours."""
    field = production_prime()
    if raw is None or len(raw) != share_width(field):
        return None
    try:
        share = Share.from_bytes(raw, field)
    except ValueError:
        return None
    return share if share.x in valid else None


def collect_shares(vdo: Vdo, dht, timings: Timings | None = None) -> list[Share]:
    """Probe the VDO's indices in order and stop at k well-formed shares."""
    valid = abscissas(vdo)
    found: list[Share] = []
    seen: set[int] = set()
    with section(timings, "dht"):
        for index in crypto.derive_indices(vdo.l, vdo.n):
            share = parse_share(dht.retrieve(index), valid)
            if share is None or share.x in seen:
                continue
            seen.add(share.x)
            found.append(share)
            if len(found) == vdo.k:
                break
    if len(found) < vdo.k:
        raise InsufficientShares(f"found {len(found)} of the {vdo.k} shares needed")
    return found


def _require(vdo: Vdo, mode: Mode) -> None:
    if vdo.mode is not mode:
        raise ValueError(f"expected a {mode.label} VDO, got {vdo.mode.label}")


# -- hybrid ------------------------------------------------------------------

def encapsulate_hybrid(data: bytes, expires_at: float, params: SharingParams, server, dht,
                       rng=None, *, read_once: bool = False,
                       timings: Timings | None = None) -> Vdo:
    with section(timings, "server"):
        grant = server.create_key(expires_at, read_once=read_once)
    id_t = grant.id_t
    try:
        with section(timings, "crypto"):
            c = crypto.encrypt(grant.h, data, rng)
    except Exception:
        server.abort(id_t)
        raise
    del grant  # the sender keeps (C, N_t, ID_t) and forgets H
    placement = server.distribute_shares(id_t, params, dht, timings)
    return Vdo(Mode.HYBRID, c, placement.l, params.n, placement.k)


def recover_hybrid_secrets(vdo: Vdo, dht, timings: Timings | None = None) -> tuple[bytes, int]:
    """(N_t, ID_t) from the DHT shares.  Useless without the server's S_t."""
    shares = collect_shares(vdo, dht, timings)
    with section(timings, "sharing"):
        bundle = recursive_reconstruct(shares, SharingParams(vdo.n, vdo.k))
    return _secrets_from(bundle.main, bundle.additional[0])


def _secrets_from(main: int, id_t: int) -> tuple[bytes, int]:
    if main >= 1 << (8 * crypto.NONCE_SIZE) or id_t >= 1 << crypto.EPHEMERAL_ID_BITS:
        raise InsufficientShares("shares are inconsistent with this VDO")
    return main.to_bytes(crypto.NONCE_SIZE, "big"), id_t


def decapsulate_hybrid(vdo: Vdo, server, dht, timings: Timings | None = None) -> bytes:
    _require(vdo, Mode.HYBRID)
    if vdo.k < 3:
        raise InvalidParams("hybrid VDOs need k >= 3")
    n_t, id_t = recover_hybrid_secrets(vdo, dht, timings)
    with section(timings, "server"):
        h = server.request_key(n_t, id_t)
    with section(timings, "crypto"):
        return crypto.decrypt(h, vdo.c)


def refresh_hybrid(vdo: Vdo, server, dht, id_t: int | None = None) -> Vdo:
    """Have the server re-deal the shares and re-issue the VDO under the new L."""
    _require(vdo, Mode.HYBRID)
    if id_t is None:
        _, id_t = recover_hybrid_secrets(vdo, dht)
    return vdo.with_access_key(server.refresh(id_t, dht))


# -- vanish ------------------------------------------------------------------

def _sprinkle_key(key: bytes, params: SharingParams, dht, rng, timings) -> bytes:
    with section(timings, "sharing"):
        shares = shamir_deal(int.from_bytes(key, "big"), params, rng)
    access_key = crypto.random_bytes(crypto.KEY_SIZE, rng)
    with section(timings, "dht"):
        for index, share in zip(crypto.derive_indices(access_key, params.n), shares):
            dht.store(index, share.to_bytes(params.field))
    return access_key


def encapsulate_vanish(data: bytes, params: SharingParams, dht, rng=None,
                       timings: Timings | None = None) -> Vdo:
    key = crypto.random_bytes(crypto.KEY_SIZE, rng)
    with section(timings, "crypto"):
        c = crypto.encrypt(key, data, rng)
    access_key = _sprinkle_key(key, params, dht, rng, timings)
    return Vdo(Mode.VANISH, c, access_key, params.n, params.k)


def recover_vanish_key(vdo: Vdo, dht, timings: Timings | None = None) -> bytes:
    shares = collect_shares(vdo, dht, timings)
    with section(timings, "sharing"):
        secret = shamir_reconstruct(shares, vdo.k, production_prime())
    if secret >= 1 << (8 * crypto.KEY_SIZE):
        raise InsufficientShares("shares are inconsistent with this VDO")
    return secret.to_bytes(crypto.KEY_SIZE, "big")


def decapsulate_vanish(vdo: Vdo, dht, timings: Timings | None = None) -> bytes:
    _require(vdo, Mode.VANISH)
    key = recover_vanish_key(vdo, dht, timings)
    with section(timings, "crypto"):
        return crypto.decrypt(key, vdo.c)


def refresh_vanish(vdo: Vdo, dht, rng=None) -> Vdo:
    """Recover K before the DHT timeout and re-sprinkle it under a new L."""
    _require(vdo, Mode.VANISH)
    key = recover_vanish_key(vdo, dht)
    return vdo.with_access_key(_sprinkle_key(key, SharingParams(vdo.n, vdo.k), dht, rng, None))


# -- ephemerizer only --------------------------------------------------------

def encapsulate_ephemerizer(data: bytes, expires_at: float, server, rng=None,
                            timings: Timings | None = None) -> Vdo:
    with section(timings, "server"):
        key, id_ = server.create_plain_key(expires_at)
    with section(timings, "crypto"):
        c = crypto.encrypt(key, data, rng)
    return Vdo(Mode.EPHEMERIZER, c, id=id_)


def decapsulate_ephemerizer(vdo: Vdo, server, timings: Timings | None = None) -> bytes:
    _require(vdo, Mode.EPHEMERIZER)
    with section(timings, "server"):
        key = server.fetch_plain_key(vdo.id)
    with section(timings, "crypto"):
        return crypto.decrypt(key, vdo.c)


# -- dispatch ----------------------------------------------------------------

def encapsulate(mode: Mode, data: bytes, *, server=None, dht=None, expires_at: float | None = None,
                params: SharingParams | None = None, rng=None, read_once: bool = False) -> Vdo:
    if mode is Mode.VANISH:
        return encapsulate_vanish(data, params or SharingParams(*VANISH_DEFAULTS), dht, rng)
    if expires_at is None:
        raise ValueError(f"{mode.label} mode needs an expiry time")
    if mode is Mode.EPHEMERIZER:
        return encapsulate_ephemerizer(data, expires_at, server, rng)
    return encapsulate_hybrid(data, expires_at, params or SharingParams(*HYBRID_DEFAULTS),
                              server, dht, rng, read_once=read_once)


def decapsulate(vdo: Vdo, *, server=None, dht=None) -> bytes:
    if vdo.mode is Mode.VANISH:
        return decapsulate_vanish(vdo, dht)
    if vdo.mode is Mode.EPHEMERIZER:
        return decapsulate_ephemerizer(vdo, server)
    return decapsulate_hybrid(vdo, server, dht)
