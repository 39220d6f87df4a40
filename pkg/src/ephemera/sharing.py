"""Shamir threshold sharing and recursive multi-secret sharing.

The recursive dealing chain works like this.  A random point (1, y11) seeds
it.  For each additional secret s_i, a degree-i polynomial p_i is fitted
through (0, s_i) and the i points carried over from the previous round.
p_i is then sampled at x = i+1 .. 2i+1, and those samples are moved to
x = 1 .. i+1 for the next round.  The last polynomial goes through (0, S),
and the shares are its values at x = k .. k+n-1.

Done literally, that chain is O(k^3).  It is computed here from the
equivalent recurrence

    p_i(x) = p_{i-1}(x + i - 1) + c_i * (x - 1)(x - 2)...(x - i)

(the product vanishes exactly on the carried-over points).  After shifting
x by T_i = i(i-1)/2, every polynomial is y11 plus a sum of c_j-weighted
falling factorials.  With factorial tables that makes dealing O(k^2 + nk).
Reconstruction peels the recurrence back off one level at a time:
c_i = (i-th forward difference) / i!.  That is also O(k^2).
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass
from math import ceil
from typing import Sequence

from .errors import DuplicateAbscissa, InsufficientShares, InvalidParams, SecretOutOfField
from .field import (
    PrimeField,
    extrapolate_consecutive,
    factorials,
    forward_difference,
    lagrange_at,
    production_prime,
)

_system_rng = secrets.SystemRandom()


@dataclass(frozen=True)
class Share:
    x: int
    y: int

    def to_bytes(self, field: PrimeField) -> bytes:
        return self.x.to_bytes(2, "big") + self.y.to_bytes(field.byte_width, "big")

    @classmethod
    def from_bytes(cls, data: bytes, field: PrimeField) -> "Share":
        if len(data) != share_width(field):
            raise ValueError(f"share must be {share_width(field)} bytes, got {len(data)}")
        y = int.from_bytes(data[2:], "big")
        if y >= field.p:
            raise ValueError("share value outside field")
        return cls(int.from_bytes(data[:2], "big"), y)


def share_width(field: PrimeField) -> int:
    """Serialized share size in bytes: u16 abscissa plus one field element."""
    return 2 + field.byte_width


@dataclass(frozen=True)
class SecretBundle:
    main: int
    additional: tuple = ()


@dataclass(frozen=True)
class SharingParams:
    n: int
    k: int
    field: PrimeField = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.field is None:
            object.__setattr__(self, "field", production_prime())
        if not 1 <= self.k <= self.n:
            raise InvalidParams(f"need 1 <= k <= n, got k={self.k} n={self.n}")
        if self.k + self.n - 1 >= self.field.p:
            raise InvalidParams("k + n - 1 must be below the field modulus")
        if self.k + self.n - 1 >= 1 << 16:
            raise InvalidParams("share abscissas must fit in 16 bits")

    @classmethod
    def from_percent(cls, n: int, percent: float, field: PrimeField | None = None) -> "SharingParams":
        if not 0 < percent <= 100:
            raise InvalidParams("threshold percent must be in (0, 100]")
        # round first so 90% of 50 is 45, not 46 from float noise
        return cls(n, ceil(round(n * percent / 100, 9)), field)


def shamir_deal(secret: int, params: SharingParams, rng=None) -> list[Share]:
    """n shares at x = 1..n of a random degree-(k-1) polynomial with f(0) = secret."""
    rng = rng or _system_rng
    p = params.field.p
    if not 0 <= secret < p:
        raise SecretOutOfField("secret must lie in [0, p)")
    coeffs = [secret] + [rng.randrange(p) for _ in range(params.k - 1)]
    shares = []
    for x in range(1, params.n + 1):
        acc = 0
        for c in reversed(coeffs):
            acc = (acc * x + c) % p
        shares.append(Share(x, acc))
    return shares


def _distinct(shares: Sequence[Share], k: int) -> list[Share]:
    seen = set()
    for s in shares:
        if s.x in seen:
            raise DuplicateAbscissa(f"abscissa {s.x} appears twice")
        seen.add(s.x)
    if len(shares) < k:
        raise InsufficientShares(f"need {k} shares, have {len(shares)}")
    return list(shares[:k])


def shamir_reconstruct(shares: Sequence[Share], k: int, field: PrimeField) -> int:
    used = _distinct(shares, k)
    return lagrange_at([(s.x, s.y) for s in used], 0, field)


def pad_bundle(main: int, extras: Sequence[int], params: SharingParams, rng=None) -> SecretBundle:
    """Fill the k-2 additional slots: ``extras`` first, then uniform padding."""
    rng = rng or _system_rng
    slots = params.k - 2
    if slots < len(extras):
        raise InvalidParams(f"threshold {params.k} holds only {max(slots, 0)} additional secrets")
    padding = [rng.randrange(params.field.p) for _ in range(slots - len(extras))]
    return SecretBundle(main, tuple(extras) + tuple(padding))


def _tri(i: int) -> int:
    return i * (i - 1) // 2


def recursive_deal(bundle: SecretBundle, params: SharingParams, rng=None) -> list[Share]:
    rng = rng or _system_rng
    field, k, n = params.field, params.k, params.n
    p = field.p
    if k < 2:
        raise InvalidParams("recursive sharing needs k >= 2")
    if len(bundle.additional) != k - 2:
        raise InvalidParams(f"expected {k - 2} additional secrets, got {len(bundle.additional)}")
    chain = list(bundle.additional) + [bundle.main]
    if any(not 0 <= s < p for s in chain):
        raise SecretOutOfField("every secret must lie in [0, p)")

    tab = factorials(field)
    tab.ensure(k + n + _tri(k - 1))
    y11 = rng.randrange(p)
    coeffs: list[int] = []
    for i in range(1, k):
        t_i = _tri(i)
        prev = y11
        for j, c in enumerate(coeffs, start=1):
            prev += c * tab.falling(t_i - _tri(j), j)
        # the new term at x = 0 is c_i * (-1)^i * i!
        scale = tab.inv_fact(i)
        if i % 2:
            scale = p - scale
        coeffs.append((chain[i - 1] - prev) * scale % p)

    shift = _tri(k - 1)
    shares = []
    for x in range(k, k + n):
        y = x + shift
        acc = y11
        for j, c in enumerate(coeffs, start=1):
            acc += c * tab.falling(y - _tri(j), j)
        shares.append(Share(x, acc % p))
    return shares


def _window_values(used: list[Share], field: PrimeField) -> tuple[int, list[int]]:
    """Values of the share polynomial on k consecutive abscissas from min(x)."""
    k = len(used)
    p = field.p
    start = min(s.x for s in used)
    known = {s.x: s.y for s in used}
    if all(start + t in known for t in range(k)):
        return start, [known[start + t] for t in range(k)]
    tab = factorials(field)
    xs = [s.x for s in used]
    weights = []
    for j, xj in enumerate(xs):
        w = 1
        for m, xm in enumerate(xs):
            if m != j:
                w = w * tab.int_inv(xj - xm) % p
        weights.append(w * used[j].y % p)
    values = []
    for t in range(k):
        z = start + t
        if z in known:
            values.append(known[z])
            continue
        lead = 1
        total = 0
        for xj, wy in zip(xs, weights):
            lead = lead * (z - xj) % p
            total += wy * tab.int_inv(z - xj)
        values.append(lead * total % p)
    return start, values


def recursive_reconstruct(shares: Sequence[Share], params: SharingParams) -> SecretBundle:
    field, k = params.field, params.k
    p = field.p
    used = _distinct(shares, k)
    if k < 2:
        raise InvalidParams("recursive sharing needs k >= 2")
    tab = factorials(field)
    start, values = _window_values(used, field)
    tab.ensure(start + k + _tri(k))
    main = extrapolate_consecutive(values, start, 0, field)
    hidden = [0] * (k - 2)
    for i in range(k - 1, 1, -1):
        c = forward_difference(values, i, field) * tab.inv_fact(i) % p
        # p_{i-1}(x + i - 1) = p_i(x) - c * falling(x, i)
        values = [(values[t] - c * tab.falling(start + t, i)) % p for t in range(i)]
        start += i - 1
        hidden[i - 2] = extrapolate_consecutive(values, start, 0, field)
    return SecretBundle(main, tuple(hidden))
