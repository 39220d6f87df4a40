"""Prime-field arithmetic and polynomial interpolation over Z_p.

Field elements are plain Python ints kept in ``[0, p)``; a :class:`PrimeField`
carries the modulus.  Nothing here is constant time.
"""

from __future__ import annotations

import functools
import threading
from dataclasses import dataclass
from typing import Sequence

from .errors import DuplicateAbscissa, InvalidParams

# Fixed witness set: deterministic for n < 3.3e24, overwhelmingly reliable
# beyond that (error < 4^-24 for any composite).
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37,
                 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89)


def is_prime(n: int) -> bool:
    """Miller-Rabin with a fixed witness set (no randomness)."""
    if n < 2:
        return False
    for q in _MR_WITNESSES:
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class PrimeField:
    """The field Z_p.  ``p`` is checked for primality on construction."""

    p: int

    def __post_init__(self):
        if not is_prime(self.p):
            raise InvalidParams(f"modulus {self.p} is not prime")

    @property
    def bits(self) -> int:
        return self.p.bit_length()

    @property
    def byte_width(self) -> int:
        """Fixed serialization width of one element."""
        return (self.bits + 7) // 8

    def __call__(self, value: int) -> int:
        return value % self.p

    def inv(self, a: int) -> int:
        a %= self.p
        if a == 0:
            raise ZeroDivisionError("0 has no inverse")
        return pow(a, -1, self.p)

    def random_element(self, rng) -> int:
        return rng.randrange(self.p)


PRODUCTION_FLOOR = 1 << 130


@functools.lru_cache(maxsize=None)
def production_prime() -> PrimeField:
    """Smallest prime strictly greater than 2**130."""
    candidate = PRODUCTION_FLOOR + 1
    while not is_prime(candidate):
        candidate += 2
    return PrimeField(candidate)


@dataclass(frozen=True)
class Polynomial:
    """Coefficients constant term first, trailing zeros stripped."""

    coefficients: tuple
    field: PrimeField

    def __post_init__(self):
        coeffs = [c % self.field.p for c in self.coefficients]
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
        object.__setattr__(self, "coefficients", tuple(coeffs or [0]))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x: int) -> int:
        return evaluate(self, x)


def evaluate(poly: Polynomial, x: int) -> int:
    p = poly.field.p
    acc = 0
    for c in reversed(poly.coefficients):
        acc = (acc * x + c) % p
    return acc


def _check_points(points: Sequence[tuple[int, int]], field: PrimeField) -> list[tuple[int, int]]:
    if not points:
        raise InvalidParams("need at least one point")
    if len(points) > field.p:
        raise InvalidParams("more points than field elements")
    pts = [(x % field.p, y % field.p) for x, y in points]
    seen = set()
    for x, _ in pts:
        if x in seen:
            raise DuplicateAbscissa(f"abscissa {x} appears twice")
        seen.add(x)
    return pts


def interpolate(points: Sequence[tuple[int, int]], field: PrimeField) -> Polynomial:
    """Unique polynomial of degree < len(points) through ``points``.

    Lagrange form expanded via the master polynomial prod(x - x_j), so the
    whole thing is O(k^2) field operations.
    """
    pts = _check_points(points, field)
    p = field.p
    k = len(pts)
    # master = prod (x - x_j), ascending coefficients
    master = [1]
    for xj, _ in pts:
        nxt = [0] * (len(master) + 1)
        for i, c in enumerate(master):
            nxt[i] = (nxt[i] - xj * c) % p
            nxt[i + 1] = (nxt[i + 1] + c) % p
        master = nxt
    result = [0] * k
    for j, (xj, yj) in enumerate(pts):
        # synthetic division master / (x - xj) -> basis numerator of degree k-1
        quotient = [0] * k
        carry = 0
        for i in range(k, 0, -1):
            carry = (master[i] + carry * xj) % p
            quotient[i - 1] = carry
        denom = 1
        for m, (xm, _) in enumerate(pts):
            if m != j:
                denom = denom * (xj - xm) % p
        scale = yj * pow(denom, -1, p) % p
        for i in range(k):
            result[i] = (result[i] + scale * quotient[i]) % p
    return Polynomial(tuple(result), field)


def lagrange_at(points: Sequence[tuple[int, int]], x: int, field: PrimeField) -> int:
    """Value at ``x`` of the interpolant through ``points``, without coefficients."""
    pts = _check_points(points, field)
    p = field.p
    x %= p
    for xj, yj in pts:
        if xj == x:
            return yj
    num_all = 1
    for xj, _ in pts:
        num_all = num_all * (x - xj) % p
    total = 0
    for j, (xj, yj) in enumerate(pts):
        denom = x - xj
        for m, (xm, _) in enumerate(pts):
            if m != j:
                denom = denom * (xj - xm) % p
        total += yj * pow(denom, -1, p)
    return num_all * total % p


_TABLE_CAP = 1 << 20


class FactorialTable:
    """Lazily grown factorials and inverse factorials mod p.

    Indices are valid below ``limit`` = min(p, 2**20); beyond p the factorials
    vanish mod p, beyond the cap the table would be too large.  Callers fall
    back to direct products or ``pow`` outside that range.
    """

    def __init__(self, field: PrimeField):
        self.field = field
        self.limit = min(field.p, _TABLE_CAP)
        self._fact = [1]
        self._inv = [1]
        self._lock = threading.Lock()

    def ensure(self, n: int) -> None:
        n = min(n, self.limit - 1)
        if n < len(self._fact):
            return
        with self._lock:
            if n < len(self._fact):
                return
            p = self.field.p
            size = min(max(n + 1, 2 * len(self._fact)), self.limit)
            fact = list(self._fact)
            for i in range(len(fact), size):
                fact.append(fact[-1] * i % p)
            inv = [0] * size
            inv[-1] = pow(fact[-1], -1, p)
            for i in range(size - 1, 0, -1):
                inv[i - 1] = inv[i] * i % p
            self._fact, self._inv = fact, inv

    def fact(self, n: int) -> int:
        self.ensure(n)
        return self._fact[n]

    def inv_fact(self, n: int) -> int:
        self.ensure(n)
        return self._inv[n]

    def int_inv(self, m: int) -> int:
        """Inverse of the integer ``m`` (must be nonzero mod p)."""
        a = abs(m)
        if 0 < a < self.limit:
            self.ensure(a)
            r = self._fact[a - 1] * self._inv[a] % self.field.p
            return r if m > 0 else (self.field.p - r) % self.field.p
        return self.field.inv(m)

    def falling(self, x: int, j: int) -> int:
        """prod_{m=1..j} (x - m) mod p, for any integer x."""
        if j <= 0:
            return 1
        p = self.field.p
        if x - j >= 1 and x - 1 < self.limit:
            self.ensure(x - 1)
            return self._fact[x - 1] * self._inv[x - 1 - j] % p
        if x <= 0 and j - x < self.limit:
            self.ensure(j - x)
            r = self._fact[j - x] * self._inv[-x] % p
            return r if j % 2 == 0 else (p - r) % p
        if 1 <= x <= j:
            return 0
        acc = 1
        for m in range(1, j + 1):
            acc = acc * (x - m) % p
        return acc

    def binomial(self, n: int, r: int) -> int:
        """C(n, r) mod p; requires n < limit."""
        if r < 0 or r > n:
            return 0
        self.ensure(n)
        return self._fact[n] * self._inv[r] % self.field.p * self._inv[n - r] % self.field.p


@functools.lru_cache(maxsize=32)
def factorials(field: PrimeField) -> FactorialTable:
    return FactorialTable(field)


def extrapolate_consecutive(values: Sequence[int], start: int, z: int,
                            field: PrimeField) -> int:
    """Value at ``z`` of the degree-d polynomial taking ``values`` at start..start+d.

    Consecutive nodes give closed-form barycentric weights, so this is O(d).
    Requires d < p.
    """
    p = field.p
    d = len(values) - 1
    u = z - start
    for j in range(d + 1):
        if (u - j) % p == 0:
            return values[j] % p
    tab = factorials(field)
    tab.ensure(d)
    # prod_{m=0..d} (u - m) == falling(u + 1, d + 1)
    lead = tab.falling(u + 1, d + 1)
    total = 0
    for j, v in enumerate(values):
        w = tab.inv_fact(j) * tab.inv_fact(d - j) % p
        if (d - j) % 2:
            w = p - w
        total += v * w % p * tab.int_inv(u - j)
    return lead * total % p


def forward_difference(values: Sequence[int], order: int, field: PrimeField) -> int:
    """order-th forward difference at the first node: sum (-1)^(order-m) C(order, m) v_m."""
    p = field.p
    tab = factorials(field)
    total = 0
    for m in range(order + 1):
        term = tab.binomial(order, m) * values[m]
        total += term if (order - m) % 2 == 0 else -term
    return total % p

