import itertools
import random
from collections import Counter, defaultdict

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ephemera.errors import DuplicateAbscissa, InsufficientShares, InvalidParams, SecretOutOfField
from ephemera.field import PrimeField, production_prime
from ephemera.sharing import (
    SecretBundle,
    Share,
    SharingParams,
    pad_bundle,
    recursive_deal,
    recursive_reconstruct,
    shamir_deal,
    shamir_reconstruct,
    share_width,
)

from oracles import ScriptedRng, interp_eval, naive_chain, naive_unchain

F11 = PrimeField(11)


def test_worked_example_matches_hand_trace():
    params = SharingParams(4, 3, F11)
    shares = recursive_deal(SecretBundle(7, (3,)), params, ScriptedRng([5]))
    assert [(s.x, s.y) for s in shares] == [(3, 2), (4, 8), (5, 5), (6, 4)]
    _, oracle = naive_chain(7, [3], 5, 3, 4, 11)
    assert [(s.x, s.y) for s in shares] == oracle
    for subset in itertools.combinations(shares, 3):
        assert recursive_reconstruct(list(subset), params) == SecretBundle(7, (3,))


def test_worked_example_with_two_shares_is_insufficient():
    params = SharingParams(4, 3, F11)
    shares = recursive_deal(SecretBundle(7, (3,)), params, ScriptedRng([5]))
    with pytest.raises(InsufficientShares):
        recursive_reconstruct(shares[:2], params)


@pytest.mark.parametrize("p", [11, 13, 17, 101, 7919])
def test_recursive_deal_matches_naive_chain(p):
    r = random.Random(p)
    field = PrimeField(p)
    for _ in range(60):
        k = r.randint(2, min(9, p // 2))
        n = r.randint(k, min(14, p - k))
        extras = [r.randrange(p) for _ in range(k - 2)]
        secret, y11 = r.randrange(p), r.randrange(p)
        params = SharingParams(n, k, field)
        got = recursive_deal(SecretBundle(secret, tuple(extras)), params, ScriptedRng([y11]))
        _, expected = naive_chain(secret, extras, y11, k, n, p)
        assert [(s.x, s.y) for s in got] == expected


def test_recursive_deal_matches_naive_chain_production_field():
    r = random.Random(99)
    field = production_prime()
    for k, n in [(2, 3), (3, 4), (5, 9), (12, 12), (20, 25)]:
        extras = [r.randrange(field.p) for _ in range(k - 2)]
        secret, y11 = r.randrange(2**128), r.randrange(field.p)
        got = recursive_deal(SecretBundle(secret, tuple(extras)), SharingParams(n, k), ScriptedRng([y11]))
        _, expected = naive_chain(secret, extras, y11, k, n, field.p)
        assert [(s.x, s.y) for s in got] == expected


@pytest.mark.parametrize("p", [13, 101, 7919])
def test_reconstruct_agrees_with_naive_inverse(p):
    r = random.Random(p + 1)
    field = PrimeField(p)
    for _ in range(40):
        k = r.randint(2, min(8, p // 2))
        n = r.randint(k, min(14, p - k))
        extras = [r.randrange(p) for _ in range(k - 2)]
        secret = r.randrange(p)
        shares = recursive_deal(SecretBundle(secret, tuple(extras)), SharingParams(n, k, field), r)
        subset = r.sample(shares, k)
        got = recursive_reconstruct(subset, SharingParams(n, k, field))
        assert (got.main, list(got.additional)) == naive_unchain([(s.x, s.y) for s in subset], k, p)
        assert got == SecretBundle(secret, tuple(extras))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(0, 30), st.integers(0, 2**64), st.data())
def test_recursive_round_trip_any_k_subset(k, extra_n, seed, data):
    n = k + extra_n
    r = random.Random(seed)
    params = SharingParams(n, k)
    bundle = pad_bundle(r.randrange(2**128), [r.randrange(2**16)], params, r) if k >= 3 else \
        SecretBundle(r.randrange(2**128))
    shares = recursive_deal(bundle, params, r)
    idx = data.draw(st.lists(st.integers(0, n - 1), min_size=k, max_size=n, unique=True))
    picked = [shares[i] for i in idx]
    assert recursive_reconstruct(picked, params) == bundle


def test_recursive_scales_to_large_k():
    r = random.Random(0)
    params = SharingParams(200, 200)
    bundle = pad_bundle(12345, [77], params, r)
    shares = recursive_deal(bundle, params, r)
    assert recursive_reconstruct(shares, params) == bundle
    r.shuffle(shares)
    assert recursive_reconstruct(shares, params) == bundle


def test_recursive_rejects_bad_bundles():
    params = SharingParams(5, 4, PrimeField(101))
    with pytest.raises(InvalidParams):
        recursive_deal(SecretBundle(1, (2,)), params)
    with pytest.raises(SecretOutOfField):
        recursive_deal(SecretBundle(101, (1, 2)), params)
    with pytest.raises(InvalidParams):
        recursive_deal(SecretBundle(1), SharingParams(3, 1, PrimeField(101)))


def test_recursive_secrecy_with_uniform_extras():
    # with y11 and the extra secrets uniform, k-1 shares say nothing about S
    for p, k in [(7, 3), (11, 3), (13, 3), (13, 2)]:
        field = PrimeField(p)
        params = SharingParams(p - k, k, field)
        tally = defaultdict(Counter)
        for secret in range(p):
            for extras in itertools.product(range(p), repeat=k - 2):
                for y11 in range(p):
                    shares = recursive_deal(SecretBundle(secret, extras), params, ScriptedRng([y11]))
                    for sub in itertools.combinations(shares, k - 1):
                        tally[tuple((s.x, s.y) for s in sub)][secret] += 1
        for counts in tally.values():
            assert len(counts) == p and len(set(counts.values())) == 1


def test_recursive_secrecy_needs_unknown_extras():
    # a known extra secret plus k-1 shares pins S down: a documented limitation
    p, k = 11, 3
    params = SharingParams(p - k, k, PrimeField(p))
    tally = defaultdict(Counter)
    for secret in range(p):
        for y11 in range(p):
            shares = recursive_deal(SecretBundle(secret, (0,)), params, ScriptedRng([y11]))
            for sub in itertools.combinations(shares, k - 1):
                tally[tuple((s.x, s.y) for s in sub)][secret] += 1
    assert any(len(c) < p for c in tally.values())


def test_shamir_round_trip_and_threshold():
    r = random.Random(4)
    field = production_prime()
    params = SharingParams(10, 7)
    secret = r.randrange(2**128)
    shares = shamir_deal(secret, params, r)
    assert [s.x for s in shares] == list(range(1, 11))
    for subset in itertools.islice(itertools.combinations(shares, 7), 50):
        assert shamir_reconstruct(list(subset), 7, field) == secret
    with pytest.raises(InsufficientShares):
        shamir_reconstruct(shares[:6], 7, field)


def test_shamir_polynomial_matches_oracle():
    field = PrimeField(101)
    params = SharingParams(6, 3, field)
    shares = shamir_deal(42, params, ScriptedRng([5, 9]))
    expected = [(x, (42 + 5 * x + 9 * x * x) % 101) for x in range(1, 7)]
    assert [(s.x, s.y) for s in shares] == expected
    assert interp_eval(expected[:3], 0, 101) == 42


def test_shamir_k1_is_replication():
    field = PrimeField(101)
    shares = shamir_deal(17, SharingParams(4, 1, field), random.Random(0))
    assert all(s.y == 17 for s in shares)
    assert shamir_reconstruct(shares[2:3], 1, field) == 17


def test_shamir_errors():
    field = PrimeField(101)
    with pytest.raises(SecretOutOfField):
        shamir_deal(101, SharingParams(3, 2, field))
    with pytest.raises(DuplicateAbscissa):
        shamir_reconstruct([Share(1, 2), Share(1, 3), Share(2, 5)], 2, field)


def test_sharing_params_validation():
    with pytest.raises(InvalidParams):
        SharingParams(3, 4)
    with pytest.raises(InvalidParams):
        SharingParams(3, 0)
    with pytest.raises(InvalidParams):
        SharingParams(8, 4, PrimeField(11))  # needs x up to 11
    SharingParams(7, 4, PrimeField(11))
    assert SharingParams.from_percent(50, 90).k == 45
    assert SharingParams.from_percent(200, 100).k == 200
    assert SharingParams.from_percent(10, 25).k == 3
    with pytest.raises(InvalidParams):
        SharingParams.from_percent(10, 0)


def test_pad_bundle():
    params = SharingParams(10, 5)
    b = pad_bundle(9, [1], params, random.Random(0))
    assert b.main == 9 and len(b.additional) == 3 and b.additional[0] == 1
    with pytest.raises(InvalidParams):
        pad_bundle(9, [1, 2], SharingParams(3, 3))


def test_share_serialization():
    field = production_prime()
    assert share_width(field) == 19
    s = Share(300, field.p - 1)
    raw = s.to_bytes(field)
    assert len(raw) == 19 and raw[:2] == (300).to_bytes(2, "big")
    assert Share.from_bytes(raw, field) == s
    with pytest.raises(ValueError):
        Share.from_bytes(raw[:-1], field)
    with pytest.raises(ValueError):
        Share.from_bytes(b"\x00\x01" + field.p.to_bytes(17, "big"), field)
