import random

import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from hypothesis import given, settings
from hypothesis import strategies as st

from ephemera import crypto
from ephemera.errors import MalformedCiphertext

from oracles import ScriptedRng


class FixedIv:
    def __init__(self, iv):
        self.iv = iv

    def randbytes(self, n):
        assert n == 16
        return self.iv


SHA1_VECTORS = [
    (b"", "da39a3ee5e6b4b0d3255bfef95601890afd80709"),
    (b"abc", "a9993e364706816aba3e25717850c26c9cd0d89d"),
    (b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
     "84983e441c3bd26ebaae4aa1f95129e5e54670f1"),
    (b"a" * 1_000_000, "34aa973cd4c4daa4f61eeb2bdbad27316534016f"),
]


@pytest.mark.parametrize("message,digest", SHA1_VECTORS)
def test_sha1_known_answers(message, digest):
    assert crypto.sha1(message).hex() == digest


def test_aes128_block_known_answer_through_ctr():
    # keystream block 0 is AES_K(IV); with a zero plaintext the ciphertext is that block
    key = bytes(range(16))
    iv = bytes.fromhex("00112233445566778899aabbccddeeff")
    ct = crypto.encrypt(key, bytes(16), FixedIv(iv))
    assert ct[:16] == iv
    assert ct[16:].hex() == "69c4e0d86a7b0430d8cdb78070b4c55a"


def test_aes128_ctr_known_answer():
    key = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")
    iv = bytes.fromhex("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff")
    pt = bytes.fromhex(
        "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51"
        "30c81c46a35ce411e5fbc1191a0a52eff69f2445df4f9b17ad2b417be66c3710")
    expected = (
        "874d6191b620e3261bef6864990db6ce9806f66b7970fdff8617187bb9fffdff"
        "5ae4df3edbd5d35e5b4f09020db03eab1e031dda2fbe03d1792170a0f3009cee")
    ct = crypto.encrypt(key, pt, FixedIv(iv))
    assert ct[16:].hex() == expected
    assert crypto.decrypt(key, ct) == pt


def _ecb_keystream(key, iv, blocks):
    ecb = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    start = int.from_bytes(iv, "big")
    return b"".join(ecb.update(((start + i) % 2**128).to_bytes(16, "big")) for i in range(blocks))


def test_ctr_counter_wraps_like_big_endian_integer():
    key = bytes(range(16, 32))
    iv = b"\xff" * 15 + b"\xfe"
    pt = bytes(80)
    ct = crypto.encrypt(key, pt, FixedIv(iv))
    assert ct[16:] == _ecb_keystream(key, iv, 5)


@settings(max_examples=50, deadline=None)
@given(st.binary(max_size=4096), st.binary(min_size=16, max_size=16))
def test_encrypt_decrypt_round_trip(data, key):
    ct = crypto.encrypt(key, data)
    assert len(ct) == len(data) + 16
    assert crypto.decrypt(key, ct) == data


def test_decrypt_rejects_short_ciphertext():
    with pytest.raises(MalformedCiphertext):
        crypto.decrypt(bytes(16), b"short")
    assert crypto.decrypt(bytes(16), bytes(16)) == b""


def test_key_sizes_enforced():
    with pytest.raises(ValueError):
        crypto.encrypt(bytes(15), b"x")
    with pytest.raises(ValueError):
        crypto.derive_key(bytes(15), bytes(16))


def test_derive_key_is_truncated_sha1_of_concatenation():
    n_t, s_t = bytes(range(16)), bytes(range(16, 32))
    import hashlib
    assert crypto.derive_key(n_t, s_t) == hashlib.sha1(n_t + s_t).digest()[:16]
    assert crypto.derive_key(n_t, s_t) != crypto.derive_key(s_t, n_t)


def test_derive_indices():
    access = bytes(16)
    idx = crypto.derive_indices(access, 5)
    import hashlib
    assert idx[0] == hashlib.sha1(access + b"\x00\x00\x00\x01").digest()
    assert len(set(idx)) == 5 and all(len(i) == 20 for i in idx)
    assert crypto.derive_indices(access, 3) == idx[:3]
    assert crypto.derive_indices(b"\x01" * 16, 5) != idx
    assert crypto.derive_indices(access, 0) == []


def test_random_bytes_seeded_and_default():
    a = crypto.random_bytes(16, random.Random(1))
    assert a == crypto.random_bytes(16, random.Random(1))
    assert len(crypto.random_bytes(32)) == 32
    assert crypto.random_bytes(16, ScriptedRng([b"q" * 16])) == b"q" * 16
