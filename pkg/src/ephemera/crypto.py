"""AES-128-CTR, SHA-1, key derivation and DHT index derivation.

SHA-1 is kept because the protocol is defined over it; it is not collision
resistant and should not be relied on outside this testbed.
"""

from __future__ import annotations

import hashlib
import secrets

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import MalformedCiphertext

KEY_SIZE = 16
NONCE_SIZE = 16
IV_SIZE = 16
DHT_ID_SIZE = 20
EPHEMERAL_ID_BITS = 16

_system_rng = secrets.SystemRandom()


def random_bytes(n: int, rng=None) -> bytes:
    """``n`` bytes from ``rng`` (any ``random.Random``); OS entropy by default."""
    return (rng or _system_rng).randbytes(n)


def sha1(data: bytes) -> bytes:
    return hashlib.sha1(data).digest()


def derive_key(n_t: bytes, s_t: bytes) -> bytes:
    """H = first 16 bytes of SHA-1(n_t || s_t)."""
    if len(n_t) != NONCE_SIZE or len(s_t) != NONCE_SIZE:
        raise ValueError("nonce and server secret must be 16 bytes each")
    return sha1(n_t + s_t)[:KEY_SIZE]


def _ctr(key: bytes, iv: bytes):
    if len(key) != KEY_SIZE:
        raise ValueError("AES-128 key must be 16 bytes")
    return Cipher(algorithms.AES(key), modes.CTR(iv))


def encrypt(key: bytes, plaintext: bytes, rng=None) -> bytes:
    """IV || AES-128-CTR(plaintext); the 128-bit counter starts at the IV."""
    iv = random_bytes(IV_SIZE, rng)
    enc = _ctr(key, iv).encryptor()
    return iv + enc.update(plaintext) + enc.finalize()


def decrypt(key: bytes, ciphertext: bytes) -> bytes:
    if len(ciphertext) < IV_SIZE:
        raise MalformedCiphertext(f"ciphertext shorter than the {IV_SIZE}-byte IV")
    dec = _ctr(key, ciphertext[:IV_SIZE]).decryptor()
    return dec.update(ciphertext[IV_SIZE:]) + dec.finalize()


def derive_indices(access_key: bytes, n: int) -> list[bytes]:
    """I_i = SHA-1(L || be32(i)) for i = 1..n."""
    if n < 0:
        raise ValueError("index count must be non-negative")
    return [sha1(access_key + i.to_bytes(4, "big")) for i in range(1, n + 1)]
