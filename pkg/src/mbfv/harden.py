"""Password hardening: encrypt the vault coefficients under a password key.

The t coefficients v_0..v_{t-1} are packed as e-bit little-endian fields
(v_0 in the lowest bits), padded with random bits to a multiple of the
128-bit block length, and encrypted with AES-128-CBC under a fresh IV.

There is deliberately no authentication tag: decrypting with a wrong
password yields a well-formed but spurious polynomial, and the only accept
signal remains the secret-hash check after decoding.

The default key derivation (first 128 bits of SHA-1 of the password) is
weak against offline guessing and kept for compatibility; ``KDF_PBKDF2``
selects PBKDF2-HMAC-SHA256 salted with the IV.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, replace
from typing import Optional, Union

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import EnvelopeError, RecordFormatError
from .vault import VaultRecord

log = logging.getLogger(__name__)

BLOCK_BITS = 128
KDF_SHA1 = 1
KDF_PBKDF2 = 2
CIPHER_AES128_CBC = 1
PBKDF2_ITERATIONS = 200_000


@dataclass(frozen=True)
class CipherEnvelope:
    ciphertext: bytes
    iv: bytes
    kdf_id: int = KDF_SHA1
    cipher_id: int = CIPHER_AES128_CBC


def envelope_size(t: int, e: int) -> int:
    """Ciphertext length in bytes: ceil(t*e / 128) blocks."""
    return -(-t * e // BLOCK_BITS) * (BLOCK_BITS // 8)


def _as_bytes(password: Union[str, bytes]) -> bytes:
    return password.encode("utf-8") if isinstance(password, str) else bytes(password)


def derive_key(password: Union[str, bytes], kdf_id: int = KDF_SHA1, salt: bytes = b"") -> bytes:
    pw = _as_bytes(password)
    if not pw:
        log.warning("empty password adds no security")
    if kdf_id == KDF_SHA1:
        return hashlib.sha1(pw).digest()[:16]
    if kdf_id == KDF_PBKDF2:
        return hashlib.pbkdf2_hmac("sha256", pw, salt, PBKDF2_ITERATIONS, dklen=16)
    raise RecordFormatError(f"unknown kdf id {kdf_id}")


def _cipher(key: bytes, iv: bytes, cipher_id: int) -> Cipher:
    if cipher_id != CIPHER_AES128_CBC:
        raise RecordFormatError(f"unknown cipher id {cipher_id}")
    return Cipher(algorithms.AES(key), modes.CBC(iv))


def _random_bytes(n: int, rng) -> bytes:
    return os.urandom(n) if rng is None else rng.bytes(n)


def pack_coefficients(coeffs, e: int, rng=None) -> bytes:
    """e-bit fields LSB first, random padding up to a whole number of blocks."""
    t = len(coeffs)
    size = envelope_size(t, e)
    acc = 0
    for i, c in enumerate(coeffs):
        acc |= int(c) << (i * e)
    pad_bits = size * 8 - t * e
    if pad_bits:
        pad = int.from_bytes(_random_bytes((pad_bits + 7) // 8, rng), "little") & ((1 << pad_bits) - 1)
        acc |= pad << (t * e)
    return acc.to_bytes(size, "little")


def unpack_coefficients(data: bytes, t: int, e: int) -> tuple[int, ...]:
    acc = int.from_bytes(data, "little")
    mask = (1 << e) - 1
    return tuple((acc >> (i * e)) & mask for i in range(t))


def seal(record: VaultRecord, password: Union[str, bytes], rng=None, kdf_id: int = KDF_SHA1) -> VaultRecord:
    """Replace the plain coefficients by an AES-128-CBC envelope."""
    if record.sealed:
        raise EnvelopeError("record is already sealed")
    iv = _random_bytes(16, rng)
    key = derive_key(password, kdf_id, salt=iv)
    plain = pack_coefficients(record.coeffs, record.field.e, rng)
    enc = _cipher(key, iv, CIPHER_AES128_CBC).encryptor()
    ct = enc.update(plain) + enc.finalize()
    return replace(record, coeffs=None, envelope=CipherEnvelope(ct, iv, kdf_id, CIPHER_AES128_CBC))


def open_record(record: VaultRecord, password: Union[str, bytes]) -> VaultRecord:
    """Decrypt the envelope; a wrong password silently yields spurious coefficients."""
    env: Optional[CipherEnvelope] = record.envelope
    if env is None:
        raise EnvelopeError("record is not sealed")
    if len(env.ciphertext) != envelope_size(record.t, record.field.e) or len(env.iv) != 16:
        raise RecordFormatError("envelope length does not match t and e")
    key = derive_key(password, env.kdf_id, salt=env.iv)
    dec = _cipher(key, env.iv, env.cipher_id).decryptor()
    plain = dec.update(env.ciphertext) + dec.finalize()
    coeffs = unpack_coefficients(plain, record.t, record.field.e)
    return replace(record, coeffs=coeffs, envelope=None)
