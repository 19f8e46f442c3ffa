"""Improved (chaff-free) fuzzy vault: locking, unlocking sets, verification.

A feature set P is locked by publishing the non-leading coefficients of the
monic polynomial V(X) = kappa(X) + prod_{a in P} (X - a) together with a
SHA-256 digest of kappa.  A probe U yields pairs (b, V(b)); every b shared
with P lies on kappa.
"""

from __future__ import annotations

import hashlib
import logging
import secrets
import struct
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Union

import numpy as np

from .decoder import DecodeResult, GsParams, bruteforce_decode, gs_decode
from .errors import EncodingOverflowError, EnvelopeError, ParameterError, RecordFormatError
from .galois import DEFAULT_FIELD, FieldPoly, FieldSpec, pchar, peval

log = logging.getLogger(__name__)

MAGIC = b"MBFV"
VERSION = 1
FLAG_ENVELOPE = 0x01
# magic | version | flags | e | reduction | t | k | secret_hash | kdf_id | cipher_id | codec fingerprint
_HEADER = struct.Struct("<4sBBHQII32sBB32s")
HEADER_SIZE = _HEADER.size
NO_FINGERPRINT = bytes(32)


class FeatureSet(tuple):
    """Sorted tuple of distinct non-negative integers."""

    def __new__(cls, elements: Iterable[int] = ()):
        vals = sorted({int(x) for x in elements})
        if vals and vals[0] < 0:
            raise ParameterError("feature elements must be non-negative")
        return super().__new__(cls, vals)

    def check_field(self, field: FieldSpec) -> "FeatureSet":
        if self and self[-1] >= field.order:
            raise EncodingOverflowError(
                f"feature value {self[-1]} does not fit into GF(2^{field.e})")
        return self

    def __repr__(self):
        return f"FeatureSet({list(self)})"


@dataclass(frozen=True)
class SecretPoly:
    poly: FieldPoly
    k: int

    def __post_init__(self):
        if self.poly.degree >= self.k:
            raise ParameterError(f"secret polynomial degree {self.poly.degree} is not < k={self.k}")

    def coefficients(self) -> list[int]:
        """All k coefficients, lowest degree first, zero padded."""
        c = list(self.poly.coeffs)
        return c + [0] * (self.k - len(c))


@dataclass(frozen=True)
class VaultRecord:
    field: FieldSpec
    t: int
    k: int
    coeffs: Optional[tuple[int, ...]]
    secret_hash: bytes
    envelope: Optional[object] = None  # harden.CipherEnvelope
    codec_fingerprint: bytes = NO_FINGERPRINT

    def __post_init__(self):
        if not 1 <= self.k < self.t:
            raise ParameterError(f"need 1 <= k < t, got k={self.k}, t={self.t}")
        if len(self.secret_hash) != 32:
            raise ParameterError("secret hash must be 32 bytes")
        if self.coeffs is None and self.envelope is None:
            raise ParameterError("record carries neither coefficients nor an envelope")
        if self.coeffs is not None and len(self.coeffs) != self.t:
            raise ParameterError(f"expected {self.t} coefficients, got {len(self.coeffs)}")

    @property
    def sealed(self) -> bool:
        return self.envelope is not None

    def polynomial(self) -> np.ndarray:
        """Coefficients of monic V including the implicit leading 1."""
        if self.coeffs is None:
            raise EnvelopeError("record is password protected; open it first")
        return np.array(list(self.coeffs) + [1], dtype=np.int64)

    def to_bytes(self) -> bytes:
        env = self.envelope
        head = _HEADER.pack(
            MAGIC, VERSION, FLAG_ENVELOPE if env is not None else 0,
            self.field.e, self.field.reduction, self.t, self.k, self.secret_hash,
            env.kdf_id if env is not None else 0,
            env.cipher_id if env is not None else 0,
            self.codec_fingerprint,
        )
        if env is not None:
            return head + env.iv + env.ciphertext
        w = self.field.byte_width
        return head + b"".join(c.to_bytes(w, "little") for c in self.coeffs)

    @classmethod
    def from_bytes(cls, data: bytes) -> "VaultRecord":
        from .harden import CipherEnvelope, envelope_size

        if len(data) < HEADER_SIZE:
            raise RecordFormatError("record shorter than its header")
        (magic, version, flags, e, reduction, t, k, digest,
         kdf_id, cipher_id, fp) = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise RecordFormatError("bad magic")
        if version != VERSION:
            raise RecordFormatError(f"unsupported record version {version}")
        if flags & ~FLAG_ENVELOPE:
            raise RecordFormatError(f"unknown flags {flags:#x}")
        try:
            field = FieldSpec(e, reduction)
        except ParameterError as exc:
            raise RecordFormatError(str(exc)) from exc
        if not 1 <= k < t:
            raise RecordFormatError(f"inconsistent parameters t={t}, k={k}")
        body = data[HEADER_SIZE:]
        if flags & FLAG_ENVELOPE:
            if len(body) != envelope_size(t, e) + 16:
                raise RecordFormatError("envelope length does not match t and e")
            env = CipherEnvelope(body[16:], body[:16], kdf_id, cipher_id)
            return cls(field, t, k, None, digest, env, fp)
        if kdf_id or cipher_id:
            raise RecordFormatError("cipher identifiers set on a plain record")
        w = field.byte_width
        if len(body) != t * w:
            raise RecordFormatError(f"payload has {len(body)} bytes, expected {t * w}")
        coeffs = tuple(int.from_bytes(body[i * w:(i + 1) * w], "little") for i in range(t))
        if any(c >= field.order for c in coeffs):
            raise RecordFormatError("coefficient exceeds the field size")
        return cls(field, t, k, coeffs, digest, None, fp)


@dataclass(frozen=True)
class UnlockingSet:
    field: FieldSpec
    xs: np.ndarray
    ys: np.ndarray

    def __len__(self):
        return len(self.xs)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.xs.tolist(), self.ys.tolist()))


@dataclass(frozen=True)
class DecoderChoice:
    kind: str = "gs"  # "gs" or "bruteforce"
    gs: GsParams = GsParams()
    budget: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("gs", "bruteforce"):
            raise ParameterError(f"unknown decoder {self.kind!r}")


@dataclass
class VerifyOutcome:
    accepted: bool
    recovered_secret: Optional[SecretPoly]
    decode_ops: float
    reason: str = ""
    radius: Optional[int] = None


def encode_secret(secret: SecretPoly, field: FieldSpec) -> bytes:
    """Length-prefixed canonical encoding: e, k, then k e-bit coefficients (LSB first)."""
    acc = 0
    for i, c in enumerate(secret.coefficients()):
        acc |= c << (i * field.e)
    nbytes = (secret.k * field.e + 7) // 8
    return struct.pack("<HI", field.e, secret.k) + acc.to_bytes(nbytes, "little")


def hash_secret(secret: SecretPoly, field: Optional[FieldSpec] = None) -> bytes:
    return hashlib.sha256(encode_secret(secret, field or secret.poly.field)).digest()


def _random_coeffs(n: int, field: FieldSpec, rng) -> list[int]:
    if rng is None:
        return [secrets.randbelow(field.order) for _ in range(n)]
    return [int(x) for x in rng.integers(0, field.order, size=n)]


def enroll(
    features: Iterable[int],
    k: int,
    field: FieldSpec = DEFAULT_FIELD,
    rng: Optional[np.random.Generator] = None,
    secret: Optional[SecretPoly] = None,
    codec_fingerprint: bytes = NO_FINGERPRINT,
) -> tuple[VaultRecord, SecretPoly]:
    """Lock ``features`` under a fresh random secret polynomial of degree < k.

    ``rng=None`` draws the secret from the OS entropy source.  Passing
    ``secret`` pins kappa (for tests and key-binding with a given key).
    """
    fs = features if isinstance(features, FeatureSet) else FeatureSet(features)
    fs.check_field(field)
    t = len(fs)
    if k < 1 or k >= t:
        raise ParameterError(f"need 1 <= k < |features|, got k={k}, |features|={t}")
    if secret is None:
        secret = SecretPoly(FieldPoly(_random_coeffs(k, field, rng), field), k)
    elif secret.k != k or secret.poly.field != field:
        raise ParameterError("pinned secret does not match k or field")
    v = pchar(field, list(fs))
    v[: len(secret.poly.coeffs)] ^= np.array(secret.poly.coeffs, dtype=np.int64)
    record = VaultRecord(field, t, k, tuple(v[:t].tolist()), hash_secret(secret, field),
                         codec_fingerprint=codec_fingerprint)
    return record, secret


def make_unlocking_set(record: VaultRecord, probe: Iterable[int]) -> UnlockingSet:
    if record.coeffs is None:
        raise EnvelopeError("record is password protected; open it first")
    fs = probe if isinstance(probe, FeatureSet) else FeatureSet(probe)
    fs.check_field(record.field)
    xs = np.array(fs, dtype=np.int64)
    return UnlockingSet(record.field, xs, peval(record.field, record.polynomial(), xs))


def decode(unlocking: UnlockingSet, k: int, decoder: DecoderChoice, until=None) -> DecodeResult:
    if decoder.kind == "bruteforce":
        return bruteforce_decode(unlocking, k, decoder.budget, until=until)
    return gs_decode(unlocking, k, decoder.gs)


def verify(
    record: VaultRecord,
    probe: Iterable[int],
    decoder: Union[DecoderChoice, str] = DecoderChoice(),
) -> VerifyOutcome:
    """Decode the probe's unlocking set and accept iff a candidate hashes to the stored digest."""
    if isinstance(decoder, str):
        decoder = DecoderChoice(decoder)
    unlocking = make_unlocking_set(record, probe)
    if len(unlocking) < record.k:
        return VerifyOutcome(False, None, 0.0,
                             reason=f"probe has {len(unlocking)} elements, fewer than k={record.k}")
    field, k = record.field, record.k

    def matches(p: FieldPoly) -> bool:
        return hash_secret(SecretPoly(p, k), field) == record.secret_hash

    result = decode(unlocking, k, decoder, until=matches)
    hits = [p for p in result.candidates if matches(p)]
    if len(hits) > 1:
        log.warning("%d candidates match the secret hash; keeping the first", len(hits))
    if hits:
        return VerifyOutcome(True, SecretPoly(hits[0], k), result.ops, radius=result.radius)
    return VerifyOutcome(False, None, result.ops, reason="no candidate matches the secret hash",
                         radius=result.radius)


def with_fingerprint(record: VaultRecord, fingerprint: bytes) -> VaultRecord:
    if len(fingerprint) != 32:
        raise ParameterError("codec fingerprint must be 32 bytes")
    return replace(record, codec_fingerprint=fingerprint)
