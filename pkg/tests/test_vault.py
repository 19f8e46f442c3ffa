import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mbfv.errors import EncodingOverflowError, EnvelopeError, ParameterError, RecordFormatError
from mbfv.galois import DEFAULT_FIELD, FieldPoly, FieldSpec, peval, smallest_field
from mbfv.vault import (HEADER_SIZE, DecoderChoice, FeatureSet, SecretPoly, VaultRecord, enroll, hash_secret,
                        make_unlocking_set, verify, with_fingerprint)

F4 = FieldSpec(4, 0b10011)


def test_feature_set_semantics():
    assert FeatureSet([3, 1, 3]) == (1, 3)
    with pytest.raises(ParameterError):
        FeatureSet([-1])
    with pytest.raises(EncodingOverflowError):
        FeatureSet([16]).check_field(F4)


def test_small_enrolment_example():
    secret = SecretPoly(FieldPoly([1], F4), 1)
    record, kappa = enroll([1, 2, 3], 1, F4, secret=secret)
    assert record.coeffs == (7, 7, 0)
    assert record.t == 3 and kappa is secret
    assert make_unlocking_set(record, [1]).pairs == [(1, 1)]


def test_zero_secret_vanishes_on_features():
    feats = [5, 9, 200, 4000]
    record, _ = enroll(feats, 2, DEFAULT_FIELD, secret=SecretPoly(FieldPoly([], DEFAULT_FIELD), 2))
    assert peval(DEFAULT_FIELD, record.polynomial(), np.array(feats)).tolist() == [0] * 4


def test_enroll_errors():
    with pytest.raises(ParameterError):
        enroll([1, 2, 3], 3, F4)
    with pytest.raises(EncodingOverflowError):
        enroll([1, 2, 99], 1, F4)
    with pytest.raises(ParameterError):
        enroll([1, 2, 3], 1, F4, secret=SecretPoly(FieldPoly([1, 1], F4), 2))


def test_fused_size_record():
    rng = np.random.default_rng(0)
    feats = rng.choice(DEFAULT_FIELD.order, 931, replace=False)
    record, _ = enroll(feats, 400, rng=rng)
    assert record.t == 931 and len(record.coeffs) == 931
    assert len(record.to_bytes()) == HEADER_SIZE + 931 * 2


def test_hash_encoding():
    z1 = SecretPoly(FieldPoly([], DEFAULT_FIELD), 1)
    z2 = SecretPoly(FieldPoly([], DEFAULT_FIELD), 2)
    assert hash_secret(z1) != hash_secret(z2)
    a = SecretPoly(FieldPoly([1, 2, 3], DEFAULT_FIELD), 4)
    assert hash_secret(a) == hash_secret(SecretPoly(FieldPoly([1, 2, 3, 0], DEFAULT_FIELD), 4))
    rng = np.random.default_rng(1)
    for _ in range(200):
        c = rng.integers(0, 2**16, 5)
        d = c.copy()
        d[rng.integers(5)] ^= int(rng.integers(1, 2**16))
        assert hash_secret(SecretPoly(FieldPoly(c.tolist()), 5)) != hash_secret(SecretPoly(FieldPoly(d.tolist()), 5))


@given(st.sampled_from([8, 16]), st.integers(0, 2**32 - 1))
def test_round_trip_and_monicity(e, seed):
    field = smallest_field(e)
    rng = np.random.default_rng(seed)
    t = int(rng.integers(3, min(200, field.order)))
    k = int(rng.integers(1, t))
    feats = rng.choice(field.order, t, replace=False)
    record, kappa = enroll(feats, k, field, rng=rng)
    # V(a) = kappa(a) on every enrolled element
    assert (peval(field, record.polynomial(), feats) == peval(field, kappa.poly.array(), feats)).all()
    for dec in ("gs", "bruteforce"):
        out = verify(record, feats, dec)
        assert out.accepted and out.recovered_secret.poly == kappa.poly
    again = VaultRecord.from_bytes(record.to_bytes())
    assert again == record
    assert len(record.to_bytes()) == HEADER_SIZE + t * field.byte_width


def test_verify_rejections():
    rng = np.random.default_rng(2)
    feats = rng.choice(2**16, 60, replace=False)
    record, _ = enroll(feats, 20, rng=rng)
    out = verify(record, feats[:10])
    assert not out.accepted and "fewer than k" in out.reason
    stranger = rng.choice(2**16, 60, replace=False)
    assert not verify(record, stranger).accepted
    assert not verify(record, stranger, DecoderChoice("bruteforce", budget=500)).accepted
    with pytest.raises(ParameterError):
        DecoderChoice("lagrange")


def test_gs_accepts_partial_overlap():
    rng = np.random.default_rng(3)
    elems = rng.choice(2**16, 140, replace=False)
    enrol, probe = elems[:93], np.concatenate([elems[:70], elems[93:116]])
    record, kappa = enroll(enrol, 40, rng=rng)
    out = verify(record, probe)
    assert out.accepted and out.recovered_secret == kappa
    assert out.decode_ops > 0 and out.radius <= 70


def test_record_format_errors():
    rng = np.random.default_rng(4)
    record, _ = enroll(rng.choice(2**16, 12, replace=False), 4, rng=rng)
    data = record.to_bytes()
    with pytest.raises(RecordFormatError):
        VaultRecord.from_bytes(data[:20])
    with pytest.raises(RecordFormatError):
        VaultRecord.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(RecordFormatError):
        VaultRecord.from_bytes(data[:-1])
    with pytest.raises(RecordFormatError):
        VaultRecord.from_bytes(data[:4] + bytes([2]) + data[5:])
    bad_k = bytearray(data)
    struct.pack_into("<I", bad_k, 20, 12)  # k = t
    with pytest.raises(RecordFormatError):
        VaultRecord.from_bytes(bytes(bad_k))
    fp = with_fingerprint(record, bytes(range(32)))
    assert VaultRecord.from_bytes(fp.to_bytes()).codec_fingerprint == bytes(range(32))


def test_header_layout():
    record, _ = enroll([1, 2, 3], 1, F4, secret=SecretPoly(FieldPoly([1], F4), 1))
    data = record.to_bytes()
    assert data[:4] == b"MBFV" and data[4] == 1 and data[5] == 0
    assert struct.unpack_from("<HQII", data, 6) == (4, 0b10011, 3, 1)
    assert data[24:56] == record.secret_hash
    assert data[HEADER_SIZE:] == bytes([7, 7, 0])


def test_sealed_record_needs_opening():
    from mbfv.harden import seal
    rng = np.random.default_rng(5)
    record, _ = enroll(rng.choice(2**16, 12, replace=False), 4, rng=rng)
    sealed = seal(record, "pw", rng=rng)
    with pytest.raises(EnvelopeError):
        make_unlocking_set(sealed, [1, 2])
