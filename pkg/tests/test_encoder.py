import math
import random
from collections import Counter

import pytest

from anonpipe import formats
from anonpipe.crypto.envelope import TransportKeyPair, open_envelope, AeadEnvelope
from anonpipe.crypto.group import TEST_GROUP_256, KeyPair, unblind_decrypt, hash_to_group
from anonpipe.crypto.group import ElGamalCiphertext
from anonpipe.crypto.shamir import GF251, PrimeField, shamir_reconstruct
from anonpipe.encoder import (
    encode_report,
    flip_bits,
    fragment_mtuples,
    fragment_pairs,
    inner_envelope_length,
    k_ary_randomized_response,
    krr_true_prob,
    make_crowd_id,
    message_field_key,
    open_inner,
    parse_outer_plaintext,
    report_length,
    secret_share_encode,
    secret_share_open,
    unpack_pair,
)
from anonpipe.errors import IntegrityError, MissingKey, TooFewItems


# ---------------------------------------------------------------------------
# fragmentation


def test_pair_fragment_count_property():
    rng = random.Random(0)
    for n in range(2, 51):
        items = [(i, rng.randrange(1, 6)) for i in range(n)]
        frags = fragment_pairs(items)
        assert len(frags) == n * (n - 1) // 2
        assert len(set(frags)) == len(frags)


def test_pair_fragments_are_canonical():
    frags = fragment_pairs([(7, 2), (3, 5)])
    i, ri, j, rj = unpack_pair(frags[0])
    assert (i, ri, j, rj) == (3, 5, 7, 2)  # sorted by item id


def test_pair_fragment_needs_two_items():
    with pytest.raises(TooFewItems):
        fragment_pairs([(1, 3)])


def test_mtuple_windows_are_disjoint_and_drop_remainder():
    frags = fragment_mtuples(list(range(10)), m=3)
    assert len(frags) == 3  # [0..2], [3..5], [6..8]; 9 is dropped
    assert len(fragment_mtuples([1, 2], m=3)) == 0


# ---------------------------------------------------------------------------
# local randomization


def test_flip_bits_zero_prob_is_identity():
    rng = random.Random(1)
    assert flip_bits(b"\xa5", 8, 0.0, rng) == b"\xa5"


def test_flip_bits_one_prob_inverts():
    rng = random.Random(2)
    assert flip_bits(b"\xa5", 8, 1.0, rng) == bytes([0xA5 ^ 0xFF])


def test_flip_bits_rate_close_to_p():
    rng = random.Random(3)
    n, p = 40_000, 0.25
    flipped = flip_bits(bytes(n // 8), n, p, rng)
    ones = sum(bin(b).count("1") for b in flipped)
    sigma = math.sqrt(n * p * (1 - p))
    assert abs(ones - n * p) < 4 * sigma


def test_krr_true_prob_formula():
    # p = e^eps / (e^eps + k - 1)
    assert krr_true_prob(2, math.log(3)) == pytest.approx(0.75)
    assert krr_true_prob(10, 0.0) == pytest.approx(0.1)


def test_krr_empirical_rate_within_3_sigma():
    rng = random.Random(4)
    k, eps, n = 16, 2.0, 30_000
    p = krr_true_prob(k, eps)
    kept = sum(1 for _ in range(n) if k_ary_randomized_response(3, k, eps, rng) == 3)
    # the true value is reported with probability exactly p
    sigma = math.sqrt(n * p * (1 - p))
    assert abs(kept - n * p) < 3 * sigma


def test_krr_output_in_domain():
    rng = random.Random(5)
    for _ in range(200):
        assert 0 <= k_ary_randomized_response(7, 11, 1.0, rng) < 11


# ---------------------------------------------------------------------------
# secret-share encoding


def test_share_encodings_agree_on_c_and_reconstruct():
    field = PrimeField((1 << 127) - 1)
    rng = random.Random(6)
    t = 5
    encs = [secret_share_encode(b"secret-url", t, field, rng) for _ in range(t)]
    assert len({e.c for e in encs}) == 1  # deterministic outer ciphertext
    k = shamir_reconstruct(field, [e.aux for e in encs], t=t)
    assert k == message_field_key(field, b"secret-url")
    assert secret_share_open(field, encs[0].c, k) == b"secret-url"


def test_share_open_rejects_wrong_key():
    field = GF251
    rng = random.Random(7)
    enc = secret_share_encode(b"m", 1, field, rng)
    good = message_field_key(field, b"m")
    with pytest.raises(IntegrityError):
        secret_share_open(field, enc.c, (good + 1) % field.modulus)


def test_share_payload_roundtrip():
    from anonpipe.encoder import SecretShareEncoding

    field = PrimeField((1 << 61) - 1)
    rng = random.Random(8)
    enc = secret_share_encode(b"value", 3, field, rng)
    back = SecretShareEncoding.from_payload(field, enc.to_payload(field))
    assert back.c == enc.c and back.aux == enc.aux


# ---------------------------------------------------------------------------
# crowd IDs


def test_hashed_crowd_id_stable_and_keyed():
    a = make_crowd_id(b"crowd", "hashed", hash_key=b"k1")
    b = make_crowd_id(b"crowd", "hashed", hash_key=b"k1")
    c = make_crowd_id(b"crowd", "hashed", hash_key=b"k2")
    assert a == b and a.data != c.data
    assert len(a.data) == formats.HASHED_CROWD_WIDTH


def test_fixed_crowd_id_is_constant():
    assert make_crowd_id(b"x", "fixed") == make_crowd_id(b"y", "fixed")


def test_plain_crowd_id_roundtrip():
    cid = make_crowd_id(b"news.site", "plain")
    assert formats.decode_plain_crowd(cid.data) == b"news.site"


def test_blinded_crowd_id_decrypts_to_group_hash():
    g = TEST_GROUP_256
    rng = random.Random(9)
    kp = KeyPair.generate(g, rng)
    cid = make_crowd_id(b"crowd", "blinded", group=g, shuffler2_public=kp.public, rng=rng)
    ct = ElGamalCiphertext.from_bytes(g, cid.data)
    assert unblind_decrypt(kp, ct) == hash_to_group(g, b"crowd")


def test_blinded_crowd_id_requires_key():
    with pytest.raises(MissingKey):
        make_crowd_id(b"crowd", "blinded", group=TEST_GROUP_256)


# ---------------------------------------------------------------------------
# nested report encryption


def _transport_keys(seed):
    rng = random.Random(seed)
    return TransportKeyPair.generate(rng), TransportKeyPair.generate(rng), rng


def test_report_nesting_roundtrip():
    analyzer, shuffler, rng = _transport_keys(10)
    cid = make_crowd_id(b"crowd", "hashed", hash_key=b"hk")
    report = encode_report(b"payload", cid, analyzer.public_bytes, shuffler.public_bytes, 64, rng)
    parsed = formats.parse_report(report.to_bytes())
    assert parsed.kind == formats.KIND_HASHED
    assert parsed.crowd_id == cid.data

    outer_plain = open_envelope(shuffler, AeadEnvelope.from_bytes(parsed.outer))
    kind, crowd, inner = parse_outer_plaintext(outer_plain)
    assert (kind, crowd) == (formats.KIND_HASHED, cid.data)
    # the shuffler cannot open the inner envelope
    with pytest.raises(Exception):
        open_inner(inner, shuffler)
    assert open_inner(inner, analyzer) == b"payload"


def test_report_lengths_are_uniform():
    # 10^4 variable-length payloads must serialize to one constant size
    analyzer, shuffler, rng = _transport_keys(11)
    pad_to = 64
    expected = report_length(formats.KIND_HASHED, pad_to)
    sizes = set()
    for i in range(10_000):
        payload = rng.randbytes(rng.randrange(0, pad_to - 1))
        cid = make_crowd_id(b"c%d" % (i % 7), "hashed", hash_key=b"hk")
        r = encode_report(payload, cid, analyzer.public_bytes, shuffler.public_bytes, pad_to, rng)
        sizes.add(len(r.to_bytes()))
    assert sizes == {expected}


def test_inner_envelope_length_constant():
    analyzer, shuffler, rng = _transport_keys(12)
    cid = make_crowd_id(b"c", "fixed")
    r = encode_report(b"xy", cid, analyzer.public_bytes, shuffler.public_bytes, 48, rng)
    outer_plain = open_envelope(shuffler, AeadEnvelope.from_bytes(formats.parse_report(r.to_bytes()).outer))
    _, _, inner = parse_outer_plaintext(outer_plain)
    assert len(inner) == inner_envelope_length(48)


def test_batch_file_roundtrip(tmp_path):
    records = [b"a" * 10, b"b" * 10, b"c" * 10]
    path = tmp_path / "batch.bin"
    formats.write_batch(path, records)
    assert formats.read_batch(path) == records
