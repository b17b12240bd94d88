import math
import random
import statistics

import pytest
from scipy import stats

from anonpipe.analyzer import (
    CovarianceAccumulators,
    accumulate_covariance,
    covariance_csv,
    covariance_estimate,
    decrypt_corpus,
    dp_release,
    histogram,
    histogram_csv,
    laplace_noise,
    secret_share_decode,
)
from anonpipe.crypto.envelope import TransportKeyPair, seal
from anonpipe.crypto.shamir import PrimeField
from anonpipe.encoder import secret_share_encode
from anonpipe.errors import NonCanonicalTuple
from anonpipe.formats import pad_payload

FIELD = PrimeField((1 << 127) - 1)


# ---------------------------------------------------------------------------
# inner decryption


def test_decrypt_corpus_counts_failures():
    rng = random.Random(0)
    analyzer = TransportKeyPair.generate(rng)
    blobs = [
        seal(analyzer.public_bytes, pad_payload(b"v%d" % i, 16), rng).to_bytes()
        for i in range(5)
    ]
    blobs.append(b"\x00" * len(blobs[0]))
    out = decrypt_corpus(blobs, analyzer)
    assert sorted(out.records) == [b"v%d" % i for i in range(5)]
    assert out.failures == 1
    assert out.input_count == 6


# ---------------------------------------------------------------------------
# secret-share decoding


def _payloads(message, copies, t, rng):
    return [secret_share_encode(message, t, FIELD, rng).to_payload(FIELD) for _ in range(copies)]


def test_group_at_threshold_decodes_every_record():
    rng = random.Random(1)
    t = 20
    res = secret_share_decode(_payloads(b"https://popular", 20, t, rng), t, FIELD)
    assert res.messages == [b"https://popular"] * 20
    assert res.undecoded_groups == 0


def test_group_below_threshold_stays_hidden():
    rng = random.Random(2)
    t = 20
    res = secret_share_decode(_payloads(b"https://rare", 19, t, rng), t, FIELD)
    assert res.messages == []
    assert res.undecoded_groups == 1


def test_mixed_groups_decode_independently():
    rng = random.Random(3)
    t = 5
    payloads = (
        _payloads(b"hot", 8, t, rng)
        + _payloads(b"warm", 5, t, rng)
        + _payloads(b"cold", 4, t, rng)
    )
    rng.shuffle(payloads)
    res = secret_share_decode(payloads, t, FIELD)
    assert sorted(res.messages) == [b"hot"] * 8 + [b"warm"] * 5
    assert res.undecoded_groups == 1


def test_duplicate_evaluation_points_do_not_count_twice():
    rng = random.Random(4)
    t = 3
    payloads = _payloads(b"m", 2, t, rng)
    payloads.append(payloads[0])  # replayed share: same x
    res = secret_share_decode(payloads, t, FIELD)
    assert res.messages == []
    assert res.undecoded_groups == 1


def test_forged_group_flagged_adversarial():
    rng = random.Random(5)
    t = 3
    good = secret_share_encode(b"m", t, FIELD, rng)
    # shares pointing at good's ciphertext but from a different polynomial
    forged = [secret_share_encode(b"other", t, FIELD, rng) for _ in range(t)]
    payloads = []
    for f in forged:
        fake = type(f)(c=good.c, aux=f.aux)
        payloads.append(fake.to_payload(FIELD))
    res = secret_share_decode(payloads, t, FIELD)
    assert res.adversarial_groups == 1
    assert res.messages == []


def test_garbage_payloads_counted_not_fatal():
    rng = random.Random(6)
    payloads = _payloads(b"m", 2, 2, rng) + [b"", b"\x01"]
    res = secret_share_decode(payloads, 2, FIELD)
    assert res.parse_failures == 2
    assert res.messages == [b"m", b"m"]


def test_below_threshold_fuzz():
    # many small random groups below t never leak a message
    rng = random.Random(7)
    for trial in range(1000):
        t = rng.randrange(2, 6)
        copies = rng.randrange(1, t)
        m = b"s%d" % trial
        res = secret_share_decode(_payloads(m, copies, t, rng), t, FIELD)
        assert res.messages == []


# ---------------------------------------------------------------------------
# histogram and DP release


def test_histogram_counts():
    h = histogram([b"a", b"b", b"a", b"a"])
    assert h.bins == {b"a": 3, b"b": 1}
    assert h.unique_count == 2 and h.total == 4


def test_histogram_csv_sorted():
    h = histogram([b"b", b"a"])
    assert histogram_csv(h) == "key,count\n61,1\n62,1\n"


def test_dp_release_near_raw_at_huge_epsilon():
    rng = random.Random(8)
    h = histogram([b"a"] * 100 + [b"b"] * 7)
    rel = dp_release(h, epsilon=1e9, sensitivity=1, rng=rng)
    assert rel[b"a"] == pytest.approx(100, abs=1e-3)
    assert rel[b"b"] == pytest.approx(7, abs=1e-3)


def test_dp_release_rejects_nonpositive_epsilon():
    with pytest.raises(ValueError):
        dp_release(histogram([b"a"]), 0.0, 1, random.Random(9))


def test_laplace_noise_distribution():
    rng = random.Random(10)
    scale = 2.0
    draws = [laplace_noise(rng, scale) for _ in range(40_000)]
    assert statistics.mean(draws) == pytest.approx(0.0, abs=0.05)
    assert statistics.variance(draws) == pytest.approx(2 * scale * scale, rel=0.05)
    _, pvalue = stats.kstest(draws, stats.laplace(scale=scale).cdf)
    assert pvalue > 1e-3


# ---------------------------------------------------------------------------
# covariance


def test_hand_worked_covariance_cell():
    # two users rated both items 1 and 2: (4,5) and (1,3)
    tuples = [(1, 4.0, 2, 5.0), (1, 1.0, 2, 3.0)]
    acc = accumulate_covariance(tuples)
    assert acc.s_matrix[(1, 2)] == 2
    assert acc.a_matrix[(1, 2)] == 23.0
    assert covariance_estimate(acc)[(1, 2)] == pytest.approx(11.5)


def test_non_canonical_tuple_rejected():
    with pytest.raises(NonCanonicalTuple):
        accumulate_covariance([(2, 1.0, 1, 1.0)])


def test_order_independence():
    rng = random.Random(11)
    tuples = [
        (i, float(rng.randrange(1, 6)), j, float(rng.randrange(1, 6)))
        for i in range(4)
        for j in range(i, 6)
        for _ in range(3)
    ]
    shuffled = list(tuples)
    rng.shuffle(shuffled)
    a = accumulate_covariance(tuples)
    b = accumulate_covariance(shuffled)
    assert a.s_matrix == b.s_matrix and a.a_matrix == b.a_matrix


def test_merge_equals_single_pass():
    rng = random.Random(12)
    tuples = [(0, 1.0, 1, 2.0)] * 5 + [(1, 3.0, 1, 3.0)] * 2
    whole = accumulate_covariance(tuples)
    merged = accumulate_covariance(tuples[:3]).merge(accumulate_covariance(tuples[3:]))
    assert merged.s_matrix == whole.s_matrix and merged.a_matrix == whole.a_matrix


def test_covariance_matches_direct_oracle():
    # rebuild S and A from the raw rating table, entirely outside the library
    rng = random.Random(13)
    users = {
        u: {i: float(rng.randrange(1, 6)) for i in rng.sample(range(8), rng.randrange(2, 7))}
        for u in range(10)
    }
    tuples = []
    for ratings in users.values():
        items = sorted(ratings)
        for a in range(len(items)):
            for b in range(a, len(items)):
                i, j = items[a], items[b]
                tuples.append((i, ratings[i], j, ratings[j]))
    acc = accumulate_covariance(tuples)
    for i in range(8):
        for j in range(i, 8):
            raters = [u for u, r in users.items() if i in r and j in r]
            if not raters:
                assert (i, j) not in acc.s_matrix
                continue
            assert acc.s_matrix[(i, j)] == len(raters)
            expected_a = sum(users[u][i] * users[u][j] for u in raters)
            assert acc.a_matrix[(i, j)] == pytest.approx(expected_a)


def test_covariance_csv_shape():
    acc = accumulate_covariance([(0, 2.0, 1, 3.0)])
    lines = covariance_csv(acc).strip().split("\n")
    assert lines[0] == "i,j,s,a,estimate"
    assert lines[1] == "0,1,1,6.0,6.0"
