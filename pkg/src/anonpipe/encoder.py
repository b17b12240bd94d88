"""Client-side encoding: fragmentation, randomized response, crowd IDs,
secret-share encoding, and nested encryption into wire reports."""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

from anonpipe import formats
from anonpipe.crypto.deterministic import deterministic_decrypt, deterministic_encrypt
from anonpipe.crypto.envelope import ENVELOPE_OVERHEAD, AeadEnvelope, seal
from anonpipe.crypto.group import GroupParams, elgamal_encrypt, hash_to_group
from anonpipe.crypto.shamir import PrimeField, ShamirShare, eval_poly
from anonpipe.errors import (
    DecryptionError,
    IntegrityError,
    MissingKey,
    TooFewItems,
)
from anonpipe.formats import (
    KIND_BLINDED,
    KIND_FIXED,
    KIND_HASHED,
    KIND_PLAIN,
    WireReport,
)

DEFAULT_MAX_PAYLOAD = 64


@dataclass(frozen=True)
class RawDatum:
    """Application data plus the value whose cardinality is thresholded."""

    payload: bytes
    crowd_key: bytes


# ---------------------------------------------------------------------------
# Fragmentation


def fragment_pairs(items: list[tuple[int, int]]) -> list[bytes]:
    """All unordered (id, value) pairs, lower id first, one payload each."""
    if len(items) < 2:
        raise TooFewItems("pairwise fragmentation needs at least 2 items")
    if len({i for i, _ in items}) != len(items):
        raise ValueError("item ids must be distinct")
    ordered = sorted(items)
    out = []
    for a in range(len(ordered)):
        for b in range(a + 1, len(ordered)):
            (i, ri), (j, rj) = ordered[a], ordered[b]
            out.append(struct.pack("<IiIi", i, ri, j, rj))
    return out


def unpack_pair(payload: bytes) -> tuple[int, int, int, int]:
    return struct.unpack("<IiIi", payload)


def fragment_mtuples(sequence: list[int], m: int) -> list[bytes]:
    """Consecutive disjoint m-windows; the short trailing remainder is dropped."""
    if m < 1:
        raise ValueError("m must be >= 1")
    fmt = "<" + "I" * m
    return [
        struct.pack(fmt, *sequence[i : i + m])
        for i in range(0, len(sequence) - m + 1, m)
    ]


# ---------------------------------------------------------------------------
# Local randomization


def flip_bits(bitmap: bytes, nbits: int, flip_prob: float, rng) -> bytes:
    """Independently flip each of the first nbits with probability flip_prob."""
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError("flip_prob must be in [0, 1]")
    if nbits > len(bitmap) * 8:
        raise ValueError("nbits exceeds bitmap width")
    value = int.from_bytes(bitmap, "big")
    width = len(bitmap) * 8
    for bit in range(nbits):
        if rng.random() < flip_prob:
            value ^= 1 << (width - 1 - bit)
    return value.to_bytes(len(bitmap), "big")


def k_ary_randomized_response(true_value: int, k: int, epsilon: float, rng) -> int:
    """Report the true value with probability e^eps / (e^eps + k - 1),
    otherwise a uniformly random other value."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if not 0 <= true_value < k:
        raise ValueError("true_value out of range")
    e = math.exp(min(epsilon, 50.0))
    if rng.random() < e / (e + k - 1):
        return true_value
    other = rng.randrange(k - 1)
    return other if other < true_value else other + 1


def krr_true_prob(k: int, epsilon: float) -> float:
    e = math.exp(min(epsilon, 50.0))
    return e / (e + k - 1)


# ---------------------------------------------------------------------------
# Secret-share encoding


@dataclass(frozen=True)
class SecretShareEncoding:
    """(c, aux): deterministic ciphertext plus one share of its key."""

    c: bytes
    aux: ShamirShare

    def to_payload(self, field: PrimeField) -> bytes:
        return (
            struct.pack("<H", len(self.c))
            + self.c
            + field.encode(self.aux.x)
            + field.encode(self.aux.y)
        )

    @classmethod
    def from_payload(cls, field: PrimeField, payload: bytes) -> "SecretShareEncoding":
        if len(payload) < 2:
            raise DecryptionError("truncated secret-share payload")
        (clen,) = struct.unpack_from("<H", payload)
        w = field.elem_len
        if len(payload) != 2 + clen + 2 * w:
            raise DecryptionError("bad secret-share payload")
        c = payload[2 : 2 + clen]
        x = field.decode(payload[2 + clen : 2 + clen + w])
        y = field.decode(payload[2 + clen + w :])
        return cls(c=c, aux=ShamirShare(x=x, y=y))


def message_field_key(field: PrimeField, m: bytes) -> int:
    """Field element derived from the message; the shared secret of aux."""
    h = hashlib.sha512(b"anonpipe-ssk-v1|" + m).digest()
    return int.from_bytes(h, "big") % field.modulus


def _share_poly_coeffs(field: PrimeField, m: bytes, t: int) -> list[int]:
    # Coefficients are message-derived so uncoordinated clients evaluate the
    # same polynomial; only the evaluation point is per-client randomness.
    coeffs = [message_field_key(field, m)]
    for i in range(1, t):
        h = hashlib.sha512(
            b"anonpipe-ssc-v1|" + i.to_bytes(4, "big") + b"|" + m
        ).digest()
        coeffs.append(int.from_bytes(h, "big") % field.modulus)
    return coeffs


def symmetric_key_from_field(field: PrimeField, k_field: int) -> bytes:
    return hashlib.sha256(b"anonpipe-ssenc-v1|" + field.encode(k_field)).digest()[:16]


def secret_share_encode(
    m: bytes, t: int, field: PrimeField, rng=None
) -> SecretShareEncoding:
    """Encode m so it decodes only once t independent encodings are grouped."""
    if t < 1:
        raise ValueError("t must be >= 1")
    coeffs = _share_poly_coeffs(field, m, t)
    key = symmetric_key_from_field(field, coeffs[0])
    c = deterministic_encrypt(key, m)
    x = field.random_nonzero(rng)
    return SecretShareEncoding(c=c, aux=ShamirShare(x=x, y=eval_poly(field, coeffs, x)))


def secret_share_open(field: PrimeField, c: bytes, k_field: int) -> bytes:
    """Decrypt c with a reconstructed field key and verify the key matches."""
    m = deterministic_decrypt(symmetric_key_from_field(field, k_field), c)
    if message_field_key(field, m) != k_field:
        raise IntegrityError("reconstructed key inconsistent with message")
    return m


# ---------------------------------------------------------------------------
# Crowd IDs and nested encryption


@dataclass(frozen=True)
class CrowdId:
    kind: int
    data: bytes  # already fixed-width encoded for the wire


def make_crowd_id(
    crowd_key: bytes,
    mode: str,
    hash_key: bytes = b"",
    group: GroupParams | None = None,
    shuffler2_public: int | None = None,
    rng=None,
) -> CrowdId:
    if mode == "plain":
        return CrowdId(KIND_PLAIN, formats.encode_plain_crowd(crowd_key))
    if mode == "hashed":
        digest = hashlib.blake2b(
            crowd_key, key=hash_key[:64], digest_size=formats.HASHED_CROWD_WIDTH
        ).digest()
        return CrowdId(KIND_HASHED, digest)
    if mode == "fixed":
        return CrowdId(KIND_FIXED, formats.FIXED_CROWD_SENTINEL)
    if mode == "blinded":
        if group is None or shuffler2_public is None:
            raise MissingKey("blinded crowd IDs need the second shuffler's public key")
        mu = hash_to_group(group, crowd_key)
        ct = elgamal_encrypt(group, shuffler2_public, mu, rng)
        return CrowdId(KIND_BLINDED, ct.to_bytes(group))
    raise ValueError(f"unknown crowd-ID mode {mode!r}")


def encode_report(
    payload: bytes,
    crowd_id: CrowdId,
    analyzer_public: bytes,
    shuffler_public: bytes,
    pad_to: int,
    rng=None,
) -> WireReport:
    """Nested encryption: inner sealed to the analyzer, outer to the shuffler."""
    inner = seal(analyzer_public, formats.pad_payload(payload, pad_to), rng)
    outer_plain = bytes([crowd_id.kind]) + crowd_id.data + inner.to_bytes()
    outer = seal(shuffler_public, outer_plain, rng)
    return WireReport(kind=crowd_id.kind, crowd_id=crowd_id.data, outer=outer.to_bytes())


def parse_outer_plaintext(
    data: bytes, group: GroupParams | None = None
) -> tuple[int, bytes, bytes]:
    """Split an opened outer layer into (kind, crowd_id, inner envelope bytes)."""
    if not data:
        raise DecryptionError("empty outer plaintext")
    kind = data[0]
    width = formats.crowd_id_width(kind, group)
    if len(data) < 1 + width + ENVELOPE_OVERHEAD:
        raise DecryptionError("truncated outer plaintext")
    return kind, data[1 : 1 + width], data[1 + width :]


def inner_envelope_length(pad_to: int) -> int:
    return ENVELOPE_OVERHEAD + pad_to


def report_length(kind: int, pad_to: int, group: GroupParams | None = None) -> int:
    """Serialized report size: a pipeline constant given kind and padding."""
    width = formats.crowd_id_width(kind, group)
    outer_plain = 1 + width + inner_envelope_length(pad_to)
    return 2 + width + ENVELOPE_OVERHEAD + outer_plain


def open_inner(envelope_bytes: bytes, analyzer_keypair) -> bytes:
    from anonpipe.crypto.envelope import open_envelope

    env = AeadEnvelope.from_bytes(envelope_bytes)
    return formats.unpad_payload(open_envelope(analyzer_keypair, env))
