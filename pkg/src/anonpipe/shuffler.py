"""Pipeline intermediary: metadata stripping, crowd counting, randomized
thresholding with noisy drops, and the two-shuffler blinded-crowd protocol.

Per-crowd noise is drawn once per crowd per epoch, in a canonical group
order (lexicographically smallest member envelope), so two pipelines fed
the same records and the same RNG tape make identical decisions even when
their crowd-ID representations differ.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field

from anonpipe.crypto.envelope import AeadEnvelope, TransportKeyPair, open_envelope
from anonpipe.crypto.group import (
    BlindingSecret,
    ElGamalCiphertext,
    GroupParams,
    KeyPair,
    blind,
    unblind_decrypt,
)
from anonpipe.encoder import parse_outer_plaintext
from anonpipe.errors import (
    AuthenticationError,
    DecryptionError,
    DomainTooLarge,
    InvalidPoint,
)
from anonpipe.formats import parse_report

MODES = ("naive", "randomized_threshold", "noisy_drop", "both")


@dataclass(frozen=True)
class ThresholdPolicy:
    threshold_t: int
    drop_mean: float = 0.0
    sigma: float = 0.0
    mode: str = "naive"
    dp_claim: tuple[float, float] | None = None  # recorded metadata, never asserted

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown threshold mode {self.mode!r}")
        if self.threshold_t < 1 or self.sigma < 0 or self.drop_mean < 0:
            raise ValueError("invalid threshold policy")

    @property
    def drops(self) -> bool:
        return self.mode in ("noisy_drop", "both")

    @property
    def noisy(self) -> bool:
        return self.mode in ("randomized_threshold", "both")


@dataclass
class Batch:
    """Records after outer decryption; intake metadata is never stored."""

    epoch_id: str
    records: list[tuple[bytes, bytes]]  # (crowd_id, inner envelope bytes)
    stats: dict = field(default_factory=dict)


def intake(
    report_blobs: list[bytes],
    shuffler_keypair: TransportKeyPair,
    epoch_id: str,
    rng,
    group: GroupParams | None = None,
) -> Batch:
    """Open outer layers and store records in randomized order.

    Source metadata (arrival order, addresses, timing) is dropped here;
    malformed reports are counted and skipped, never fatal.
    """
    records = []
    corrupt = 0
    for blob in report_blobs:
        try:
            wire = parse_report(blob, group)
            outer = open_envelope(shuffler_keypair, AeadEnvelope.from_bytes(wire.outer))
            _, crowd_id, inner = parse_outer_plaintext(outer, group)
            records.append((crowd_id, inner))
        except (AuthenticationError, DecryptionError, InvalidPoint):
            corrupt += 1
    rng.shuffle(records)
    return Batch(
        epoch_id=epoch_id,
        records=records,
        stats={"input_count": len(report_blobs), "corrupt": corrupt},
    )


def count_crowds(batch: Batch, max_distinct: int | None = None) -> dict[bytes, int]:
    """Exact per-crowd counts (pass one of the two-pass filter)."""
    counts = Counter(crowd for crowd, _ in batch.records)
    if max_distinct is not None and len(counts) > max_distinct:
        raise DomainTooLarge(
            f"{len(counts)} distinct crowd IDs exceed budget {max_distinct}"
        )
    return dict(counts)


def draw_drop(policy: ThresholdPolicy, rng) -> int:
    """Rounded-normal drop count, clamped at zero."""
    if not policy.drops:
        return 0
    return max(0, round(rng.gauss(policy.drop_mean, policy.sigma)))


def crowd_survives(count: int, policy: ThresholdPolicy, rng) -> tuple[bool, int]:
    """Forwarding decision for one crowd: drop d items, then require the
    remaining count to be strictly more than T + noise."""
    d = draw_drop(policy, rng)
    noise = rng.gauss(0.0, policy.sigma) if policy.noisy else 0.0
    return (count - d) > policy.threshold_t + noise, d


def apply_threshold(
    batch: Batch, counts: dict[bytes, int], policy: ThresholdPolicy, rng
) -> Batch:
    """Filter crowds below the (noisy) threshold; survivors keep inner
    envelopes only."""
    groups: dict[bytes, list[bytes]] = defaultdict(list)
    for crowd, inner in batch.records:
        groups[crowd].append(inner)

    survivors: list[tuple[bytes, bytes]] = []
    # Canonical order: smallest member envelope, so noise assignment is
    # independent of the crowd-ID representation.
    for crowd in sorted(groups, key=lambda cid: min(groups[cid])):
        members = sorted(groups[crowd])
        count = counts[crowd]
        d = draw_drop(policy, rng)
        kept = members
        if d:
            dropped = set(rng.sample(range(len(members)), min(d, len(members))))
            kept = [m for i, m in enumerate(members) if i not in dropped]
        noise = rng.gauss(0.0, policy.sigma) if policy.noisy else 0.0
        if (count - d) > policy.threshold_t + noise:
            survivors.extend((b"", inner) for inner in kept)
    return Batch(
        epoch_id=batch.epoch_id,
        records=survivors,
        stats={"input_count": len(batch.records), "surviving_count": len(survivors)},
    )


def shuffle_batch(batch: Batch, rng) -> Batch:
    """In-memory Fisher-Yates reorder (evaluation mode)."""
    records = list(batch.records)
    rng.shuffle(records)
    return Batch(epoch_id=batch.epoch_id, records=records, stats=dict(batch.stats))


def selectivity_record(batch: Batch) -> dict:
    """The one statistic the shuffler discloses."""
    return {
        "epoch_id": batch.epoch_id,
        "input_count": batch.stats.get("input_count", len(batch.records)),
        "surviving_count": batch.stats.get("surviving_count", len(batch.records)),
    }


# ---------------------------------------------------------------------------
# Two-shuffler blinded crowd IDs


def blind_stage1(
    batch: Batch, group: GroupParams, blinding: BlindingSecret, rng
) -> Batch:
    """Exponent-blind every El Gamal crowd ID, then re-randomize the order."""
    records = []
    invalid = 0
    for crowd_id, inner in batch.records:
        try:
            ct = ElGamalCiphertext.from_bytes(group, crowd_id)
            records.append((blind(group, ct, blinding).to_bytes(group), inner))
        except InvalidPoint:
            invalid += 1
    rng.shuffle(records)
    return Batch(
        epoch_id=batch.epoch_id,
        records=records,
        stats={"input_count": len(batch.records), "invalid": invalid},
    )


def blind_stage2_threshold(
    batch: Batch, group: GroupParams, shuffler2_keypair: KeyPair, policy: ThresholdPolicy, rng
) -> Batch:
    """Decrypt blinded IDs to equality-preserving pseudonyms and threshold on
    them; neither party ever sees an unblinded crowd ID."""
    records = []
    invalid = 0
    for crowd_id, inner in batch.records:
        try:
            ct = ElGamalCiphertext.from_bytes(group, crowd_id)
            pseudonym = group.encode_element(unblind_decrypt(shuffler2_keypair, ct))
            records.append((pseudonym, inner))
        except InvalidPoint:
            invalid += 1
    staged = Batch(epoch_id=batch.epoch_id, records=records, stats={"invalid": invalid})
    counts = count_crowds(staged)
    return apply_threshold(staged, counts, policy, rng)
