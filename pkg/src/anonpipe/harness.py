"""End-to-end scenario runner: synthetic corpora, stage orchestration over
batch files, utility measurement, and local-DP baselines."""

from __future__ import annotations

import hashlib
import json
import math
import random
import struct
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from anonpipe import analyzer as analyzer_mod
from anonpipe import formats
from anonpipe import shuffler as shuffler_mod
from anonpipe.crypto.envelope import TransportKeyPair
from anonpipe.crypto.group import GROUPS, BlindingSecret, KeyPair
from anonpipe.crypto.shamir import PrimeField
from anonpipe.encoder import (
    encode_report,
    flip_bits,
    k_ary_randomized_response,
    krr_true_prob,
    make_crowd_id,
    secret_share_encode,
)
from anonpipe.errors import StageFailed
from anonpipe.shuffler import Batch, ThresholdPolicy

DEFAULT_GROUP = "test-256"


class RngTape:
    """Named, seeded RNG streams; every (stage, purpose) gets its own."""

    def __init__(self, seed: int):
        self.seed = seed

    def stream(self, name: str) -> random.Random:
        digest = hashlib.sha256(f"{self.seed}|{name}".encode()).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))


# ---------------------------------------------------------------------------
# Corpora


def generate_zipf_corpus(
    vocab_size: int, exponent: float, n_samples: int, seed: int
) -> np.ndarray:
    """Item ids in [1, vocab_size], item k drawn with probability ~ k^-exponent."""
    if vocab_size < 1 or exponent <= 0:
        raise ValueError("need vocab_size >= 1 and exponent > 0")
    weights = np.arange(1, vocab_size + 1, dtype=np.float64) ** -exponent
    weights /= weights.sum()
    rng = np.random.default_rng(seed)
    return rng.choice(vocab_size, size=n_samples, p=weights).astype(np.int64) + 1


def save_corpus(path: str | Path, items: np.ndarray) -> None:
    Path(path).write_text("\n".join(str(int(v)) for v in items) + "\n")


def load_corpus(path: str | Path) -> np.ndarray:
    return np.array(
        [int(line) for line in Path(path).read_text().split()], dtype=np.int64
    )


def item_word(item: int) -> bytes:
    return b"w%d" % item


# ---------------------------------------------------------------------------
# Scenario configuration


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    vocab_size: int = 100_000
    zipf_exponent: float = 1.1
    n_samples: int = 100_000
    seed: int = 0
    crowd_mode: str = "hashed"  # plain | hashed | fixed | blinded
    secret_share_t: int = 0  # 0: payloads are the words themselves
    threshold_t: int = 20
    drop_mean: float = 0.0
    sigma: float = 0.0
    policy_mode: str = "naive"
    pad_to: int = 0  # 0: derived from the group and share parameters
    group_id: str = DEFAULT_GROUP

    @property
    def two_shufflers(self) -> bool:
        return self.crowd_mode == "blinded"

    def policy(self) -> ThresholdPolicy:
        return ThresholdPolicy(
            threshold_t=self.threshold_t,
            drop_mean=self.drop_mean,
            sigma=self.sigma,
            mode=self.policy_mode,
        )

    def to_text(self) -> str:
        pairs = [
            ("name", self.name),
            ("vocab_size", self.vocab_size),
            ("zipf_exponent", self.zipf_exponent),
            ("n_samples", self.n_samples),
            ("seed", self.seed),
            ("crowd_mode", self.crowd_mode),
            ("secret_share_t", self.secret_share_t),
            ("threshold_t", self.threshold_t),
            ("drop_mean", self.drop_mean),
            ("sigma", self.sigma),
            ("policy_mode", self.policy_mode),
            ("pad_to", self.pad_to),
            ("group_id", self.group_id),
        ]
        return "\n".join(f"{k} = {v}" for k, v in pairs) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        cfg = cls()
        casts = {
            "name": str, "crowd_mode": str, "policy_mode": str, "group_id": str,
            "vocab_size": int, "n_samples": int, "seed": int,
            "secret_share_t": int, "threshold_t": int, "pad_to": int,
            "zipf_exponent": float, "drop_mean": float, "sigma": float,
        }
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in casts:
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, casts[key](value))
        return cfg


def derived_pad_to(config: ScenarioConfig) -> int:
    if config.pad_to:
        return config.pad_to
    max_word = len(item_word(config.vocab_size))
    if config.secret_share_t:
        fld = PrimeField(GROUPS[config.group_id].order_p)
        # c = deterministic-encryption overhead + message; payload adds the
        # length prefix and the share (x, y).
        from anonpipe.crypto.deterministic import DETERMINISTIC_OVERHEAD

        payload = 2 + (DETERMINISTIC_OVERHEAD + max_word) + 2 * fld.elem_len
    else:
        payload = max_word
    return payload + 2


# ---------------------------------------------------------------------------
# Utility report


@dataclass
class UtilityReport:
    name: str
    ground_truth_unique: int
    recovered_unique: int
    recovery_ratio: float
    stage_counts: dict = field(default_factory=dict)
    stage_seconds: dict = field(default_factory=dict)
    recovered_values: set = field(default_factory=set, repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "ground_truth_unique": self.ground_truth_unique,
                "recovered_unique": self.recovered_unique,
                "recovery_ratio": self.recovery_ratio,
                "stage_counts": self.stage_counts,
                "stage_seconds": {k: round(v, 4) for k, v in self.stage_seconds.items()},
            },
            indent=2,
        )

    def table(self) -> str:
        rows = [
            ("ground-truth unique", self.ground_truth_unique),
            ("recovered unique", self.recovered_unique),
            ("recovery ratio", f"{self.recovery_ratio:.4f}"),
        ]
        rows += [(f"count[{k}]", v) for k, v in self.stage_counts.items()]
        rows += [(f"wall[{k}]", f"{v:.2f}s") for k, v in self.stage_seconds.items()]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


# ---------------------------------------------------------------------------
# Stage implementations (shared by run_scenario and the CLI subcommands)


def encode_corpus(
    config: ScenarioConfig,
    corpus: np.ndarray,
    tape: RngTape,
    analyzer_public: bytes,
    shuffler_public: bytes,
    shuffler2_keypair: KeyPair | None = None,
) -> list[bytes]:
    group = GROUPS[config.group_id]
    fld = PrimeField(group.order_p)
    pad_to = derived_pad_to(config)
    rng_share = tape.stream("encode/share")
    rng_crowd = tape.stream("encode/crowd")
    rng_seal = tape.stream("encode/seal")
    hash_key = tape.stream("keys/crowd-hash").randbytes(16)
    s2_public = shuffler2_keypair.public if shuffler2_keypair else None

    blobs = []
    for item in corpus:
        word = item_word(int(item))
        if config.secret_share_t:
            payload = secret_share_encode(
                word, config.secret_share_t, fld, rng_share
            ).to_payload(fld)
        else:
            payload = word
        crowd = make_crowd_id(
            word,
            config.crowd_mode,
            hash_key=hash_key,
            group=group,
            shuffler2_public=s2_public,
            rng=rng_crowd,
        )
        rep = encode_report(payload, crowd, analyzer_public, shuffler_public, pad_to, rng_seal)
        blobs.append(rep.to_bytes())
    return blobs


def shuffle_stage(
    config: ScenarioConfig,
    report_blobs: list[bytes],
    tape: RngTape,
    shuffler_keypair: TransportKeyPair,
    shuffler2_keypair: KeyPair | None,
    epoch_id: str = "epoch-0",
) -> Batch:
    group = GROUPS[config.group_id]
    policy = config.policy()
    batch = shuffler_mod.intake(
        report_blobs, shuffler_keypair, epoch_id, tape.stream("shuffle1/intake"), group
    )
    if config.two_shufflers:
        blinding = BlindingSecret.generate(group, tape.stream("shuffle1/blind"))
        staged = shuffler_mod.blind_stage1(
            batch, group, blinding, tape.stream("shuffle1/reorder")
        )
        out = shuffler_mod.blind_stage2_threshold(
            staged, group, shuffler2_keypair, policy, tape.stream("threshold/noise")
        )
    else:
        counts = shuffler_mod.count_crowds(batch)
        out = shuffler_mod.apply_threshold(
            batch, counts, policy, tape.stream("threshold/noise")
        )
    return shuffler_mod.shuffle_batch(out, tape.stream("shuffle1/output-order"))


def analyze_stage(
    config: ScenarioConfig, inner_blobs: list[bytes], analyzer_keypair: TransportKeyPair
) -> tuple[analyzer_mod.Histogram, dict]:
    group = GROUPS[config.group_id]
    corpus = analyzer_mod.decrypt_corpus(inner_blobs, analyzer_keypair)
    stats = {"decrypt_failures": corpus.failures}
    if config.secret_share_t:
        fld = PrimeField(group.order_p)
        decoded = analyzer_mod.secret_share_decode(
            corpus.records, config.secret_share_t, fld
        )
        stats.update(
            undecoded_groups=decoded.undecoded_groups,
            adversarial_groups=decoded.adversarial_groups,
            parse_failures=decoded.parse_failures,
        )
        values = decoded.messages
    else:
        values = corpus.records
    return analyzer_mod.histogram(values), stats


def run_scenario(config: ScenarioConfig, workspace: str | Path) -> UtilityReport:
    """Encode -> shuffle -> analyze over batch files in `workspace`."""
    workspace = Path(workspace)
    workspace.mkdir(parents=True, exist_ok=True)
    tape = RngTape(config.seed)
    group = GROUPS[config.group_id]
    timings: dict[str, float] = {}
    counts: dict[str, int] = {}

    def timed(stage: str, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:  # noqa: BLE001 - wrapped with stage context
            raise StageFailed(stage, exc) from exc
        timings[stage] = time.perf_counter() - start
        return result

    corpus = timed(
        "generate",
        lambda: generate_zipf_corpus(
            config.vocab_size, config.zipf_exponent, config.n_samples, config.seed
        ),
    )
    save_corpus(workspace / "corpus.txt", corpus)
    counts["corpus"] = len(corpus)

    analyzer_kp = TransportKeyPair.generate(tape.stream("keys/analyzer"))
    shuffler_kp = TransportKeyPair.generate(tape.stream("keys/shuffler1"))
    shuffler2_kp = (
        KeyPair.generate(group, tape.stream("keys/shuffler2"))
        if config.two_shufflers
        else None
    )

    blobs = timed(
        "encode",
        lambda: encode_corpus(
            config, corpus, tape, analyzer_kp.public_bytes, shuffler_kp.public_bytes,
            shuffler2_kp,
        ),
    )
    formats.write_batch(workspace / "reports.bin", blobs)
    counts["reports"] = len(blobs)

    out_batch = timed(
        "shuffle",
        lambda: shuffle_stage(config, blobs, tape, shuffler_kp, shuffler2_kp),
    )
    inner_blobs = [inner for _, inner in out_batch.records]
    formats.write_batch(workspace / "shuffled.bin", inner_blobs)
    (workspace / "selectivity.json").write_text(
        json.dumps(shuffler_mod.selectivity_record(out_batch)) + "\n"
    )
    counts["surviving"] = len(inner_blobs)

    hist, stats = timed(
        "analyze", lambda: analyze_stage(config, inner_blobs, analyzer_kp)
    )
    (workspace / "histogram.csv").write_text(analyzer_mod.histogram_csv(hist))
    (workspace / "analyzer_stats.json").write_text(json.dumps(stats) + "\n")
    counts["recovered_records"] = hist.total

    truth_unique = len(set(corpus.tolist()))
    report = UtilityReport(
        name=config.name,
        ground_truth_unique=truth_unique,
        recovered_unique=hist.unique_count,
        recovery_ratio=hist.unique_count / truth_unique if truth_unique else 0.0,
        stage_counts=counts,
        stage_seconds=timings,
        recovered_values=set(hist.bins),
    )
    (workspace / "utility.json").write_text(report.to_json() + "\n")
    return report


# ---------------------------------------------------------------------------
# Local-DP baselines


@dataclass
class BaselineReport:
    name: str
    epsilon: float
    recovered_unique: int
    recovered_values: set = field(default_factory=set, repr=False)


def _poisson_detection_count(lam: float, bins: int, alpha: float) -> int:
    """Smallest observed count m with bins * P[Poisson(lam) >= m] <= alpha."""
    budget = alpha / max(bins, 1)
    pmf = math.exp(-lam)
    cdf = pmf
    m = 0
    while 1.0 - cdf > budget and m < 10_000_000:
        m += 1
        pmf *= lam / m
        cdf += pmf
    return m + 1


def local_dp_baseline(
    corpus: np.ndarray,
    vocab_size: int,
    epsilon: float,
    rng,
    alpha: float = 0.05,
    name: str = "krr-baseline",
) -> BaselineReport:
    """k-ary randomized response with a frequency-estimation decoder.

    An item counts as recovered when its observed count clears a Poisson
    tail test on the all-noise null, with the significance level alpha
    spread over the whole vocabulary (so false positives are rare even
    for very large domains).
    """
    n = len(corpus)
    observed = Counter(
        k_ary_randomized_response(int(item) - 1, vocab_size, epsilon, rng)
        for item in corpus
    )
    p = krr_true_prob(vocab_size, epsilon)
    q = (1.0 - p) / (vocab_size - 1) if vocab_size > 1 else 0.0
    cutoff = _poisson_detection_count(n * q, vocab_size, alpha)
    recovered = {value + 1 for value, obs in observed.items() if obs >= cutoff}
    return BaselineReport(
        name=name, epsilon=epsilon, recovered_unique=len(recovered),
        recovered_values=recovered,
    )


def _partition_of(item: int, num_partitions: int) -> int:
    digest = hashlib.blake2b(item_word(item), digest_size=8).digest()
    return int.from_bytes(digest, "big") & (num_partitions - 1)


def partitioned_baseline(
    corpus: np.ndarray,
    vocab_size: int,
    num_partitions: int,
    epsilon: float,
    rng,
    alpha: float = 0.05,
) -> BaselineReport:
    """Partition reports by a few item-hash bits, run the local-DP baseline
    per partition over the partition's candidate set, and merge."""
    if num_partitions < 1 or num_partitions & (num_partitions - 1):
        raise ValueError("num_partitions must be a power of 2")
    part_vocab: dict[int, list[int]] = {p: [] for p in range(num_partitions)}
    for item in range(1, vocab_size + 1):
        part_vocab[_partition_of(item, num_partitions)].append(item)
    part_samples: dict[int, list[int]] = {p: [] for p in range(num_partitions)}
    for item in corpus:
        part_samples[_partition_of(int(item), num_partitions)].append(int(item))

    recovered: set[int] = set()
    for p in range(num_partitions):
        vocab = part_vocab[p]
        samples = part_samples[p]
        if len(vocab) < 2 or not samples:
            recovered.update(samples)
            continue
        index = {item: i for i, item in enumerate(vocab)}
        local = np.array([index[s] + 1 for s in samples], dtype=np.int64)
        sub = local_dp_baseline(local, len(vocab), epsilon, rng, alpha / num_partitions)
        recovered.update(vocab[v - 1] for v in sub.recovered_values)
    return BaselineReport(
        name=f"krr-partitioned-{num_partitions}",
        epsilon=epsilon,
        recovered_unique=len(recovered),
        recovered_values=recovered,
    )


# ---------------------------------------------------------------------------
# Tuple-corpus demos: permission actions and rating covariance


def run_perms_demo(
    n_samples: int = 20_000,
    num_pages: int = 2_000,
    seed: int = 0,
    flip_prob: float = 1e-4,
    threshold_t: int = 100,
    sigma: float = 4.0,
    group_id: str = DEFAULT_GROUP,
    workspace: str | Path = ".",
) -> UtilityReport:
    """Page/feature/action-bitmap tuples with client-side bit flipping and a
    high randomized threshold."""
    tape = RngTape(seed)
    page_dist = generate_zipf_corpus(num_pages, 1.2, n_samples, seed)
    rng = tape.stream("perms/generate")
    flip_rng = tape.stream("perms/flip")
    tuples = []
    for page in page_dist:
        feature = rng.randrange(3)
        bitmap = bytes([rng.randrange(16)])
        bitmap = flip_bits(bitmap, 4, flip_prob, flip_rng)
        tuples.append(struct.pack("<IB", int(page), feature) + bitmap)

    analyzer_kp = TransportKeyPair.generate(tape.stream("keys/analyzer"))
    shuffler_kp = TransportKeyPair.generate(tape.stream("keys/shuffler1"))
    hash_key = tape.stream("keys/crowd-hash").randbytes(16)
    rng_seal = tape.stream("encode/seal")
    pad_to = 16
    blobs = [
        encode_report(
            t,
            make_crowd_id(t, "hashed", hash_key=hash_key),
            analyzer_kp.public_bytes,
            shuffler_kp.public_bytes,
            pad_to,
            rng_seal,
        ).to_bytes()
        for t in tuples
    ]
    policy = ThresholdPolicy(
        threshold_t=threshold_t, sigma=sigma, mode="randomized_threshold"
    )
    batch = shuffler_mod.intake(
        blobs, shuffler_kp, "perms-0", tape.stream("shuffle1/intake")
    )
    out = shuffler_mod.apply_threshold(
        batch, shuffler_mod.count_crowds(batch), policy, tape.stream("threshold/noise")
    )
    corpus = analyzer_mod.decrypt_corpus([i for _, i in out.records], analyzer_kp)
    hist = analyzer_mod.histogram(corpus.records)
    truth = len(set(tuples))
    return UtilityReport(
        name="perms-demo",
        ground_truth_unique=truth,
        recovered_unique=hist.unique_count,
        recovery_ratio=hist.unique_count / truth if truth else 0.0,
        stage_counts={"reports": len(blobs), "surviving": len(out.records)},
        recovered_values=set(hist.bins),
    )


def client_rating_tuples(
    ratings: dict[int, int], rng, cap: int | None = None, replace_frac: float = 0.0,
    num_items: int | None = None,
) -> list[tuple[int, int, int, int]]:
    """A user's covariance contribution: canonical (i, r_ui, j, r_uj) tuples,
    optionally capped and with a fraction of item ids replaced at random."""
    items = sorted(ratings)
    if replace_frac > 0.0:
        if num_items is None:
            raise ValueError("replacement needs the item-domain size")
        replaced = {}
        for it in items:
            if rng.random() < replace_frac:
                replaced[it] = rng.randrange(1, num_items + 1)
        items = sorted({replaced.get(it, it) for it in items})
        ratings = {replaced.get(it, it): r for it, r in ratings.items()}
    tuples = [
        (i, ratings[i], j, ratings[j])
        for a, i in enumerate(items)
        for j in items[a:]
    ]
    if cap is not None and len(tuples) > cap:
        tuples = rng.sample(tuples, cap)
    return tuples
