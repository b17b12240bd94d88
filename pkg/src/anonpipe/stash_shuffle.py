"""Oblivious shuffle of N fixed-size records under a private-memory budget.

Two phases.  Distribution reads one input bucket at a time, deals its items
to randomly chosen output buckets subject to a per-(input, output) chunk
quota C, parks overflow in a bounded private stash, and writes re-encrypted
chunks (padded with dummies) to an intermediate array.  Compression slides
a W-bucket window over the intermediate array, shuffles each bucket in
private memory, filters dummies, and streams the result to the output.

Every read and write against the untrusted arrays depends only on the
parameters, never on data values, and is recorded in a trace for tests.
Failures (stash overflow, undrainable stash, queue over/underflow) abort
the attempt; retries use a fresh ephemeral key, so failed attempts reveal
nothing about the final order.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from anonpipe.errors import BudgetExceeded, ShuffleFailed

DEFAULT_RECORD_LEN = 318
_POINTER_BYTES = 8


@dataclass(frozen=True)
class ShuffleParams:
    n_items: int  # N
    num_buckets: int  # B
    chunk_cap: int  # C
    stash_cap: int  # S
    window: int  # W
    drain_per_bucket: int  # K = ceil(S / B)
    alpha: float
    bucket_size: int  # D = ceil(N / B)
    item_len: int
    private_mem_budget: int | None = None

    @property
    def mid_slots(self) -> int:
        """Total intermediate slots: B * (B*C + K) = B^2*C + S (up to rounding)."""
        return self.num_buckets * (
            self.num_buckets * self.chunk_cap + self.drain_per_bucket
        )

    def working_set_bytes(self) -> int:
        """Peak private bytes across the two phases."""
        b, c, d = self.num_buckets, self.chunk_cap, self.bucket_size
        dist = (d + b * c + self.stash_cap) * self.item_len + d * _POINTER_BYTES
        stride = b * c + self.drain_per_bucket
        comp = (self.window + 1) * stride * self.item_len
        return max(dist, comp)


def make_params(
    n_items: int,
    num_buckets: int,
    chunk_cap: int,
    stash_cap: int,
    window: int,
    item_len: int = DEFAULT_RECORD_LEN,
    private_mem_budget: int | None = None,
) -> ShuffleParams:
    """Build params with an explicit chunk cap C (alpha is back-derived)."""
    if num_buckets < 1 or n_items < 1:
        raise ValueError("need n_items >= 1 and num_buckets >= 1")
    if chunk_cap < 1:
        raise ValueError("chunk cap must be >= 1")
    d = -(-n_items // num_buckets)
    params = ShuffleParams(
        n_items=n_items,
        num_buckets=num_buckets,
        chunk_cap=chunk_cap,
        stash_cap=stash_cap,
        window=window,
        drain_per_bucket=-(-stash_cap // num_buckets),
        alpha=alpha_for_chunk_cap(n_items, num_buckets, chunk_cap),
        bucket_size=d,
        item_len=item_len,
        private_mem_budget=private_mem_budget,
    )
    _check_budget(params)
    return params


def derive_params(
    n_items: int,
    num_buckets: int,
    alpha: float,
    stash_cap: int,
    window: int,
    private_mem_budget: int | None = None,
    item_len: int = DEFAULT_RECORD_LEN,
) -> ShuffleParams:
    """Derive D, C, K from (N, B, alpha, S) and validate the memory budget."""
    if num_buckets < 2:
        raise ValueError("need at least 2 buckets")
    if n_items < num_buckets:
        raise ValueError("need n_items >= num_buckets")
    d = -(-n_items // num_buckets)
    ratio = d / num_buckets
    chunk_cap = max(1, math.ceil(ratio + alpha * math.sqrt(ratio)))
    params = ShuffleParams(
        n_items=n_items,
        num_buckets=num_buckets,
        chunk_cap=chunk_cap,
        stash_cap=stash_cap,
        window=window,
        drain_per_bucket=-(-stash_cap // num_buckets),
        alpha=alpha,
        bucket_size=d,
        item_len=item_len,
        private_mem_budget=private_mem_budget,
    )
    _check_budget(params)
    return params


def _check_budget(params: ShuffleParams) -> None:
    if params.private_mem_budget is not None:
        ws = params.working_set_bytes()
        if ws > params.private_mem_budget:
            raise BudgetExceeded(ws, params.private_mem_budget)


def alpha_for_chunk_cap(n_items: int, num_buckets: int, chunk_cap: int) -> float:
    """Invert C = D/B + alpha * sqrt(D/B)."""
    d = -(-n_items // num_buckets)
    ratio = d / num_buckets
    return (chunk_cap - ratio) / math.sqrt(ratio)


def analytic_overhead(params: ShuffleParams) -> float:
    """Processed data relative to input: (N + B^2*C + S) / N."""
    n, b = params.n_items, params.num_buckets
    return (n + b * b * params.chunk_cap + params.stash_cap) / n


# Parameter scenarios used in the docs and the `params` CLI subcommand
# (N, B, C, W, S) for 318-byte records.
REFERENCE_SCENARIOS = [
    (10_000_000, 1_000, 25, 4, 40_000),
    (50_000_000, 2_000, 30, 4, 86_000),
    (100_000_000, 3_000, 30, 4, 117_000),
    (200_000_000, 4_400, 24, 4, 170_000),
]


@dataclass(frozen=True)
class PriorArtReport:
    """Analytic data-volume multipliers for sort-based oblivious shuffles."""

    batcher_bucket_items: int  # b: records per half of one private 2b-sort
    batcher_multiplier: int
    columnsort_multiplier: int
    columnsort_max_items: int
    columnsort_feasible: bool


def prior_art_overheads(
    n_items: int, record_len: int, private_mem_budget: int
) -> PriorArtReport:
    if record_len <= 0:
        raise ValueError("record_len must be positive")
    b = private_mem_budget // (2 * record_len)
    if b < 1:
        raise ValueError("budget below one record pair")
    if n_items <= b:
        batcher = 1
    else:
        batcher = math.ceil(math.log2(n_items / b)) ** 2
    # ColumnSort: r rows x s columns with r >= 2(s-1)^2 and r rows resident.
    r = private_mem_budget // record_len
    s = int(math.isqrt(r // 2)) + 1
    while s > 1 and 2 * (s - 1) ** 2 > r:
        s -= 1
    col_max = r * s
    return PriorArtReport(
        batcher_bucket_items=b,
        batcher_multiplier=batcher,
        columnsort_multiplier=8,
        columnsort_max_items=col_max,
        columnsort_feasible=n_items <= col_max,
    )


# ---------------------------------------------------------------------------
# Execution


class _AttemptFailed(Exception):
    def __init__(self, phase: str):
        self.phase = phase


class Trace:
    """Accesses to untrusted arrays: (phase, region, offset, len, op)."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.phase = ""
        self.entries: list[tuple[str, str, int, int, str]] = []

    def log(self, region: str, offset: int, length: int, op: str) -> None:
        if self.enabled:
            self.entries.append((self.phase, region, offset, length, op))

    def dump(self) -> str:
        return "\n".join(
            f"{p},{r},{off},{ln},{op}" for p, r, off, ln, op in self.entries
        )


# Item flags inside the authenticated envelope. Dummies only pad chunks and
# are discarded during compression; pads stand in for missing items of a
# short last input bucket and travel all the way to the output, keeping the
# per-bucket export schedule independent of N mod (B*D).
FLAG_REAL = 0
FLAG_DUMMY = 1
FLAG_PAD = 2


class ItemCipher:
    """AEAD over (flag || item) under an ephemeral per-attempt key."""

    def __init__(self, rng):
        self._aead = AESGCM(rng.randbytes(16))
        self._rng = rng

    def encrypt(self, item: bytes, flag: int) -> bytes:
        nonce = self._rng.randbytes(12)
        return nonce + self._aead.encrypt(nonce, bytes([flag]) + item, None)

    def decrypt(self, blob: bytes) -> tuple[bytes, int]:
        pt = self._aead.decrypt(blob[:12], blob[12:], None)
        return pt[1:], pt[0]


def shuffle_to_buckets(num_buckets: int, bucket_size: int, rng) -> list[int]:
    """Target bucket per input slot: shuffle D items with B-1 separators."""
    arr = list(range(bucket_size)) + [-1] * (num_buckets - 1)
    rng.shuffle(arr)
    targets = [0] * bucket_size
    bucket = 0
    for v in arr:
        if v < 0:
            bucket += 1
        else:
            targets[v] = bucket
    return targets


@dataclass
class ShuffleResult:
    records: list[bytes]
    attempts: int
    trace: Trace
    peak_private_bytes: int
    failed_phases: list[str] = field(default_factory=list)


def stash_shuffle(
    records: list[bytes],
    params: ShuffleParams,
    rng,
    open_record=None,
    max_attempts: int = 8,
    keep_trace: bool = True,
) -> ShuffleResult:
    """Obliviously permute `records`, returning a uniformly chosen feasible
    permutation of the (opened) items.

    `open_record`, when given, maps each input record to the item that
    travels through the shuffle (e.g. stripping an outer encryption layer
    and the crowd ID); items must share one length.
    """
    if len(records) != params.n_items:
        raise ValueError("record count does not match params.n_items")
    failed: list[str] = []
    for attempt in range(1, max_attempts + 1):
        trace = Trace(enabled=keep_trace)
        cipher = ItemCipher(rng)
        try:
            out, peak = _attempt(records, params, cipher, rng, open_record, trace)
            return ShuffleResult(
                records=out,
                attempts=attempt,
                trace=trace,
                peak_private_bytes=peak,
                failed_phases=failed,
            )
        except _AttemptFailed as exc:
            failed.append(exc.phase)
    raise ShuffleFailed(failed[-1], max_attempts)


def _attempt(records, params, cipher, rng, open_record, trace):
    n = params.n_items
    b_count = params.num_buckets
    d = params.bucket_size
    c = params.chunk_cap
    s = params.stash_cap
    k = params.drain_per_bucket
    w = params.window
    bucket_stride = b_count * c + k

    item_len: int | None = None
    dummy_item = b""
    mid: list[bytes | None] = [None] * (b_count * bucket_stride)
    stash: list[deque] = [deque() for _ in range(b_count)]
    stash_total = 0
    max_stash = 0

    trace.phase = "distribution"
    for b in range(b_count):
        targets = shuffle_to_buckets(b_count, d, rng)
        chunks: list[list[tuple[bytes, int]]] = [[] for _ in range(b_count)]
        for j in range(b_count):
            while len(chunks[j]) < c and stash[j]:
                chunks[j].append(stash[j].popleft())
                stash_total -= 1
        for i in range(d):
            idx = b * d + i
            trace.log("in", idx, 1, "read")
            if idx < n:
                item = records[idx] if open_record is None else open_record(records[idx])
                if item_len is None:
                    item_len = len(item)
                    dummy_item = b"\x00" * item_len
                elif len(item) != item_len:
                    raise ValueError("items must share one length")
                entry = (item, FLAG_REAL)
            else:
                # a short last bucket is padded; pads ride through to the
                # output so every bucket exports exactly D items
                entry = (dummy_item, FLAG_PAD)
            j = targets[i]
            if len(chunks[j]) < c:
                chunks[j].append(entry)
            elif stash_total < s:
                stash[j].append(entry)
                stash_total += 1
                max_stash = max(max_stash, stash_total)
            else:
                raise _AttemptFailed("distribution")
        for j in range(b_count):
            while len(chunks[j]) < c:
                chunks[j].append((dummy_item, FLAG_DUMMY))
            base = j * bucket_stride + b * c
            for i in range(c):
                mid[base + i] = cipher.encrypt(*chunks[j][i])
                trace.log("mid", base + i, 1, "write")

    trace.phase = "drain"
    for j in range(b_count):
        if len(stash[j]) > k:
            raise _AttemptFailed("drain")
        base = j * bucket_stride + b_count * c
        for i in range(k):
            entry = stash[j].popleft() if stash[j] else (dummy_item, FLAG_DUMMY)
            mid[base + i] = cipher.encrypt(*entry)
            trace.log("mid", base + i, 1, "write")

    trace.phase = "compression"
    effective_window = min(w, b_count)
    # The window buffers up to W fully imported buckets; bucket occupancy
    # fluctuates around D, so sizing by W*D alone would overflow constantly.
    queue_cap = w * bucket_stride
    queue: deque = deque()
    max_queue = 0
    out: list[tuple[bytes, int]] = []

    def import_bucket(bk: int) -> None:
        nonlocal max_queue
        base = bk * bucket_stride
        blobs = []
        for i in range(bucket_stride):
            trace.log("mid", base + i, 1, "read")
            blobs.append(mid[base + i])
        rng.shuffle(blobs)
        for blob in blobs:
            item, flag = cipher.decrypt(blob)
            if flag != FLAG_DUMMY:
                if len(queue) >= queue_cap:
                    raise _AttemptFailed("compression")
                queue.append((item, flag))
                max_queue = max(max_queue, len(queue))

    def drain_queue() -> None:
        if len(queue) < d:
            raise _AttemptFailed("compression")
        for _ in range(d):
            trace.log("out", len(out), 1, "write")
            out.append(queue.popleft())

    for bk in range(effective_window):
        import_bucket(bk)
    for bk in range(effective_window, b_count):
        drain_queue()
        import_bucket(bk)
    for _ in range(effective_window):
        drain_queue()

    assert len(out) == b_count * d
    result = [item for item, flag in out if flag == FLAG_REAL]
    assert len(result) == n
    if item_len is None:
        item_len = 0
    dist_peak = (d + b_count * c + max_stash) * item_len + d * _POINTER_BYTES
    comp_peak = (bucket_stride + max_queue) * item_len
    return result, max(dist_peak, comp_peak)
