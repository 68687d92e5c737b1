"""
Conditional cuckoo filters: approximate set membership for (key, predicate)
queries where the predicate is a conjunction of equality tests on attribute
columns.

Four variants share one cuckoo table:

    PLAIN    fingerprint vectors, duplicates stored until the pair is full
    BLOOM    one Bloom filter per key fingerprint and pair, no duplicates
    MIXED    fingerprint vectors, converted to a Bloom group at d duplicates
    CHAINED  fingerprint vectors, extra bucket pairs chained at d duplicates

```
>>> config = FilterConfig(variant="CHAINED", num_buckets=1024, num_columns=2)
>>> ccf = new_filter(config)
>>> ccf.insert(42, (3, 1999)).status
'STORED'
>>> ccf.query_pred(42, Predicate.from_dict({0: 3}))
True
```
"""
from __future__ import annotations

import logging
import random
import struct
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, replace
from typing import (
    ClassVar,
    Dict,
    Iterable,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Type,
)

from .exceptions import (
    CCFValueError,
    InsertionFailedError,
    MalformedFilterError,
    UnsupportedQueryError,
)
from .hashing import KeyDigest, alternate_bucket, chain_hop, digest_attribute, digest_key
from .sketch import (
    BloomGroup,
    GroupLayout,
    Predicate,
    bloom_insert,
    bloom_matches,
    convert_to_group,
    group_matches,
    new_bits,
    vector_matches,
)
from .table import SUCCESS, Entry, GroupSegment, KickOutcome, Table, size_bits
from .utils import Value, is_power_of_two


PLAIN = "PLAIN"
BLOOM = "BLOOM"
MIXED = "MIXED"
CHAINED = "CHAINED"

STORED = "STORED"
DEDUPLICATED = "DEDUPLICATED"
SATURATED_CHAIN = "SATURATED_CHAIN"
FAILED = "FAILED"

Row = Tuple[Value, Sequence[Value]]


@dataclass(frozen=True)
class FilterConfig:
    variant: str = CHAINED
    num_buckets: int = 1024  # m, a power of two
    bucket_size: int = 6  # b
    max_dupes: int = 3  # d, copies of a fingerprint per bucket pair
    max_chain: Optional[int] = None  # L_max, None for unbounded chains
    fingerprint_bits: int = 12  # |κ|
    attribute_bits: int = 8  # |α|
    num_columns: int = 1  # #𝛂
    bloom_bits: int = 16
    bloom_hashes: int = 2
    max_kicks: int = 500
    seed: int = 0
    cycle_detection: bool = True
    variant_map: ClassVar[Dict[int, str]] = {1: PLAIN, 2: BLOOM, 3: MIXED, 4: CHAINED}
    inverse_variant_map: ClassVar[Dict[str, int]] = {v: k for k, v in variant_map.items()}

    def __post_init__(self):
        object.__setattr__(self, "variant", str(self.variant).upper())
        if self.variant not in self.inverse_variant_map:
            raise CCFValueError(f"Unknown filter variant {self.variant}")
        if not is_power_of_two(self.num_buckets) or self.num_buckets >= 2 ** 32:
            raise CCFValueError(f"Number of buckets must be a power of two, got {self.num_buckets}")
        if not 1 <= self.bucket_size <= 255:
            raise CCFValueError(f"Bucket size must be in [1, 255], got {self.bucket_size}")
        if not 1 <= self.max_dupes <= 2 * self.bucket_size:
            raise CCFValueError(
                f"Max dupes must be in [1, 2b] = [1, {2 * self.bucket_size}], got {self.max_dupes}"
            )
        if self.max_chain is not None and not 1 <= self.max_chain < 2 ** 32:
            raise CCFValueError(f"Max chain length must be at least 1, got {self.max_chain}")
        if not 4 <= self.fingerprint_bits <= 16:
            raise CCFValueError(f"Key fingerprint bits must be in [4, 16], got {self.fingerprint_bits}")
        if self.attribute_bits not in (4, 8):
            raise CCFValueError(f"Attribute fingerprint bits must be 4 or 8, got {self.attribute_bits}")
        if not 0 <= self.num_columns <= 255:
            raise CCFValueError(f"Number of columns must be in [0, 255], got {self.num_columns}")
        if not 1 <= self.bloom_bits < 2 ** 16 or not 1 <= self.bloom_hashes <= 255:
            raise CCFValueError("Bloom sketches need at least one bit and one hash")
        if self.max_kicks < 0:
            raise CCFValueError("Max kicks cannot be negative")
        if not 0 <= self.seed < 2 ** 64:
            raise CCFValueError("Seed must be a 64 bit unsigned integer")
        if self.variant == MIXED:
            if self.num_columns < 1:
                raise CCFValueError("Bloom conversion needs at least one attribute column")
            if self.group_layout.total_bits <= 0:
                raise CCFValueError(
                    f"{self.max_dupes} entries of {self.entry_bits} bits cannot hold a Bloom group"
                )

    @property
    def vector_bits(self) -> int:
        return self.num_columns * self.attribute_bits

    @property
    def payload_bits(self) -> int:
        return self.bloom_bits if self.variant == BLOOM else self.vector_bits

    @property
    def flag_bits(self) -> int:
        return 1 if self.variant == MIXED else 0

    @property
    def entry_bits(self) -> int:
        return self.fingerprint_bits + self.payload_bits + self.flag_bits

    @property
    def group_layout(self) -> GroupLayout:
        return GroupLayout(
            self.fingerprint_bits,
            self.entry_bits,
            self.max_dupes,
            self.num_columns,
            self.vector_bits,
        )

    def replace(self, **changes) -> FilterConfig:
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class InsertResult:
    status: str
    chain_depth: int = 0  # number of chain hops taken before the row was placed


@dataclass
class FilterStats:
    inserts: int = 0
    stored: int = 0
    deduplicated: int = 0
    saturated: int = 0
    failed: int = 0
    kicks: int = 0
    conversions: int = 0
    cycle_extensions: int = 0  # chain walks bumped off a cycle while inserting
    max_depth: int = 0  # deepest chain pair any row reached

    def record(self, result: InsertResult):
        self.inserts += 1
        self.max_depth = max(self.max_depth, result.chain_depth)
        if result.status == STORED:
            self.stored += 1
        elif result.status == DEDUPLICATED:
            self.deduplicated += 1
        elif result.status == SATURATED_CHAIN:
            self.saturated += 1
        else:
            self.failed += 1


class CCF(ABC):
    """
    Base class of the filter variants. A filter is single-writer: queries may
    run concurrently with each other but not with inserts.
    """

    variant: ClassVar[str] = ""
    magic: ClassVar[bytes] = b"CCF1"
    version: ClassVar[int] = 1
    header_fmt: ClassVar[str] = "!4sBBIBBIBBBHBIQ?"

    def __init__(self, config: FilterConfig, table: Optional[Table] = None):
        if config.variant != self.variant:
            raise CCFValueError(f"{self.__class__.__name__} cannot use a {config.variant} config")
        self.config = config
        self.table = table if table is not None else Table(config.num_buckets, config.bucket_size)
        if (self.table.num_buckets, self.table.bucket_size) != (
            config.num_buckets,
            config.bucket_size,
        ):
            raise CCFValueError("Table dimensions do not match the config")
        self.rng = random.Random(config.seed)
        self.stats = FilterStats()

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(m={self.config.num_buckets}, b={self.config.bucket_size}, "
            f"occupied={self.table.occupied}, load_factor={self.load_factor:.3f})"
        )

    def __contains__(self, key: Value) -> bool:
        return self.query(key)

    @property
    def load_factor(self) -> float:
        return self.table.load_factor

    @property
    def size_bits(self) -> int:
        return size_bits(self.config)

    def digest(self, key: Value) -> KeyDigest:
        return digest_key(
            key, self.config.fingerprint_bits, self.config.num_buckets, self.config.seed
        )

    def alternate(self, bucket: int, fingerprint: int) -> int:
        return alternate_bucket(bucket, fingerprint, self.config.num_buckets)

    def attribute_vector(self, attributes: Sequence[Value]) -> Tuple[int, ...]:
        self.check_width(attributes)
        return tuple(
            digest_attribute(column, value, self.config.attribute_bits, self.config.seed)
            for column, value in enumerate(attributes)
        )

    def check_width(self, attributes: Sequence[Value]):
        if len(attributes) != self.config.num_columns:
            raise CCFValueError(
                f"Expected {self.config.num_columns} attributes, got {len(attributes)}"
            )

    def check_predicate(self, pred: Predicate):
        for column in pred.columns:
            if not 0 <= column < self.config.num_columns:
                raise CCFValueError(
                    f"Predicate column {column} outside [0, {self.config.num_columns})"
                )

    def query(self, key: Value) -> bool:
        """
        Key only membership. Only the first bucket pair is inspected for every
        variant, chained filters included.
        """
        digest = self.digest(key)
        alt = self.alternate(digest.bucket, digest.fingerprint)
        return self.table.count_fingerprint(digest.bucket, alt, digest.fingerprint) > 0

    def insert(self, key: Value, attributes: Sequence[Value]) -> InsertResult:
        digest = self.digest(key)
        result = self._insert(digest, attributes)
        self.stats.record(result)
        if result.status == FAILED:
            logging.debug(
                f"Insert of key {key!r} failed at load factor {self.load_factor:.4f}"
            )
        return result

    @abstractmethod
    def _insert(self, digest: KeyDigest, attributes: Sequence[Value]) -> InsertResult:
        """
        Variant specific insertion of one row.
        """

    @abstractmethod
    def query_pred(self, key: Value, pred: Predicate) -> bool:
        """
        True if some stored row for the key may satisfy the predicate.
        """

    def predicate_query(self, pred: Predicate) -> CCF:
        raise UnsupportedQueryError(f"{self.variant} filters do not support predicate only queries")

    def place(self, bucket: int, alt: int, entry: Entry) -> KickOutcome:
        """
        Store an entry in its pair, preferring a free slot in the home bucket
        and otherwise running the kick loop from the alternate bucket.
        """
        if not self.table.is_full(bucket):
            self.table.add(bucket, entry)
            return KickOutcome(SUCCESS, 0)
        outcome = self.table.kick_insert(
            alt, entry, self.config.max_kicks, self.rng, self.select_victim
        )
        self.stats.kicks += outcome.kicks_used
        return outcome

    select_victim = None

    def pair_counts(self) -> Dict[Tuple[int, int], int]:
        """
        Copies of each fingerprint per bucket pair, keyed by
        (lower bucket of the pair, fingerprint).
        """
        counts: Dict[Tuple[int, int], int] = {}
        for bucket, entries in enumerate(self.table.buckets):
            for entry in entries:
                pair_id = min(bucket, self.alternate(bucket, entry.fingerprint))
                counts[(pair_id, entry.fingerprint)] = counts.get((pair_id, entry.fingerprint), 0) + 1
        return counts

    def max_pair_count(self) -> int:
        return max(self.pair_counts().values(), default=0)

    def key_filter(self, keep) -> PlainCCF:
        """
        Copy of the table with attribute payloads dropped, keeping the entries
        for which keep(bucket, entry) is true at the same positions.
        """
        config = self.config.replace(variant=PLAIN, num_columns=0)
        table = Table(config.num_buckets, config.bucket_size)
        for bucket, entries in enumerate(self.table.buckets):
            for entry in entries:
                if keep(bucket, entry):
                    table.add(bucket, Entry(entry.fingerprint, ()))
        return PlainCCF(config, table)

    @property
    def asbytes(self) -> bytes:
        cfg = self.config
        header = struct.pack(
            self.header_fmt,
            self.magic,
            self.version,
            cfg.inverse_variant_map[cfg.variant],
            cfg.num_buckets,
            cfg.bucket_size,
            cfg.max_dupes,
            cfg.max_chain or 0,
            cfg.fingerprint_bits,
            cfg.attribute_bits,
            cfg.num_columns,
            cfg.bloom_bits,
            cfg.bloom_hashes,
            cfg.max_kicks,
            cfg.seed,
            cfg.cycle_detection,
        )
        return header + self.table.asbytes

    @classmethod
    def from_bytes(cls, data: bytes) -> CCF:
        """
        Given a serialized filter return the filter object of its variant.
        """
        header_size = struct.calcsize(cls.header_fmt)
        if data[:4] != cls.magic:
            raise MalformedFilterError("Filter magic missing")
        try:
            (
                _,
                version,
                variant_code,
                num_buckets,
                bucket_size,
                max_dupes,
                max_chain,
                fingerprint_bits,
                attribute_bits,
                num_columns,
                bloom_bits,
                bloom_hashes,
                max_kicks,
                seed,
                cycle_detection,
            ) = struct.unpack(cls.header_fmt, data[:header_size])
        except struct.error:
            raise MalformedFilterError("Unable to parse filter header")
        if version != cls.version:
            raise MalformedFilterError(f"Unsupported filter format version {version}")
        if variant_code not in FilterConfig.variant_map:
            raise MalformedFilterError(f"Unknown variant code {variant_code}")
        try:
            config = FilterConfig(
                variant=FilterConfig.variant_map[variant_code],
                num_buckets=num_buckets,
                bucket_size=bucket_size,
                max_dupes=max_dupes,
                max_chain=max_chain or None,
                fingerprint_bits=fingerprint_bits,
                attribute_bits=attribute_bits,
                num_columns=num_columns,
                bloom_bits=bloom_bits,
                bloom_hashes=bloom_hashes,
                max_kicks=max_kicks,
                seed=seed,
                cycle_detection=cycle_detection,
            )
        except CCFValueError as e:
            raise MalformedFilterError(f"Invalid filter config: {e}")
        table, read_pos = Table.from_bytes(data, header_size)
        if read_pos != len(data):
            raise MalformedFilterError(f"{len(data) - read_pos} trailing bytes after filter")
        try:
            return VARIANTS[config.variant](config, table)
        except CCFValueError as e:
            raise MalformedFilterError(str(e))


class PlainCCF(CCF):
    """
    A cuckoo filter over (key fingerprint, attribute fingerprint vector)
    entries. Distinct vectors of one key each take an entry, so a key with
    more than 2b distinct rows cannot be stored.
    """

    variant = PLAIN

    def _insert(self, digest: KeyDigest, attributes: Sequence[Value]) -> InsertResult:
        vector = self.attribute_vector(attributes)
        fingerprint, bucket = digest.fingerprint, digest.bucket
        alt = self.alternate(bucket, fingerprint)
        if self.table.has_entry(bucket, alt, fingerprint, vector):
            return InsertResult(DEDUPLICATED)
        outcome = self.place(bucket, alt, Entry(fingerprint, vector))
        return InsertResult(STORED if outcome.status == SUCCESS else FAILED)

    def query_pred(self, key: Value, pred: Predicate) -> bool:
        self.check_predicate(pred)
        digest = self.digest(key)
        alt = self.alternate(digest.bucket, digest.fingerprint)
        return any(
            vector_matches(entry.payload, pred, self.config.attribute_bits, self.config.seed)
            for _, entry in self.table.pair_entries(digest.bucket, alt, digest.fingerprint)
        )


class BloomCCF(CCF):
    """
    One entry per key fingerprint and pair; every (column, value) of every
    row for that key is inserted into the entry's Bloom filter. The occupied
    entries are exactly those of a cuckoo filter on the distinct keys.
    """

    variant = BLOOM

    def _insert(self, digest: KeyDigest, attributes: Sequence[Value]) -> InsertResult:
        self.check_width(attributes)
        cfg = self.config
        fingerprint, bucket = digest.fingerprint, digest.bucket
        alt = self.alternate(bucket, fingerprint)
        existing = self.table.pair_entries(bucket, alt, fingerprint)
        bits = existing[0][1].payload if existing else new_bits(cfg.bloom_bits)
        for column, value in enumerate(attributes):
            bloom_insert(bits, column, value, cfg.bloom_hashes, cfg.seed)
        if existing:
            return InsertResult(DEDUPLICATED)
        outcome = self.place(bucket, alt, Entry(fingerprint, bits))
        return InsertResult(STORED if outcome.status == SUCCESS else FAILED)

    def query_pred(self, key: Value, pred: Predicate) -> bool:
        self.check_predicate(pred)
        cfg = self.config
        digest = self.digest(key)
        alt = self.alternate(digest.bucket, digest.fingerprint)
        return any(
            bloom_matches(entry.payload, pred, cfg.bloom_hashes, cfg.seed)
            for _, entry in self.table.pair_entries(digest.bucket, alt, digest.fingerprint)
        )

    def predicate_query(self, pred: Predicate) -> PlainCCF:
        """
        A key only filter keeping the fingerprints whose Bloom sketch matches
        the predicate.
        """
        self.check_predicate(pred)
        cfg = self.config
        return self.key_filter(
            lambda bucket, entry: bloom_matches(entry.payload, pred, cfg.bloom_hashes, cfg.seed)
        )


class MixedCCF(CCF):
    """
    Fingerprint vectors until a pair holds d copies of a key fingerprint;
    the next distinct row converts those d entries into one Bloom group
    spread over the same d slots. Later rows for the fingerprint go into the
    group.
    """

    variant = MIXED

    def _insert(self, digest: KeyDigest, attributes: Sequence[Value]) -> InsertResult:
        vector = self.attribute_vector(attributes)
        fingerprint, bucket = digest.fingerprint, digest.bucket
        alt = self.alternate(bucket, fingerprint)
        entries = self.table.pair_entries(bucket, alt, fingerprint)

        if any(entry.converted for _, entry in entries):
            group = self.load_group(bucket, alt, fingerprint)
            before = group.bits.copy()
            group.insert_vector(vector, self.config.seed)
            if group.bits == before:
                return InsertResult(DEDUPLICATED)
            self.store_group(group, bucket, alt)
            return InsertResult(STORED)

        if any(entry.payload == vector for _, entry in entries):
            return InsertResult(DEDUPLICATED)

        if len(entries) >= self.config.max_dupes:
            self.convert(fingerprint, bucket, alt, entries, vector)
            return InsertResult(STORED)

        outcome = self.place(bucket, alt, Entry(fingerprint, vector))
        if outcome.status != SUCCESS:
            return InsertResult(FAILED)
        self.repack_moved(outcome)
        return InsertResult(STORED)

    def split_counts(self, bucket: int, alt: int, fingerprint: int) -> Tuple[int, int]:
        low, high = min(bucket, alt), max(bucket, alt)
        r_low = sum(1 for e in self.table.buckets[low] if e.fingerprint == fingerprint and e.converted)
        if low == high:
            return r_low, 0
        r_high = sum(1 for e in self.table.buckets[high] if e.fingerprint == fingerprint and e.converted)
        return r_low, r_high

    def convert(
        self,
        fingerprint: int,
        bucket: int,
        alt: int,
        entries: List[Tuple[int, Entry]],
        vector: Tuple[int, ...],
    ):
        low = min(bucket, alt)
        if bucket == alt:
            r_low, r_high = len(entries), 0
        else:
            r_low = sum(1 for idx, _ in entries if idx == low)
            r_high = len(entries) - r_low
        group = convert_to_group(
            fingerprint,
            [(entry.fingerprint, entry.payload) for _, entry in entries],
            vector,
            r_low,
            r_high,
            self.config.group_layout,
            self.config.seed,
        )
        for _, entry in entries:
            entry.converted = True
        self.store_group(group, bucket, alt)
        self.stats.conversions += 1
        logging.debug(
            f"Converted {len(entries)} entries of fingerprint {fingerprint} in pair "
            f"({bucket}, {alt}) to a Bloom group ({r_low} + {r_high})"
        )

    def load_group(self, bucket: int, alt: int, fingerprint: int) -> BloomGroup:
        """
        Reassemble a group's bits from the segments held in both buckets.
        """
        segments: Dict[int, GroupSegment] = {}
        for _, entry in self.table.pair_entries(bucket, alt, fingerprint):
            if entry.converted:
                segments[entry.payload.part] = entry.payload
        bits = new_bits(0)
        for part in sorted(segments):
            bits += segments[part].bits
        r_low, r_high = self.split_counts(bucket, alt, fingerprint)
        return BloomGroup(fingerprint, r_low, r_high, bits, self.config.group_layout.num_hashes)

    def store_group(self, group: BloomGroup, bucket: int, alt: int):
        """
        Pack the group's bits back into its entries, splitting them according
        to where the entries currently sit.
        """
        low, high = min(bucket, alt), max(bucket, alt)
        group.r_low, group.r_high = self.split_counts(bucket, alt, group.fingerprint)
        low_bits, high_bits = self.config.group_layout.split(group.bits, group.r_low, group.r_high)
        segments = {low: GroupSegment(0, group.r_low, low_bits)}
        if high != low:
            segments[high] = GroupSegment(1, group.r_high, high_bits)
        for idx in self.table.pair(bucket, alt):
            for entry in self.table.buckets[idx]:
                if entry.fingerprint == group.fingerprint and entry.converted:
                    entry.payload = segments[idx]

    def repack_moved(self, outcome: KickOutcome):
        repacked = set()
        for entry, from_bucket, to_bucket in outcome.moves:
            pair_id = (min(from_bucket, to_bucket), entry.fingerprint)
            if entry.converted and pair_id not in repacked:
                repacked.add(pair_id)
                self.store_group(
                    self.load_group(from_bucket, to_bucket, entry.fingerprint),
                    from_bucket,
                    to_bucket,
                )

    def select_victim(self, table: Table, bucket: int, rng: random.Random) -> int:
        # Group entries whose alternate bucket is full are only kicked when
        # nothing else in the bucket can move.
        entries = table.buckets[bucket]
        movable = [
            slot
            for slot, entry in enumerate(entries)
            if not entry.converted
            or not table.is_full(self.alternate(bucket, entry.fingerprint))
        ]
        return rng.choice(movable) if movable else rng.randrange(len(entries))

    def entry_matches(self, bucket: int, entry: Entry, pred: Predicate, groups: Dict) -> bool:
        cfg = self.config
        if not entry.converted:
            return vector_matches(entry.payload, pred, cfg.attribute_bits, cfg.seed)
        alt = self.alternate(bucket, entry.fingerprint)
        pair_id = (min(bucket, alt), entry.fingerprint)
        if pair_id not in groups:
            group = self.load_group(bucket, alt, entry.fingerprint)
            groups[pair_id] = group_matches(group, pred, cfg.attribute_bits, cfg.seed)
        return groups[pair_id]

    def query_pred(self, key: Value, pred: Predicate) -> bool:
        self.check_predicate(pred)
        digest = self.digest(key)
        alt = self.alternate(digest.bucket, digest.fingerprint)
        groups: Dict = {}
        return any(
            self.entry_matches(bucket, entry, pred, groups)
            for bucket, entry in self.table.pair_entries(digest.bucket, alt, digest.fingerprint)
        )

    def predicate_query(self, pred: Predicate) -> PlainCCF:
        self.check_predicate(pred)
        groups: Dict = {}
        return self.key_filter(lambda bucket, entry: self.entry_matches(bucket, entry, pred, groups))


class ChainedCCF(CCF):
    """
    Fingerprint vectors with chaining: once a pair holds d copies of a key
    fingerprint, further rows move on to the next pair of the fingerprint's
    chain, h(min(ℓ, ℓ'), κ). Queries follow the same chain and stop at the
    first pair holding fewer than d copies.
    """

    variant = CHAINED

    @property
    def chain_limit(self) -> int:
        # With unbounded chains a walk longer than m pairs must have cycled
        return self.config.max_chain or self.config.num_buckets

    def next_pair_id(self, pair_id: int, fingerprint: int, hop: int) -> int:
        cfg = self.config
        bucket = chain_hop(
            pair_id, self.alternate(pair_id, fingerprint), fingerprint, hop, cfg.num_buckets, cfg.seed
        )
        return min(bucket, self.alternate(bucket, fingerprint))

    def chain(
        self, bucket: int, fingerprint: int, stats: Optional[FilterStats] = None
    ) -> Iterator[Tuple[int, int]]:
        """
        The fixed sequence of bucket pairs for a fingerprint starting at its
        home bucket. With cycle detection on, Floyd's tortoise trails the walk
        at half speed; when they meet, the hop counter is bumped and the walk
        leaves the cycle from the current pair. Extensions are counted in
        `stats` when given.
        """
        cfg = self.config
        alt = self.alternate(bucket, fingerprint)
        yield bucket, alt
        hop = 0
        steps = 0
        tortoise = min(bucket, alt)
        for _ in range(self.chain_limit - 1):
            bucket = chain_hop(bucket, alt, fingerprint, hop, cfg.num_buckets, cfg.seed)
            alt = self.alternate(bucket, fingerprint)
            if cfg.cycle_detection:
                steps += 1
                if steps % 2 == 0:
                    tortoise = self.next_pair_id(tortoise, fingerprint, hop)
                if min(bucket, alt) == tortoise:
                    hop += 1
                    steps = 0
                    if stats is not None:
                        stats.cycle_extensions += 1
                    logging.debug(f"Chain cycle for fingerprint {fingerprint}, hop counter now {hop}")
                    bucket = chain_hop(bucket, alt, fingerprint, hop, cfg.num_buckets, cfg.seed)
                    alt = self.alternate(bucket, fingerprint)
                    tortoise = min(bucket, alt)
            yield bucket, alt

    def _insert(self, digest: KeyDigest, attributes: Sequence[Value]) -> InsertResult:
        vector = self.attribute_vector(attributes)
        fingerprint = digest.fingerprint
        depth = 0
        for depth, (bucket, alt) in enumerate(self.chain(digest.bucket, fingerprint, self.stats)):
            entries = self.table.pair_entries(bucket, alt, fingerprint)
            if any(entry.payload == vector for _, entry in entries):
                return InsertResult(DEDUPLICATED, depth)
            if len(entries) >= self.config.max_dupes:
                continue
            outcome = self.place(bucket, alt, Entry(fingerprint, vector))
            return InsertResult(STORED if outcome.status == SUCCESS else FAILED, depth)
        if self.config.max_chain is None:
            logging.warning(
                f"Chain for fingerprint {fingerprint} saturated {self.chain_limit} pairs, "
                "the table is too small"
            )
            return InsertResult(FAILED, depth)
        return InsertResult(SATURATED_CHAIN, depth)

    def query_pred(self, key: Value, pred: Predicate) -> bool:
        self.check_predicate(pred)
        cfg = self.config
        digest = self.digest(key)
        for bucket, alt in self.chain(digest.bucket, digest.fingerprint):
            entries = self.table.pair_entries(bucket, alt, digest.fingerprint)
            if any(
                vector_matches(entry.payload, pred, cfg.attribute_bits, cfg.seed)
                for _, entry in entries
            ):
                return True
            if len(entries) < cfg.max_dupes:
                return False
        # Every pair of a maximal chain is saturated; the row may have been dropped
        return True

    def chain_position(self, key: Value, attributes: Sequence[Value]) -> Optional[int]:
        """
        Index of the chain pair holding the row, or None if it is not stored.
        """
        vector = self.attribute_vector(attributes)
        digest = self.digest(key)
        for depth, (bucket, alt) in enumerate(self.chain(digest.bucket, digest.fingerprint)):
            if self.table.has_entry(bucket, alt, digest.fingerprint, vector):
                return depth
        return None

    def chain_saturated_before(self, key: Value, depth: int) -> bool:
        """
        True if the first `depth` pairs of the key's chain each hold exactly d
        copies of its fingerprint.
        """
        digest = self.digest(key)
        for idx, (bucket, alt) in enumerate(self.chain(digest.bucket, digest.fingerprint)):
            if idx >= depth:
                return True
            if self.table.count_fingerprint(bucket, alt, digest.fingerprint) != self.config.max_dupes:
                return False
        return True


VARIANTS: Dict[str, Type[CCF]] = {
    PLAIN: PlainCCF,
    BLOOM: BloomCCF,
    MIXED: MixedCCF,
    CHAINED: ChainedCCF,
}


def new_filter(config: FilterConfig) -> CCF:
    return VARIANTS[config.variant](config)


def rebuild(ccf: CCF, rows: Iterable[Row], growth: int = 2) -> CCF:
    """
    A new filter with m multiplied by growth holding every row. Raises
    InsertionFailedError if a row still cannot be stored.
    """
    if growth < 2 or not is_power_of_two(growth):
        raise CCFValueError(f"Growth factor must be a power of two >= 2, got {growth}")
    config = ccf.config.replace(num_buckets=ccf.config.num_buckets * growth)
    logging.info(f"Rebuilding {ccf.variant} filter with {config.num_buckets} buckets")
    rebuilt = new_filter(config)
    for key, attributes in rows:
        if rebuilt.insert(key, attributes).status == FAILED:
            raise InsertionFailedError(
                f"Row for key {key!r} does not fit in {config.num_buckets} buckets",
                row=(key, attributes),
            )
    return rebuilt


def build(
    rows: Iterable[Row], config: FilterConfig, max_rebuilds: int = 4, growth: int = 2
) -> CCF:
    """
    Insert every row, rebuilding with a larger table after a failed insert.
    """
    rows = list(rows)
    ccf = new_filter(config)
    failed: Optional[Row] = None
    for key, attributes in rows:
        if ccf.insert(key, attributes).status == FAILED:
            failed = (key, attributes)
            break
    else:
        return ccf
    for _ in range(max_rebuilds):
        try:
            return rebuild(ccf, rows, growth)
        except InsertionFailedError as e:
            failed = e.row
            ccf = new_filter(ccf.config.replace(num_buckets=ccf.config.num_buckets * growth))
    raise InsertionFailedError(
        f"Unable to build a {config.variant} filter after {max_rebuilds} rebuilds", row=failed
    )
