"""
The bucketed cuckoo hash table underneath every filter variant.

The table stores m buckets of at most b entries. Each entry is a key
fingerprint plus an attribute payload, and a relocated entry always moves to
the alternate bucket of its own pair, so the bucket pair an entry lives in
never changes.

Bit sizes are accounted for analytically (see size_bits); entries are kept in
their natural Python representation.
"""
import logging
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Dict, List, Optional, Tuple, Union

from bitarray import bitarray

from .exceptions import CCFValueError, MalformedFilterError
from .hashing import alternate_bucket


SUCCESS = "SUCCESS"
TERMINATED = "TERMINATED"


@dataclass
class GroupSegment:
    """
    The share of a converted Bloom group held by one bucket of the pair.
    Every group entry in a bucket references the same segment object.
    """

    part: int  # 0 for the lower indexed bucket, 1 for the higher
    count: int  # r, the number of group entries in this bucket
    bits: bitarray


FingerprintVector = Tuple[int, ...]
Payload = Union[FingerprintVector, bitarray, GroupSegment]


@dataclass
class Entry:
    fingerprint: int
    payload: Payload
    converted: bool = False


@dataclass
class KickOutcome:
    status: str
    kicks_used: int
    # The entry left without a slot when the loop terminates
    homeless: Optional[Entry] = None
    # (entry, from bucket, to bucket) for every displaced victim
    moves: List[Tuple[Entry, int, int]] = field(default_factory=list)


VictimSelector = Callable[["Table", int, random.Random], int]


class Table(object):
    magic: ClassVar[bytes] = b"CCFT"
    version: ClassVar[int] = 1
    header_fmt: ClassVar[str] = "!4sBIB"
    entry_fmt: ClassVar[str] = "!HBB"
    kind_map: ClassVar[Dict[int, str]] = {0: "VECTOR", 1: "BLOOM", 2: "GROUP"}
    inverse_kind_map: ClassVar[Dict[str, int]] = {v: k for k, v in kind_map.items()}

    def __init__(self, num_buckets: int, bucket_size: int):
        self.num_buckets = num_buckets
        self.bucket_size = bucket_size
        self.buckets: List[List[Entry]] = [[] for _ in range(num_buckets)]
        self.occupied = 0

    def __repr__(self):
        return (
            f"Table(num_buckets={self.num_buckets}, bucket_size={self.bucket_size}, "
            f"occupied={self.occupied})"
        )

    def __eq__(self, other):
        if not isinstance(other, Table):
            return NotImplemented
        return (
            self.num_buckets == other.num_buckets
            and self.bucket_size == other.bucket_size
            and self.buckets == other.buckets
        )

    @property
    def capacity(self) -> int:
        return self.num_buckets * self.bucket_size

    @property
    def load_factor(self) -> float:
        return self.occupied / self.capacity

    def bucket_scan(self, bucket: int) -> Tuple[Entry, ...]:
        return tuple(self.buckets[bucket])

    def is_full(self, bucket: int) -> bool:
        return len(self.buckets[bucket]) >= self.bucket_size

    def add(self, bucket: int, entry: Entry):
        if entry.fingerprint == 0:
            raise CCFValueError("Fingerprint 0 is reserved for empty slots")
        if self.is_full(bucket):
            raise CCFValueError(f"Bucket {bucket} is full")
        self.buckets[bucket].append(entry)
        self.occupied += 1

    def pair(self, bucket: int, alt: int) -> Tuple[int, ...]:
        return (bucket,) if bucket == alt else (bucket, alt)

    def pair_entries(self, bucket: int, alt: int, fingerprint: int) -> List[Tuple[int, Entry]]:
        """
        (bucket, entry) for every entry with this fingerprint in the pair.
        """
        return [
            (idx, entry)
            for idx in self.pair(bucket, alt)
            for entry in self.buckets[idx]
            if entry.fingerprint == fingerprint
        ]

    def count_fingerprint(self, bucket: int, alt: int, fingerprint: int) -> int:
        return sum(
            1
            for idx in self.pair(bucket, alt)
            for entry in self.buckets[idx]
            if entry.fingerprint == fingerprint
        )

    def has_entry(self, bucket: int, alt: int, fingerprint: int, payload: Payload) -> bool:
        return any(
            entry.payload == payload
            for _, entry in self.pair_entries(bucket, alt, fingerprint)
        )

    def scan_count(self) -> int:
        return sum(len(entries) for entries in self.buckets)

    def kick_insert(
        self,
        start: int,
        entry: Entry,
        max_kicks: int,
        rng: random.Random,
        select_victim: Optional[VictimSelector] = None,
    ) -> KickOutcome:
        """
        Cuckoo kick loop starting at bucket `start`.

        The first iteration only checks `start` for a free slot. Each
        displacement swaps the homeless entry with a random victim of the full
        bucket and sends the victim to its alternate bucket. After max_kicks
        displacements the swaps are undone, so a Terminated outcome leaves the
        table exactly as it was and the incoming entry is the homeless one.
        """
        bucket = start
        path: List[Tuple[int, int, Entry]] = []
        for kicks in range(max_kicks + 1):
            if not self.is_full(bucket):
                self.buckets[bucket].append(entry)
                self.occupied += 1
                moves = [
                    (victim, idx, alternate_bucket(idx, victim.fingerprint, self.num_buckets))
                    for idx, _, victim in path
                ]
                return KickOutcome(SUCCESS, kicks, moves=moves)
            if kicks == max_kicks:
                break
            if select_victim is None:
                slot = rng.randrange(len(self.buckets[bucket]))
            else:
                slot = select_victim(self, bucket, rng)
            victim = self.buckets[bucket][slot]
            self.buckets[bucket][slot] = entry
            path.append((bucket, slot, victim))
            entry = victim
            bucket = alternate_bucket(bucket, victim.fingerprint, self.num_buckets)

        for idx, slot, victim in reversed(path):
            entry = self.buckets[idx][slot]
            self.buckets[idx][slot] = victim
        logging.debug(f"Kick loop terminated after {max_kicks} kicks from bucket {start}")
        return KickOutcome(TERMINATED, max_kicks, homeless=entry)

    @property
    def asbytes(self) -> bytes:
        encoded = struct.pack(
            self.header_fmt, self.magic, self.version, self.num_buckets, self.bucket_size
        )
        for entries in self.buckets:
            encoded += struct.pack("!B", len(entries))
            for entry in entries:
                encoded += self.entry_to_bytes(entry)
        return encoded

    @classmethod
    def entry_to_bytes(cls, entry: Entry) -> bytes:
        payload = entry.payload
        if isinstance(payload, GroupSegment):
            kind = "GROUP"
            data = struct.pack("!BBH", payload.part, payload.count, len(payload.bits))
            data += payload.bits.tobytes()
        elif isinstance(payload, bitarray):
            kind = "BLOOM"
            data = struct.pack("!H", len(payload)) + payload.tobytes()
        else:
            kind = "VECTOR"
            data = struct.pack(f"!B{len(payload)}B", len(payload), *payload)
        return (
            struct.pack(
                cls.entry_fmt, entry.fingerprint, cls.inverse_kind_map[kind], entry.converted
            )
            + data
        )

    @staticmethod
    def read_bits(data: bytes, read_pos: int, num_bits: int) -> Tuple[bitarray, int]:
        num_bytes = (num_bits + 7) // 8
        chunk = data[read_pos : read_pos + num_bytes]
        if len(chunk) != num_bytes:
            raise MalformedFilterError("Truncated bit array")
        bits = bitarray(endian="big")
        bits.frombytes(chunk)
        del bits[num_bits:]
        return bits, read_pos + num_bytes

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> Tuple["Table", int]:
        """
        Given the wire format of a table return the Table and the read position
        just past it.
        """
        header_size = struct.calcsize(cls.header_fmt)
        try:
            magic, version, num_buckets, bucket_size = struct.unpack(
                cls.header_fmt, data[offset : offset + header_size]
            )
        except struct.error:
            raise MalformedFilterError("Unable to parse table header")
        if magic != cls.magic:
            raise MalformedFilterError("Table magic missing")
        if version != cls.version:
            raise MalformedFilterError(f"Unsupported table format version {version}")

        table = cls(num_buckets, bucket_size)
        read_pos = offset + header_size
        entry_size = struct.calcsize(cls.entry_fmt)
        try:
            for bucket in range(num_buckets):
                (count,) = struct.unpack_from("!B", data, read_pos)
                read_pos += 1
                if count > bucket_size:
                    raise MalformedFilterError(f"Bucket {bucket} holds {count} > {bucket_size} entries")
                segments: Dict[int, GroupSegment] = {}
                for _ in range(count):
                    fingerprint, kind, converted = struct.unpack_from(cls.entry_fmt, data, read_pos)
                    read_pos += entry_size
                    kind_name = cls.kind_map.get(kind)
                    if kind_name == "VECTOR":
                        (length,) = struct.unpack_from("!B", data, read_pos)
                        payload = struct.unpack_from(f"!{length}B", data, read_pos + 1)
                        read_pos += 1 + length
                    elif kind_name == "BLOOM":
                        (num_bits,) = struct.unpack_from("!H", data, read_pos)
                        payload, read_pos = cls.read_bits(data, read_pos + 2, num_bits)
                    elif kind_name == "GROUP":
                        part, group_count, num_bits = struct.unpack_from("!BBH", data, read_pos)
                        bits, read_pos = cls.read_bits(data, read_pos + 4, num_bits)
                        payload = segments.setdefault(
                            fingerprint, GroupSegment(part, group_count, bits)
                        )
                    else:
                        raise MalformedFilterError(f"Unknown payload kind {kind}")
                    table.buckets[bucket].append(Entry(fingerprint, payload, bool(converted)))
                    table.occupied += 1
        except struct.error:
            raise MalformedFilterError("Unable to parse table body")
        return table, read_pos


def size_bits(config) -> int:
    """
    Analytic size of a filter: m * b * (|κ| + payload bits + flag bits).
    """
    per_entry = config.fingerprint_bits + config.payload_bits + config.flag_bits
    return config.num_buckets * config.bucket_size * per_entry
