"""
Attribute sketches: fingerprint vectors, per-entry Bloom filters and the
Bloom groups that replace d fingerprint vectors sharing a key fingerprint.

A predicate is a conjunction of clauses, one per column. Each clause accepts
a set of values (a singleton for an equality test, several values for an
in-list produced by binning a range).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Mapping, Sequence, Tuple, Union

from bitarray import bitarray

from .exceptions import CCFValueError
from .hashing import bloom_positions, digest_attribute
from .utils import Value, ceil_log2


@dataclass(frozen=True)
class Predicate:
    clauses: Tuple[Tuple[int, FrozenSet[Value]], ...] = ()

    def __repr__(self):
        body = ", ".join(f"{col}: {sorted(map(repr, values))}" for col, values in self.clauses)
        return f"Predicate({{{body}}})"

    @classmethod
    def from_dict(cls, clauses: Mapping[int, Union[Value, Iterable[Value]]]) -> Predicate:
        """
        Build a predicate from {column: value} or {column: [values]}.
        """
        normalized = []
        for column, values in clauses.items():
            if isinstance(values, (int, str, bytes)):
                values = [values]
            accepted = frozenset(values)
            if not accepted:
                raise CCFValueError(f"Clause on column {column} accepts no values")
            normalized.append((int(column), accepted))
        return cls(tuple(sorted(normalized, key=lambda clause: clause[0])))

    @classmethod
    def equality(cls, attributes: Sequence[Value]) -> Predicate:
        """
        The predicate matching exactly the given attribute vector.
        """
        return cls.from_dict({column: value for column, value in enumerate(attributes)})

    @property
    def columns(self) -> Tuple[int, ...]:
        return tuple(column for column, _ in self.clauses)

    @property
    def is_empty(self) -> bool:
        return not self.clauses


KEY_ONLY = Predicate()


@functools.lru_cache(maxsize=1 << 14)
def predicate_fingerprints(
    pred: Predicate, attribute_bits: int, seed: int
) -> Tuple[Tuple[int, FrozenSet[int]], ...]:
    return tuple(
        (
            column,
            frozenset(digest_attribute(column, value, attribute_bits, seed) for value in values),
        )
        for column, values in pred.clauses
    )


def vector_matches(
    payload: Sequence[int], pred: Predicate, attribute_bits: int, seed: int
) -> bool:
    for column, accepted in predicate_fingerprints(pred, attribute_bits, seed):
        if column >= len(payload):
            raise CCFValueError(
                f"Predicate column {column} outside a {len(payload)} column vector"
            )
        if payload[column] not in accepted:
            return False
    return True


def new_bits(num_bits: int) -> bitarray:
    bits = bitarray(num_bits, endian="big")
    bits.setall(0)
    return bits


def bloom_insert(bits: bitarray, column: int, value: Value, num_hashes: int, seed: int) -> bitarray:
    for pos in bloom_positions(column, value, num_hashes, len(bits), seed):
        bits[pos] = 1
    return bits


def bloom_contains(bits: bitarray, column: int, value: Value, num_hashes: int, seed: int) -> bool:
    return all(bits[pos] for pos in bloom_positions(column, value, num_hashes, len(bits), seed))


def bloom_matches(bits: bitarray, pred: Predicate, num_hashes: int, seed: int) -> bool:
    """
    True iff every clause has an accepted value whose bits are all set.
    """
    for column, accepted in pred.clauses:
        if not any(bloom_contains(bits, column, value, num_hashes, seed) for value in accepted):
            return False
    return True


@dataclass(frozen=True)
class GroupLayout:
    """
    Bit budget of a Bloom group packed into d entries of s bits each. Each
    bucket holding part of the group spends a header of |κ| + ceil(log2 d)
    bits on the fingerprint and its entry count.
    """

    fingerprint_bits: int
    entry_bits: int  # s
    max_dupes: int  # d
    num_columns: int
    vector_bits: int  # |𝛂|, all attribute fingerprints of one row

    @property
    def header_bits(self) -> int:
        return self.fingerprint_bits + ceil_log2(self.max_dupes)

    @property
    def total_bits(self) -> int:
        return self.max_dupes * self.entry_bits - 2 * self.header_bits

    @property
    def num_hashes(self) -> int:
        # Near optimal for (d + 1) * #𝛂 distinct (column, value) pairs
        d = self.max_dupes
        raw = (self.vector_bits / self.num_columns) * (d / (d + 1)) * math.log(2)
        return max(1, math.floor(raw))

    def low_bits(self, r_low: int, r_high: int) -> int:
        if r_high == 0:
            return self.total_bits
        if r_low == 0:
            return 0
        return r_low * self.entry_bits - self.header_bits

    def split(self, bits: bitarray, r_low: int, r_high: int) -> Tuple[bitarray, bitarray]:
        cut = self.low_bits(r_low, r_high)
        return bits[:cut], bits[cut:]


@dataclass
class BloomGroup:
    fingerprint: int
    r_low: int
    r_high: int
    bits: bitarray
    num_hashes: int

    def insert_vector(self, vector: Sequence[int], seed: int):
        for column, fingerprint in enumerate(vector):
            bloom_insert(self.bits, column, fingerprint, self.num_hashes, seed)


def convert_to_group(
    fingerprint: int,
    stored: Sequence[Tuple[int, Sequence[int]]],
    incoming: Sequence[int],
    r_low: int,
    r_high: int,
    layout: GroupLayout,
    seed: int,
) -> BloomGroup:
    """
    Replace the d stored (κ, fingerprint vector) entries of a pair, plus the
    incoming vector, with one Bloom filter over (column, attribute
    fingerprint) pairs.
    """
    if any(stored_fp != fingerprint for stored_fp, _ in stored):
        raise CCFValueError("Entries converted into one group must share a fingerprint")
    if r_low + r_high != layout.max_dupes or len(stored) != layout.max_dupes:
        raise CCFValueError(
            f"A group packs exactly {layout.max_dupes} entries, got {len(stored)} "
            f"({r_low} + {r_high})"
        )
    group = BloomGroup(
        fingerprint, r_low, r_high, new_bits(layout.total_bits), layout.num_hashes
    )
    for _, vector in stored:
        group.insert_vector(vector, seed)
    group.insert_vector(incoming, seed)
    return group


def group_matches(group: BloomGroup, pred: Predicate, attribute_bits: int, seed: int) -> bool:
    """
    Predicate values are fingerprinted first, then tested against the group's
    Bloom filter, the same path rows took on their way in.
    """
    for column, accepted in predicate_fingerprints(pred, attribute_bits, seed):
        if not any(
            bloom_contains(group.bits, column, fingerprint, group.num_hashes, seed)
            for fingerprint in accepted
        ):
            return False
    return True
