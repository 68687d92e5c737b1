"""
Seeded hash derivations used by every filter variant.

All functions are pure: the same inputs and seed give the same outputs on
every run and platform. MurmurHash3 (x64, 128 bit) is the single hash family;
distinct purposes are separated by a one byte domain tag in front of the
hashed data:

    b"i" / b"s" / b"b"   keys (see utils.value_to_bytes)
    b"a"                 attribute fingerprints, salted by column index
    b"B"                 Bloom bit positions, salted by column index
    b"c"                 chain hops
"""
import functools
import struct
from dataclasses import dataclass
from typing import Tuple

import mmh3

from .utils import Value, value_to_bytes


MASK64 = (1 << 64) - 1
# Fixed salt for h(κ) in the alternate bucket; it must not depend on the
# filter seed so relocation only needs the bucket index and the fingerprint.
ALTERNATE_SALT = 0x5BD1E995


@dataclass(frozen=True)
class KeyDigest:
    fingerprint: int  # κ in [1, 2^|κ| - 1], 0 is the empty slot
    bucket: int  # ℓ in [0, m)


def hash128(data: bytes, seed: int) -> int:
    """
    128 bit MurmurHash3 of data under a 64 bit seed.

    mmh3 only takes a 32 bit seed so the full seed is also prepended to the
    data.
    """
    seed &= MASK64
    return mmh3.hash128(
        struct.pack(">Q", seed) + data,
        seed=(seed ^ (seed >> 32)) & 0xFFFFFFFF,
        signed=False,
    )


def digest_key(key: Value, fingerprint_bits: int, num_buckets: int, seed: int) -> KeyDigest:
    """
    Partial-key cuckoo hashing digest: the key fingerprint comes from the low
    64 bits of the hash, the home bucket from the high 64 bits.
    """
    digest = hash128(value_to_bytes(key), seed)
    fingerprint = (digest & MASK64) & ((1 << fingerprint_bits) - 1)
    if fingerprint == 0:
        fingerprint = 1
    bucket = (digest >> 64) & (num_buckets - 1)
    return KeyDigest(fingerprint, bucket)


@functools.lru_cache(maxsize=1 << 17)
def fingerprint_hash(fingerprint: int) -> int:
    return mmh3.hash(struct.pack(">I", fingerprint), seed=ALTERNATE_SALT, signed=False)


def alternate_bucket(bucket: int, fingerprint: int, num_buckets: int) -> int:
    """
    ℓ' = ℓ XOR h(κ), masked to the table. An involution for a fixed κ.
    """
    return (bucket ^ fingerprint_hash(fingerprint)) & (num_buckets - 1)


def chain_hop(
    bucket: int, alt: int, fingerprint: int, hop: int, num_buckets: int, seed: int
) -> int:
    """
    First bucket of the next pair in a fingerprint's chain. Symmetric in the
    two buckets of the current pair and one way: the previous pair cannot be
    recovered from the result.
    """
    data = b"c" + struct.pack(">QIQ", min(bucket, alt), fingerprint, hop)
    return (hash128(data, seed) >> 64) & (num_buckets - 1)


@functools.lru_cache(maxsize=1 << 18, typed=True)
def digest_attribute(column: int, value: Value, attribute_bits: int, seed: int) -> int:
    """
    Attribute fingerprint of |α| bits. Small non-negative integers are stored
    verbatim so low cardinality columns are represented exactly.
    """
    if isinstance(value, int) and 0 <= value < (1 << attribute_bits):
        return int(value)
    data = b"a" + struct.pack(">H", column) + value_to_bytes(value)
    return hash128(data, seed) & ((1 << attribute_bits) - 1)


@functools.lru_cache(maxsize=1 << 18, typed=True)
def bloom_positions(
    column: int, value: Value, num_hashes: int, num_bits: int, seed: int
) -> Tuple[int, ...]:
    """
    Bit indices for a (column, value) pair, by double hashing
    g_i = h1 + i * h2 mod num_bits.
    """
    digest = hash128(b"B" + struct.pack(">H", column) + value_to_bytes(value), seed)
    h1, h2 = digest & MASK64, digest >> 64
    return tuple((h1 + i * h2) % num_bits for i in range(num_hashes))
