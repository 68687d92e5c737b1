"""
Closed form predictors for filter sizing and false positive rates.

Every FPR predictor returns an upper bound (or, for Bloom sketches, the
usual approximation), not an estimate of the measured rate.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Mapping, Optional

from .ccf import BLOOM, CHAINED, MIXED, PLAIN, FilterConfig, Row
from .exceptions import CCFValueError
from .utils import next_power_of_two


# Achievable load factors by bucket size for d = b / 2
TARGET_LOAD: Dict[int, float] = {4: 0.75, 6: 0.87}
DEFAULT_TARGET_LOAD = 0.75


@dataclass
class DataProfile:
    num_keys: int  # n_k
    dupe_dist: Dict[int, float]  # A -> probability, A distinct vectors per key
    num_columns: int = 1
    dupe_counts: Optional[Dict[int, int]] = None  # A -> number of keys, when profiled from rows

    def __post_init__(self):
        if self.num_keys < 1:
            raise CCFValueError("A data profile needs at least one key")
        if any(dupes < 1 or p < 0 for dupes, p in self.dupe_dist.items()):
            raise CCFValueError("Duplicate counts must be >= 1 with non negative probability")
        if not math.isclose(sum(self.dupe_dist.values()), 1.0, abs_tol=1e-9):
            raise CCFValueError("Duplicate distribution must sum to 1")
        if self.dupe_counts is not None and sum(self.dupe_counts.values()) != self.num_keys:
            raise CCFValueError("Duplicate counts must cover every key")

    @classmethod
    def from_rows(cls, rows: Iterable[Row]) -> DataProfile:
        """
        Profile a row stream by counting distinct attribute vectors per key.
        """
        vectors: Dict = {}
        num_columns = 0
        for key, attributes in rows:
            vectors.setdefault(key, set()).add(tuple(attributes))
            num_columns = len(attributes)
        if not vectors:
            raise CCFValueError("Cannot profile an empty row stream")
        hist = Counter(len(distinct) for distinct in vectors.values())
        return cls(
            len(vectors),
            {dupes: count / len(vectors) for dupes, count in sorted(hist.items())},
            num_columns,
            dict(sorted(hist.items())),
        )

    @classmethod
    def uniform(cls, num_keys: int, dupes: int = 1, num_columns: int = 1) -> DataProfile:
        return cls(num_keys, {dupes: 1.0}, num_columns, {dupes: num_keys})

    @property
    def mean_dupes(self) -> float:
        return self.expect(float)

    @property
    def num_rows(self) -> float:
        return self.num_keys * self.mean_dupes

    def expect(self, fn: Callable[[int], float]) -> float:
        return sum(p * fn(dupes) for dupes, p in self.dupe_dist.items())

    def total(self, fn: Callable[[int], int]) -> float:
        """
        Sum of fn(A) over all keys. Exact for profiles built from rows.
        """
        if self.dupe_counts is None:
            return self.num_keys * self.expect(fn)
        return sum(count * fn(dupes) for dupes, count in self.dupe_counts.items())


@dataclass
class FprPrediction:
    key_only: float  # absent key
    key_pred: float  # present key, predicate matched by none of its rows
    components: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("key_only", "key_pred"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise CCFValueError(f"{name} must be a probability, got {getattr(self, name)}")


def predict_fpr_key(mean_occupied: float, fingerprint_bits: int) -> float:
    """
    FPR of a key only query: E[D] * 2^-|κ| where D is the number of occupied
    entries in the probed pair.
    """
    if mean_occupied < 0:
        raise CCFValueError("Mean occupancy cannot be negative")
    return min(1.0, mean_occupied * 2.0 ** -fingerprint_bits)


def predict_fpr_chained(
    max_dupes: int,
    max_chain: Optional[int],
    attribute_bits: int,
    mismatch_dist: Mapping[int, float],
) -> float:
    """
    Bound on the FPR of a present key whose rows all fail the predicate:
    d * L_max * E[2^(-|α| * V)] with V the number of non-matching clauses.
    At most d * L_max vectors are compared, each passing with probability
    2^-|α| per clause it should fail.

    An unbounded chain has no finite bound; pass the longest chain length
    observed instead.
    """
    if max_chain is None:
        raise CCFValueError("An unbounded chain needs an observed chain length")
    if any(v < 1 for v in mismatch_dist):
        raise CCFValueError("False positive eligible queries fail at least one clause")
    per_vector = sum(p * 2.0 ** (-attribute_bits * v) for v, p in mismatch_dist.items())
    return min(1.0, max_dupes * max_chain * per_vector)


def predict_fpr_bloom(num_bits: int, num_hashes: int, num_inserted: int, absent_clauses: int) -> float:
    """
    ((1 - e^(-h n / s))^h)^v. This underestimates the FPR of the very small
    Bloom filters stored in filter entries.
    """
    if num_bits < 1 or num_hashes < 1 or num_inserted < 1:
        raise CCFValueError("Bloom FPR needs s, h, n >= 1")
    per_clause = (1.0 - math.exp(-num_hashes * num_inserted / num_bits)) ** num_hashes
    return per_clause ** absent_clauses


def mean_pair_occupancy(load_factor: float, bucket_size: int) -> float:
    return 2 * bucket_size * load_factor


def predict_fpr(
    config: FilterConfig,
    mean_occupied: float,
    mismatch_dist: Mapping[int, float],
    chain_length: Optional[int] = None,
    inserted_pairs: int = 1,
) -> FprPrediction:
    """
    Both FPR figures for a filter config.

    chain_length stands in for L_max on unbounded chained filters and
    inserted_pairs is the number of (column, value) pairs per Bloom sketch.
    """
    key = predict_fpr_key(mean_occupied, config.fingerprint_bits)
    if config.variant == BLOOM:
        attribute = min(1.0, sum(
            p * predict_fpr_bloom(config.bloom_bits, config.bloom_hashes, inserted_pairs, v)
            for v, p in mismatch_dist.items()
        ))
    elif config.variant == CHAINED:
        attribute = predict_fpr_chained(
            config.max_dupes, config.max_chain or chain_length, config.attribute_bits, mismatch_dist
        )
    elif config.variant == MIXED:
        attribute = predict_fpr_chained(config.max_dupes, 1, config.attribute_bits, mismatch_dist)
    else:
        attribute = predict_fpr_chained(
            2 * config.bucket_size, 1, config.attribute_bits, mismatch_dist
        )
    return FprPrediction(key, attribute, {"key": key, "attribute": attribute})


def entries_per_key(
    dupes: int, variant: str, max_dupes: int, max_chain: Optional[int], bucket_size: int
) -> int:
    if variant == BLOOM:
        return 1
    if variant == MIXED:
        return min(dupes, max_dupes)
    if variant == CHAINED:
        return dupes if max_chain is None else min(dupes, max_dupes * max_chain)
    if variant == PLAIN:
        return min(dupes, 2 * bucket_size)
    raise CCFValueError(f"Unknown filter variant {variant}")


def predict_entries(
    profile: DataProfile,
    variant: str,
    max_dupes: int = 3,
    max_chain: Optional[int] = None,
    bucket_size: int = 6,
) -> float:
    """
    Expected number of occupied entries. A key with A distinct rows takes one
    entry per row up to the variant's cap: 1 for Bloom, d for Mixed (a
    converted group keeps its d slots), d * L_max for Chained and 2b for
    Plain.

    >>> predict_entries(DataProfile.uniform(100, dupes=5), CHAINED, 3, 2)
    500.0
    """
    variant = variant.upper()
    return float(profile.total(
        lambda dupes: entries_per_key(dupes, variant, max_dupes, max_chain, bucket_size)
    ))


def suggest_config(
    profile: DataProfile,
    target_load: Optional[float] = None,
    max_dupes: int = 3,
    variant: str = CHAINED,
    max_chain: Optional[int] = None,
    **overrides,
) -> FilterConfig:
    """
    b = 2d and the smallest power of two m with m * b * β >= expected entries.
    """
    bucket_size = 2 * max_dupes
    if target_load is None:
        target_load = TARGET_LOAD.get(bucket_size, DEFAULT_TARGET_LOAD)
    if not 0 < target_load < 1:
        raise CCFValueError(f"Target load factor must be in (0, 1), got {target_load}")
    entries = predict_entries(profile, variant, max_dupes, max_chain, bucket_size)
    num_buckets = next_power_of_two(entries / (target_load * bucket_size))
    return FilterConfig(
        variant=variant,
        num_buckets=num_buckets,
        bucket_size=bucket_size,
        max_dupes=max_dupes,
        max_chain=max_chain,
        num_columns=profile.num_columns,
        **overrides,
    )


def bit_efficiency(total_bits: int, num_items: int, fpr: float) -> float:
    """
    Bits used relative to the n * log2(1/ρ) lower bound for any approximate
    set membership structure with FPR ρ.
    """
    if not 0 < fpr < 1:
        raise CCFValueError(f"FPR must be in (0, 1), got {fpr}")
    if num_items < 1:
        raise CCFValueError("Bit efficiency needs at least one item")
    return total_bits / (num_items * math.log2(1 / fpr))


def bloom_reference_efficiency() -> float:
    return 1 / math.log(2)


def cuckoo_reference_efficiency(load_factor: float = 0.95, fpr: float = 0.01, semi_sorted: bool = True) -> float:
    """
    Bit efficiency of a cuckoo filter on a plain set, with or without
    semi-sorted buckets.
    """
    if not 0 < load_factor <= 1 or not 0 < fpr < 1:
        raise CCFValueError("Load factor must be in (0, 1] and FPR in (0, 1)")
    log_inv = math.log2(1 / fpr)
    if semi_sorted:
        return 1 / load_factor + 2 / (load_factor * log_inv)
    return (log_inv + 3) / (load_factor * log_inv)


def expected_output(m_true: float, m_original: float, fpr: float) -> float:
    """
    Rows surviving a filter applied as a semijoin reducer: the true matches
    plus the false positive share of everything else.
    """
    if m_true > m_original:
        raise CCFValueError("True matches cannot exceed the original row count")
    return m_true + fpr * (m_original - m_true)


def binomial_sigma(p: float, trials: int) -> float:
    """
    Standard deviation of an observed rate over `trials` Bernoulli(p) trials.
    """
    if trials < 1:
        return 0.0
    return math.sqrt(max(p * (1 - p), 0.0) / trials)
