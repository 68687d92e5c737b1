"""
Experiment runners behind the command line. Each returns a list of flat
report rows (dicts) that the CLI writes out as CSV or JSON.
"""
import logging
from dataclasses import asdict
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import analysis
from .ccf import BLOOM, FAILED, MIXED, CCF, FilterConfig, Row, build, new_filter
from .exceptions import CCFValueError
from .sketch import Predicate
from .workload import (
    Binning,
    ExactFilter,
    QuerySpec,
    TableData,
    evaluate_query,
    filter_rows,
    gen_multiset_rows,
)


# Config fields carried from a template into configs sized by suggest_config
TUNABLE_FIELDS = (
    "fingerprint_bits",
    "attribute_bits",
    "bloom_bits",
    "bloom_hashes",
    "max_kicks",
    "seed",
    "cycle_detection",
)

ABSENT_VALUE = -1  # never produced by the generators

# Kick budget per bucket slot for load factor runs. The filter default stops
# short of the achievable load factor on small buckets.
KICKS_PER_SLOT = 500


def overrides_from(config: FilterConfig, **changes) -> dict:
    overrides = {name: getattr(config, name) for name in TUNABLE_FIELDS}
    overrides.update(changes)
    return overrides


def insert_all(ccf: CCF, rows: Iterable[Row]) -> Tuple[int, int]:
    """
    Insert rows until the first failure. Returns (rows handled, rows failed),
    failed being 0 or 1.
    """
    handled = 0
    for key, attributes in rows:
        if ccf.insert(key, attributes).status == FAILED:
            return handled, 1
        handled += 1
    return handled, 0


def measure_key_fpr(ccf: CCF, absent_keys: Sequence[int]) -> float:
    if not absent_keys:
        return 0.0
    return sum(1 for key in absent_keys if ccf.query(key)) / len(absent_keys)


def stream_size(config: FilterConfig, mean_dupes: float, overflow: float) -> int:
    """
    Rows for a stream about `overflow` times the filter's capacity. Bloom and
    Mixed filters store at most one or d entries per key, so their streams
    scale with the duplicates per key.
    """
    capacity = config.num_buckets * config.bucket_size
    if config.variant == BLOOM:
        return int(overflow * capacity * max(1.0, mean_dupes))
    if config.variant == MIXED:
        return int(overflow * capacity * max(1.0, mean_dupes / config.max_dupes))
    return int(overflow * capacity)


def run_multiset(
    config: FilterConfig,
    mean_dupes: Sequence[float],
    seeds: Sequence[int],
    distribution: str = "zipf",
    overflow: float = 1.2,
    num_probes: int = 10000,
    kicks_per_slot: int = KICKS_PER_SLOT,
) -> List[dict]:
    """
    Feed a stream larger than the filter until the first failed insertion
    and record how far it got. The kick budget is raised to
    kicks_per_slot * b when the config allows fewer kicks.
    """
    max_kicks = max(config.max_kicks, kicks_per_slot * config.bucket_size)
    report = []
    for mean in mean_dupes:
        for seed in seeds:
            cfg = config.replace(seed=seed, max_kicks=max_kicks)
            rows = gen_multiset_rows(
                stream_size(cfg, mean, overflow), mean, distribution, cfg.num_columns, seed
            )
            ccf = new_filter(cfg)
            handled, failed = insert_all(ccf, rows)
            num_keys = max(key for key, _ in rows) if rows else 0
            fpr = measure_key_fpr(ccf, range(num_keys + 1, num_keys + 1 + num_probes))
            efficiency = (
                analysis.bit_efficiency(ccf.size_bits, handled, fpr) if handled and 0 < fpr < 1 else None
            )
            logging.info(
                f"{cfg.variant} mean dupes {mean} seed {seed}: {handled}/{len(rows)} rows, "
                f"load factor {ccf.load_factor:.4f}"
            )
            report.append(
                {
                    "variant": cfg.variant,
                    "distribution": distribution,
                    "mean_dupes": mean,
                    "seed": seed,
                    "num_buckets": cfg.num_buckets,
                    "bucket_size": cfg.bucket_size,
                    "max_dupes": cfg.max_dupes,
                    "max_kicks": cfg.max_kicks,
                    "rows": len(rows),
                    "items_before_failure": handled,
                    "failed": bool(failed),
                    "load_factor": ccf.load_factor,
                    "fpr": fpr,
                    "bit_efficiency": efficiency,
                }
            )
    return report


def run_fpr(
    config: FilterConfig,
    num_rows: int,
    mean_dupes: float,
    num_queries: int,
    seeds: Sequence[int],
    distribution: str = "zipf",
) -> List[dict]:
    """
    Measured against predicted FPR. Queries are split evenly between absent
    keys and present keys with an attribute value none of their rows hold;
    a false positive is attributed to the key when the key is absent and to
    the attribute sketch otherwise.
    """
    if num_queries <= 0:
        return []
    report = []
    for seed in seeds:
        cfg = config.replace(seed=seed)
        rows = gen_multiset_rows(num_rows, mean_dupes, distribution, cfg.num_columns, seed)
        ccf = build(rows, cfg)
        profile = analysis.DataProfile.from_rows(rows)
        rng = np.random.default_rng(seed)
        absent_queries = num_queries // 2
        present_queries = num_queries - absent_queries
        absent_keys = range(profile.num_keys + 1, profile.num_keys + 1 + absent_queries)
        present_keys = rng.integers(1, profile.num_keys + 1, size=present_queries).tolist()
        pred = Predicate.from_dict({0: ABSENT_VALUE})

        key_fp = sum(1 for key in absent_keys if ccf.query_pred(key, pred))
        attribute_fp = sum(1 for key in present_keys if ccf.query_pred(key, pred))
        key_only_fp = sum(1 for key in absent_keys if ccf.query(key))

        prediction = analysis.predict_fpr(
            ccf.config,
            analysis.mean_pair_occupancy(ccf.load_factor, ccf.config.bucket_size),
            {1: 1.0},
            chain_length=ccf.stats.max_depth + 1,
            inserted_pairs=max(1, round(profile.mean_dupes * ccf.config.num_columns)),
        )
        measured_key = key_only_fp / absent_queries if absent_queries else 0.0
        measured_pred = attribute_fp / present_queries
        report.append(
            {
                "variant": ccf.config.variant,
                "seed": seed,
                "fingerprint_bits": ccf.config.fingerprint_bits,
                "attribute_bits": ccf.config.attribute_bits,
                "num_buckets": ccf.config.num_buckets,
                "load_factor": ccf.load_factor,
                "queries": num_queries,
                "fp_key_cause": key_fp,
                "fp_attribute_cause": attribute_fp,
                "measured_fpr_key": measured_key,
                "predicted_fpr_key": prediction.key_only,
                "sigma_key": analysis.binomial_sigma(prediction.key_only, absent_queries),
                "measured_fpr_pred": measured_pred,
                "predicted_fpr_pred": prediction.key_pred,
                "sigma_pred": analysis.binomial_sigma(prediction.key_pred, present_queries),
            }
        )
    return report


def run_sizing(
    config: FilterConfig,
    variants: Sequence[str],
    num_rows: int,
    mean_dupes: Sequence[float],
    seeds: Sequence[int],
    distribution: str = "zipf",
    target_load: Optional[float] = None,
) -> List[dict]:
    """
    Predicted against actual occupied entries for filters sized by
    suggest_config.
    """
    report = []
    for variant in variants:
        for mean in mean_dupes:
            for seed in seeds:
                rows = gen_multiset_rows(num_rows, mean, distribution, config.num_columns, seed)
                profile = analysis.DataProfile.from_rows(rows)
                cfg = analysis.suggest_config(
                    profile,
                    target_load,
                    config.max_dupes,
                    variant,
                    config.max_chain,
                    **overrides_from(config, seed=seed),
                )
                predicted = analysis.predict_entries(
                    profile, cfg.variant, cfg.max_dupes, cfg.max_chain, cfg.bucket_size
                )
                ccf = new_filter(cfg)
                handled, failed = insert_all(ccf, rows)
                report.append(
                    {
                        "variant": cfg.variant,
                        "mean_dupes": mean,
                        "seed": seed,
                        "num_keys": profile.num_keys,
                        "num_buckets": cfg.num_buckets,
                        "bucket_size": cfg.bucket_size,
                        "predicted_entries": predicted,
                        "actual_entries": ccf.table.occupied,
                        "load_factor": ccf.load_factor,
                        "rows_handled": handled,
                        "failed": bool(failed),
                    }
                )
    return report


def build_table_filters(
    tables: Mapping[str, TableData],
    binnings: Optional[Mapping[Tuple[str, str], Binning]],
    config: FilterConfig,
    perfect: bool = False,
) -> Tuple[Dict[str, object], Dict[str, int]]:
    """
    One filter per table over its predicate columns, sized from the table's
    own profile. perfect swaps in exact filters.
    """
    filters: Dict[str, object] = {}
    bits: Dict[str, int] = {}
    for name, table in tables.items():
        rows = filter_rows(table, binnings)
        if perfect:
            filters[name], bits[name] = ExactFilter(rows), 0
            continue
        cfg = analysis.suggest_config(
            analysis.DataProfile.from_rows(rows),
            None,
            config.max_dupes,
            config.variant,
            config.max_chain,
            **overrides_from(config),
        )
        ccf = build(rows, cfg)
        logging.info(f"Built {ccf!r} for {name}")
        filters[name], bits[name] = ccf, ccf.size_bits
    return filters, bits


def run_joinbench(
    tables: Mapping[str, TableData],
    binnings: Optional[Mapping[Tuple[str, str], Binning]],
    queries: Sequence[QuerySpec],
    config: FilterConfig,
    perfect: bool = False,
) -> Tuple[List[dict], dict]:
    """
    Reduction factors for every (query, base table) instance, sorted by the
    exact reduction factor, plus the aggregate over all instances.
    """
    if perfect:
        binnings = None
    filters, bits = build_table_filters(tables, binnings, config, perfect)
    reports = []
    for query in queries:
        report = evaluate_query(
            query,
            tables,
            filters,
            binnings,
            filter_bits=sum(bits[name] for name in query.joined),
        )
        if report is not None:
            reports.append(report)
    reports.sort(key=lambda report: (report.rf_exact, report.query, report.base))
    return [asdict(report) for report in reports], aggregate_rf(reports, bits)


def aggregate_rf(reports, bits: Mapping[str, int]) -> dict:
    """
    Reduction factors over all table scans: summed row counts over summed
    predicate matches.
    """
    total = sum(report.m_predicate for report in reports)
    if total == 0:
        raise CCFValueError("No query instance matched any base row")
    return {
        "query": "ALL",
        "base": "",
        "instances": len(reports),
        "m_predicate": total,
        "rf_exact": sum(r.m_semijoin for r in reports) / total,
        "rf_binned": sum(r.m_binned for r in reports) / total,
        "rf_filter": sum(r.m_filtered for r in reports) / total,
        "rf_keyonly": sum(r.m_keyonly for r in reports) / total,
        "filter_bits": sum(bits.values()),
    }
