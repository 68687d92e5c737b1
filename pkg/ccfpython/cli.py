"""
Command line front end: experiment runners that write CSV or JSON reports,
plus building filters from CSV rows and probing them.

Exit codes: 0 success, 1 bad input, 2 a filter could not be built.
"""
import argparse
import csv
import json
import logging
import os
import sys
from timeit import default_timer
from typing import List, Optional, Sequence

from . import analysis, experiments, utils, workload
from .ccf import CCF, FilterConfig, build
from .exceptions import (
    CCFValueError,
    InsertionFailedError,
    MalformedFilterError,
    UnsupportedQueryError,
    WorkloadError,
)
from .sketch import KEY_ONLY, Predicate


DATA_DIR_ENV = "CCF_DATA_DIR"
IN_LIST_SEPARATOR = "|"


def data_path(args: argparse.Namespace, path: str) -> str:
    """
    Relative paths resolve against --data-dir (default $CCF_DATA_DIR).
    """
    if path == "-" or os.path.isabs(path) or not args.data_dir:
        return path
    return os.path.join(args.data_dir, path)


def config_from_args(args: argparse.Namespace, **changes) -> FilterConfig:
    fields = dict(
        variant=args.variant,
        num_buckets=args.buckets or FilterConfig.num_buckets,
        bucket_size=args.bucket_size,
        max_dupes=args.max_dupes,
        max_chain=args.chain_max,
        fingerprint_bits=args.kappa_bits,
        attribute_bits=args.alpha_bits,
        num_columns=args.columns,
        bloom_bits=args.bloom_bits,
        bloom_hashes=args.bloom_hashes,
        max_kicks=args.max_kicks,
        seed=args.seed,
        cycle_detection=not args.no_cycle_detection,
    )
    fields.update(changes)
    return FilterConfig(**fields)


def seed_list(args: argparse.Namespace) -> List[int]:
    return list(range(args.seed, args.seed + args.seeds))


def write_report(
    args: argparse.Namespace,
    rows: Sequence[dict],
    aggregate: Optional[dict] = None,
    config: Optional[FilterConfig] = None,
):
    """
    CSV gets one line per row (the aggregate last, if any); JSON gets a
    document with the command, config, rows and aggregate.
    """
    out = data_path(args, args.out) if args.out else "-"
    f = sys.stdout if out == "-" else open(out, "w", newline="")
    try:
        if args.format == "json":
            document = {
                "command": args.command,
                "config": config.as_dict() if config else None,
                "rows": list(rows),
                "aggregate": aggregate,
            }
            json.dump(document, f, indent=2, sort_keys=True)
            f.write("\n")
        elif rows:
            fieldnames = list(rows[0])
            for extra in aggregate or {}:
                if extra not in fieldnames:
                    fieldnames.append(extra)
            writer = csv.DictWriter(f, fieldnames=fieldnames, restval="", lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
            if aggregate:
                writer.writerow(aggregate)
    finally:
        if f is not sys.stdout:
            f.close()
    logging.info(f"Wrote {len(rows)} report rows to {out} at {utils.cur_datetime()}")


def cmd_multiset(args: argparse.Namespace):
    config = config_from_args(args)
    rows = experiments.run_multiset(
        config, args.mean_dupes, seed_list(args), args.distribution, args.overflow, args.probes,
        args.kicks_per_slot,
    )
    write_report(args, rows, config=config)


def cmd_fpr(args: argparse.Namespace):
    config = config_from_args(args)
    rows = experiments.run_fpr(
        config, args.rows, args.mean_dupes[0], args.queries, seed_list(args), args.distribution
    )
    write_report(args, rows, config=config)


def cmd_sizing(args: argparse.Namespace):
    config = config_from_args(args)
    rows = experiments.run_sizing(
        config,
        args.variants or [config.variant],
        args.rows,
        args.mean_dupes,
        seed_list(args),
        args.distribution,
        args.target_load,
    )
    write_report(args, rows, config=config)


def load_imdb(directory: str):
    """
    Read <table>.csv for every JOB-light table found in the directory and
    bin title.production_year into 16 intervals.
    """
    tables = {}
    for name, shapes in workload.JOB_LIGHT_SHAPES.items():
        path = os.path.join(directory, f"{name}.csv")
        if not os.path.exists(path):
            logging.warning(f"{path} not found, skipping {name}")
            continue
        schema = workload.TableSchema(
            name,
            "id" if name == workload.BASE_TABLE else "movie_id",
            [
                workload.ColumnInfo(
                    shape.name,
                    shape.cardinality,
                    (1880, 2019) if shape.name == "production_year" else None,
                )
                for shape in shapes
            ],
        )
        tables[name] = workload.ingest_csv(path, schema)
    binnings = {}
    if workload.BASE_TABLE in tables:
        title = tables[workload.BASE_TABLE]
        idx = title.column_index("production_year")
        binnings[(workload.BASE_TABLE, "production_year")], _ = workload.bin_column(
            [attributes[idx] for _, attributes in title.rows], workload.YEAR_BINS
        )
    return tables, binnings


def cmd_joinbench(args: argparse.Namespace):
    if args.imdb_dir:
        tables, binnings = load_imdb(data_path(args, args.imdb_dir))
    else:
        tables, binnings = workload.gen_star_workload(args.keys, args.seed, args.tables)
    queries = workload.gen_star_queries(tables, args.queries, args.seed)
    config = config_from_args(args)
    rows, aggregate = experiments.run_joinbench(tables, binnings, queries, config, args.perfect)
    logging.info(
        f"RF exact {aggregate['rf_exact']:.4f}, filter {aggregate['rf_filter']:.4f}, "
        f"key only {aggregate['rf_keyonly']:.4f}"
    )
    write_report(args, rows, aggregate, config)


def attribute_schema(args: argparse.Namespace) -> workload.TableSchema:
    names = [name for name in args.attributes.split(",") if name]
    return workload.TableSchema(
        "input",
        args.key_column,
        [workload.ColumnInfo(name) for name in names],
        args.delimiter,
    )


def cmd_build(args: argparse.Namespace):
    schema = attribute_schema(args)
    table = workload.ingest_csv(data_path(args, args.input), schema)
    if args.buckets:
        config = config_from_args(args, num_columns=len(schema.columns))
    else:
        template = config_from_args(args, num_columns=len(schema.columns))
        config = analysis.suggest_config(
            analysis.DataProfile.from_rows(table.rows),
            args.target_load,
            template.max_dupes,
            template.variant,
            template.max_chain,
            **experiments.overrides_from(template),
        )
    ccf = build(table.rows, config, max_rebuilds=args.rebuilds)
    with open(data_path(args, args.filter), "wb") as f:
        f.write(ccf.asbytes)
    logging.info(f"Stored {ccf!r} ({ccf.size_bits} bits) in {args.filter}")


def read_queries(path: str, schema: workload.TableSchema):
    """
    One query per line: the key plus an optional value per attribute
    column. An empty cell leaves the column unconstrained; several values
    separated by | form an in-list.
    """
    with open(path, newline="") as f:
        reader = csv.DictReader(f, delimiter=schema.delimiter)
        if schema.key_column not in (reader.fieldnames or []):
            raise WorkloadError(f"{path}: header lacks key column {schema.key_column}")
        for record in reader:
            raw_key = record.get(schema.key_column) or ""
            try:
                key = int(raw_key)
            except ValueError:
                raise WorkloadError(f"{path}:{reader.line_num}: key {raw_key!r} is not an integer")
            clauses = {}
            for idx, column in enumerate(schema.columns):
                raw = record.get(column.name) or ""
                if raw:
                    clauses[idx] = [workload.parse_value(v) for v in raw.split(IN_LIST_SEPARATOR)]
            yield key, Predicate.from_dict(clauses) if clauses else KEY_ONLY


def cmd_probe(args: argparse.Namespace):
    with open(data_path(args, args.filter), "rb") as f:
        ccf = CCF.from_bytes(f.read())
    schema = attribute_schema(args)
    if len(schema.columns) > ccf.config.num_columns:
        raise CCFValueError(
            f"Filter has {ccf.config.num_columns} attribute columns, got {len(schema.columns)} names"
        )
    results = []
    start = default_timer()
    for key, pred in read_queries(data_path(args, args.queries), schema):
        matched = ccf.query(key) if pred.is_empty else ccf.query_pred(key, pred)
        results.append({"key": key, "predicate": repr(pred), "result": matched})
    elapsed = default_timer() - start
    if results:
        logging.info(f"Probed {len(results)} queries in {elapsed:.3f}s ({len(results) / max(elapsed, 1e-9):.0f}/s)")
    write_report(args, results, config=ccf.config)


def add_config_args(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("filter")
    group.add_argument("--variant", type=str.upper, default=FilterConfig.variant,
                       choices=list(FilterConfig.inverse_variant_map), help="Filter variant (default CHAINED)")
    group.add_argument("--kappa-bits", type=int, default=FilterConfig.fingerprint_bits,
                       help="Key fingerprint bits, 4 to 16 (default 12)")
    group.add_argument("--alpha-bits", type=int, default=FilterConfig.attribute_bits, choices=(4, 8),
                       help="Attribute fingerprint bits (default 8)")
    group.add_argument("--bloom-bits", type=int, default=FilterConfig.bloom_bits,
                       help="Bits per Bloom attribute sketch (default 16)")
    group.add_argument("--bloom-hashes", type=int, default=FilterConfig.bloom_hashes,
                       help="Hash functions per Bloom attribute sketch (default 2)")
    group.add_argument("--max-dupes", type=int, default=FilterConfig.max_dupes,
                       help="Copies of a key fingerprint per bucket pair, d (default 3)")
    group.add_argument("--chain-max", type=int, default=None,
                       help="Maximum chain length L_max (default unbounded)")
    group.add_argument("--buckets", type=int, default=None,
                       help="Number of buckets m, a power of two (default 1024, build sizes from the data)")
    group.add_argument("--bucket-size", type=int, default=FilterConfig.bucket_size,
                       help="Entries per bucket b (default 6)")
    group.add_argument("--columns", type=int, default=FilterConfig.num_columns,
                       help="Attribute columns of generated rows (default 1)")
    group.add_argument("--max-kicks", type=int, default=FilterConfig.max_kicks,
                       help="Kicks before an insertion fails (default 500)")
    group.add_argument("--no-cycle-detection", action="store_true",
                       help="Do not extend chains that revisit a bucket pair")
    group.add_argument("--seed", type=int, default=0, help="Hash salt and generator seed (default 0)")


def add_output_args(parser: argparse.ArgumentParser):
    parser.add_argument("--format", choices=("csv", "json"), default="csv", help="Report format")
    parser.add_argument("--out", default=None, help="Report path (default stdout)")


def add_stream_args(parser: argparse.ArgumentParser, mean_dupes: List[float]):
    parser.add_argument("--mean-dupes", type=float, nargs="+", default=mean_dupes,
                        help="Mean distinct rows per key")
    parser.add_argument("--distribution", choices=(workload.ZIPF, workload.UNIFORM), default=workload.ZIPF,
                        help="Duplicates per key: Zipf-Mandelbrot or the same for every key")
    parser.add_argument("--seeds", type=int, default=20, help="Runs, seeded from --seed upward (default 20)")


def add_file_args(parser: argparse.ArgumentParser):
    parser.add_argument("--key-column", default="id", help="Key column name (default id)")
    parser.add_argument("--attributes", default="", help="Comma separated attribute column names")
    parser.add_argument("--delimiter", default=",", help="CSV delimiter (default ,)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccf", description="Conditional cuckoo filter experiments and tools"
    )
    parser.add_argument("-d", "--debug", action="store_true", help="Debug logging")
    parser.add_argument("-v", "--verbose", action="store_true", help="Progress logging")
    parser.add_argument("--data-dir", default=os.environ.get(DATA_DIR_ENV),
                        help=f"Directory relative paths resolve against (default ${DATA_DIR_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    multiset = sub.add_parser("multiset", help="Rows handled and load factor at the first failed insertion")
    add_config_args(multiset)
    add_output_args(multiset)
    add_stream_args(multiset, [1, 2, 4, 8, 12, 16])
    multiset.add_argument("--overflow", type=float, default=1.2, help="Stream size relative to capacity")
    multiset.add_argument("--probes", type=int, default=10000, help="Absent keys probed for the FPR")
    multiset.add_argument("--kicks-per-slot", type=int, default=experiments.KICKS_PER_SLOT,
                          help="Raise the kick budget to this many kicks per bucket slot")
    multiset.set_defaults(func=cmd_multiset)

    fpr = sub.add_parser("fpr", help="Measured against predicted false positive rates")
    add_config_args(fpr)
    add_output_args(fpr)
    add_stream_args(fpr, [4])
    fpr.add_argument("--rows", type=int, default=20000, help="Rows inserted per run")
    fpr.add_argument("--queries", type=int, default=100000, help="Queries per run")
    fpr.set_defaults(func=cmd_fpr)

    sizing = sub.add_parser("sizing", help="Predicted against actual occupied entries")
    add_config_args(sizing)
    add_output_args(sizing)
    add_stream_args(sizing, [1, 4, 12])
    sizing.add_argument("--rows", type=int, default=20000, help="Rows per run")
    sizing.add_argument("--variants", type=str.upper, nargs="+", default=None,
                        choices=list(FilterConfig.inverse_variant_map), help="Variants to size")
    sizing.add_argument("--target-load", type=float, default=None, help="Target load factor")
    sizing.set_defaults(func=cmd_sizing)

    joinbench = sub.add_parser("joinbench", help="Semijoin reduction factors on a star workload")
    add_config_args(joinbench)
    add_output_args(joinbench)
    joinbench.add_argument("--imdb-dir", default=None, help="Directory of IMDB CSVs (default synthetic)")
    joinbench.add_argument("--keys", type=int, default=20000, help="Synthetic movies")
    joinbench.add_argument("--tables", nargs="+", default=None,
                           choices=list(workload.JOB_LIGHT_SHAPES), help="Synthetic tables")
    joinbench.add_argument("--queries", type=int, default=70, help="Star queries")
    joinbench.add_argument("--perfect", action="store_true", help="Exact filters instead of approximate ones")
    joinbench.set_defaults(func=cmd_joinbench)

    build_cmd = sub.add_parser("build", help="Build a filter from a CSV of rows")
    add_config_args(build_cmd)
    add_file_args(build_cmd)
    build_cmd.add_argument("input", help="CSV of rows with a header")
    build_cmd.add_argument("filter", help="Filter file to write")
    build_cmd.add_argument("--target-load", type=float, default=None, help="Target load factor when sizing")
    build_cmd.add_argument("--rebuilds", type=int, default=4, help="Rebuilds with doubled m before giving up")
    build_cmd.set_defaults(func=cmd_build)

    probe = sub.add_parser("probe", help="Query a filter with (key, predicate) rows from a CSV")
    add_output_args(probe)
    add_file_args(probe)
    probe.add_argument("filter", help="Filter file")
    probe.add_argument("queries", help="CSV of queries with a header")
    probe.set_defaults(func=cmd_probe)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.debug else logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(message)s")
    try:
        args.func(args)
    except InsertionFailedError as e:
        logging.error(f"Filter build failed: {e}")
        return 2
    except (CCFValueError, MalformedFilterError, UnsupportedQueryError, WorkloadError, OSError) as e:
        logging.error(str(e))
        return 1
    return 0
