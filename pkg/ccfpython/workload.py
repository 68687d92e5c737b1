"""
Workloads for filter experiments: synthetic multisets with skewed
duplicate counts, CSV tables, range binning, and the star join harness that
compares filter driven semijoin reduction against the exact answer.

All joins are on one shared integer key column.
"""
from __future__ import annotations

import bisect
import csv
import logging
from dataclasses import dataclass, field
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)

import numpy as np

from .ccf import Row
from .exceptions import CCFValueError, WorkloadError
from .sketch import KEY_ONLY, Predicate
from .utils import Value


ZM_OFFSET = 2.7
ZM_LOW = 1
ZM_HIGH = 500
ALPHA_BOUNDS = (-50.0, 50.0)

ZIPF = "zipf"
UNIFORM = "uniform"


def zipf_mandelbrot_pmf(
    alpha: float, offset: float = ZM_OFFSET, low: int = ZM_LOW, high: int = ZM_HIGH
) -> np.ndarray:
    """
    p(x) proportional to (offset + x)^-alpha on the integers [low, high].
    """
    if low > high or offset + low <= 0:
        raise CCFValueError(f"Invalid Zipf-Mandelbrot support [{low}, {high}] with offset {offset}")
    support = np.arange(low, high + 1, dtype=np.float64)
    log_weights = -alpha * np.log(offset + support)
    weights = np.exp(log_weights - log_weights.max())
    return weights / weights.sum()


def zipf_mandelbrot_mean(
    alpha: float, offset: float = ZM_OFFSET, low: int = ZM_LOW, high: int = ZM_HIGH
) -> float:
    support = np.arange(low, high + 1, dtype=np.float64)
    return float(np.dot(support, zipf_mandelbrot_pmf(alpha, offset, low, high)))


def fit_zipf_alpha(
    mean: float,
    offset: float = ZM_OFFSET,
    low: int = ZM_LOW,
    high: int = ZM_HIGH,
    tol: float = 1e-10,
) -> float:
    """
    The exponent whose truncated distribution has the given mean, by
    bisection. The mean decreases in alpha; negative exponents put the mass
    near the top of the range.
    """
    lo, hi = ALPHA_BOUNDS
    if not zipf_mandelbrot_mean(hi, offset, low, high) <= mean <= zipf_mandelbrot_mean(lo, offset, low, high):
        raise CCFValueError(f"Mean {mean} is not reachable on [{low}, {high}]")
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if zipf_mandelbrot_mean(mid, offset, low, high) > mean:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def gen_zipf_mandelbrot(
    num_samples: int,
    alpha: float,
    offset: float = ZM_OFFSET,
    low: int = ZM_LOW,
    high: int = ZM_HIGH,
    seed: Union[int, np.random.Generator] = 0,
) -> np.ndarray:
    """
    i.i.d. draws from the truncated Zipf-Mandelbrot distribution.
    """
    rng = np.random.default_rng(seed)
    return rng.choice(
        np.arange(low, high + 1), size=num_samples, p=zipf_mandelbrot_pmf(alpha, offset, low, high)
    )


def dupe_counts(
    num_rows: int, mean_dupes: float, distribution: str, rng: np.random.Generator
) -> List[int]:
    """
    Per key duplicate counts summing to exactly num_rows.
    """
    if distribution == UNIFORM:
        per_key = max(1, round(mean_dupes))
        counts = [per_key] * (num_rows // per_key)
        if num_rows % per_key:
            counts.append(num_rows % per_key)
        return counts
    if distribution != ZIPF:
        raise CCFValueError(f"Unknown duplicate distribution {distribution}")
    if mean_dupes <= 1:
        return [1] * num_rows
    alpha = fit_zipf_alpha(mean_dupes)
    counts: List[int] = []
    total = 0
    while total < num_rows:
        batch = gen_zipf_mandelbrot(max(16, int((num_rows - total) / mean_dupes) + 1), alpha, seed=rng)
        for count in batch.tolist():
            count = min(count, num_rows - total)
            counts.append(count)
            total += count
            if total >= num_rows:
                break
    return counts


def gen_multiset_rows(
    num_rows: int,
    mean_dupes: float = 1.0,
    distribution: str = ZIPF,
    num_columns: int = 1,
    seed: int = 0,
) -> List[Row]:
    """
    A randomly ordered stream of (key, attributes) rows. Keys are the
    integers 1..n_k; the rows of one key have distinct first attributes, so
    every row is a distinct (key, attribute vector) pair.
    """
    rng = np.random.default_rng(seed)
    counts = dupe_counts(num_rows, mean_dupes, distribution, rng)
    rows: List[Row] = []
    for key, count in enumerate(counts, start=1):
        firsts = distinct_values(rng, 1 << 62, count, start=1 << 32)
        for first in firsts:
            rest = rng.integers(1 << 32, 1 << 62, size=num_columns - 1).tolist() if num_columns > 1 else []
            rows.append((key, (first, *rest)))
    order = rng.permutation(len(rows))
    logging.debug(f"Generated {len(rows)} rows over {len(counts)} keys ({distribution})")
    return [rows[idx] for idx in order]


def distinct_values(
    rng: np.random.Generator, cardinality: int, count: int, start: int = 1
) -> List[int]:
    """
    count distinct integers from [start, start + cardinality).
    """
    count = min(count, cardinality)
    if cardinality <= 4096:
        return (rng.choice(cardinality, size=count, replace=False) + start).tolist()
    chosen: Set[int] = set()
    while len(chosen) < count:
        chosen.update(rng.integers(start, start + cardinality, size=count - len(chosen)).tolist())
    return sorted(chosen)


@dataclass
class ColumnInfo:
    name: str
    cardinality: Optional[int] = None
    value_range: Optional[Tuple[int, int]] = None  # set for binnable integer columns


@dataclass
class TableSchema:
    name: str
    key_column: str
    columns: List[ColumnInfo]
    delimiter: str = ","


@dataclass
class TableData:
    name: str
    columns: List[ColumnInfo]
    rows: List[Row] = field(default_factory=list)
    key_column: str = "id"

    def __post_init__(self):
        for key, attributes in self.rows:
            if len(attributes) != len(self.columns):
                raise WorkloadError(
                    f"Table {self.name} has {len(self.columns)} columns, row for key {key} has {len(attributes)}"
                )

    def __repr__(self):
        return f"TableData(name={self.name!r}, columns={self.column_names}, rows={len(self.rows)})"

    def __len__(self):
        return len(self.rows)

    @property
    def column_names(self) -> List[str]:
        return [column.name for column in self.columns]

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise WorkloadError(f"Table {self.name} has no column {name}")

    def keys(self) -> Set[Value]:
        return {key for key, _ in self.rows}


def parse_value(raw: str) -> Value:
    try:
        return int(raw)
    except ValueError:
        return raw


def ingest_csv(path: str, schema: TableSchema) -> TableData:
    """
    Read a delimited file with a header row. Only the key column and the
    schema's columns are kept; every key must be an integer.
    """
    rows: List[Row] = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f, delimiter=schema.delimiter)
        header = reader.fieldnames or []
        missing = [
            name for name in [schema.key_column] + [c.name for c in schema.columns] if name not in header
        ]
        if missing:
            raise WorkloadError(f"{path}: header lacks columns {', '.join(missing)}")
        for record in reader:
            line = reader.line_num
            raw_key = record.get(schema.key_column)
            if raw_key is None or raw_key == "":
                raise WorkloadError(f"{path}:{line}: missing key field {schema.key_column}")
            try:
                key = int(raw_key)
            except ValueError:
                raise WorkloadError(f"{path}:{line}: key {raw_key!r} is not an integer")
            attributes = []
            for column in schema.columns:
                raw = record.get(column.name)
                if raw is None:
                    raise WorkloadError(f"{path}:{line}: missing field {column.name}")
                attributes.append(parse_value(raw))
            rows.append((key, tuple(attributes)))
    logging.info(f"Read {len(rows)} rows of {schema.name} from {path}")
    return TableData(schema.name, list(schema.columns), rows, schema.key_column)


def export_csv(table: TableData, path: str, delimiter: str = ","):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, delimiter=delimiter)
        writer.writerow([table.key_column] + table.column_names)
        for key, attributes in table.rows:
            writer.writerow([key, *attributes])


@dataclass
class Binning:
    """
    Sorted lower edges of contiguous value intervals; bin i holds the values
    in [edges[i], edges[i + 1]).
    """

    edges: List[int]

    @property
    def num_bins(self) -> int:
        return len(self.edges)

    def bin_of(self, value: int) -> int:
        return max(0, bisect.bisect_right(self.edges, value) - 1)

    def range_to_bins(self, low: Optional[int] = None, high: Optional[int] = None) -> FrozenSet[int]:
        """
        Ids of every bin overlapping the closed range [low, high].
        """
        first = 0 if low is None else self.bin_of(low)
        last = self.num_bins - 1 if high is None else self.bin_of(high)
        if low is not None and high is not None and low > high:
            return frozenset()
        if high is not None and high < self.edges[0]:
            return frozenset()
        return frozenset(range(first, last + 1))


def bin_column(values: Iterable[int], num_bins: int) -> Tuple[Binning, List[int]]:
    """
    Split the distinct values into num_bins runs of (nearly) equal length
    and map each value to its run.

    >>> binning, _ = bin_column(range(1888, 2020), 16)
    >>> binning.num_bins
    16
    """
    values = list(values)
    if num_bins < 1:
        raise CCFValueError("At least one bin is needed")
    distinct = np.unique(np.asarray(values))
    if distinct.size == 0:
        raise CCFValueError("Cannot bin an empty column")
    chunks = np.array_split(distinct, min(num_bins, distinct.size))
    binning = Binning([int(chunk[0]) for chunk in chunks])
    return binning, [binning.bin_of(value) for value in values]


BinningMap = Mapping[Tuple[str, str], Binning]


@dataclass
class TablePredicate:
    # column -> accepted value or values
    equalities: Dict[str, Union[Value, Sequence[Value]]] = field(default_factory=dict)
    # column -> inclusive (low, high), either side open when None
    ranges: Dict[str, Tuple[Optional[int], Optional[int]]] = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return not self.equalities and not self.ranges

    def accepted(self, column: str) -> FrozenSet[Value]:
        values = self.equalities[column]
        if isinstance(values, (int, str, bytes)):
            return frozenset([values])
        return frozenset(values)

    def matches(self, table: TableData, attributes: Sequence[Value], binnings: Optional[BinningMap] = None) -> bool:
        """
        Evaluate on one row. A range on a column with a binning is coarsened
        to the bins it overlaps.
        """
        for column in self.equalities:
            if attributes[table.column_index(column)] not in self.accepted(column):
                return False
        for column, (low, high) in self.ranges.items():
            value = attributes[table.column_index(column)]
            binning = (binnings or {}).get((table.name, column))
            if binning is not None:
                if binning.bin_of(value) not in binning.range_to_bins(low, high):
                    return False
            elif (low is not None and value < low) or (high is not None and value > high):
                return False
        return True

    def to_predicate(self, table: TableData, binnings: Optional[BinningMap] = None) -> Predicate:
        """
        The filter predicate over the table's column positions. Ranges become
        in-lists of bin ids, or of every value in the range when the column
        is not binned but has a known value range.
        """
        clauses: Dict[int, FrozenSet[Value]] = {}
        for column in self.equalities:
            clauses[table.column_index(column)] = self.accepted(column)
        for column, (low, high) in self.ranges.items():
            idx = table.column_index(column)
            binning = (binnings or {}).get((table.name, column))
            if binning is not None:
                accepted = binning.range_to_bins(low, high)
            elif table.columns[idx].value_range is not None:
                first, last = table.columns[idx].value_range
                first = first if low is None else max(first, low)
                last = last if high is None else min(last, high)
                accepted = frozenset(range(first, last + 1))
            else:
                raise WorkloadError(f"Range on {table.name}.{column} has no binning")
            if not accepted:
                raise WorkloadError(f"Range on {table.name}.{column} accepts no values")
            clauses[idx] = accepted
        return Predicate.from_dict(clauses) if clauses else KEY_ONLY


@dataclass
class QuerySpec:
    base: str
    joined: List[str] = field(default_factory=list)
    predicates: Dict[str, TablePredicate] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if len(self.joined) > 4:
            raise WorkloadError(f"A star query joins at most 4 tables, got {len(self.joined)}")
        if self.base in self.joined or len(set(self.joined)) != len(self.joined):
            raise WorkloadError(f"Query {self.name} joins a table twice")

    @property
    def tables(self) -> List[str]:
        return [self.base] + list(self.joined)

    def predicate_for(self, table: str) -> TablePredicate:
        return self.predicates.get(table, TablePredicate())


def check_tables(query: QuerySpec, tables: Mapping[str, TableData]):
    missing = [name for name in query.tables if name not in tables]
    if missing:
        raise WorkloadError(f"Query {query.name} references unknown tables {', '.join(missing)}")


def filter_rows(table: TableData, binnings: Optional[BinningMap] = None) -> List[Row]:
    """
    The rows a table's filter is built from: binned columns hold bin ids.
    """
    binned = {
        table.column_index(column): binning
        for (name, column), binning in (binnings or {}).items()
        if name == table.name
    }
    if not binned:
        return list(table.rows)
    return [
        (key, tuple(binned[idx].bin_of(v) if idx in binned else v for idx, v in enumerate(attributes)))
        for key, attributes in table.rows
    ]


def base_rows(query: QuerySpec, tables: Mapping[str, TableData]) -> List[Row]:
    """
    Base table rows passing the base table's own predicates, evaluated
    without binning.
    """
    check_tables(query, tables)
    base = tables[query.base]
    pred = query.predicate_for(query.base)
    return [(key, attributes) for key, attributes in base.rows if pred.matches(base, attributes)]


def exact_semijoin(
    query: QuerySpec, tables: Mapping[str, TableData], binnings: Optional[BinningMap] = None
) -> Tuple[int, List[Row]]:
    """
    Base rows matching the base predicates whose key occurs in every joined
    table after that table's predicates are applied. With binnings the
    joined tables' ranges are coarsened to bins.
    """
    candidates = base_rows(query, tables)
    for name in query.joined:
        table = tables[name]
        pred = query.predicate_for(name)
        keys = {key for key, attributes in table.rows if pred.matches(table, attributes, binnings)}
        candidates = [row for row in candidates if row[0] in keys]
    return len(candidates), candidates


class ExactFilter(object):
    """
    An exact stand-in for a filter: no false positives. Built from the same
    (possibly binned) rows as the approximate filter.
    """

    def __init__(self, rows: Iterable[Row]):
        self.rows: Dict[Value, Set[Tuple[Value, ...]]] = {}
        for key, attributes in rows:
            self.rows.setdefault(key, set()).add(tuple(attributes))

    def __contains__(self, key: Value) -> bool:
        return self.query(key)

    def query(self, key: Value) -> bool:
        return key in self.rows

    def query_pred(self, key: Value, pred: Predicate) -> bool:
        return any(
            all(attributes[column] in values for column, values in pred.clauses)
            for attributes in self.rows.get(key, ())
        )


def filtered_scan(
    query: QuerySpec,
    tables: Mapping[str, TableData],
    filters: Mapping[str, object],
    binnings: Optional[BinningMap] = None,
    key_only: bool = False,
) -> int:
    """
    Number of base rows passing the base predicates and accepted by the
    filter of every joined table. key_only ignores the joined tables'
    predicates.
    """
    check_tables(query, tables)
    probes = []
    for name in query.joined:
        if name not in filters:
            raise WorkloadError(f"No filter for joined table {name}")
        pred = KEY_ONLY if key_only else query.predicate_for(name).to_predicate(tables[name], binnings)
        probes.append((filters[name], pred))
    count = 0
    for key, _ in base_rows(query, tables):
        if all(
            ccf.query(key) if pred.is_empty else ccf.query_pred(key, pred) for ccf, pred in probes
        ):
            count += 1
    return count


def reduction_factor(matched: int, m_predicate: int) -> float:
    if m_predicate < 1:
        raise CCFValueError("Reduction factor needs at least one predicate matching row")
    return min(1.0, max(0.0, matched / m_predicate))


@dataclass
class RfReport:
    query: str
    base: str
    m_semijoin: int
    m_binned: int
    m_filtered: int
    m_keyonly: int
    m_predicate: int
    rf_exact: float
    rf_binned: float
    rf_filter: float
    rf_keyonly: float
    fpr_vs_oracle: float  # false positive share among rows the binned oracle rejects
    filter_bits: int = 0

    def __post_init__(self):
        if not self.m_semijoin <= self.m_binned <= self.m_filtered <= self.m_keyonly <= self.m_predicate:
            raise WorkloadError(
                f"Row counts out of order for {self.query}: {self.m_semijoin} <= {self.m_binned} <= "
                f"{self.m_filtered} <= {self.m_keyonly} <= {self.m_predicate}"
            )


def evaluate_query(
    query: QuerySpec,
    tables: Mapping[str, TableData],
    filters: Mapping[str, object],
    binnings: Optional[BinningMap] = None,
    filter_bits: int = 0,
) -> Optional[RfReport]:
    """
    All reduction factors of one (query, base table) instance, or None when
    no base row passes the base predicates.
    """
    m_predicate = len(base_rows(query, tables))
    if m_predicate == 0:
        return None
    m_semijoin, _ = exact_semijoin(query, tables)
    m_binned, _ = exact_semijoin(query, tables, binnings)
    m_filtered = filtered_scan(query, tables, filters, binnings)
    m_keyonly = filtered_scan(query, tables, filters, binnings, key_only=True)
    rejectable = m_predicate - m_binned
    return RfReport(
        query=query.name,
        base=query.base,
        m_semijoin=m_semijoin,
        m_binned=m_binned,
        m_filtered=m_filtered,
        m_keyonly=m_keyonly,
        m_predicate=m_predicate,
        rf_exact=reduction_factor(m_semijoin, m_predicate),
        rf_binned=reduction_factor(m_binned, m_predicate),
        rf_filter=reduction_factor(m_filtered, m_predicate),
        rf_keyonly=reduction_factor(m_keyonly, m_predicate),
        fpr_vs_oracle=(m_filtered - m_binned) / rejectable if rejectable else 0.0,
        filter_bits=filter_bits,
    )


@dataclass(frozen=True)
class ColumnShape:
    name: str
    cardinality: int
    avg_dupes: float
    max_dupes: int


# Predicate columns and distinct values per join key of the IMDB tables in
# the JOB-light workload. The first column of a table drives its row count.
JOB_LIGHT_SHAPES: Dict[str, Tuple[ColumnShape, ...]] = {
    "title": (
        ColumnShape("kind_id", 6, 1.0, 1),
        ColumnShape("production_year", 132, 1.0, 1),
    ),
    "cast_info": (ColumnShape("role_id", 11, 4.70, 11),),
    "movie_companies": (
        ColumnShape("company_id", 234997, 2.14, 87),
        ColumnShape("company_type_id", 2, 1.54, 2),
    ),
    "movie_info": (ColumnShape("info_type_id", 71, 4.17, 68),),
    "movie_info_idx": (ColumnShape("info_type_id", 5, 3.00, 4),),
    "movie_keyword": (ColumnShape("keyword_id", 134170, 9.48, 539),),
}
BASE_TABLE = "title"
FIRST_YEAR = 1888  # 132 production years ending in 2019
YEAR_BINS = 16


def gen_shaped_table(
    name: str,
    shapes: Sequence[ColumnShape],
    keys: Sequence[int],
    rng: np.random.Generator,
) -> TableData:
    """
    One table whose distinct values per key follow each column's average
    and maximum, drawn from a Zipf-Mandelbrot fit on [1, max].
    """
    lead = shapes[0]
    if lead.max_dupes > 1:
        alpha = fit_zipf_alpha(lead.avg_dupes, high=lead.max_dupes)
        counts = gen_zipf_mandelbrot(len(keys), alpha, high=lead.max_dupes, seed=rng).tolist()
    else:
        counts = [1] * len(keys)
    rows: List[Row] = []
    for key, count in zip(keys, counts):
        count = min(count, lead.cardinality)
        columns = [distinct_values(rng, lead.cardinality, count)]
        for shape in shapes[1:]:
            if name == BASE_TABLE and shape.name == "production_year":
                columns.append((rng.integers(0, shape.cardinality, size=count) + FIRST_YEAR).tolist())
            else:
                columns.append((rng.integers(0, shape.cardinality, size=count) + 1).tolist())
        rows.extend((key, attributes) for attributes in zip(*columns))
    infos = [
        ColumnInfo(
            shape.name,
            shape.cardinality,
            (FIRST_YEAR, FIRST_YEAR + shape.cardinality - 1) if shape.name == "production_year" else None,
        )
        for shape in shapes
    ]
    return TableData(name, infos, rows, "id" if name == BASE_TABLE else "movie_id")


def gen_star_workload(
    num_keys: int,
    seed: int = 0,
    table_names: Optional[Sequence[str]] = None,
    coverage: float = 0.8,
) -> Tuple[Dict[str, TableData], Dict[Tuple[str, str], Binning]]:
    """
    Synthetic IMDB shaped star schema over num_keys movies and the binning
    of title.production_year. Every fact table covers a random share of the
    movies.
    """
    if not 0 < coverage <= 1:
        raise CCFValueError(f"Coverage must be in (0, 1], got {coverage}")
    rng = np.random.default_rng(seed)
    names = list(table_names or JOB_LIGHT_SHAPES)
    unknown = [name for name in names if name not in JOB_LIGHT_SHAPES]
    if unknown:
        raise WorkloadError(f"Unknown star tables {', '.join(unknown)}")
    all_keys = np.arange(1, num_keys + 1)
    tables: Dict[str, TableData] = {}
    for name in names:
        if name == BASE_TABLE:
            keys = all_keys.tolist()
        else:
            keys = np.sort(rng.choice(all_keys, size=max(1, int(num_keys * coverage)), replace=False)).tolist()
        tables[name] = gen_shaped_table(name, JOB_LIGHT_SHAPES[name], keys, rng)
        logging.debug(f"Generated {tables[name]!r}")
    binnings: Dict[Tuple[str, str], Binning] = {}
    if BASE_TABLE in tables:
        binnings[(BASE_TABLE, "production_year")], _ = bin_column(
            range(FIRST_YEAR, FIRST_YEAR + 132), YEAR_BINS
        )
    return tables, binnings


def random_table_predicate(table: TableData, rng: np.random.Generator) -> TablePredicate:
    """
    An equality on a value that occurs in the table, or for production year
    a random year range.
    """
    column = table.columns[int(rng.integers(len(table.columns)))]
    if column.value_range is not None:
        low, high = sorted(rng.integers(column.value_range[0], column.value_range[1] + 1, size=2).tolist())
        return TablePredicate(ranges={column.name: (low, high)})
    _, attributes = table.rows[int(rng.integers(len(table.rows)))]
    return TablePredicate(equalities={column.name: attributes[table.column_index(column.name)]})


def gen_star_queries(
    tables: Mapping[str, TableData], num_queries: int, seed: int = 0
) -> List[QuerySpec]:
    """
    Random star queries joining the title table with one to four others.
    Every table of a query becomes the base of one QuerySpec, joined with
    the rest.
    """
    if BASE_TABLE not in tables or len(tables) < 2:
        raise WorkloadError("Star queries need the title table and at least one other")
    rng = np.random.default_rng(seed)
    others = sorted(name for name in tables if name != BASE_TABLE)
    specs: List[QuerySpec] = []
    for idx in range(num_queries):
        count = int(rng.integers(1, min(4, len(others)) + 1))
        members = [BASE_TABLE] + rng.choice(others, size=count, replace=False).tolist()
        predicates = {
            name: random_table_predicate(tables[name], rng)
            for name in members
            if rng.random() < 0.8
        }
        for base in members:
            specs.append(
                QuerySpec(
                    base=base,
                    joined=[name for name in members if name != base],
                    predicates=predicates,
                    name=f"q{idx}",
                )
            )
    return specs
