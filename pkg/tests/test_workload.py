import os
import tempfile
import unittest
import numpy as np
from ccfpython import workload
from ccfpython.exceptions import CCFValueError, WorkloadError


DATA_DIR = os.path.join(os.path.dirname(__file__), "data")

ROWS3_SCHEMA = workload.TableSchema(
    "title",
    "id",
    [
        workload.ColumnInfo("kind_id"),
        workload.ColumnInfo("production_year", value_range=(1880, 2019)),
    ],
)


def load_semijoin_tables():
    title = workload.ingest_csv(
        os.path.join(DATA_DIR, "semijoin_title.csv"),
        workload.TableSchema("title", "id", [workload.ColumnInfo("kind_id")]),
    )
    cast_info = workload.ingest_csv(
        os.path.join(DATA_DIR, "semijoin_cast_info.csv"),
        workload.TableSchema("cast_info", "movie_id", [workload.ColumnInfo("role_id")]),
    )
    return {"title": title, "cast_info": cast_info}


class ZipfMandelbrotTestCases(unittest.TestCase):
    def test_pmf_sums_to_one(self):
        for alpha in (-3.0, 0.0, 1.2, 10.0):
            self.assertAlmostEqual(workload.zipf_mandelbrot_pmf(alpha).sum(), 1.0)

    def test_large_alpha_concentrates_on_one(self):
        self.assertGreater(workload.zipf_mandelbrot_pmf(50.0)[0], 0.999)

    def test_fit_mean(self):
        alpha = workload.fit_zipf_alpha(8)
        self.assertAlmostEqual(workload.zipf_mandelbrot_mean(alpha), 8, places=6)
        samples = workload.gen_zipf_mandelbrot(200000, alpha, seed=1)
        self.assertLess(abs(samples.mean() - 8) / 8, 0.05)
        self.assertTrue(((samples >= 1) & (samples <= 500)).all())

    def test_fit_negative_alpha(self):
        alpha = workload.fit_zipf_alpha(3, high=4)
        self.assertLess(alpha, 0)
        self.assertAlmostEqual(workload.zipf_mandelbrot_mean(alpha, high=4), 3, places=6)

    def test_unreachable_mean(self):
        for mean in (0.5, 600):
            with self.assertRaises(CCFValueError):
                workload.fit_zipf_alpha(mean)


class MultisetTestCases(unittest.TestCase):
    def test_uniform(self):
        rows = workload.gen_multiset_rows(1000, 4, distribution=workload.UNIFORM, seed=3)
        self.assertEqual(len(rows), 1000)
        keys = {key for key, _ in rows}
        self.assertEqual(len(keys), 250)

    def test_zipf_mean(self):
        rows = workload.gen_multiset_rows(20000, 8, seed=5)
        self.assertEqual(len(rows), 20000)
        num_keys = len({key for key, _ in rows})
        self.assertLess(abs(20000 / num_keys - 8) / 8, 0.2)

    def test_rows_distinct(self):
        rows = workload.gen_multiset_rows(5000, 6, num_columns=3, seed=2)
        self.assertEqual(len(set(rows)), len(rows))
        self.assertTrue(all(len(attributes) == 3 for _, attributes in rows))

    def test_unique_keys(self):
        rows = workload.gen_multiset_rows(500, 1, seed=2)
        self.assertEqual(len({key for key, _ in rows}), 500)

    def test_deterministic(self):
        self.assertEqual(
            workload.gen_multiset_rows(2000, 4, seed=9), workload.gen_multiset_rows(2000, 4, seed=9)
        )
        self.assertNotEqual(
            workload.gen_multiset_rows(2000, 4, seed=9), workload.gen_multiset_rows(2000, 4, seed=10)
        )

    def test_unknown_distribution(self):
        with self.assertRaises(CCFValueError):
            workload.dupe_counts(10, 2, "normal", np.random.default_rng(0))


class CsvTestCases(unittest.TestCase):
    def test_ingest(self):
        table = workload.ingest_csv(os.path.join(DATA_DIR, "rows3.csv"), ROWS3_SCHEMA)
        self.assertEqual(table.rows, [(1, (1, 1999)), (2, (7, 2004)), (3, (1, 1931))])
        self.assertEqual(table.column_names, ["kind_id", "production_year"])
        self.assertEqual(table.keys(), {1, 2, 3})

    def test_missing_key(self):
        with self.assertRaises(WorkloadError) as ctx:
            workload.ingest_csv(os.path.join(DATA_DIR, "rows_missing_key.csv"), ROWS3_SCHEMA)
        self.assertIn(":3:", str(ctx.exception))

    def test_missing_header_column(self):
        schema = workload.TableSchema("title", "id", [workload.ColumnInfo("title")])
        with self.assertRaises(WorkloadError):
            workload.ingest_csv(os.path.join(DATA_DIR, "rows3.csv"), schema)

    def test_export_round_trip(self):
        table = workload.ingest_csv(os.path.join(DATA_DIR, "rows3.csv"), ROWS3_SCHEMA)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "title.tsv")
            workload.export_csv(table, path, delimiter="\t")
            schema = workload.TableSchema("title", "id", table.columns, delimiter="\t")
            self.assertEqual(workload.ingest_csv(path, schema).rows, table.rows)


class BinningTestCases(unittest.TestCase):
    def setUp(self):
        self.binning, self.binned = workload.bin_column(range(1888, 2020), 16)

    def test_year_bins(self):
        self.assertEqual(self.binning.num_bins, 16)
        sizes = np.bincount(self.binned)
        self.assertEqual(sizes.sum(), 132)
        self.assertEqual(set(sizes.tolist()), {8, 9})

    def test_single_bin(self):
        binning, binned = workload.bin_column(range(10), 1)
        self.assertEqual(set(binned), {0})
        self.assertEqual(binning.range_to_bins(3, 5), frozenset([0]))

    def test_range_to_bins(self):
        self.assertEqual(self.binning.range_to_bins(1888, 1889), frozenset([0]))
        self.assertEqual(self.binning.range_to_bins(None, None), frozenset(range(16)))
        self.assertEqual(self.binning.range_to_bins(2000, 1990), frozenset())
        self.assertEqual(self.binning.range_to_bins(1700, 1800), frozenset())

    def test_range_superset(self):
        low, high = 1931, 1977
        bins = self.binning.range_to_bins(low, high)
        for year in range(low, high + 1):
            self.assertIn(self.binning.bin_of(year), bins)

    def test_no_bins(self):
        with self.assertRaises(CCFValueError):
            workload.bin_column([1, 2], 0)


class SemijoinTestCases(unittest.TestCase):
    def setUp(self):
        self.tables = load_semijoin_tables()
        self.query = workload.QuerySpec(
            "title",
            ["cast_info"],
            {
                "title": workload.TablePredicate({"kind_id": 1}),
                "cast_info": workload.TablePredicate({"role_id": 3}),
            },
            name="fixture",
        )

    def test_exact_semijoin(self):
        count, rows = workload.exact_semijoin(self.query, self.tables)
        self.assertEqual(count, 2)
        self.assertEqual(sorted(key for key, _ in rows), [1, 4])
        self.assertEqual(len(workload.base_rows(self.query, self.tables)), 5)

    def test_no_joins(self):
        query = workload.QuerySpec("title", [], {"title": workload.TablePredicate({"kind_id": 1})})
        count, _ = workload.exact_semijoin(query, self.tables)
        self.assertEqual(count, 5)

    def test_no_shared_keys(self):
        tables = dict(self.tables)
        tables["cast_info"] = workload.TableData(
            "cast_info", [workload.ColumnInfo("role_id")], [(100, (3,))], "movie_id"
        )
        count, _ = workload.exact_semijoin(self.query, tables)
        self.assertEqual(count, 0)

    def test_exact_filter(self):
        filters = {"cast_info": workload.ExactFilter(self.tables["cast_info"].rows)}
        report = workload.evaluate_query(self.query, self.tables, filters)
        self.assertEqual(report.m_filtered, report.m_semijoin)
        self.assertEqual(report.m_keyonly, 3)
        self.assertAlmostEqual(report.rf_exact, 0.4)
        self.assertAlmostEqual(report.rf_keyonly, 0.6)

    def test_empty_base(self):
        query = workload.QuerySpec(
            "title", ["cast_info"], {"title": workload.TablePredicate({"kind_id": 9})}
        )
        filters = {"cast_info": workload.ExactFilter(self.tables["cast_info"].rows)}
        self.assertIsNone(workload.evaluate_query(query, self.tables, filters))

    def test_unknown_table(self):
        query = workload.QuerySpec("title", ["movie_keyword"])
        with self.assertRaises(WorkloadError):
            workload.exact_semijoin(query, self.tables)

    def test_query_spec_limits(self):
        with self.assertRaises(WorkloadError):
            workload.QuerySpec("title", ["a", "b", "c", "d", "e"])
        with self.assertRaises(WorkloadError):
            workload.QuerySpec("title", ["a", "a"])

    def test_reduction_factor(self):
        self.assertEqual(workload.reduction_factor(3, 4), 0.75)
        self.assertEqual(workload.reduction_factor(4, 4), 1.0)
        self.assertEqual(workload.reduction_factor(0, 4), 0.0)
        with self.assertRaises(CCFValueError):
            workload.reduction_factor(0, 0)

    def test_report_order(self):
        with self.assertRaises(WorkloadError):
            workload.RfReport("q", "title", 3, 2, 3, 4, 5, 0.6, 0.4, 0.6, 0.8, 0.0)


class StarWorkloadTestCases(unittest.TestCase):
    def setUp(self):
        self.tables, self.binnings = workload.gen_star_workload(400, seed=3)
        self.queries = workload.gen_star_queries(self.tables, 6, seed=3)

    def test_shapes(self):
        self.assertEqual(set(self.tables), set(workload.JOB_LIGHT_SHAPES))
        title = self.tables["title"]
        self.assertEqual(title.keys(), set(range(1, 401)))
        years = [attributes[1] for _, attributes in title.rows]
        self.assertTrue(all(1888 <= year <= 2019 for year in years))
        self.assertEqual(self.binnings[("title", "production_year")].num_bins, 16)
        cast_info = self.tables["cast_info"]
        self.assertEqual(len(cast_info.keys()), 320)

    def test_every_member_is_base(self):
        by_name = {}
        for query in self.queries:
            by_name.setdefault(query.name, []).append(query)
        self.assertEqual(len(by_name), 6)
        for specs in by_name.values():
            self.assertEqual(len(specs), len(specs[0].tables))
            self.assertEqual({spec.base for spec in specs}, set(specs[0].tables))

    def test_matches_nested_loop(self):
        tables, _ = workload.gen_star_workload(
            60, seed=4, table_names=["title", "cast_info", "movie_info_idx"]
        )
        for query in workload.gen_star_queries(tables, 10, seed=4):
            count, _ = workload.exact_semijoin(query, tables)
            expected = 0
            for key, _ in workload.base_rows(query, tables):
                if all(
                    any(
                        other == key and query.predicate_for(name).matches(tables[name], attributes)
                        for other, attributes in tables[name].rows
                    )
                    for name in query.joined
                ):
                    expected += 1
            self.assertEqual(count, expected)

    def test_binned_oracle_ordering(self):
        filters = {
            name: workload.ExactFilter(workload.filter_rows(table, self.binnings))
            for name, table in self.tables.items()
        }
        for query in self.queries:
            report = workload.evaluate_query(query, self.tables, filters, self.binnings)
            if report is None:
                continue
            self.assertEqual(report.m_filtered, report.m_binned)
            self.assertGreaterEqual(report.rf_binned, report.rf_exact)

    def test_unknown_star_table(self):
        with self.assertRaises(WorkloadError):
            workload.gen_star_workload(10, table_names=["title", "aka_name"])
