import math
import random
import unittest
from ccfpython import sketch
from ccfpython.analysis import predict_fpr_bloom
from ccfpython.exceptions import CCFValueError
from ccfpython.hashing import digest_attribute


class PredicateTestCases(unittest.TestCase):
    def test_from_dict_normalizes(self):
        pred = sketch.Predicate.from_dict({2: "x", 0: [1, 2]})
        self.assertEqual(pred.columns, (0, 2))
        self.assertEqual(pred.clauses[0], (0, frozenset([1, 2])))
        self.assertEqual(pred.clauses[1], (2, frozenset(["x"])))

    def test_empty_clause_rejected(self):
        with self.assertRaises(CCFValueError):
            sketch.Predicate.from_dict({0: []})

    def test_equality(self):
        pred = sketch.Predicate.equality((5, "a"))
        self.assertEqual(pred, sketch.Predicate.from_dict({0: 5, 1: "a"}))

    def test_key_only(self):
        self.assertTrue(sketch.KEY_ONLY.is_empty)
        self.assertFalse(sketch.Predicate.equality((1,)).is_empty)


class VectorTestCases(unittest.TestCase):
    def setUp(self):
        self.payload = (3, digest_attribute(1, 1999, 8, 0))

    def test_empty_predicate_matches(self):
        self.assertTrue(sketch.vector_matches(self.payload, sketch.KEY_ONLY, 8, 0))

    def test_own_attributes_match(self):
        pred = sketch.Predicate.equality((3, 1999))
        self.assertTrue(sketch.vector_matches(self.payload, pred, 8, 0))

    def test_mismatch(self):
        self.assertFalse(
            sketch.vector_matches(self.payload, sketch.Predicate.from_dict({0: 4}), 8, 0)
        )

    def test_in_list(self):
        self.assertTrue(
            sketch.vector_matches(self.payload, sketch.Predicate.from_dict({0: [4, 3]}), 8, 0)
        )

    def test_column_out_of_range(self):
        with self.assertRaises(CCFValueError):
            sketch.vector_matches(self.payload, sketch.Predicate.from_dict({2: 1}), 8, 0)

    def test_false_match_rate(self):
        # One non-matching clause passes with probability about 2^-8
        rng = random.Random(1)
        trials = 20000
        hits = 0
        for _ in range(trials):
            stored = rng.randrange(1 << 40, 1 << 50)
            payload = (digest_attribute(0, stored, 8, 0),)
            absent = stored + 1 + rng.randrange(1 << 20)
            hits += sketch.vector_matches(payload, sketch.Predicate.from_dict({0: absent}), 8, 0)
        self.assertLess(abs(hits / trials - 2 ** -8), 5 * (2 ** -8 / trials) ** 0.5)


class BloomTestCases(unittest.TestCase):
    def setUp(self):
        self.bits = sketch.new_bits(16)

    def test_insert_idempotent(self):
        sketch.bloom_insert(self.bits, 0, "x", 2, 0)
        once = self.bits.copy()
        sketch.bloom_insert(self.bits, 0, "x", 2, 0)
        self.assertEqual(self.bits, once)

    def test_popcount_bounded(self):
        sketch.bloom_insert(self.bits, 0, 42, 3, 0)
        self.assertLessEqual(self.bits.count(1), 3)
        self.assertGreaterEqual(self.bits.count(1), 1)

    def test_no_false_negatives(self):
        for value in range(5):
            sketch.bloom_insert(self.bits, 1, value, 2, 0)
        for value in range(5):
            self.assertTrue(sketch.bloom_contains(self.bits, 1, value, 2, 0))

    def test_empty_bits_reject(self):
        self.assertFalse(sketch.bloom_matches(self.bits, sketch.Predicate.from_dict({0: 1}), 2, 0))
        self.assertTrue(sketch.bloom_matches(self.bits, sketch.KEY_ONLY, 2, 0))

    def test_co_occurrence_blindness(self):
        bits = sketch.new_bits(64)
        for row in ((1, 10), (2, 20)):
            for column, value in enumerate(row):
                sketch.bloom_insert(bits, column, value, 2, 0)
        self.assertTrue(sketch.bloom_matches(bits, sketch.Predicate.equality((1, 20)), 2, 0))


class GroupTestCases(unittest.TestCase):
    def setUp(self):
        # |κ| = 12, two 8 bit attributes and the flag bit
        self.layout = sketch.GroupLayout(
            fingerprint_bits=12, entry_bits=29, max_dupes=3, num_columns=2, vector_bits=16
        )

    def test_total_bits(self):
        self.assertEqual(self.layout.header_bits, 14)
        self.assertEqual(self.layout.total_bits, 3 * 29 - 2 * (12 + 2))

    def test_num_hashes(self):
        self.assertEqual(self.layout.num_hashes, 4)

    def test_num_hashes_at_least_one(self):
        layout = sketch.GroupLayout(16, 21, 1, 1, 2)
        self.assertEqual(layout.num_hashes, 1)

    def test_split(self):
        bits = sketch.new_bits(self.layout.total_bits)
        low, high = self.layout.split(bits, 1, 2)
        self.assertEqual(len(low), 29 - 14)
        self.assertEqual(len(low) + len(high), self.layout.total_bits)
        self.assertEqual(len(self.layout.split(bits, 3, 0)[0]), self.layout.total_bits)
        self.assertEqual(len(self.layout.split(bits, 0, 3)[0]), 0)

    def test_conversion_keeps_rows(self):
        vectors = [(1, 2), (3, 4), (5, 6)]
        group = sketch.convert_to_group(
            77, [(77, v) for v in vectors], (7, 8), 2, 1, self.layout, 0
        )
        self.assertEqual(len(group.bits), self.layout.total_bits)
        for attributes in vectors + [(7, 8)]:
            self.assertTrue(
                sketch.group_matches(group, sketch.Predicate.equality(attributes), 8, 0)
            )
        self.assertTrue(sketch.group_matches(group, sketch.KEY_ONLY, 8, 0))

    def test_conversion_needs_shared_fingerprint(self):
        with self.assertRaises(CCFValueError):
            sketch.convert_to_group(
                77, [(77, (1, 1)), (78, (2, 2)), (77, (3, 3))], (4, 4), 3, 0, self.layout, 0
            )

    def test_conversion_needs_d_entries(self):
        with self.assertRaises(CCFValueError):
            sketch.convert_to_group(77, [(77, (1, 1))], (4, 4), 1, 0, self.layout, 0)


class SketchStatisticsTestCases(unittest.TestCase):
    def test_group_fpr(self):
        layout = sketch.GroupLayout(
            fingerprint_bits=12, entry_bits=29, max_dupes=3, num_columns=2, vector_bits=16
        )
        rng = random.Random(4)
        trials = 10000
        hits = 0
        for _ in range(trials):
            # Values below 256 are their own attribute fingerprints
            first = rng.sample(range(256), 5)
            second = rng.sample(range(256), 4)
            vectors = list(zip(first[:4], second))
            group = sketch.convert_to_group(
                9, [(9, v) for v in vectors[:3]], vectors[3], 2, 1, layout, 0
            )
            hits += sketch.group_matches(group, sketch.Predicate.from_dict({0: first[4]}), 8, 0)
        inserted = 4 * 2
        expected = (
            1 - math.exp(-layout.num_hashes * inserted / layout.total_bits)
        ) ** layout.num_hashes
        # Small filters run above the approximation
        self.assertGreater(hits / trials, 0.7 * expected)
        self.assertLess(hits / trials, 1.6 * expected)

    def test_small_bloom_fpr_underestimated(self):
        num_bits, num_hashes, num_values, trials = 8, 2, 3, 20000
        rng = random.Random(8)
        hits = 0
        for _ in range(trials):
            values = rng.sample(range(1 << 40), num_values + 1)
            bits = sketch.new_bits(num_bits)
            for value in values[:-1]:
                sketch.bloom_insert(bits, 0, value, num_hashes, 0)
            hits += sketch.bloom_contains(bits, 0, values[-1], num_hashes, 0)
        predicted = predict_fpr_bloom(num_bits, num_hashes, num_values, 1)
        self.assertGreater(hits / trials, predicted)
