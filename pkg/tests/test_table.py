import copy
import random
import unittest
from bitarray import bitarray
from ccfpython import ccf
from ccfpython import table
from ccfpython.exceptions import CCFValueError, MalformedFilterError
from ccfpython.hashing import alternate_bucket


def moving_fingerprint(num_buckets: int, bucket: int = 0) -> int:
    return next(f for f in range(1, 4096) if alternate_bucket(bucket, f, num_buckets) != bucket)


class TableTestCases(unittest.TestCase):
    def setUp(self):
        self.table = table.Table(16, 4)
        self.rng = random.Random(0)

    def test_empty_bucket_scan(self):
        self.assertEqual(self.table.bucket_scan(3), ())
        self.assertEqual(self.table.occupied, 0)

    def test_add_one(self):
        entry = table.Entry(9, (1,))
        self.table.add(3, entry)
        self.assertEqual(self.table.bucket_scan(3), (entry,))
        self.assertEqual(self.table.occupied, 1)
        self.assertEqual(self.table.load_factor, 1 / 64)

    def test_add_rejects_empty_fingerprint(self):
        with self.assertRaises(CCFValueError):
            self.table.add(0, table.Entry(0, ()))

    def test_add_rejects_full_bucket(self):
        for fingerprint in range(1, 5):
            self.table.add(0, table.Entry(fingerprint, ()))
        self.assertTrue(self.table.is_full(0))
        with self.assertRaises(CCFValueError):
            self.table.add(0, table.Entry(5, ()))

    def test_count_fingerprint_in_pair(self):
        alt = alternate_bucket(2, 11, 16)
        self.assertEqual(self.table.count_fingerprint(2, alt, 11), 0)
        for value in range(3):
            self.table.add(2 if value % 2 else alt, table.Entry(11, (value,)))
        self.assertEqual(self.table.count_fingerprint(2, alt, 11), 3)
        self.assertTrue(self.table.has_entry(alt, 2, 11, (1,)))
        self.assertFalse(self.table.has_entry(2, alt, 11, (7,)))

    def test_kick_insert_free_slot(self):
        outcome = self.table.kick_insert(5, table.Entry(3, ()), 500, self.rng)
        self.assertEqual(outcome.status, table.SUCCESS)
        self.assertEqual(outcome.kicks_used, 0)
        self.assertEqual(self.table.occupied, 1)

    def test_kick_insert_moves_victim_to_alternate(self):
        single = table.Table(1024, 1)
        fingerprint = moving_fingerprint(1024)
        resident = table.Entry(fingerprint, (1,))
        single.add(0, resident)
        incoming = table.Entry(fingerprint, (2,))
        outcome = single.kick_insert(0, incoming, 500, self.rng)
        alt = alternate_bucket(0, fingerprint, 1024)
        self.assertEqual(outcome.status, table.SUCCESS)
        self.assertEqual(outcome.kicks_used, 1)
        self.assertEqual(outcome.moves, [(resident, 0, alt)])
        self.assertIs(single.buckets[0][0], incoming)
        self.assertIs(single.buckets[alt][0], resident)

    def test_kick_insert_terminates_and_rolls_back(self):
        full = table.Table(1, 2)
        full.add(0, table.Entry(1, (1,)))
        full.add(0, table.Entry(2, (2,)))
        before = copy.deepcopy(full.buckets)
        incoming = table.Entry(3, (3,))
        outcome = full.kick_insert(0, incoming, 5, self.rng)
        self.assertEqual(outcome.status, table.TERMINATED)
        self.assertEqual(outcome.kicks_used, 5)
        self.assertIs(outcome.homeless, incoming)
        self.assertEqual(full.buckets, before)
        self.assertEqual(full.occupied, 2)

    def test_occupied_matches_scan(self):
        rng = random.Random(4)
        for _ in range(60):
            fingerprint = rng.randrange(1, 4096)
            self.table.kick_insert(rng.randrange(16), table.Entry(fingerprint, ()), 50, rng)
            self.assertEqual(self.table.occupied, self.table.scan_count())
            self.assertTrue(all(len(b) <= 4 for b in self.table.buckets))


class TableCodecTestCases(unittest.TestCase):
    def setUp(self):
        self.table = table.Table(8, 4)
        bits = bitarray("1011001110001111")
        segment = table.GroupSegment(0, 2, bitarray("1100101"))
        self.table.add(1, table.Entry(17, (3, 250)))
        self.table.add(2, table.Entry(18, bits))
        self.table.add(5, table.Entry(19, segment, converted=True))
        self.table.add(5, table.Entry(19, segment, converted=True))

    def test_round_trip(self):
        decoded, read_pos = table.Table.from_bytes(self.table.asbytes)
        self.assertEqual(decoded, self.table)
        self.assertEqual(read_pos, len(self.table.asbytes))

    def test_group_segment_shared_after_decode(self):
        decoded, _ = table.Table.from_bytes(self.table.asbytes)
        first, second = decoded.buckets[5]
        self.assertIs(first.payload, second.payload)
        self.assertTrue(first.converted)

    def test_bad_magic(self):
        data = b"XXXX" + self.table.asbytes[4:]
        with self.assertRaises(MalformedFilterError):
            table.Table.from_bytes(data)

    def test_bad_version(self):
        data = bytearray(self.table.asbytes)
        data[4] = 99
        with self.assertRaises(MalformedFilterError):
            table.Table.from_bytes(bytes(data))

    def test_truncated(self):
        with self.assertRaises(MalformedFilterError):
            table.Table.from_bytes(self.table.asbytes[:-3])


class SizeTestCases(unittest.TestCase):
    def test_vector_size(self):
        config = ccf.FilterConfig(variant="CHAINED", num_buckets=1024, bucket_size=4, num_columns=2)
        self.assertEqual(table.size_bits(config), 1024 * 4 * 28)

    def test_bloom_size(self):
        config = ccf.FilterConfig(variant="BLOOM", num_buckets=1024, bucket_size=4, bloom_bits=16)
        self.assertEqual(table.size_bits(config), 1024 * 4 * (12 + 16))

    def test_mixed_flag_bit(self):
        config = ccf.FilterConfig(variant="MIXED", num_buckets=1024, bucket_size=4, num_columns=2)
        self.assertEqual(table.size_bits(config), 1024 * 4 * 29)
