import datetime
import math
import struct
from typing import Union


Value = Union[int, str, bytes]


def cur_datetime(us_precision: bool = False) -> str:
    fmt = "%Y-%m-%dT%H:%M:%S" + (".%f" if us_precision else "") + "Z"
    return datetime.datetime.now(datetime.timezone.utc).strftime(fmt)


def is_power_of_two(num: int) -> bool:
    return num > 0 and (num & (num - 1)) == 0


def next_power_of_two(num: Union[int, float]) -> int:
    """
    Smallest power of two greater than or equal to num (and at least 1).

    >>> next_power_of_two(1000)
    1024
    """
    if num <= 1:
        return 1
    return 1 << math.ceil(math.log2(num))


def ceil_log2(num: int) -> int:
    return 0 if num <= 1 else (num - 1).bit_length()


def value_to_bytes(value: Value) -> bytes:
    """
    Canonical byte encoding for keys and attribute values.

    Integers are encoded as 8 byte big endian two's complement when they fit,
    otherwise as their decimal string. The leading tag byte keeps the integer
    7 and the string "7" apart.
    """
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        if -(2 ** 63) <= value < 2 ** 64:
            fmt = ">q" if value < 2 ** 63 else ">Q"
            return b"i" + struct.pack(fmt, value)
        return b"s" + str(value).encode()
    if isinstance(value, str):
        return b"s" + value.encode()
    if isinstance(value, (bytes, bytearray, memoryview)):
        return b"b" + bytes(value)
    raise TypeError(f"Unsupported key or attribute type: {type(value).__name__}")
