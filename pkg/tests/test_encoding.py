import random

import pytest

from sealview.encoding import (
    EncodingError,
    INT64_MAX,
    INT64_MIN,
    TYPE_INT64,
    TYPE_UTF8,
    decode_cell,
    encode_cell,
)


def test_int64_zero_encoding():
    assert encode_cell(0, TYPE_INT64) == bytes.fromhex("8000000000000000")


def test_int64_encoding_is_order_preserving():
    assert encode_cell(-1, TYPE_INT64) < encode_cell(0, TYPE_INT64) < encode_cell(1, TYPE_INT64)
    rng = random.Random(11)
    values = sorted(rng.randint(INT64_MIN, INT64_MAX) for _ in range(500))
    encoded = [encode_cell(v, TYPE_INT64) for v in values]
    assert encoded == sorted(encoded)


def test_round_trip_random_values():
    rng = random.Random(12)
    for _ in range(10_000):
        v = rng.randint(INT64_MIN, INT64_MAX)
        assert decode_cell(encode_cell(v, TYPE_INT64), TYPE_INT64) == v
    for _ in range(10_000):
        s = "".join(rng.choice("abé中xyz '\"") for _ in range(rng.randrange(0, 12)))
        assert decode_cell(encode_cell(s, TYPE_UTF8), TYPE_UTF8) == s


def test_null_encodings():
    assert encode_cell(None, TYPE_INT64) == b"\x00" * 9
    assert encode_cell(None, TYPE_UTF8) == b"\x00"
    assert decode_cell(b"\x00" * 9, TYPE_INT64) is None
    assert decode_cell(b"\x00", TYPE_UTF8) is None


def test_decode_rejects_malformed():
    with pytest.raises(EncodingError):
        decode_cell(b"\x02abc", TYPE_UTF8)
    with pytest.raises(EncodingError):
        decode_cell(b"\x01\x00\x00", TYPE_INT64)
    with pytest.raises(EncodingError):
        decode_cell(b"", TYPE_UTF8)


def test_encode_rejects_out_of_range():
    with pytest.raises(EncodingError):
        encode_cell(1 << 63, TYPE_INT64)
    with pytest.raises(EncodingError):
        encode_cell("text", TYPE_INT64)
