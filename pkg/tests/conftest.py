import random

import pytest

from sealview.encoding import TYPE_INT64, TYPE_UTF8
from sealview.model import Column, PlainPartition, Schema


@pytest.fixture
def boats_schema():
    return Schema(
        (
            Column("bid", TYPE_INT64),
            Column("bname", TYPE_UTF8),
            Column("color", TYPE_UTF8),
        )
    )


@pytest.fixture
def boats_rows():
    return [
        [101, "Interlake", "blue"],
        [102, "Interlake", "red"],
        [103, "Clipper", "green"],
        [104, "Marine", "red"],
    ]


@pytest.fixture
def boats_partition(boats_rows):
    return PlainPartition(1, [list(r) for r in boats_rows])


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
