"""sealview: cryptographic access-control views for partitioned tables.

Data owners encrypt tables and instantiate access-control view families;
data scientists receive view keys that decrypt exactly the rows and
columns their views describe.
"""

__version__ = "0.1.0"

from .backend import (
    FamilyParams,
    ViewKeySet,
    add_family,
    encrypt_partition,
    generate_view_keys,
    random_key,
    reveal_partition,
)
from .manifest import FamilyRecord, TableManifest
from .model import Column, EncryptedPartition, PlainPartition, Schema
from .planner import CanonicalFamily, CanonicalView, plan_family, plan_view

__all__ = [
    "CanonicalFamily",
    "CanonicalView",
    "Column",
    "EncryptedPartition",
    "FamilyParams",
    "FamilyRecord",
    "PlainPartition",
    "Schema",
    "TableManifest",
    "ViewKeySet",
    "add_family",
    "encrypt_partition",
    "generate_view_keys",
    "plan_family",
    "plan_view",
    "random_key",
    "reveal_partition",
    "__version__",
]
