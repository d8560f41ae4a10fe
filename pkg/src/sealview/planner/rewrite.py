"""AST rewriting passes that turn parsed SQL into canonical form.

Pipeline order: push NOTs to the leaves, type the leaves against the
schema (turning inequalities into ranges over the order-preserving
unsigned domain), consolidate same-field siblings, rewrite ranges into
aligned-subtree covers, distribute to disjunctive normal form, and merge
each conjunction into a single predicate via secure concatenation of its
atoms (value sets combine as cross products).

The same passes run for families (structure only, wildcards tracked) and
for views (concrete values); a view's predicates are then aligned to the
family's by atom identity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from ..encoding import TYPE_INT64, TYPE_UTF8, encode_cell, int64_to_unsigned
from ..primitives import hash_string
from .canonical import (
    ABSENT,
    ATOM_FIELD,
    ATOM_HASH_BITS,
    ATOM_TOP_BITS,
    Atom,
    PRESENT,
    make_value,
    prefix_value,
)
from .errors import PlannerError
from .sql import And, Leaf, Not, Or, Wildcard

INT_BITS = 64
HASH_BITS = 256

KIND_EXACT_INT = "exact_int"
KIND_RANGE_INT = "range_int"
KIND_EXACT_STR = "exact_str"
KIND_HASH_STR = "hash_str"

_FLIP = {"=": "!=", "!=": "=", "<": ">=", ">=": "<", ">": "<=", "<=": ">", "in": "not in", "not in": "in"}


@dataclass(frozen=True)
class RangeSet:
    """Disjoint, sorted, inclusive intervals over [0, 2^total_bits)."""

    total_bits: int
    intervals: tuple[tuple[int, int], ...]

    @classmethod
    def from_intervals(cls, total_bits: int, raw) -> "RangeSet":
        top = (1 << total_bits) - 1
        spans = sorted(
            (max(lo, 0), min(hi, top)) for lo, hi in raw if lo <= hi and lo <= top and hi >= 0
        )
        merged: list[tuple[int, int]] = []
        for lo, hi in spans:
            if merged and lo <= merged[-1][1] + 1:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        return cls(total_bits, tuple(merged))

    @classmethod
    def full(cls, total_bits: int) -> "RangeSet":
        return cls(total_bits, ((0, (1 << total_bits) - 1),))

    @classmethod
    def empty(cls, total_bits: int) -> "RangeSet":
        return cls(total_bits, ())

    @classmethod
    def excluding_points(cls, total_bits: int, points) -> "RangeSet":
        """The full domain minus the given point values."""
        top = (1 << total_bits) - 1
        spans = []
        last = 0
        for p in sorted(set(points)):
            if p > last:
                spans.append((last, p - 1))
            last = p + 1
        if last <= top:
            spans.append((last, top))
        return cls.from_intervals(total_bits, spans)

    def union(self, other: "RangeSet") -> "RangeSet":
        return RangeSet.from_intervals(self.total_bits, self.intervals + other.intervals)

    def intersect(self, other: "RangeSet") -> "RangeSet":
        out = []
        for alo, ahi in self.intervals:
            for blo, bhi in other.intervals:
                lo, hi = max(alo, blo), min(ahi, bhi)
                if lo <= hi:
                    out.append((lo, hi))
        return RangeSet.from_intervals(self.total_bits, out)

    def is_empty(self) -> bool:
        return not self.intervals

    def cover(self, step_bits: int) -> dict[int, list[int]]:
        """Minimal aligned-subtree cover, as prefix values per level.

        Levels are counted in bits of prefix (0 = whole domain, total =
        a single value); each interval contributes at most 2*(2^b - 1)
        values per level. Greedy largest-aligned-block emission yields
        the canonical minimal cover.
        """
        if self.total_bits % step_bits:
            raise PlannerError(
                f"branching bits {step_bits} must divide the {self.total_bits}-bit domain"
            )
        levels: dict[int, list[int]] = {}
        for lo, hi in self.intervals:
            cur = lo
            while cur <= hi:
                # Block size is bounded by cur's alignment and the room left.
                align = self.total_bits if cur == 0 else (cur & -cur).bit_length() - 1
                room = (hi - cur + 1).bit_length() - 1
                width = min(align, room, self.total_bits) // step_bits * step_bits
                levels.setdefault(self.total_bits - width, []).append(cur >> width)
                cur += 1 << width
        return levels


@dataclass
class TypedLeaf:
    """A predicate leaf resolved against the schema.

    For views, `values` holds encoded value bytes (exact kinds) or a
    RangeSet (ranged kinds); for families it is None and only the
    structure matters.
    """

    column: int
    kind: str
    values: object
    wildcards: tuple[str, ...]


@dataclass
class InLeaf:
    """A single-atom membership test after range decomposition."""

    atom: Atom
    values: tuple[bytes, ...] | None
    wildcards: tuple[str, ...]


class FalseLeaf:
    """A predicate no row can satisfy (empty range)."""


FALSE = FalseLeaf()


def push_not_down(node):
    """Apply De Morgan's laws; the output tree has no NOT nodes."""
    if isinstance(node, Leaf):
        return node
    if isinstance(node, Not):
        return _negate(node.child)
    children = [push_not_down(c) for c in node.children]
    return type(node)(children)


def _negate(node):
    if isinstance(node, Leaf):
        return Leaf(node.column, _FLIP[node.op], node.rhs)
    if isinstance(node, Not):
        return push_not_down(node.child)
    flipped = Or if isinstance(node, And) else And
    return flipped([_negate(c) for c in node.children])


def _int_point(value) -> int:
    return int64_to_unsigned(value)


def _hash_point(value) -> int:
    return hash_string(encode_cell(value, TYPE_UTF8))


def _exact_int_value(value) -> bytes:
    if value is None:
        return ABSENT
    return PRESENT + int64_to_unsigned(value).to_bytes(8, "big")


def _check_literal(value, column_type: str, column_name: str):
    if value is None:
        return
    if column_type == TYPE_INT64 and not isinstance(value, int):
        raise PlannerError(f"column {column_name!r} is Int64; got {value!r}")
    if column_type == TYPE_UTF8 and not isinstance(value, str):
        raise PlannerError(f"column {column_name!r} is Utf8; got {value!r}")


def to_typed(node, schema, valued: bool):
    """Resolve leaves against the schema; inequalities become ranges."""
    if isinstance(node, (And, Or)):
        return type(node)([to_typed(c, schema, valued) for c in node.children])
    assert isinstance(node, Leaf)
    col = schema.index_of(node.column)
    ctype = schema.columns[col].type
    wildcards = (node.rhs.name,) if isinstance(node.rhs, Wildcard) else ()
    literals = None
    if valued:
        if isinstance(node.rhs, Wildcard):
            raise PlannerError("views bind literal values, not wildcards")
        literals = node.rhs
        for v in literals:
            _check_literal(v, ctype, node.column)

    if ctype == TYPE_UTF8:
        if node.op in ("=", "in"):
            values = tuple(encode_cell(v, ctype) for v in literals) if valued else None
            return TypedLeaf(col, KIND_EXACT_STR, values, wildcards)
        if node.op in ("!=", "not in"):
            rs = None
            if valued:
                points = [_hash_point(v) for v in literals if v is not None]
                rs = RangeSet.excluding_points(HASH_BITS, points)
            return TypedLeaf(col, KIND_HASH_STR, rs, wildcards)
        raise PlannerError(f"string column {node.column!r} supports only = and != forms")

    if node.op in ("=", "in"):
        values = tuple(_exact_int_value(v) for v in literals) if valued else None
        return TypedLeaf(col, KIND_EXACT_INT, values, wildcards)

    rs = None
    if valued:
        top = (1 << INT_BITS) - 1
        if node.op in ("!=", "not in"):
            points = []
            for v in literals:
                if v is not None:
                    points.append(_int_point(v))
            rs = RangeSet.excluding_points(INT_BITS, points)
        else:
            (v,) = literals
            if v is None:
                raise PlannerError("NULL cannot be ordered against")
            u = _int_point(v)
            spans = {
                "<": (0, u - 1),
                "<=": (0, u),
                ">": (u + 1, top),
                ">=": (u, top),
            }[node.op]
            rs = RangeSet.from_intervals(INT_BITS, [spans])
    return TypedLeaf(col, KIND_RANGE_INT, rs, wildcards)


def _merge_wildcards(groups) -> tuple[str, ...]:
    seen = []
    for names in groups:
        for n in names:
            if n not in seen:
                seen.append(n)
    return tuple(seen)


def _dedup(values) -> tuple:
    seen = set()
    out = []
    for v in values:
        if v not in seen:
            seen.add(v)
            out.append(v)
    return tuple(out)


def consolidate(node, valued: bool):
    """Merge same-field siblings: OR unions values, AND intersects ranges."""
    if isinstance(node, TypedLeaf):
        return _collapse_leaf(node, valued)
    if isinstance(node, FalseLeaf):
        return node
    children = []
    for child in node.children:
        child = consolidate(child, valued)
        if isinstance(child, type(node)):
            children.extend(child.children)
        else:
            children.append(child)

    if isinstance(node, And):
        if any(isinstance(c, FalseLeaf) for c in children):
            return FALSE
        children = _merge_and_ranges(children, valued)
        if any(isinstance(c, FalseLeaf) for c in children):
            return FALSE
    else:
        children = [c for c in children if not isinstance(c, FalseLeaf)]
        children = _merge_or_siblings(children, valued)
        if not children:
            return FALSE
    if len(children) == 1:
        return children[0]
    return type(node)(children)


def _collapse_leaf(leaf: TypedLeaf, valued: bool):
    if not valued:
        return leaf
    if leaf.kind in (KIND_RANGE_INT, KIND_HASH_STR):
        if leaf.values.is_empty():
            return FALSE
    elif not leaf.values:
        return FALSE
    return leaf


def _merge_or_siblings(children, valued):
    out = []
    index: dict[tuple[int, str], int] = {}
    for child in children:
        if not isinstance(child, TypedLeaf):
            out.append(child)
            continue
        key = (child.column, child.kind)
        if key not in index:
            index[key] = len(out)
            out.append(child)
            continue
        prev = out[index[key]]
        wildcards = _merge_wildcards([prev.wildcards, child.wildcards])
        if not valued:
            values = None
        elif child.kind in (KIND_RANGE_INT, KIND_HASH_STR):
            values = prev.values.union(child.values)
        else:
            values = _dedup(prev.values + child.values)
        out[index[key]] = TypedLeaf(child.column, child.kind, values, wildcards)
    return [_collapse_leaf(c, valued) if isinstance(c, TypedLeaf) else c for c in out]


def _merge_and_ranges(children, valued):
    out = []
    index: dict[tuple[int, str], int] = {}
    for child in children:
        if not (isinstance(child, TypedLeaf) and child.kind in (KIND_RANGE_INT, KIND_HASH_STR)):
            out.append(child)
            continue
        key = (child.column, child.kind)
        if key not in index:
            index[key] = len(out)
            out.append(child)
            continue
        prev = out[index[key]]
        wildcards = _merge_wildcards([prev.wildcards, child.wildcards])
        values = prev.values.intersect(child.values) if valued else None
        out[index[key]] = TypedLeaf(child.column, child.kind, values, wildcards)
    return [_collapse_leaf(c, valued) if isinstance(c, TypedLeaf) else c for c in out]


def _level_steps(total_bits: int, step: int) -> list[int]:
    return list(range(0, total_bits + 1, step))


def ranges_to_in(node, branching_bits: int, valued: bool):
    """Rewrite ranged leaves into per-level membership tests."""
    if isinstance(node, (FalseLeaf, InLeaf)):
        return node
    if isinstance(node, (And, Or)):
        children = []
        for child in node.children:
            child = ranges_to_in(child, branching_bits, valued)
            if isinstance(child, type(node)):
                children.extend(child.children)
            else:
                children.append(child)
        return type(node)(children) if len(children) != 1 else children[0]
    assert isinstance(node, TypedLeaf)
    if node.kind == KIND_EXACT_INT:
        return InLeaf(Atom(ATOM_TOP_BITS, node.column, INT_BITS, INT_BITS), node.values, node.wildcards)
    if node.kind == KIND_EXACT_STR:
        return InLeaf(Atom(ATOM_FIELD, node.column), node.values, node.wildcards)

    total = INT_BITS if node.kind == KIND_RANGE_INT else HASH_BITS
    atom_kind = ATOM_TOP_BITS if node.kind == KIND_RANGE_INT else ATOM_HASH_BITS
    if total % branching_bits:
        raise PlannerError(
            f"branching bits {branching_bits} must divide the {total}-bit domain"
        )
    if not valued:
        leaves = [
            InLeaf(Atom(atom_kind, node.column, bits, total), None, node.wildcards)
            for bits in _level_steps(total, branching_bits)
        ]
        return Or(leaves)
    levels = node.values.cover(branching_bits)
    leaves = [
        InLeaf(
            Atom(atom_kind, node.column, bits, total),
            tuple(prefix_value(p, bits) for p in levels[bits]),
            node.wildcards,
        )
        for bits in sorted(levels)
    ]
    if not leaves:
        return FALSE
    return Or(leaves) if len(leaves) > 1 else leaves[0]


def to_dnf(node, max_clauses: int) -> list[list[InLeaf]]:
    """Distribute into a disjunction of conjunctions of membership tests."""
    if isinstance(node, FalseLeaf):
        return []
    if isinstance(node, InLeaf):
        return [[node]]
    if isinstance(node, Or):
        out = []
        for child in node.children:
            out.extend(to_dnf(child, max_clauses))
            if len(out) > max_clauses:
                raise PlannerError(
                    f"canonical form exceeds {max_clauses} clauses; "
                    "a larger branching factor keeps the rewrite tractable"
                )
        return out
    assert isinstance(node, And)
    result: list[list[InLeaf]] = [[]]
    for child in node.children:
        branches = to_dnf(child, max_clauses)
        if not branches:
            return []
        result = [conj + branch for conj in result for branch in branches]
        if len(result) > max_clauses:
            raise PlannerError(
                f"canonical form exceeds {max_clauses} clauses; "
                "a larger branching factor keeps the rewrite tractable"
            )
    return result


def eliminate_ands(conjuncts, valued: bool, max_values: int | None = None):
    """Merge each conjunction into one predicate; values cross-multiply.

    Returns (atoms, values, wildcards) triples with duplicate predicates
    (same atom tuple) merged in first-occurrence order. `max_values`
    bounds the combination effect: the total value count across
    predicates grows as the product of the conjoined lists' sizes.
    """
    order: list[tuple[Atom, ...]] = []
    merged: dict[tuple[Atom, ...], dict] = {}
    total = 0
    for conj in conjuncts:
        atoms = tuple(leaf.atom for leaf in conj)
        wildcards = _merge_wildcards([leaf.wildcards for leaf in conj])
        values: list[bytes] = []
        if valued:
            contribution = 1
            for leaf in conj:
                contribution *= len(leaf.values)
            total += contribution
            if max_values is not None and total > max_values:
                raise PlannerError(
                    f"view binding expands past {max_values} values; "
                    "the conjoined value lists multiply out"
                )
            values = [
                make_value(list(combo))
                for combo in itertools.product(*(leaf.values for leaf in conj))
            ]
        if atoms not in merged:
            merged[atoms] = {"values": [], "wildcards": []}
            order.append(atoms)
        merged[atoms]["values"].extend(values)
        merged[atoms]["wildcards"].append(wildcards)
    out = []
    for atoms in order:
        entry = merged[atoms]
        values = _dedup(entry["values"]) if valued else None
        out.append((atoms, values, _merge_wildcards(entry["wildcards"])))
    return out
