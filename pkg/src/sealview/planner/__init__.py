"""Planner: rewrite view-family and view SQL into canonical form."""

from __future__ import annotations

from ..model import Schema
from .canonical import Atom, CanonicalFamily, CanonicalView, PredicateFn
from .errors import ParseError, PlannerError, ViewFamilyMismatch
from .rewrite import consolidate, eliminate_ands, push_not_down, ranges_to_in, to_dnf, to_typed
from .sql import parse

DEFAULT_BRANCHING_BITS = 8
DEFAULT_MAX_CLAUSES = 4096

__all__ = [
    "Atom",
    "CanonicalFamily",
    "CanonicalView",
    "DEFAULT_BRANCHING_BITS",
    "DEFAULT_MAX_CLAUSES",
    "ParseError",
    "PlannerError",
    "PredicateFn",
    "ViewFamilyMismatch",
    "describe_plan",
    "parse",
    "plan_family",
    "plan_view",
]


def _projection_indices(stmt, schema: Schema) -> tuple[int, ...]:
    if stmt.projection is None:
        return tuple(range(len(schema)))
    return tuple(schema.index_of(name) for name in stmt.projection)


def _run_passes(
    where,
    schema: Schema,
    branching_bits: int,
    max_clauses: int,
    valued: bool,
    max_values: int | None = None,
):
    node = push_not_down(where)
    node = to_typed(node, schema, valued)
    node = consolidate(node, valued)
    node = ranges_to_in(node, branching_bits, valued)
    conjuncts = to_dnf(node, max_clauses)
    return eliminate_ands(conjuncts, valued, max_values)


def plan_family(
    sql: str,
    schema: Schema,
    branching_bits: int = DEFAULT_BRANCHING_BITS,
    max_clauses: int = DEFAULT_MAX_CLAUSES,
) -> CanonicalFamily:
    """Rewrite family SQL (wildcard predicates) into canonical form."""
    stmt = parse(sql, "family")
    projected = _projection_indices(stmt, schema)
    triples = _run_passes(stmt.where, schema, branching_bits, max_clauses, valued=False)
    if not triples:
        raise PlannerError("family WHERE clause vanished during rewriting")
    return CanonicalFamily(
        projected=projected,
        predicates=tuple(PredicateFn(atoms) for atoms, _, _ in triples),
        wildcard_names=tuple(wc for _, _, wc in triples),
        branching_bits=branching_bits,
    )


def plan_view(
    sql: str,
    family: CanonicalFamily,
    schema: Schema,
    max_clauses: int = DEFAULT_MAX_CLAUSES,
    max_values: int | None = None,
) -> CanonicalView:
    """Bind view SQL (literal predicates) against an instantiated family.

    The view runs through the identical pass pipeline; its predicates are
    aligned to the family's by atom identity. Family predicates the view
    does not bind get empty value lists. `max_values` optionally bounds
    the combination effect for bindings over conjoined predicates.
    """
    stmt = parse(sql, "view")
    projected = _projection_indices(stmt, schema)
    if projected != family.projected:
        raise ViewFamilyMismatch(
            "view projection does not match the family's projected columns"
        )
    triples = _run_passes(
        stmt.where, schema, family.branching_bits, max_clauses, valued=True, max_values=max_values
    )
    by_atoms = {pred.atoms: j for j, pred in enumerate(family.predicates)}
    values: list[list[bytes]] = [[] for _ in family.predicates]
    seen: list[set[bytes]] = [set() for _ in family.predicates]
    for atoms, vals, _ in triples:
        j = by_atoms.get(atoms)
        if j is None:
            raise ViewFamilyMismatch(
                "view predicate structure has no counterpart in the family"
            )
        for v in vals:
            if v not in seen[j]:
                seen[j].add(v)
                values[j].append(v)
    return CanonicalView(family, tuple(tuple(v) for v in values))


def describe_plan(
    family: CanonicalFamily, schema: Schema, view: CanonicalView | None = None
) -> dict:
    """JSON-ready summary of a plan: predicates, atoms, and value counts."""
    preds = []
    for j, pred in enumerate(family.predicates):
        entry = {
            "index": j + 1,
            "atoms": [a.describe(schema.columns[a.column].name) for a in pred.atoms],
            "wildcards": list(family.wildcard_names[j]),
        }
        if view is not None:
            entry["value_count"] = len(view.values[j])
        preds.append(entry)
    out = {
        "family_id": family.family_id,
        "projected": [schema.columns[i].name for i in family.projected],
        "branching_bits": family.branching_bits,
        "predicate_count": family.n_pred,
        "predicates": preds,
    }
    if view is not None:
        out["total_values"] = sum(len(v) for v in view.values)
    return out
