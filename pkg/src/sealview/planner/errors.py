"""Planner error types."""


class PlannerError(Exception):
    """A statement cannot be rewritten into canonical form."""


class ParseError(PlannerError):
    """The statement does not match the supported grammar."""


class ViewFamilyMismatch(PlannerError):
    """A view's structure does not match the family it claims to bind."""
