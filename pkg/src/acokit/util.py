"""Small shared helpers: canonical ordering and value rendering.

Everything that leaves the package (summaries, traces, witnesses) must not
depend on hash-randomized set iteration order, so any set-to-sequence
conversion goes through :func:`canonical_key`.
"""

from __future__ import annotations

from fractions import Fraction


def canonical_key(value):
    """Total ordering key over the mixed values used in this package.

    Handles numbers, strings, tuples and (frozen)sets, nested arbitrarily.
    Values of different kinds sort by kind rank, so heterogeneous
    collections still order deterministically.
    """
    if isinstance(value, bool):
        return (0, Fraction(int(value)))
    if isinstance(value, (int, Fraction)):
        return (0, Fraction(value))
    if isinstance(value, float):
        return (0, Fraction(value))
    if isinstance(value, str):
        return (1, value)
    if isinstance(value, tuple):
        return (2, tuple(canonical_key(v) for v in value))
    if isinstance(value, (set, frozenset)):
        return (3, tuple(sorted(canonical_key(v) for v in value)))
    return (4, type(value).__name__, repr(value))


def sorted_canonical(values):
    return sorted(values, key=canonical_key)


def format_value(value) -> str:
    """Render a state component for traces and text summaries."""
    if isinstance(value, (set, frozenset)):
        return "{" + ",".join(sorted(format_value(v) for v in value)) + "}"
    if isinstance(value, tuple):
        return "(" + " ".join(format_value(v) for v in value) + ")"
    if isinstance(value, bool):
        return "T" if value else "F"
    return str(value)


def jsonable(value):
    """Convert package values into JSON-serializable structures."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (int, float, str)):
        return value
    if isinstance(value, tuple):
        return [jsonable(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return [jsonable(v) for v in sorted_canonical(value)]
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    return str(value)
