"""Finite ultrametric spaces: axiom checking, balls, products, contractions.

Distances map into a :class:`RadiusScale`, an explicit finite totally
ordered label set whose first label plays the role of zero.  Keeping the
scale symbolic makes every comparison exact; no floating point is involved
anywhere in the checks.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import InvalidHeightError, MalformedSpaceError, SizeLimitError
from .util import canonical_key

NOT_CONTRACTION = "not-contraction"
CONTRACTION = "contraction"
STRICT_ON_ORBITS = "contraction-strict-on-orbits"
STRICT_CONTRACTION = "strict-contraction"

# check_axioms enumerates all element triples; beyond this the check is no
# longer a desk-scale operation.
_AXIOM_CHECK_MAX_ELEMENTS = 1024
_BALL_ENUM_MAX_ELEMENTS = 4096
_MAX_WITNESSES = 200


@dataclass(frozen=True)
class RadiusScale:
    """Finite totally ordered set of radius labels; ``values[0]`` is zero."""

    values: tuple

    def __post_init__(self):
        values = tuple(self.values)
        object.__setattr__(self, "values", values)
        if not values:
            raise MalformedSpaceError("radius scale must be nonempty")
        if len(set(values)) != len(values):
            raise MalformedSpaceError("radius scale labels must be distinct")

    @classmethod
    def numeric(cls, values, zero=0):
        """Scale over numeric labels, sorted ascending with ``zero`` first."""
        labels = {v for v in values if v != zero}
        for v in labels:
            if v < zero:
                raise MalformedSpaceError(f"label {v!r} below zero {zero!r}")
        return cls((zero, *sorted(labels)))

    @cached_property
    def _index(self) -> dict:
        return {v: i for i, v in enumerate(self.values)}

    @property
    def zero(self):
        return self.values[0]

    @property
    def top(self):
        return self.values[-1]

    def __len__(self):
        return len(self.values)

    def __contains__(self, label):
        return label in self._index

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise MalformedSpaceError(f"label {label!r} not in scale") from None

    def leq(self, a, b) -> bool:
        return self.index(a) <= self.index(b)

    def less(self, a, b) -> bool:
        return self.index(a) < self.index(b)


class FiniteUltrametricSpace:
    """Finite element set plus a total distance table into a scale.

    The table is stored exactly as given, both orders of every pair, so
    symmetry is something :func:`check_axioms` verifies rather than assumes.
    ``dist`` may be a mapping ``(m, n) -> label`` or a callable.
    """

    def __init__(self, elements, scale: RadiusScale, dist):
        elements = tuple(elements)
        if not elements:
            raise MalformedSpaceError("space needs at least one element")
        if len(set(elements)) != len(elements):
            raise MalformedSpaceError("elements must be distinct")
        self.elements = elements
        self.scale = scale
        self._pos = {e: i for i, e in enumerate(elements)}
        n = len(elements)
        mat = np.empty((n, n), dtype=np.int32)
        if callable(dist):
            for i, m in enumerate(elements):
                for j, e in enumerate(elements):
                    mat[i, j] = scale.index(dist(m, e))
        else:
            for (m, e) in dist:
                if m not in self._pos or e not in self._pos:
                    raise MalformedSpaceError(
                        f"table entry ({m!r}, {e!r}) names an unknown element")
            for i, m in enumerate(elements):
                for j, e in enumerate(elements):
                    try:
                        label = dist[(m, e)]
                    except KeyError:
                        raise MalformedSpaceError(
                            f"missing table entry for ({m!r}, {e!r})") from None
                    mat[i, j] = scale.index(label)
        self._mat = mat

    def __len__(self):
        return len(self.elements)

    def __contains__(self, element):
        return element in self._pos

    def __repr__(self):
        return f"FiniteUltrametricSpace({len(self.elements)} elements)"

    def index_of(self, element) -> int:
        try:
            return self._pos[element]
        except KeyError:
            raise MalformedSpaceError(f"unknown element {element!r}") from None

    def distance_index(self, m, n) -> int:
        return int(self._mat[self.index_of(m), self.index_of(n)])

    def distance(self, m, n):
        return self.scale.values[self.distance_index(m, n)]

    def index_matrix(self) -> np.ndarray:
        """Distance table as a matrix of scale indices (read-only use)."""
        return self._mat


@dataclass(frozen=True)
class AxiomViolation:
    axiom: str
    witness: tuple


@dataclass(frozen=True)
class AxiomReport:
    ok: bool
    violations: tuple[AxiomViolation, ...]


def _space_matrix(space) -> np.ndarray:
    n = len(space.elements)
    if n > _AXIOM_CHECK_MAX_ELEMENTS:
        raise SizeLimitError(
            f"axiom check over {n} elements exceeds the desk-scale cap "
            f"{_AXIOM_CHECK_MAX_ELEMENTS}")
    return space.index_matrix()


def check_axioms(space) -> AxiomReport:
    """Verify the three ultrametric axioms on every pair and triple.

    Works on anything exposing ``elements``, ``scale`` and
    ``index_matrix()``, including product spaces.  Violations carry the
    witnessing elements; the list is capped to keep reports readable.
    """
    D = _space_matrix(space)
    els = space.elements
    n = len(els)
    violations: list[AxiomViolation] = []

    diag = np.diagonal(D)
    for i in np.flatnonzero(diag != 0)[:_MAX_WITNESSES]:
        violations.append(AxiomViolation("identity", (els[i], els[i])))
    off_zero = (D == 0) & ~np.eye(n, dtype=bool)
    seen_pairs = set()
    for i, j in np.argwhere(off_zero):
        pair = (min(i, j), max(i, j))
        if pair in seen_pairs or len(seen_pairs) >= _MAX_WITNESSES:
            continue
        seen_pairs.add(pair)
        violations.append(AxiomViolation("identity", (els[pair[0]], els[pair[1]])))

    asym = np.argwhere(D != D.T)
    count = 0
    for i, j in asym:
        if i < j and count < _MAX_WITNESSES:
            violations.append(AxiomViolation("symmetry", (els[i], els[j])))
            count += 1

    tri_count = 0
    for m in range(n):
        if tri_count >= _MAX_WITNESSES:
            break
        bound = np.maximum(D[:, m][:, None], D[m, :][None, :])
        bad = np.argwhere(D > bound)
        for l, e in bad:
            if tri_count >= _MAX_WITNESSES:
                break
            violations.append(
                AxiomViolation("strong-triangle", (els[l], els[m], els[e])))
            tri_count += 1

    return AxiomReport(not violations, tuple(violations))


def check_isosceles(space) -> AxiomReport:
    """Every triple must have its two largest distances equal."""
    D = _space_matrix(space)
    els = space.elements
    n = len(els)
    violations = []
    for m in range(n):
        a = D[:, m][:, None]
        b = D[m, :][None, :]
        top = np.maximum(np.maximum(a, b), D)
        hits = (a == top).astype(np.int8) + (b == top) + (D == top)
        for l, e in np.argwhere(hits < 2):
            if len(violations) >= _MAX_WITNESSES:
                return AxiomReport(False, tuple(violations))
            violations.append(
                AxiomViolation("isosceles", (els[l], els[m], els[e])))
    return AxiomReport(not violations, tuple(violations))


_END_MARKER = object()


def string_distance(x, y) -> Fraction:
    """Distance between two symbol sequences.

    Zero when equal, otherwise ``2**-m`` for the least index ``m`` where
    they differ; a missing position (shorter sequence) counts as a
    difference, so prefixes differ at the first absent index.
    """
    if x == y:
        return Fraction(0)
    for m in range(max(len(x), len(y))):
        a = x[m] if m < len(x) else _END_MARKER
        b = y[m] if m < len(y) else _END_MARKER
        if a != b:
            return Fraction(1, 2 ** m)
    return Fraction(0)


def string_space(strings, scale: RadiusScale | None = None) -> FiniteUltrametricSpace:
    """Space over a finite string sample under :func:`string_distance`."""
    strings = tuple(strings)
    if scale is None:
        labels = {string_distance(a, b) for a, b in
                  itertools.combinations(strings, 2)}
        scale = RadiusScale.numeric(labels, zero=Fraction(0))
    return FiniteUltrametricSpace(strings, scale, string_distance)


def _height_of(heights, element):
    value = heights(element) if callable(heights) else heights[element]
    if not value > 0:
        raise InvalidHeightError(
            f"height of {element!r} is {value!r}; heights must be positive")
    return value


def height_distance(heights, m, n):
    """Zero when ``m == n``, otherwise the larger of the two heights."""
    if m == n:
        _height_of(heights, m)
        return 0
    return max(_height_of(heights, m), _height_of(heights, n))


def height_space(elements, heights, scale: RadiusScale | None = None,
                 ) -> FiniteUltrametricSpace:
    """Space induced by a positive height assignment."""
    elements = tuple(elements)
    if scale is None:
        scale = RadiusScale.numeric(_height_of(heights, e) for e in elements)
    return FiniteUltrametricSpace(
        elements, scale, lambda m, n: height_distance(heights, m, n))


@dataclass(frozen=True)
class Ball:
    """Ball of a given radius about a center point."""

    space: object
    center: object
    radius: object

    def __post_init__(self):
        if self.center not in self.space:
            raise MalformedSpaceError(f"center {self.center!r} not in space")
        self.space.scale.index(self.radius)  # radius must belong to the scale


def ball_members(ball: Ball) -> frozenset:
    """Exactly the elements within the radius of the center."""
    space = ball.space
    r = space.scale.index(ball.radius)
    return frozenset(
        e for e in space.elements
        if space.distance_index(ball.center, e) <= r)


@dataclass(frozen=True)
class CompletenessReport:
    ok: bool
    witness: tuple = ()


def check_spherical_completeness(space) -> CompletenessReport:
    """Enumerate every chain of distinct balls and intersect it.

    For any finite space this passes; the point of the operation is that it
    is executable.  On failure (possible only for tables that are not
    actually ultrametrics) the offending balls are returned as the witness.
    """
    n = len(space.elements)
    if n > _BALL_ENUM_MAX_ELEMENTS:
        raise SizeLimitError(
            f"ball enumeration over {n} elements exceeds the cap "
            f"{_BALL_ENUM_MAX_ELEMENTS}")
    D = space.index_matrix()
    els = space.elements

    distinct: dict[frozenset, frozenset] = {}
    for r in range(len(space.scale)):
        rows = np.unique(D <= r, axis=0)
        for row in rows:
            members = frozenset(els[i] for i in np.flatnonzero(row))
            if members:
                distinct.setdefault(members, members)
    balls = sorted(distinct, key=lambda b: (len(b), canonical_key(b)))

    # Nested-or-disjoint must hold for the chain structure to make sense.
    for a, b in itertools.combinations(balls, 2):
        inter = a & b
        if inter and not (a <= b or b <= a):
            return CompletenessReport(False, (a, b))

    for b in balls:
        chain = tuple(c for c in balls if b <= c)
        if not frozenset.intersection(*chain):
            return CompletenessReport(False, chain)
    return CompletenessReport(True)


class ProductSpace:
    """Max-product of component spaces over one shared scale.

    Elements are tuples, one coordinate per component, and the distance is
    the componentwise maximum.  The element set is the full cartesian
    product in ``itertools.product`` order.
    """

    def __init__(self, components):
        components = tuple(components)
        if not components:
            raise MalformedSpaceError("product needs at least one component")
        scale = components[0].scale
        for comp in components[1:]:
            if comp.scale.values != scale.values:
                raise MalformedSpaceError(
                    "product components must share one radius scale")
        self.components = components
        self.scale = scale
        self._sizes = tuple(len(c.elements) for c in components)

    @property
    def dimension(self) -> int:
        return len(self.components)

    def __len__(self):
        size = 1
        for s in self._sizes:
            size *= s
        return size

    def __repr__(self):
        return f"ProductSpace(dimension={self.dimension}, size={len(self)})"

    @cached_property
    def elements(self) -> tuple:
        return tuple(itertools.product(*(c.elements for c in self.components)))

    @cached_property
    def _element_set(self) -> frozenset:
        return frozenset(self.elements)

    def __contains__(self, element):
        return element in self._element_set

    def index_of(self, element) -> int:
        idx = 0
        for comp, size, coord in zip(self.components, self._sizes, element):
            idx = idx * size + comp.index_of(coord)
        return idx

    def _check_vector(self, m):
        if not isinstance(m, tuple) or len(m) != self.dimension:
            raise MalformedSpaceError(
                f"expected a vector of {self.dimension} coordinates, got {m!r}")

    def distance_index(self, m, n) -> int:
        self._check_vector(m)
        self._check_vector(n)
        return max(
            comp.distance_index(a, b)
            for comp, a, b in zip(self.components, m, n))

    def distance(self, m, n):
        return self.scale.values[self.distance_index(m, n)]

    @cached_property
    def _matrix(self) -> np.ndarray:
        total = len(self)
        ids = np.arange(total)
        mat = np.zeros((total, total), dtype=np.int32)
        stride = total
        for comp, size in zip(self.components, self._sizes):
            stride //= size
            digits = (ids // stride) % size
            cm = comp.index_matrix()
            np.maximum(mat, cm[np.ix_(digits, digits)], out=mat)
        return mat

    def index_matrix(self) -> np.ndarray:
        return self._matrix


def product_distance(product: ProductSpace, m, n):
    """Distance between two vectors of a product space."""
    for vec in (m, n):
        if len(vec) != product.dimension:
            raise MalformedSpaceError(
                f"vector {vec!r} has {len(vec)} coordinates, "
                f"dimension is {product.dimension}")
    return product.distance(tuple(m), tuple(n))


def check_ball_is_box(product: ProductSpace, ball: Ball) -> bool:
    """A product-space ball must equal the product of component balls."""
    members = ball_members(ball)
    component_balls = [
        ball_members(Ball(comp, center_i, ball.radius))
        for comp, center_i in zip(product.components, ball.center)]
    expected = set(itertools.product(*component_balls))
    return members == expected


@dataclass(frozen=True)
class ContractionReport:
    """Strongest contraction class of a self-map, with a counterexample for
    the next stronger class when one exists."""

    classification: str
    witness: tuple | None

    def qualifies(self) -> bool:
        """True for the classes that guarantee a unique fixed point."""
        return self.classification in (STRICT_ON_ORBITS, STRICT_CONTRACTION)


def _first_pair(pairs: np.ndarray) -> tuple[int, int]:
    upper = [(int(a), int(b)) for a, b in pairs if a < b]
    if upper:
        return min(upper)
    a, b = pairs[0]
    return int(a), int(b)


def _sigma_array(space, sigma) -> np.ndarray:
    els = space.elements
    fn = sigma if callable(sigma) else sigma.__getitem__
    out = np.empty(len(els), dtype=np.int64)
    for i, e in enumerate(els):
        image = fn(e)
        try:
            out[i] = space.index_of(image)
        except MalformedSpaceError:
            raise MalformedSpaceError(
                f"sigma maps {e!r} outside the space: {image!r}") from None
    return out


def classify_contraction(space, sigma) -> ContractionReport:
    """Classify a self-map against the contraction taxonomy.

    ``sigma`` may be a callable or a mapping over the space's elements.
    Checks, in order: contraction on all pairs, strictness on orbits, and
    strictness on all distinct pairs; returns the strongest class that
    holds plus a witness against the next one.
    """
    els = space.elements
    n = len(els)
    sig = _sigma_array(space, sigma)
    if n == 1:
        return ContractionReport(STRICT_CONTRACTION, None)
    D = space.index_matrix()
    DS = D[sig][:, sig]

    worse = np.argwhere(DS > D)
    if worse.size:
        i, j = _first_pair(worse)
        return ContractionReport(NOT_CONTRACTION, (els[i], els[j]))

    idx = np.arange(n)
    fixed = sig == idx
    orbit_ok = fixed | (D[sig, sig[sig]] < D[idx, sig])
    if not orbit_ok.all():
        m = int(np.flatnonzero(~orbit_ok)[0])
        return ContractionReport(CONTRACTION, (els[m],))

    lax = np.argwhere((DS >= D) & (D > 0))
    if lax.size:
        i, j = _first_pair(lax)
        return ContractionReport(STRICT_ON_ORBITS, (els[i], els[j]))
    return ContractionReport(STRICT_CONTRACTION, None)


def load_space(source) -> FiniteUltrametricSpace:
    """Load a space description file (JSON).

    Fields: ``elements`` (strings), ``scale`` (labels ascending, first
    ``"0"``), ``dist`` (triples ``[m, n, label]``).  A missing ``(m, n)``
    entry defaults from ``(n, m)``; a missing diagonal defaults to ``"0"``.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    try:
        elements = [str(e) for e in doc["elements"]]
        scale_labels = [str(v) for v in doc["scale"]]
        triples = doc.get("dist", [])
    except (KeyError, TypeError) as exc:
        raise MalformedSpaceError(f"bad space description: {exc}") from None
    if not scale_labels or scale_labels[0] != "0":
        raise MalformedSpaceError('scale must start with the label "0"')
    scale = RadiusScale(tuple(scale_labels))

    table: dict[tuple, str] = {}
    for entry in triples:
        if len(entry) != 3:
            raise MalformedSpaceError(f"dist entry {entry!r} is not a triple")
        m, n, label = (str(x) for x in entry)
        table[(m, n)] = label
    for m, n in itertools.product(elements, repeat=2):
        if (m, n) in table:
            continue
        if (n, m) in table:
            table[(m, n)] = table[(n, m)]
        elif m == n:
            table[(m, n)] = "0"
    return FiniteUltrametricSpace(tuple(elements), scale, table)
