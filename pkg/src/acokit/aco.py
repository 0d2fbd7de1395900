"""Certification of asynchronously contracting operators.

An operator over a finite product domain is certified by a strictly nested
sequence of boxes that it walks inward, or refuted by exhausting the search
for one.  The module also carries the two constructions that translate
between box sequences and ultrametrics, and the desk-scale search for a
qualifying product ultrametric, so the two characterizations can be checked
against each other.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .errors import MalformedBoxError, PreconditionError, SizeLimitError
from .iteration import DecomposedOperator, run_async, sample_schedule
from .ultrametric import (
    FiniteUltrametricSpace,
    ProductSpace,
    RadiusScale,
    classify_contraction,
)
from .util import canonical_key, jsonable, sorted_canonical

Box = tuple  # per-component subsets, each a canonically sorted tuple


def _normalize_box(box) -> Box:
    comps = []
    for comp in box:
        comp = tuple(sorted_canonical(comp))
        if not comp:
            raise MalformedBoxError("box has an empty component subset")
        if len(set(comp)) != len(comp):
            raise MalformedBoxError("box component subset has duplicates")
        comps.append(comp)
    return tuple(comps)


def box_members(box: Box):
    return itertools.product(*box)


def box_size(box: Box) -> int:
    total = 1
    for comp in box:
        total *= len(comp)
    return total


def box_contains(box: Box, state: tuple) -> bool:
    return all(v in comp for v, comp in zip(state, box))


def box_subset(inner: Box, outer: Box) -> bool:
    return all(set(a) <= set(b) for a, b in zip(inner, outer))


@dataclass(frozen=True)
class BoxSequence:
    """Nested boxes ``C_0 .. C_k``: a singleton up to the whole space."""

    boxes: tuple[Box, ...]
    fixed_point: tuple

    def __post_init__(self):
        if not self.boxes:
            raise MalformedBoxError("box sequence must be nonempty")
        width = len(self.boxes[0])
        normalized = []
        for box in self.boxes:
            if len(box) != width:
                raise MalformedBoxError("boxes must share one dimension")
            normalized.append(_normalize_box(box))
        object.__setattr__(self, "boxes", tuple(normalized))
        object.__setattr__(self, "fixed_point", tuple(self.fixed_point))

    def __len__(self):
        return len(self.boxes)

    def to_json_dict(self) -> dict:
        return {
            "fixed_point": jsonable(self.fixed_point),
            "boxes": [[list(comp) for comp in box] for box in self.boxes],
        }


@dataclass(frozen=True)
class BoxCheck:
    ok: bool
    violated: str | None = None
    witness: tuple | None = None


def _check_box_shape(op: DecomposedOperator, seq: BoxSequence):
    for box in seq.boxes:
        if len(box) != op.processors:
            raise MalformedBoxError(
                f"box has {len(box)} components, operator has {op.processors}")
        for comp, dom in zip(box, op.domains):
            alien = set(comp) - set(dom)
            if alien:
                raise MalformedBoxError(
                    f"box component contains {sorted_canonical(alien)[0]!r} "
                    f"outside the processor domain")


def verify_box_sequence(op: DecomposedOperator, seq: BoxSequence) -> BoxCheck:
    """Check the four certificate conditions exhaustively.

    1. the innermost box is the singleton of the fixed point;
    2. the outermost box is the whole domain;
    3. the nesting is strict at every step;
    4. the operator maps each box into the next one inward, and keeps the
       innermost box fixed.
    """
    _check_box_shape(op, seq)
    inner = seq.boxes[0]
    if box_size(inner) != 1:
        return BoxCheck(False, "condition-1", (inner,))
    sole = next(box_members(inner))
    if sole != seq.fixed_point:
        return BoxCheck(False, "condition-1", (sole, seq.fixed_point))
    outer = seq.boxes[-1]
    if any(set(comp) != set(dom) for comp, dom in zip(outer, op.domains)):
        return BoxCheck(False, "condition-2", (outer,))
    for r in range(len(seq.boxes) - 1):
        small, big = seq.boxes[r], seq.boxes[r + 1]
        if not box_subset(small, big) or box_size(small) >= box_size(big):
            return BoxCheck(False, "condition-3", (r, r + 1))
    if op.apply(seq.fixed_point) != seq.fixed_point:
        return BoxCheck(False, "condition-4", (seq.fixed_point,))
    for r in range(len(seq.boxes) - 1):
        target = seq.boxes[r]
        for m in box_members(seq.boxes[r + 1]):
            if not box_contains(target, op.apply(m)):
                return BoxCheck(False, "condition-4", (r + 1, m))
    return BoxCheck(True)


def _find_fixed_point(op: DecomposedOperator, start: tuple) -> tuple | None:
    state = start
    for _ in range(op.size() + 1):
        nxt = op.apply(state)
        if nxt == state:
            return state
        state = nxt
    return None


def boxes_from_ultrametric(space, op: DecomposedOperator) -> BoxSequence:
    """Read off the certificate boxes as the balls around the fixed point.

    ``space`` must cover the operator's product domain with tuple elements
    and make the operator at least a contraction that is strict on orbits;
    each ball about the fixed point must factor as a product (automatic for
    product spaces).  Coinciding balls are emitted once, at their smallest
    radius.
    """
    if set(space.elements) != set(op.iter_states()):
        raise PreconditionError(
            "space elements do not match the operator domain")
    report = classify_contraction(space, op.apply)
    if not report.qualifies():
        raise PreconditionError(
            f"operator classifies as {report.classification}; "
            "need a contraction that is strict on orbits",
            witness=report)
    fixed_points = [m for m in op.iter_states() if op.apply(m) == m]
    if len(fixed_points) != 1:
        # Strictness on orbits says nothing about points that are already
        # fixed, so the classification alone cannot rule out several of
        # them; the descent of balls needs exactly one.
        raise PreconditionError(
            f"operator has {len(fixed_points)} fixed points; the ball "
            "construction needs exactly one",
            witness=tuple(fixed_points))
    fixed = _find_fixed_point(op, space.elements[0])
    if fixed is None:
        raise PreconditionError("iteration failed to reach a fixed point")

    boxes = []
    seen = set()
    whole = frozenset(space.elements)
    for r in range(len(space.scale)):
        members = frozenset(
            e for e in space.elements
            if space.distance_index(fixed, e) <= r)
        if members in seen:
            continue
        seen.add(members)
        comps = []
        for i in range(len(op.domains)):
            comps.append(tuple(sorted_canonical({m[i] for m in members})))
        box = tuple(comps)
        if box_size(box) != len(members):
            raise PreconditionError(
                f"ball at radius {space.scale.values[r]!r} about the fixed "
                "point is not a box; the space is not product-structured")
        boxes.append(box)
        if members == whole:
            break
    if not boxes or frozenset(space.elements) not in seen:
        raise PreconditionError("no ball reached the whole space")
    return BoxSequence(tuple(boxes), fixed)


def ultrametric_from_boxes(seq: BoxSequence) -> FiniteUltrametricSpace:
    """Distance from nesting depth: the index of the innermost box
    containing a point, maxed over distinct pairs.

    The balls about the fixed point under this distance reproduce the boxes
    exactly; radii are the box indices ``0 .. k``.
    """
    inner = seq.boxes[0]
    if box_size(inner) != 1 or next(box_members(inner)) != seq.fixed_point:
        raise PreconditionError("innermost box must be the fixed point singleton")
    for r in range(len(seq.boxes) - 1):
        small, big = seq.boxes[r], seq.boxes[r + 1]
        if not box_subset(small, big) or box_size(small) >= box_size(big):
            raise PreconditionError(f"boxes {r} and {r + 1} are not strictly nested")

    elements = tuple(box_members(seq.boxes[-1]))
    depth = {}
    for r in range(len(seq.boxes) - 1, -1, -1):
        for m in box_members(seq.boxes[r]):
            depth[m] = r
    scale = RadiusScale(tuple(range(len(seq.boxes))))

    def dist(m, n):
        return 0 if m == n else max(depth[m], depth[n])

    return FiniteUltrametricSpace(elements, scale, dist)


def _all_boxes(op: DecomposedOperator, max_boxes: int) -> list[Box]:
    total = 1
    for dom in op.domains:
        total *= 2 ** len(dom) - 1
    if total > max_boxes:
        raise SizeLimitError(
            f"{total} candidate boxes exceed the search cap {max_boxes}")
    per_component = []
    for dom in op.domains:
        ordered = tuple(sorted_canonical(dom))
        subsets = []
        for size in range(1, len(ordered) + 1):
            for comb in itertools.combinations(ordered, size):
                subsets.append(tuple(comb))
        per_component.append(subsets)
    boxes = [tuple(combo) for combo in itertools.product(*per_component)]
    boxes.sort(key=lambda b: (box_size(b), canonical_key(b)))
    return boxes


def search_box_sequence(op: DecomposedOperator, *,
                        max_boxes: int = 4096) -> BoxSequence | None:
    """Exhaustive search for a certificate chain of strictly nested boxes.

    Explores, depth-first with memoized dead ends, every chain that starts
    at the whole domain and steps to a strict sub-box containing the image
    of the current box, until a singleton fixed point is reached.  ``None``
    means no chain exists at all.
    """
    boxes = _all_boxes(op, max_boxes)
    sigma = {state: op.apply(state) for state in op.iter_states()}
    box_sets = {box: tuple(frozenset(c) for c in box) for box in boxes}

    def image_box(box: Box) -> tuple[frozenset, ...]:
        images = [set() for _ in range(op.processors)]
        for m in box_members(box):
            out = sigma[m]
            for i, v in enumerate(out):
                images[i].add(v)
        return tuple(frozenset(s) for s in images)

    full = tuple(tuple(dom) for dom in op.domains)
    dead: set[Box] = set()

    def descend(box: Box) -> list[Box] | None:
        if box_size(box) == 1:
            sole = next(box_members(box))
            return [box] if sigma[sole] == sole else None
        if box in dead:
            return None
        img = image_box(box)
        own = box_sets[box]
        for cand in boxes:
            if box_size(cand) >= box_size(box):
                break
            csets = box_sets[cand]
            if all(a <= b for a, b in zip(csets, own)) and \
                    all(a <= b for a, b in zip(img, csets)):
                chain = descend(cand)
                if chain is not None:
                    chain.append(box)
                    return chain
        dead.add(box)
        return None

    chain = descend(_normalize_box(full))
    if chain is None:
        return None
    fixed = next(box_members(chain[0]))
    return BoxSequence(tuple(chain), fixed)


def search_ultrametric(op: DecomposedOperator, *,
                       max_height: int | None = None,
                       max_assignments: int = 2_000_000) -> ProductSpace | None:
    """Search product ultrametrics built from per-component heights.

    Height assignments range over ``0 .. max_height`` per element (at most
    one zero per component, else two points would sit at distance zero) and
    only order-canonical assignments are tried, since the classification
    depends only on the relative order of labels.  Returns the first
    product space making the operator a contraction that is strict on
    orbits around a unique fixed point, or ``None``.

    The unique-fixed-point requirement is independent of any metric:
    strictness on orbits is vacuous at fixed points, so a map fixing two
    points (the identity, say) qualifies under every metric yet its
    asynchronous runs can settle on either point.  Without this condition
    the two search verdicts could not agree.
    """
    if max_height is None:
        max_height = max(1, op.size() - 1)
    fixed_count = sum(1 for m in op.iter_states() if op.apply(m) == m)
    if fixed_count != 1:
        return None
    positions = [(i, e) for i, dom in enumerate(op.domains) for e in dom]
    total = (max_height + 1) ** len(positions)
    if total > max_assignments:
        raise SizeLimitError(
            f"{total} height assignments exceed the search cap {max_assignments}")

    elements = list(op.iter_states())
    coord = {}
    for i, dom in enumerate(op.domains):
        for pos, e in enumerate(dom):
            coord[(i, e)] = pos
    indexed = [tuple(coord[(i, e)] for i, e in enumerate(m)) for m in elements]
    element_pos = {m: p for p, m in enumerate(elements)}
    sigma = [element_pos[op.apply(m)] for m in elements]

    pairs = []
    for a, b in itertools.combinations(range(len(elements)), 2):
        diffs = tuple(
            (i, indexed[a][i], indexed[b][i])
            for i in range(op.processors)
            if indexed[a][i] != indexed[b][i])
        pairs.append((a, b, diffs))

    comp_sizes = [len(dom) for dom in op.domains]
    offsets = []
    off = 0
    for size in comp_sizes:
        offsets.append(off)
        off += size

    def dist(h, a, b):
        if a == b:
            return 0
        best = 0
        for i in range(op.processors):
            pa, pb = indexed[a][i], indexed[b][i]
            if pa != pb:
                v = h[offsets[i] + pa]
                w = h[offsets[i] + pb]
                if v < w:
                    v = w
                if v > best:
                    best = v
        return best

    for h in itertools.product(range(max_height + 1), repeat=len(positions)):
        used = sorted({v for v in h if v})
        if used != list(range(1, len(used) + 1)):
            continue
        valid = True
        for i, size in enumerate(comp_sizes):
            zeros = sum(1 for p in range(size) if h[offsets[i] + p] == 0)
            if zeros > 1:
                valid = False
                break
        if not valid:
            continue

        ok = True
        for a, b, diffs in pairs:
            d_ab = 0
            for i, pa, pb in diffs:
                v = max(h[offsets[i] + pa], h[offsets[i] + pb])
                if v > d_ab:
                    d_ab = v
            if dist(h, sigma[a], sigma[b]) > d_ab:
                ok = False
                break
        if not ok:
            continue
        for m in range(len(elements)):
            s = sigma[m]
            if s == m:
                continue
            if not dist(h, s, sigma[s]) < dist(h, m, s):
                ok = False
                break
        if not ok:
            continue

        scale = RadiusScale(tuple(range(max(used, default=0) + 1)))
        comps = []
        for i, dom in enumerate(op.domains):
            table = {e: h[offsets[i] + coord[(i, e)]] for e in dom}
            comps.append(FiniteUltrametricSpace(
                dom, scale,
                lambda m, n, t=table: 0 if m == n else max(t[m], t[n])))
        witness = ProductSpace(comps)
        confirmation = classify_contraction(witness, op.apply)
        if not confirmation.qualifies():
            raise AssertionError(
                "inline height check disagrees with classify_contraction")
        return witness
    return None


@dataclass(frozen=True)
class AcoCertificate:
    verdict: str  # "certified" | "refuted"
    box_sequence: BoxSequence | None = None
    refutation: dict | None = None
    sampling: dict | None = None

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    def to_json_dict(self) -> dict:
        doc: dict = {"verdict": self.verdict}
        if self.box_sequence is not None:
            doc["certificate"] = self.box_sequence.to_json_dict()
        if self.refutation is not None:
            doc["refutation"] = jsonable(self.refutation)
        if self.sampling is not None:
            doc["sampling"] = jsonable(self.sampling)
        return doc


def certify_aco(op: DecomposedOperator, *,
                schedules: int = 100,
                horizon: int = 64,
                staleness: int = 5,
                window: int = 8,
                seed: int = 0,
                max_boxes: int = 4096) -> AcoCertificate:
    """Certify or refute an operator by exact box-sequence search.

    Refutation always comes from the exhausted search (plus the fixed-point
    census), never from schedule sampling.  A certified operator is
    additionally exercised under seeded admissible schedules from every
    start state, and the observed convergence ticks are recorded.
    """
    fixed_points = [m for m in op.iter_states() if op.apply(m) == m]
    seq = search_box_sequence(op, max_boxes=max_boxes)
    if seq is None:
        total = 1
        for dom in op.domains:
            total *= 2 ** len(dom) - 1
        if len(fixed_points) != 1:
            reason = (f"{len(fixed_points)} fixed points; a certificate "
                      "requires exactly one")
        else:
            reason = "no strictly nested box chain survives the image condition"
        return AcoCertificate("refuted", refutation={
            "reason": reason,
            "fixed_points": tuple(fixed_points),
            "boxes_examined": total,
        })

    runs = 0
    converged = 0
    max_tick = 0
    for s in range(schedules):
        schedule = sample_schedule(op.processors, horizon, seed + s,
                                   max_staleness=staleness,
                                   fairness_window=window)
        for start in op.iter_states():
            runs += 1
            traj = run_async(op, start, schedule)
            if traj.status == "converged" and traj.final == seq.fixed_point:
                converged += 1
                max_tick = max(max_tick, traj.converged_at)
    sampling = {
        "schedules": schedules,
        "seed": seed,
        "horizon": horizon,
        "staleness_bound": staleness,
        "fairness_window": window,
        "runs": runs,
        "converged": converged,
        "max_converged_tick": max_tick,
    }
    return AcoCertificate("certified", box_sequence=seq, sampling=sampling)


@dataclass(frozen=True)
class CensusResult:
    total: int
    agreements: int
    aco_count: int
    mismatches: tuple = ()

    @property
    def ok(self) -> bool:
        return self.agreements == self.total


def equivalence_census(domains=((0, 1), (0, 1))) -> CensusResult:
    """Run both searches over every operator on a small product domain.

    The default domain yields the 256 self-maps of a 2x2 product; the box
    search and the ultrametric search must return the same verdict on each.
    """
    domains = tuple(tuple(d) for d in domains)
    states = list(itertools.product(*domains))
    total = 0
    agreements = 0
    acos = 0
    mismatches = []
    for images in itertools.product(states, repeat=len(states)):
        table = dict(zip(states, images))
        op = DecomposedOperator.from_table(domains, table)
        by_boxes = search_box_sequence(op) is not None
        by_metric = search_ultrametric(op) is not None
        total += 1
        if by_boxes == by_metric:
            agreements += 1
            if by_boxes:
                acos += 1
        else:
            mismatches.append((tuple(sorted(table.items())),
                               by_boxes, by_metric))
    return CensusResult(total, agreements, acos, tuple(mismatches))
