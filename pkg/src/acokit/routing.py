"""Multipath path-selection instances and their contraction structure.

An instance is a digraph with a destination, per-node permitted simple
paths, and a preorder of path preferences.  Nodes repeatedly replace their
path sets by the minimal one-arc extensions of their neighbors' sets; the
module provides that step, the path-height ultrametric on global states,
the exhaustive strict-contraction check, and decompositions of the step
into independent processors at several granularities.

Paths are tuples of node labels ending at the destination; the empty path
at the destination is the one-node tuple ``(dest,)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import (
    PreconditionError,
    PreferenceCycleError,
    SizeLimitError,
)
from .iteration import DecomposedOperator, run_async, run_sync, sample_schedule
from .ultrametric import FiniteUltrametricSpace, ProductSpace, RadiusScale
from .util import canonical_key, sorted_canonical

PER_NODE = "per-node"
PER_NEXTHOP = "per-source-destination-nexthop"
PER_PATH = "per-path"
GRANULARITIES = (PER_NODE, PER_NEXTHOP, PER_PATH)

Path = tuple

_STRICT_CONTRACTION_MAX_PATHS = 12


@dataclass(frozen=True)
class Preference:
    """Validated preorder over a fixed path universe.

    ``leq(p, q)`` means p is at least as preferred as q.  Built from
    explicit pairs or from hop counts; explicit one-directional pairs are
    strict declarations, and construction fails if the closure would
    collapse one of them into a tie.
    """

    paths: tuple[Path, ...]
    matrix: tuple[tuple[bool, ...], ...]

    @cached_property
    def _pos(self) -> dict:
        return {p: i for i, p in enumerate(self.paths)}

    def _idx(self, p: Path) -> int:
        try:
            return self._pos[p]
        except KeyError:
            raise PreconditionError(f"unknown path {p!r}") from None

    def leq(self, p: Path, q: Path) -> bool:
        return self.matrix[self._idx(p)][self._idx(q)]

    def lt(self, p: Path, q: Path) -> bool:
        return self.leq(p, q) and not self.leq(q, p)

    def equivalent(self, p: Path, q: Path) -> bool:
        return self.leq(p, q) and self.leq(q, p)

    def min_set(self, candidates) -> frozenset:
        """Minimal elements: nothing in the set is strictly preferred."""
        items = list(candidates)
        return frozenset(
            a for a in items if not any(self.lt(b, a) for b in items))

    @classmethod
    def hop_count(cls, paths) -> "Preference":
        """Fewer arcs strictly preferred, equal arc counts equivalent."""
        paths = tuple(paths)
        matrix = tuple(
            tuple(len(p) <= len(q) for q in paths) for p in paths)
        return cls(paths, matrix)

    @classmethod
    def from_pairs(cls, paths, pairs) -> "Preference":
        """Reflexive-transitive closure of declared ``p <= q`` pairs.

        A pair declared in one direction only is meant strictly; if the
        closure also derives the reverse, the declaration sits on a cycle
        and the relation is rejected with that cycle as witness.
        """
        paths = tuple(paths)
        pos = {p: i for i, p in enumerate(paths)}
        declared = set()
        for p, q in pairs:
            p, q = tuple(p), tuple(q)
            if p not in pos or q not in pos:
                missing = p if p not in pos else q
                raise PreconditionError(
                    f"preference pair references unknown path {missing!r}")
            declared.add((pos[p], pos[q]))

        n = len(paths)
        closure = [[False] * n for _ in range(n)]
        for i in range(n):
            closure[i][i] = True
        for i, j in declared:
            closure[i][j] = True
        for k in range(n):
            ck = closure[k]
            for i in range(n):
                if closure[i][k]:
                    ci = closure[i]
                    for j in range(n):
                        if ck[j]:
                            ci[j] = True

        for i, j in sorted(declared):
            if (j, i) in declared:
                continue  # declared both ways: an intended tie
            if closure[j][i]:
                cycle = _derivation_path(n, declared, j, i)
                witness = (paths[i],) + tuple(paths[x] for x in cycle)
                raise PreferenceCycleError(
                    "declared strict preference "
                    f"{_fmt(paths[i])} < {_fmt(paths[j])} lies on a cycle",
                    cycle=witness)

        matrix = tuple(tuple(row) for row in closure)
        return cls(paths, matrix)


def _derivation_path(n, declared, src, dst):
    """Shortest chain of declared pairs from src to dst (both inclusive)."""
    prev = {src: None}
    frontier = [src]
    while frontier and dst not in prev:
        nxt = []
        for u in frontier:
            for (a, b) in sorted(declared):
                if a == u and b not in prev:
                    prev[b] = u
                    nxt.append(b)
        frontier = nxt
    chain = [dst]
    while prev[chain[-1]] is not None:
        chain.append(prev[chain[-1]])
    chain.reverse()
    return chain


def format_path(p: Path) -> str:
    """Single-node paths are the empty path at their node."""
    if len(p) == 1:
        return "eps"
    return "(" + " ".join(str(v) for v in p) + ")"


_fmt = format_path


def format_state(state) -> str:
    return "{" + ",".join(sorted(format_path(p) for p in state)) + "}"


@dataclass(frozen=True)
class SppInstance:
    """A destination-rooted path selection problem."""

    nodes: tuple
    dest: object
    arcs: tuple[tuple, ...]
    permitted: tuple[tuple, ...]  # (node, sorted tuple of paths) pairs
    preference: Preference
    paths: tuple[Path, ...]

    @cached_property
    def permitted_map(self) -> dict:
        return {node: frozenset(paths) for node, paths in self.permitted}

    @cached_property
    def all_permitted(self) -> tuple[Path, ...]:
        merged = set()
        for _, paths in self.permitted:
            merged.update(paths)
        return tuple(sorted_canonical(merged))

    @cached_property
    def arcs_from(self) -> dict:
        out: dict = {node: [] for node in self.nodes}
        for u, v in self.arcs:
            out[u].append(v)
        return {u: tuple(sorted_canonical(vs)) for u, vs in out.items()}

    @property
    def empty_path(self) -> Path:
        return (self.dest,)

    def empty_state(self) -> frozenset:
        return frozenset()


def _simple_paths_to(nodes, arcs, dest) -> tuple[Path, ...]:
    adjacency: dict = {node: [] for node in nodes}
    for u, v in arcs:
        adjacency[u].append(v)
    found = [(dest,)]

    def walk(prefix):
        head = prefix[-1]
        for nxt in adjacency[head]:
            if nxt in prefix:
                continue
            full = prefix + (nxt,)
            if nxt == dest:
                found.append(full)
            else:
                walk(full)

    for node in nodes:
        if node != dest:
            walk((node,))
    return tuple(sorted(found, key=canonical_key))


def enumerate_paths(instance: SppInstance) -> tuple[Path, ...]:
    """All simple directed paths to the destination, including the empty
    path, in a deterministic lexicographic order."""
    return _simple_paths_to(instance.nodes, instance.arcs, instance.dest)


def make_instance(nodes, dest, arcs, permitted=None,
                  preference="hop-count") -> SppInstance:
    """Build and validate an instance.

    ``permitted`` maps nodes to path lists (omitted nodes allow all their
    simple paths); the empty path is always permitted at the destination.
    ``preference`` is ``"hop-count"``, an iterable of explicit weak pairs,
    or a prebuilt :class:`Preference` over the instance's path universe.
    """
    nodes = tuple(sorted_canonical(set(nodes)))
    if dest not in nodes:
        raise PreconditionError(f"destination {dest!r} not among the nodes")
    seen_arcs = set()
    for arc in arcs:
        u, v = arc
        if u not in nodes or v not in nodes:
            raise PreconditionError(f"arc {arc!r} references an unknown node")
        if u == v:
            raise PreconditionError(f"self-arc {arc!r} not allowed")
        seen_arcs.add((u, v))
    arcs = tuple(sorted_canonical(seen_arcs))

    paths = _simple_paths_to(nodes, arcs, dest)
    path_set = set(paths)
    by_source: dict = {node: set() for node in nodes}
    for p in paths:
        by_source[p[0]].add(p)

    if permitted is None:
        permitted = {}
    for node in permitted:
        if node not in by_source:
            raise PreconditionError(f"permitted lists unknown node {node!r}")
    chosen = {}
    for node in nodes:
        if node not in permitted:
            chosen[node] = set(by_source[node])
            continue
        chosen[node] = set()
        for p in permitted[node]:
            p = tuple(p)
            if p not in path_set:
                raise PreconditionError(
                    f"permitted path {format_path(p)} is not a simple "
                    f"path to {dest!r}")
            if p[0] != node:
                raise PreconditionError(
                    f"path {format_path(p)} does not start at {node!r}")
            chosen[node].add(p)
    chosen[dest].add((dest,))

    if isinstance(preference, Preference):
        if preference.paths != paths:
            raise PreconditionError(
                "preference was built over a different path universe")
        pref = preference
    elif preference == "hop-count":
        pref = Preference.hop_count(paths)
    else:
        pref = Preference.from_pairs(paths, preference)

    permitted_pairs = tuple(
        (node, tuple(sorted_canonical(chosen[node]))) for node in nodes)
    return SppInstance(nodes, dest, arcs, permitted_pairs, pref, paths)


def load_instance(source) -> SppInstance:
    """Load an instance file (JSON): ``nodes``, ``dest``, ``arcs``,
    optional ``permitted`` (node to path arrays), ``preference`` of kind
    ``hop-count`` or ``explicit`` with weak pairs."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    try:
        nodes = [str(n) for n in doc["nodes"]]
        dest = str(doc["dest"])
        arcs = [(str(u), str(v)) for u, v in doc["arcs"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise PreconditionError(f"bad instance description: {exc}") from None
    permitted = None
    if "permitted" in doc:
        permitted = {
            str(node): [tuple(str(x) for x in p) for p in plist]
            for node, plist in doc["permitted"].items()}
    spec = doc.get("preference", {"kind": "hop-count"})
    kind = spec.get("kind")
    if kind == "hop-count":
        preference = "hop-count"
    elif kind == "explicit":
        preference = [
            (tuple(str(x) for x in p), tuple(str(x) for x in q))
            for p, q in spec.get("pairs", [])]
    else:
        raise PreconditionError(f"unknown preference kind {kind!r}")
    return make_instance(nodes, dest, arcs, permitted, preference)


@dataclass(frozen=True)
class InflationReport:
    ok: bool
    witness: tuple | None = None  # (arc, path) failing strictness


def check_strictly_inflationary(instance: SppInstance) -> InflationReport:
    """Every permitted one-arc extension must be strictly worse than the
    path it extends."""
    pref = instance.preference
    for i in instance.nodes:
        if i == instance.dest:
            continue
        for j in instance.arcs_from[i]:
            for p in sorted_canonical(instance.permitted_map.get(j, ())):
                if i in p:
                    continue
                q = (i,) + p
                if q not in instance.permitted_map.get(i, frozenset()):
                    continue
                if not pref.lt(p, q):
                    return InflationReport(False, ((i, j), p))
    return InflationReport(True)


@dataclass(frozen=True)
class PathHeight:
    """Count of weakly-worse paths for each path in the universe."""

    table: tuple[tuple[Path, int], ...]

    @cached_property
    def mapping(self) -> dict:
        return dict(self.table)

    def of(self, p: Path) -> int:
        return self.mapping[p]

    @property
    def max_height(self) -> int:
        return max(h for _, h in self.table)


@lru_cache(maxsize=128)
def path_height(instance: SppInstance) -> PathHeight:
    """The height of ``p`` counts the universe paths ``q`` with p <= q."""
    pref = instance.preference
    table = tuple(
        (p, sum(1 for q in instance.paths if pref.leq(p, q)))
        for p in instance.paths)
    return PathHeight(table)


def _node_view(state, node):
    return [p for p in state if p[0] == node]


def validate_state(instance: SppInstance, state) -> frozenset:
    state = frozenset(tuple(p) for p in state)
    for p in state:
        if p[0] not in instance.permitted_map or \
                p not in instance.permitted_map[p[0]]:
            raise PreconditionError(
                f"state contains non-permitted path {format_path(p)}")
    return state


def sigma_step(instance: SppInstance, state) -> frozenset:
    """One selection round: each node keeps the minimal permitted simple
    extensions of its neighbors' current paths; the destination keeps the
    empty path.  An empty candidate set yields the empty set."""
    state = validate_state(instance, state)
    result = {instance.empty_path}
    pref = instance.preference
    for i in instance.nodes:
        if i == instance.dest:
            continue
        candidates = []
        for j in instance.arcs_from[i]:
            for p in _node_view(state, j):
                if i in p:
                    continue
                q = (i,) + p
                if q in instance.permitted_map[i]:
                    candidates.append(q)
        result.update(pref.min_set(candidates))
    return frozenset(result)


def state_distance(instance: SppInstance, m, n) -> int:
    """Zero for equal states, otherwise the largest height in the
    symmetric difference."""
    m = validate_state(instance, m)
    n = validate_state(instance, n)
    delta = m ^ n
    if not delta:
        return 0
    heights = path_height(instance)
    return max(heights.of(p) for p in delta)


@dataclass(frozen=True)
class ContractionCheck:
    ok: bool
    witness: tuple | None = None  # (state, state) pair not contracted strictly
    pairs_checked: int = 0


def verify_strict_contraction(instance: SppInstance) -> ContractionCheck:
    """Exhaustively check that one selection round strictly shrinks the
    distance between every pair of distinct states."""
    universe = instance.all_permitted
    p_count = len(universe)
    if p_count > _STRICT_CONTRACTION_MAX_PATHS:
        raise SizeLimitError(
            f"{p_count} permitted paths; exhaustive pair check capped at "
            f"{_STRICT_CONTRACTION_MAX_PATHS}")
    heights = path_height(instance)
    hvec = [heights.of(p) for p in universe]
    total = 1 << p_count

    dmax = np.zeros(total, dtype=np.int16)
    for mask in range(1, total):
        low = mask & -mask
        rest = mask ^ low
        dmax[mask] = max(dmax[rest], hvec[low.bit_length() - 1])

    def to_mask(state):
        mask = 0
        for idx, p in enumerate(universe):
            if p in state:
                mask |= 1 << idx
        return mask

    def to_state(mask):
        return frozenset(
            universe[idx] for idx in range(p_count) if mask >> idx & 1)

    sig = np.empty(total, dtype=np.int32)
    for mask in range(total):
        sig[mask] = to_mask(sigma_step(instance, to_state(mask)))

    masks = np.arange(total, dtype=np.int32)
    dist = dmax[np.bitwise_xor.outer(masks, masks)]
    dist_sig = dmax[np.bitwise_xor.outer(sig, sig)]
    bad = np.argwhere((dist_sig >= dist) & (dist > 0))
    pairs = total * (total - 1) // 2
    if bad.size:
        upper = [(int(a), int(b)) for a, b in bad if a < b]
        a, b = min(upper) if upper else (int(bad[0][0]), int(bad[0][1]))
        return ContractionCheck(False, (to_state(a), to_state(b)), pairs)
    return ContractionCheck(True, None, pairs)


def _groups(instance: SppInstance, granularity: str):
    """Processor partition of the permitted paths for a granularity."""
    if granularity == PER_NODE:
        return tuple(
            (node, tuple(sorted_canonical(instance.permitted_map[node])))
            for node in instance.nodes)
    if granularity == PER_NEXTHOP:
        keyed: dict = {}
        for p in instance.all_permitted:
            key = (p[0], p[1]) if len(p) > 1 else (p[0],)
            keyed.setdefault(key, []).append(p)
        return tuple(
            (key, tuple(sorted_canonical(keyed[key])))
            for key in sorted_canonical(keyed))
    if granularity == PER_PATH:
        groups = []
        for p in instance.paths:
            member = (p,) if p in set(instance.all_permitted) else ()
            groups.append((p, member))
        return tuple(groups)
    raise PreconditionError(f"unknown granularity {granularity!r}")


def _group_domains(groups):
    domains = []
    for _, members in groups:
        subsets = []
        for size in range(len(members) + 1):
            for comb in itertools.combinations(members, size):
                subsets.append(frozenset(comb))
        subsets.sort(key=lambda s: (len(s), canonical_key(s)))
        domains.append(tuple(subsets))
    return tuple(domains)


def components_to_state(comps) -> frozenset:
    merged = set()
    for comp in comps:
        merged.update(comp)
    return frozenset(merged)


def state_to_components(instance: SppInstance, granularity: str,
                        state) -> tuple:
    state = validate_state(instance, state)
    groups = _groups(instance, granularity)
    return tuple(
        frozenset(p for p in members if p in state)
        for _, members in groups)


def decompose(instance: SppInstance, granularity: str) -> DecomposedOperator:
    """Split the selection round into one processor per group of paths.

    Component values are the subsets of the group actually held; their
    union reassembles the global state, and the assembled operator equals
    :func:`sigma_step` at every granularity.
    """
    groups = _groups(instance, granularity)
    domains = _group_domains(groups)
    member_sets = tuple(frozenset(members) for _, members in groups)

    def global_step(comps):
        out = sigma_step(instance, components_to_state(comps))
        return tuple(out & members for members in member_sets)

    return DecomposedOperator.from_global(domains, global_step)


def state_space(instance: SppInstance, granularity: str) -> ProductSpace:
    """Product ultrametric matching :func:`decompose`: per group, the
    distance between two held subsets is the top height in their symmetric
    difference."""
    groups = _groups(instance, granularity)
    domains = _group_domains(groups)
    heights = path_height(instance)
    scale = RadiusScale.numeric(h for _, h in heights.table)

    components = []
    for dom in domains:
        def dist(x, y):
            delta = x ^ y
            if not delta:
                return 0
            return max(heights.of(p) for p in delta)

        components.append(FiniteUltrametricSpace(dom, scale, dist))
    return ProductSpace(components)


@dataclass(frozen=True)
class AsyncRun:
    seed: int
    status: str
    converged_at: int | None
    final: frozenset


@dataclass(frozen=True)
class SolveResult:
    mode: str
    granularity: str
    status: str
    fixed_point: frozenset | None
    stable: bool | None
    trajectory: object = None
    cycle: tuple = ()
    runs: tuple[AsyncRun, ...] = ()


def solve(instance: SppInstance, mode: str = "sync", *,
          granularity: str = PER_NODE,
          start=None,
          max_steps: int | None = None,
          schedules: int = 100,
          seed: int = 0,
          horizon: int = 200,
          staleness: int = 5,
          window: int = 8,
          activation_prob: float = 0.5,
          force: bool = False) -> SolveResult:
    """Run the selection process to a stable assignment.

    Instances that are not strictly inflationary are refused unless
    ``force`` is set; forced runs may oscillate, which is reported as a
    cycle (sync) or horizon exhaustion (async).
    """
    report = check_strictly_inflationary(instance)
    if not report.ok and not force:
        arc, p = report.witness
        raise PreconditionError(
            "instance is not strictly inflationary "
            f"(arc {arc}, path {format_path(p)}); pass force=True for an "
            "exploratory run", witness=report.witness)

    op = decompose(instance, granularity)
    if start is None:
        start_state = frozenset()
    else:
        start_state = validate_state(instance, start)
    start_comps = state_to_components(instance, granularity, start_state)

    if mode == "sync":
        steps = max_steps if max_steps is not None else op.size() + 1
        traj = run_sync(op, start_comps, steps)
        if traj.status == "converged":
            fixed = components_to_state(traj.final)
            stable = sigma_step(instance, fixed) == fixed
            return SolveResult(mode, granularity, "converged", fixed, stable,
                               trajectory=traj)
        if traj.status == "cycle":
            cycle_states = tuple(
                components_to_state(s)
                for s in traj.states[traj.cycle_start:
                                     traj.cycle_start + traj.cycle_length])
            return SolveResult(mode, granularity, "cycle", None, None,
                               trajectory=traj, cycle=cycle_states)
        return SolveResult(mode, granularity, "horizon-exhausted", None, None,
                           trajectory=traj)

    if mode != "async":
        raise PreconditionError(f"unknown mode {mode!r}")
    runs = []
    finals = set()
    for s in range(schedules):
        schedule = sample_schedule(op.processors, horizon, seed + s,
                                   activation_prob=activation_prob,
                                   max_staleness=staleness,
                                   fairness_window=window)
        traj = run_async(op, start_comps, schedule)
        final = components_to_state(traj.final)
        runs.append(AsyncRun(seed + s, traj.status, traj.converged_at, final))
        finals.add((traj.status, final))
    all_converged = all(r.status == "converged" for r in runs)
    distinct_finals = {f for _, f in finals}
    if all_converged and len(distinct_finals) == 1:
        fixed = next(iter(distinct_finals))
        stable = sigma_step(instance, fixed) == fixed
        return SolveResult(mode, granularity, "converged", fixed, stable,
                           runs=tuple(runs))
    return SolveResult(mode, granularity, "horizon-exhausted", None, None,
                       runs=tuple(runs))
