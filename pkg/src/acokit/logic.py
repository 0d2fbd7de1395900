"""Ground normal logic programs with locally stratified negation.

Provides stratification discovery, the one-step consequence operator, the
stratum-depth ultrametric on interpretations, perfect-model computation
(cross-checked against an independent stratum-by-stratum evaluation), and
a per-atom processor decomposition for asynchronous runs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple

import networkx as nx

from .errors import PreconditionError, SemanticsError, SizeLimitError
from .iteration import DecomposedOperator
from .ultrametric import (
    ContractionReport,
    FiniteUltrametricSpace,
    ProductSpace,
    RadiusScale,
    classify_contraction,
)

_CLASSIFY_MAX_ATOMS = 12
_ATOM_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


class Literal(NamedTuple):
    atom: str
    positive: bool


@dataclass(frozen=True)
class Clause:
    head: str
    body: tuple[Literal, ...]

    @property
    def is_fact(self) -> bool:
        return not self.body


@dataclass(frozen=True)
class GroundProgram:
    """Clauses over a finite atom base; facts are clauses with empty body."""

    atoms: tuple[str, ...]
    clauses: tuple[Clause, ...]
    declared_strata: tuple[tuple[str, int], ...] | None = None

    @cached_property
    def atom_set(self) -> frozenset:
        return frozenset(self.atoms)

    @cached_property
    def clauses_by_head(self) -> dict:
        grouped: dict = {a: [] for a in self.atoms}
        for clause in self.clauses:
            grouped[clause.head].append(clause)
        return {a: tuple(cs) for a, cs in grouped.items()}


def program_from_clauses(clauses, extra_atoms=(),
                         declared_strata=None) -> GroundProgram:
    clauses = tuple(clauses)
    atoms = set(extra_atoms)
    for clause in clauses:
        atoms.add(clause.head)
        for lit in clause.body:
            atoms.add(lit.atom)
    for atom in atoms:
        if not _ATOM_RE.match(atom):
            raise ValueError(f"bad atom name {atom!r}")
    declared = None
    if declared_strata is not None:
        declared = tuple(sorted(
            (str(a), int(v)) for a, v in dict(declared_strata).items()))
        for a, v in declared:
            if a not in atoms:
                raise ValueError(f"strata pragma names unknown atom {a!r}")
            if v < 0:
                raise ValueError(f"stratum of {a!r} must be non-negative")
    return GroundProgram(tuple(sorted(atoms)), clauses, declared)


def parse_program(text: str) -> GroundProgram:
    """Parse the one-clause-per-line program format.

    ``head :- lit, not lit.`` with ``head.`` for facts; ``%`` starts a
    comment; an optional ``% strata: {"atom": level}`` pragma supplies the
    stratification explicitly.
    """
    clauses = []
    declared = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("%"):
            pragma = line[1:].strip()
            if pragma.startswith("strata:"):
                try:
                    declared = json.loads(pragma[len("strata:"):].strip())
                except json.JSONDecodeError as exc:
                    raise ValueError(
                        f"line {lineno}: bad strata pragma: {exc}") from None
            continue
        if not line.endswith("."):
            raise ValueError(f"line {lineno}: clause must end with a period")
        line = line[:-1].strip()
        if ":-" in line:
            head_text, body_text = line.split(":-", 1)
        else:
            head_text, body_text = line, ""
        head = head_text.strip()
        if not _ATOM_RE.match(head):
            raise ValueError(f"line {lineno}: bad head atom {head!r}")
        body = []
        if body_text.strip():
            for token in body_text.split(","):
                token = token.strip()
                positive = True
                if token.startswith("not "):
                    positive = False
                    token = token[4:].strip()
                if not _ATOM_RE.match(token):
                    raise ValueError(f"line {lineno}: bad body atom {token!r}")
                body.append(Literal(token, positive))
        clauses.append(Clause(head, tuple(body)))
    return program_from_clauses(clauses, declared_strata=declared)


def load_program(path) -> GroundProgram:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_program(fh.read())


@dataclass(frozen=True)
class Stratification:
    levels: tuple[tuple[str, int], ...]

    @cached_property
    def mapping(self) -> dict:
        return dict(self.levels)

    def of(self, atom: str) -> int:
        return self.mapping[atom]

    @property
    def max_level(self) -> int:
        return max((v for _, v in self.levels), default=0)


@dataclass(frozen=True)
class StratificationResult:
    stratification: Stratification | None
    witness: tuple | None = None  # atom cycle through a negative edge

    @property
    def ok(self) -> bool:
        return self.stratification is not None


def _check_levels(program: GroundProgram, levels: dict):
    for clause in program.clauses:
        head_level = levels[clause.head]
        for lit in clause.body:
            if lit.positive and head_level < levels[lit.atom]:
                return clause, lit
            if not lit.positive and head_level <= levels[lit.atom]:
                return clause, lit
    return None


def find_stratification(program: GroundProgram) -> StratificationResult:
    """Assign minimal strata, or report a negative dependency cycle.

    Positive body atoms may share the head's stratum; negated ones must sit
    strictly below.  When the program declares strata they are validated
    and used as-is.
    """
    if program.declared_strata is not None:
        levels = dict(program.declared_strata)
        missing = [a for a in program.atoms if a not in levels]
        if missing:
            raise ValueError(f"strata pragma misses atom {missing[0]!r}")
        bad = _check_levels(program, levels)
        if bad is not None:
            clause, lit = bad
            raise ValueError(
                f"declared strata violate clause for {clause.head!r} "
                f"at literal {lit.atom!r}")
        return StratificationResult(
            Stratification(tuple(sorted(levels.items()))))

    graph = nx.DiGraph()
    graph.add_nodes_from(program.atoms)
    for clause in program.clauses:
        for lit in clause.body:
            if graph.has_edge(lit.atom, clause.head):
                if not lit.positive:
                    graph[lit.atom][clause.head]["negative"] = True
            else:
                graph.add_edge(lit.atom, clause.head,
                               negative=not lit.positive)

    component_of = {}
    members: list[tuple[str, ...]] = []
    for scc in nx.strongly_connected_components(graph):
        idx = len(members)
        members.append(tuple(sorted(scc)))
        for atom in scc:
            component_of[atom] = idx

    for b, h, data in graph.edges(data=True):
        if data["negative"] and component_of[b] == component_of[h]:
            sub = graph.subgraph(members[component_of[b]])
            back = nx.shortest_path(sub, h, b)
            return StratificationResult(None, tuple(back) + (h,))

    condensed = nx.DiGraph()
    condensed.add_nodes_from(range(len(members)))
    bump: dict = {}
    for b, h, data in graph.edges(data=True):
        cb, ch = component_of[b], component_of[h]
        if cb == ch:
            continue
        condensed.add_edge(cb, ch)
        bump[(cb, ch)] = bump.get((cb, ch), False) or data["negative"]

    level = {c: 0 for c in condensed.nodes}
    for c in nx.topological_sort(condensed):
        for pred in condensed.predecessors(c):
            need = level[pred] + (1 if bump[(pred, c)] else 0)
            level[c] = max(level[c], need)

    atom_levels = tuple(sorted(
        (atom, level[component_of[atom]]) for atom in program.atoms))
    return StratificationResult(Stratification(atom_levels))


def immediate_consequence(program: GroundProgram, interp) -> frozenset:
    """Heads of clauses whose bodies the interpretation satisfies."""
    interp = frozenset(interp)
    out = set()
    for clause in program.clauses:
        if clause.head in out:
            continue
        ok = True
        for lit in clause.body:
            holds = lit.atom in interp
            if holds != lit.positive:
                ok = False
                break
        if ok:
            out.add(clause.head)
    return frozenset(out)


def interpretation_distance(strat: Stratification, left, right, *,
                            literal: bool = False):
    """Distance between interpretations from the shallowest disagreement.

    Default: ``2**-s`` where ``s`` is the least stratum in the symmetric
    difference, so agreement on deeper strata means closer; with
    ``literal=True`` returns ``s`` itself (kept for experimentation, under
    it deeper agreement means *farther*).
    """
    left = frozenset(left)
    right = frozenset(right)
    delta = left ^ right
    if not delta:
        return 0 if literal else Fraction(0)
    s = min(strat.of(a) for a in delta)
    return s if literal else Fraction(1, 2 ** s)


def interpretation_scale(strat: Stratification) -> RadiusScale:
    top = strat.max_level
    return RadiusScale(tuple(
        [Fraction(0)] + [Fraction(1, 2 ** s) for s in range(top, -1, -1)]))


def interpretation_space(program: GroundProgram,
                         strat: Stratification) -> ProductSpace:
    """Per-atom product space whose max-distance equals
    :func:`interpretation_distance` on the full interpretation lattice."""
    scale = interpretation_scale(strat)
    components = []
    for atom in program.atoms:
        radius = Fraction(1, 2 ** strat.of(atom))
        components.append(FiniteUltrametricSpace(
            (False, True), scale,
            lambda m, n, r=radius: Fraction(0) if m == n else r))
    return ProductSpace(components)


def interp_to_tuple(program: GroundProgram, interp) -> tuple:
    interp = frozenset(interp)
    return tuple(a in interp for a in program.atoms)


def tuple_to_interp(program: GroundProgram, bits) -> frozenset:
    return frozenset(a for a, b in zip(program.atoms, bits) if b)


def perfect_model_by_strata(program: GroundProgram,
                            strat: Stratification) -> frozenset:
    """Independent oracle: close each stratum in ascending order.

    Within a stratum only positive same-level dependencies remain, so a
    monotone fixpoint per level suffices; lower levels are already final.
    """
    model: set = set()
    for lvl in sorted({v for _, v in strat.levels}):
        level_clauses = [
            c for c in program.clauses if strat.of(c.head) == lvl]
        changed = True
        while changed:
            changed = False
            for clause in level_clauses:
                if clause.head in model:
                    continue
                ok = True
                for lit in clause.body:
                    holds = lit.atom in model
                    if holds != lit.positive:
                        ok = False
                        break
                if ok:
                    model.add(clause.head)
                    changed = True
    return frozenset(model)


@dataclass(frozen=True)
class PerfectModelResult:
    model: frozenset | None
    trajectory: tuple[frozenset, ...]
    status: str  # "converged" | "cycle"
    stratification: Stratification

    @property
    def steps(self) -> int:
        return len(self.trajectory) - 1


def compute_perfect_model(program: GroundProgram) -> PerfectModelResult:
    """Iterate the consequence operator from the empty interpretation.

    The fixed point is cross-checked against the stratum-by-stratum
    oracle; disagreement raises :class:`SemanticsError` since it means a
    bug, not bad input.
    """
    result = find_stratification(program)
    if not result.ok:
        raise PreconditionError(
            f"program is not locally stratified; negative cycle "
            f"{' -> '.join(result.witness)}", witness=result.witness)
    strat = result.stratification

    current = frozenset()
    trajectory = [current]
    seen = {current: 0}
    for step in range(1, 2 ** len(program.atoms) + 2):
        nxt = immediate_consequence(program, current)
        trajectory.append(nxt)
        if nxt == current:
            oracle = perfect_model_by_strata(program, strat)
            if oracle != nxt:
                raise SemanticsError(
                    f"iterated fixed point {sorted(nxt)} disagrees with the "
                    f"stratified oracle {sorted(oracle)}")
            return PerfectModelResult(nxt, tuple(trajectory), "converged", strat)
        if nxt in seen:
            return PerfectModelResult(None, tuple(trajectory), "cycle", strat)
        seen[nxt] = step
        current = nxt
    return PerfectModelResult(None, tuple(trajectory), "cycle", strat)


def classify_tp_contraction(program: GroundProgram) -> ContractionReport:
    """Classify the consequence operator on the interpretation space.

    The verdict is whatever the exhaustive pair check finds; nothing is
    assumed about it.  Requires a stratification and a desk-scale base.
    """
    if len(program.atoms) > _CLASSIFY_MAX_ATOMS:
        raise SizeLimitError(
            f"{len(program.atoms)} atoms; classification enumerates "
            f"2**n interpretations and is capped at {_CLASSIFY_MAX_ATOMS}")
    result = find_stratification(program)
    if not result.ok:
        raise PreconditionError(
            "program is not locally stratified", witness=result.witness)
    space = interpretation_space(program, result.stratification)

    def step(bits):
        return interp_to_tuple(
            program,
            immediate_consequence(program, tuple_to_interp(program, bits)))

    return classify_contraction(space, step)


def decompose_program(program: GroundProgram) -> DecomposedOperator:
    """One boolean processor per atom of the base."""
    if not program.atoms:
        raise PreconditionError("program has an empty atom base")
    domains = tuple((False, True) for _ in program.atoms)

    def global_step(bits):
        return interp_to_tuple(
            program,
            immediate_consequence(program, tuple_to_interp(program, bits)))

    return DecomposedOperator.from_global(domains, global_step)
