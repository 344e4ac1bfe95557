"""ILP benchmark tasks: data model, generators, file format, reference programs.

Each generator produces an :class:`IlpTask` whose ground truth is computed
by direct enumeration (transitive closures, degree counts, arithmetic),
independently of the forward-chaining evaluator.  The reference solution
programs are definite-clause programs that label every positive 1 and
every negative 0 on generated instances; tests cross-check the two routes.

Arithmetic tasks (predecessor, less_than, even_odd, even_succ2, buzz,
fizz) are deterministic functions of the constant count and ignore the
seed.  Graph and family tasks are random: structures are re-drawn, a
bounded number of times, until the positive set is non-empty.
"""

from __future__ import annotations

import json
import random
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

from .logic import (
    FALSE_NAME,
    TRUE_NAME,
    GroundAtom,
    PredicateSymbol,
    SymbolicProgram,
    false_symbol,
    parse_atom,
    parse_clause,
    true_symbol,
)

TASK_NAMES = (
    "predecessor",
    "undirected_edge",
    "less_than",
    "member",
    "connectedness",
    "son",
    "grandparent",
    "adjacent_to_red",
    "two_children",
    "relatedness",
    "cyclic",
    "graph_coloring",
    "length",
    "even_odd",
    "even_succ2",
    "buzz",
    "fizz",
)

DETERMINISTIC_TASKS = frozenset(
    {"predecessor", "less_than", "even_odd", "even_succ2", "buzz", "fizz"}
)

MIN_CONSTANTS = {
    "predecessor": 2,
    "undirected_edge": 2,
    "less_than": 2,
    "member": 3,
    "connectedness": 2,
    "son": 3,
    "grandparent": 5,
    "adjacent_to_red": 3,
    "two_children": 3,
    "relatedness": 2,
    "cyclic": 2,
    "graph_coloring": 5,
    "length": 3,
    "even_odd": 2,
    "even_succ2": 2,
    "buzz": 2,
    "fizz": 2,
}

_MAX_RETRIES = 200


class TaskFormatError(ValueError):
    """A task file or task definition violates the schema."""


class GenerationError(RuntimeError):
    """A random generator failed to produce a usable instance."""


@dataclass(frozen=True)
class TaskSpec:
    """What to generate: task name, domain size, randomness seed."""

    name: str
    num_constants: int
    seed: int = 0


@dataclass(frozen=True)
class IlpTask:
    name: str
    constants: tuple[str, ...]
    background: frozenset[GroundAtom]
    positives: frozenset[GroundAtom]
    negatives: frozenset[GroundAtom]
    target: PredicateSymbol
    input_predicates: tuple[PredicateSymbol, ...]

    def validate(self) -> None:
        if self.positives & self.negatives:
            raise TaskFormatError("positive and negative example sets overlap")
        const_set = set(self.constants)
        input_names = {p.name for p in self.input_predicates}
        if TRUE_NAME not in input_names or FALSE_NAME not in input_names:
            raise TaskFormatError("input predicates must include true and false")
        for atom in self.background:
            if atom.predicate.name not in input_names:
                raise TaskFormatError(f"background atom over unknown predicate: {atom}")
            for c in atom.args:
                if c not in const_set:
                    raise TaskFormatError(f"background atom over unknown constant: {atom}")
        for atom in self.positives | self.negatives:
            if atom.predicate != self.target:
                raise TaskFormatError(f"example atom is not over the target predicate: {atom}")
            for c in atom.args:
                if c not in const_set:
                    raise TaskFormatError(f"example atom over unknown constant: {atom}")

    @property
    def predicates_by_name(self) -> dict[str, PredicateSymbol]:
        out = {p.name: p for p in self.input_predicates}
        out[self.target.name] = self.target
        return out

    def target_groundings(self) -> list[GroundAtom]:
        if self.target.arity == 1:
            return [GroundAtom(self.target, (c,)) for c in self.constants]
        return [
            GroundAtom(self.target, (a, b))
            for a in self.constants
            for b in self.constants
        ]

    def truth(self) -> dict[GroundAtom, float]:
        """Closed-world ground truth over the evaluated atom set (P and N)."""
        out = {a: 1.0 for a in self.positives}
        out.update({a: 0.0 for a in self.negatives})
        return out


def _letters(k: int, exclude: frozenset[str] = frozenset()) -> list[str]:
    pool = [c for c in "abcdefghijklmnopqrstuvwxyz" if c not in exclude]
    if k <= len(pool):
        return pool[:k]
    return pool + [f"n{i}" for i in range(k - len(pool))]


def _numbers(k: int) -> list[str]:
    return [str(i) for i in range(k)]


def _symbols(*defs: tuple[str, int]) -> tuple[PredicateSymbol, ...]:
    return (true_symbol(), false_symbol()) + tuple(
        PredicateSymbol(name, arity) for name, arity in defs
    )


def _complement(target: PredicateSymbol, constants, positives) -> frozenset[GroundAtom]:
    if target.arity == 1:
        universe = {GroundAtom(target, (c,)) for c in constants}
    else:
        universe = {GroundAtom(target, (a, b)) for a in constants for b in constants}
    return frozenset(universe - set(positives))


def _transitive_closure(pairs: set[tuple[str, str]]) -> set[tuple[str, str]]:
    closure = set(pairs)
    changed = True
    while changed:
        changed = False
        for (a, b) in list(closure):
            for (c, d) in list(closure):
                if b == c and (a, d) not in closure:
                    closure.add((a, d))
                    changed = True
    return closure


def _retrying(build, rng: random.Random):
    for _ in range(_MAX_RETRIES):
        result = build(rng)
        if result is not None:
            return result
    raise GenerationError("could not generate a non-trivial instance")


# ---------------------------------------------------------------------------
# Arithmetic tasks
# ---------------------------------------------------------------------------

def _succ_background(consts, zero, succ):
    facts = {GroundAtom(zero, (consts[0],))}
    facts |= {GroundAtom(succ, (consts[i], consts[i + 1])) for i in range(len(consts) - 1)}
    return facts


def _gen_predecessor(n: int, rng) -> IlpTask:
    consts = _numbers(n)
    zero, succ = PredicateSymbol("zero", 1), PredicateSymbol("succ", 2)
    target = PredicateSymbol("target", 2, kind="target")
    positives = frozenset(
        GroundAtom(target, (consts[i + 1], consts[i])) for i in range(n - 1)
    )
    return IlpTask(
        name="predecessor",
        constants=tuple(consts),
        background=frozenset(_succ_background(consts, zero, succ)),
        positives=positives,
        negatives=_complement(target, consts, positives),
        target=target,
        input_predicates=_symbols(("zero", 1), ("succ", 2)),
    )


def _gen_less_than(n: int, rng) -> IlpTask:
    consts = _numbers(n)
    zero, succ = PredicateSymbol("zero", 1), PredicateSymbol("succ", 2)
    target = PredicateSymbol("target", 2, kind="target")
    positives = frozenset(
        GroundAtom(target, (consts[i], consts[j]))
        for i in range(n)
        for j in range(n)
        if i < j
    )
    return IlpTask(
        name="less_than",
        constants=tuple(consts),
        background=frozenset(_succ_background(consts, zero, succ)),
        positives=positives,
        negatives=_complement(target, consts, positives),
        target=target,
        input_predicates=_symbols(("zero", 1), ("succ", 2)),
    )


def _gen_even(name: str, n: int) -> IlpTask:
    consts = _numbers(n)
    zero, succ = PredicateSymbol("zero", 1), PredicateSymbol("succ", 2)
    target = PredicateSymbol("target", 1, kind="target")
    positives = frozenset(GroundAtom(target, (consts[i],)) for i in range(0, n, 2))
    return IlpTask(
        name=name,
        constants=tuple(consts),
        background=frozenset(_succ_background(consts, zero, succ)),
        positives=positives,
        negatives=_complement(target, consts, positives),
        target=target,
        input_predicates=_symbols(("zero", 1), ("succ", 2)),
    )


def _gen_modulo(name: str, n: int, modulus: int) -> IlpTask:
    consts = _numbers(n)
    zero, succ = PredicateSymbol("zero", 1), PredicateSymbol("succ", 2)
    target = PredicateSymbol("target", 1, kind="target")
    facts = _succ_background(consts, zero, succ)
    preds = [("zero", 1), ("succ", 2)]
    if name == "buzz":
        p1, p2 = PredicateSymbol("pred1", 2), PredicateSymbol("pred2", 2)
        facts |= {GroundAtom(p1, (consts[i], consts[i + 3])) for i in range(n - 3)}
        facts |= {GroundAtom(p2, (consts[i], consts[i + 2])) for i in range(n - 2)}
        preds += [("pred1", 2), ("pred2", 2)]
    positives = frozenset(GroundAtom(target, (consts[i],)) for i in range(0, n, modulus))
    return IlpTask(
        name=name,
        constants=tuple(consts),
        background=frozenset(facts),
        positives=positives,
        negatives=_complement(target, consts, positives),
        target=target,
        input_predicates=_symbols(*preds),
    )


# ---------------------------------------------------------------------------
# Graph tasks
# ---------------------------------------------------------------------------

def _random_digraph(rng, nodes, p):
    return {
        (a, b)
        for a in nodes
        for b in nodes
        if a != b and rng.random() < p
    }


def _random_symmetric(rng, nodes, p):
    edges = set()
    for i, a in enumerate(nodes):
        for b in nodes[i + 1 :]:
            if rng.random() < p:
                edges.add((a, b))
                edges.add((b, a))
    return edges


def _edge_task(name, consts, edges, positives, target, extra_preds=(), extra_facts=()):
    edge = PredicateSymbol("edge", 2)
    background = {GroundAtom(edge, e) for e in edges} | set(extra_facts)
    return IlpTask(
        name=name,
        constants=tuple(consts),
        background=frozenset(background),
        positives=frozenset(positives),
        negatives=_complement(target, consts, positives),
        target=target,
        input_predicates=_symbols(("edge", 2), *extra_preds),
    )


def undirected_edge_task(nodes: list[str], edges: set[tuple[str, str]]) -> IlpTask:
    """Undirected-edge task over an explicit directed edge set."""
    target = PredicateSymbol("target", 2, kind="target")
    positives = {GroundAtom(target, (a, b)) for a, b in edges} | {
        GroundAtom(target, (b, a)) for a, b in edges
    }
    return _edge_task("undirected_edge", nodes, edges, positives, target)


def _gen_undirected_edge(n: int, rng) -> IlpTask:
    nodes = _letters(n)

    def build(rng):
        edges = _random_digraph(rng, nodes, 0.3)
        return undirected_edge_task(nodes, edges) if edges else None

    return _retrying(build, rng)


def connectedness_task(nodes: list[str], edges: set[tuple[str, str]]) -> IlpTask:
    target = PredicateSymbol("target", 2, kind="target")
    positives = {GroundAtom(target, pair) for pair in _transitive_closure(edges)}
    return _edge_task("connectedness", nodes, edges, positives, target)


def _gen_connectedness(n: int, rng) -> IlpTask:
    nodes = _letters(n)

    def build(rng):
        edges = _random_digraph(rng, nodes, 0.25)
        return connectedness_task(nodes, edges) if edges else None

    return _retrying(build, rng)


def _gen_cyclic(n: int, rng) -> IlpTask:
    nodes = _letters(n)
    target = PredicateSymbol("target", 1, kind="target")

    def build(rng):
        edges = _random_digraph(rng, nodes, 0.3)
        closure = _transitive_closure(edges)
        positives = {GroundAtom(target, (a,)) for a in nodes if (a, a) in closure}
        if not positives:
            return None
        return _edge_task("cyclic", nodes, edges, positives, target)

    return _retrying(build, rng)


def _gen_two_children(n: int, rng) -> IlpTask:
    nodes = _letters(n)
    target = PredicateSymbol("target", 1, kind="target")
    neq = PredicateSymbol("neq", 2)

    def build(rng):
        edges = _random_symmetric(rng, nodes, 0.35)
        degree = {a: 0 for a in nodes}
        for a, _ in edges:
            degree[a] += 1
        positives = {GroundAtom(target, (a,)) for a in nodes if degree[a] >= 2}
        if not positives:
            return None
        # a degree-one node separates the concept from "has a neighbour"
        if not any(degree[a] == 1 for a in nodes):
            return None
        neq_facts = {
            GroundAtom(neq, (a, b)) for a in nodes for b in nodes if a != b
        }
        return _edge_task(
            "two_children", nodes, edges, positives, target,
            extra_preds=(("neq", 2),), extra_facts=neq_facts,
        )

    return _retrying(build, rng)


_RED, _GREEN = "p", "q"


def _gen_adjacent_to_red(n: int, rng) -> IlpTask:
    # The constant budget splits into graph nodes and one colour
    # constant per red node; only red nodes carry colour facts
    # (colour(node, c) with red(c)), mirroring the benchmark's data.
    n_red = max(1, n - round(n * 5 / 7))
    n_nodes = n - n_red
    colours = [f"c{i}" for i in range(1, n_red + 1)]
    nodes = _letters(n_nodes)
    consts = nodes + colours
    target = PredicateSymbol("target", 1, kind="target")
    colour, red = PredicateSymbol("colour", 2), PredicateSymbol("red", 1)

    def build(rng):
        edges = _random_symmetric(rng, nodes, 0.4)
        reds = rng.sample(nodes, n_red)
        positives = {
            GroundAtom(target, (a,))
            for a in nodes
            if any((a, b) in edges and b in reds for b in nodes)
        }
        if not positives:
            return None
        # the instance must separate the concept from "has any
        # neighbour": some node needs neighbours but no red one
        with_neighbor = {a for a, _ in edges}
        if not (with_neighbor - {a.args[0] for a in positives}):
            return None
        facts = {
            GroundAtom(colour, (node, c)) for node, c in zip(reds, colours)
        }
        facts |= {GroundAtom(red, (c,)) for c in colours}
        return _edge_task(
            "adjacent_to_red", consts, edges, positives, target,
            extra_preds=(("colour", 2), ("red", 1)), extra_facts=facts,
        )

    return _retrying(build, rng)


def _gen_graph_coloring(n: int, rng) -> IlpTask:
    nodes = _letters(n - 2, exclude=frozenset({_RED, _GREEN}))
    consts = nodes + [_RED, _GREEN]
    target = PredicateSymbol("target", 2, kind="target")
    colour = PredicateSymbol("colour", 2)

    def build(rng):
        edges = _random_digraph(rng, nodes, 0.35)
        shade = {a: (_RED if rng.random() < 0.5 else _GREEN) for a in nodes}
        positives = {
            GroundAtom(target, (a, b)) for a, b in edges if shade[a] == shade[b]
        }
        if not positives:
            return None
        # some edge must join differently coloured nodes, or "edge"
        # alone explains the instance
        if all(shade[a] == shade[b] for a, b in edges):
            return None
        facts = {GroundAtom(colour, (a, shade[a])) for a in nodes}
        return _edge_task(
            "graph_coloring", consts, edges, positives, target,
            extra_preds=(("colour", 2),), extra_facts=facts,
        )

    return _retrying(build, rng)


# ---------------------------------------------------------------------------
# Family tasks
# ---------------------------------------------------------------------------

def _gen_son(n: int, rng) -> IlpTask:
    consts = _letters(n)
    target = PredicateSymbol("target", 2, kind="target")
    father = PredicateSymbol("father", 2)
    brother = PredicateSymbol("brother", 2)
    sister = PredicateSymbol("sister", 2)

    def build(rng):
        pool = consts[:]
        rng.shuffle(pool)
        families = []
        while len(pool) >= 3:
            size = min(rng.randint(2, 3), len(pool) - 1)
            head, pool = pool[0], pool[1:]
            children, pool = pool[:size], pool[size:]
            if len(pool) < 3:
                children += pool
                pool = []
            families.append((head, children))
        if not families:
            return None
        male = {c: rng.random() < 0.5 for f, cs in families for c in cs}
        # need a son, and a daughter so that "child of" alone over-derives
        if not any(male.values()) or all(male.values()):
            return None
        facts, positives = set(), set()
        for head, children in families:
            for c in children:
                facts.add(GroundAtom(father, (head, c)))
                if male[c]:
                    positives.add(GroundAtom(target, (c, head)))
                for s in children:
                    if s != c:
                        facts.add(GroundAtom(brother if male[c] else sister, (c, s)))
        if not positives:
            return None
        return IlpTask(
            name="son",
            constants=tuple(consts),
            background=frozenset(facts),
            positives=frozenset(positives),
            negatives=_complement(target, consts, positives),
            target=target,
            input_predicates=_symbols(("father", 2), ("brother", 2), ("sister", 2)),
        )

    return _retrying(build, rng)


def _gen_grandparent(n: int, rng) -> IlpTask:
    consts = _letters(n)
    target = PredicateSymbol("target", 2, kind="target")
    father = PredicateSymbol("father", 2)
    mother = PredicateSymbol("mother", 2)

    def build(rng):
        pool = consts[:]
        rng.shuffle(pool)
        k0 = max(2, n // 3)
        k1 = max(2, (n - k0) // 2)
        g0, g1, g2 = pool[:k0], pool[k0 : k0 + k1], pool[k0 + k1 :]
        if not g2:
            return None

        # Parents are optional per child, so single-gender grandparent
        # chains occur and partial programs (e.g. father-then-mother
        # only) mislabel some pair.
        male = {x: rng.random() < 0.5 for x in consts}
        facts, parent_of = set(), set()
        for child, gen in [(c, g0) for c in g1] + [(c, g1) for c in g2]:
            males = [p for p in gen if male[p]]
            females = [p for p in gen if not male[p]]
            if males and rng.random() < 0.8:
                f = rng.choice(males)
                facts.add(GroundAtom(father, (f, child)))
                parent_of.add((f, child))
            if females and rng.random() < 0.8:
                m = rng.choice(females)
                facts.add(GroundAtom(mother, (m, child)))
                parent_of.add((m, child))
        positives = {
            GroundAtom(target, (g, c))
            for g, p in parent_of
            for p2, c in parent_of
            if p == p2
        }
        if not positives:
            return None
        return IlpTask(
            name="grandparent",
            constants=tuple(consts),
            background=frozenset(facts),
            positives=frozenset(positives),
            negatives=_complement(target, consts, positives),
            target=target,
            input_predicates=_symbols(("father", 2), ("mother", 2)),
        )

    return _retrying(build, rng)


def _gen_relatedness(n: int, rng) -> IlpTask:
    consts = _letters(n)
    target = PredicateSymbol("target", 2, kind="target")
    parent = PredicateSymbol("parent", 2)

    def build(rng):
        order = consts[:]
        rng.shuffle(order)
        links = set()
        for i, child in enumerate(order[1:], start=1):
            if rng.random() < 0.75:
                links.add((rng.choice(order[:i]), child))
        if not links:
            return None
        sym = links | {(b, a) for a, b in links}
        closure = _transitive_closure(sym)
        positives = {GroundAtom(target, pair) for pair in closure}
        return IlpTask(
            name="relatedness",
            constants=tuple(consts),
            background=frozenset(GroundAtom(parent, l) for l in links),
            positives=frozenset(positives),
            negatives=_complement(target, consts, positives),
            target=target,
            input_predicates=_symbols(("parent", 2)),
        )

    return _retrying(build, rng)


# ---------------------------------------------------------------------------
# List tasks
# ---------------------------------------------------------------------------

def _list_chain(n: int):
    """Shared list layout: L nodes for one list, numbers 0..n-1-L, nil = 0."""
    length = (n - 1) // 2
    numbers = _numbers(n - length)
    nodes = [f"l{i}" for i in range(1, length + 1)]
    cons = PredicateSymbol("cons", 2)
    # cons(tail, list): node l_i holds the suffix starting at position i.
    cons_facts = {
        GroundAtom(cons, (nodes[i + 1], nodes[i])) for i in range(length - 1)
    }
    cons_facts.add(GroundAtom(cons, ("0", nodes[length - 1])))
    return length, numbers, nodes, cons_facts


def _gen_member(n: int, rng) -> IlpTask:
    length, numbers, nodes, cons_facts = _list_chain(n)
    consts = numbers + nodes
    target = PredicateSymbol("target", 2, kind="target")
    value = PredicateSymbol("value", 2)
    max_val = len(numbers) - 1
    values = [str(rng.randint(1, max_val)) for _ in range(length)]
    facts = set(cons_facts)
    facts |= {GroundAtom(value, (values[i], nodes[i])) for i in range(length)}
    positives = {
        GroundAtom(target, (values[j], nodes[i]))
        for i in range(length)
        for j in range(i, length)
    }
    return IlpTask(
        name="member",
        constants=tuple(consts),
        background=frozenset(facts),
        positives=frozenset(positives),
        negatives=_complement(target, consts, positives),
        target=target,
        input_predicates=_symbols(("cons", 2), ("value", 2)),
    )


def _gen_length(n: int, rng) -> IlpTask:
    length, numbers, nodes, cons_facts = _list_chain(n)
    consts = numbers + nodes
    target = PredicateSymbol("target", 2, kind="target")
    zero, succ = PredicateSymbol("zero", 1), PredicateSymbol("succ", 2)
    facts = set(cons_facts)
    facts.add(GroundAtom(zero, ("0",)))
    facts |= {
        GroundAtom(succ, (numbers[i], numbers[i + 1])) for i in range(len(numbers) - 1)
    }
    # Node l_i holds the suffix of length L-i+1; the nil node 0 has length 0.
    positives = {GroundAtom(target, (nodes[i], str(length - i))) for i in range(length)}
    positives.add(GroundAtom(target, ("0", "0")))
    return IlpTask(
        name="length",
        constants=tuple(consts),
        background=frozenset(facts),
        positives=frozenset(positives),
        negatives=_complement(target, consts, positives),
        target=target,
        input_predicates=_symbols(("cons", 2), ("zero", 1), ("succ", 2)),
    )


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

_GENERATORS = {
    "predecessor": lambda n, rng: _gen_predecessor(n, rng),
    "undirected_edge": _gen_undirected_edge,
    "less_than": lambda n, rng: _gen_less_than(n, rng),
    "member": _gen_member,
    "connectedness": _gen_connectedness,
    "son": _gen_son,
    "grandparent": _gen_grandparent,
    "adjacent_to_red": _gen_adjacent_to_red,
    "two_children": _gen_two_children,
    "relatedness": _gen_relatedness,
    "cyclic": _gen_cyclic,
    "graph_coloring": _gen_graph_coloring,
    "length": _gen_length,
    "even_odd": lambda n, rng: _gen_even("even_odd", n),
    "even_succ2": lambda n, rng: _gen_even("even_succ2", n),
    "buzz": lambda n, rng: _gen_modulo("buzz", n, 5),
    "fizz": lambda n, rng: _gen_modulo("fizz", n, 3),
}


def generate_task(spec: TaskSpec, negative_fraction: float = 1.0) -> IlpTask:
    """Build the task described by ``spec``.

    Deterministic tasks ignore the seed.  ``negative_fraction`` < 1
    down-samples the complement negative set (kept deterministic under
    the spec seed).
    """
    if spec.name not in _GENERATORS:
        raise ValueError(f"unknown task {spec.name!r}; expected one of {', '.join(TASK_NAMES)}")
    minimum = MIN_CONSTANTS[spec.name]
    if spec.num_constants < minimum:
        raise ValueError(
            f"{spec.name} needs at least {minimum} constants, got {spec.num_constants}"
        )
    seed = 0 if spec.name in DETERMINISTIC_TASKS else spec.seed
    rng = random.Random(zlib.crc32(spec.name.encode()) ^ (seed * 0x9E3779B1))
    task = _GENERATORS[spec.name](spec.num_constants, rng)
    if negative_fraction < 1.0:
        kept = sorted(task.negatives)
        kept = [a for a in kept if rng.random() < negative_fraction]
        task = replace(task, negatives=frozenset(kept))
    task.validate()
    return task


def add_equal_predicate(task: IlpTask) -> IlpTask:
    """Optional builtin: adds ``equal/2`` with the identity relation."""
    equal = PredicateSymbol("equal", 2)
    facts = {GroundAtom(equal, (c, c)) for c in task.constants}
    return replace(
        task,
        background=task.background | facts,
        input_predicates=task.input_predicates + (equal,),
    )


# ---------------------------------------------------------------------------
# Task files
# ---------------------------------------------------------------------------

def task_to_dict(task: IlpTask) -> dict:
    return {
        "name": task.name,
        "constants": list(task.constants),
        "predicates": [
            {"name": p.name, "arity": p.arity} for p in task.input_predicates
        ],
        "background": sorted(str(a) for a in task.background),
        "positives": sorted(str(a) for a in task.positives),
        "negatives": sorted(str(a) for a in task.negatives),
        "target": {"name": task.target.name, "arity": task.target.arity},
    }


def task_from_dict(data: dict) -> IlpTask:
    try:
        predicates = tuple(
            PredicateSymbol(p["name"], p["arity"]) for p in data["predicates"]
        )
        target = PredicateSymbol(
            data["target"]["name"], data["target"]["arity"], kind="target"
        )
        constants = tuple(str(c) for c in data["constants"])
    except (KeyError, TypeError, ValueError) as exc:
        raise TaskFormatError(f"malformed task file: {exc}") from exc

    by_name = {p.name: p for p in predicates}
    by_name[target.name] = target

    def atoms(field_name: str, expected: PredicateSymbol | None = None):
        out = set()
        for text in data.get(field_name, []):
            name, args = parse_atom(text)
            if name not in by_name:
                raise TaskFormatError(f"{field_name}: unknown predicate in {text!r}")
            pred = by_name[name] if expected is None else expected
            if expected is not None and name != expected.name:
                raise TaskFormatError(f"{field_name}: expected target atoms, got {text!r}")
            if len(args) != pred.arity:
                raise TaskFormatError(f"{field_name}: wrong arity in {text!r}")
            out.add(GroundAtom(pred, args))
        return frozenset(out)

    task = IlpTask(
        name=data.get("name", "custom"),
        constants=constants,
        background=atoms("background"),
        positives=atoms("positives", target),
        negatives=atoms("negatives", target),
        target=target,
        input_predicates=predicates,
    )
    task.validate()
    return task


def save_task(task: IlpTask, path: str | Path) -> None:
    Path(path).write_text(json.dumps(task_to_dict(task), indent=2, sort_keys=True) + "\n")


def load_task(path: str | Path) -> IlpTask:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TaskFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return task_from_dict(data)


# ---------------------------------------------------------------------------
# Reference solutions
# ---------------------------------------------------------------------------

# Clause text for each solvable task.  These are hand-checked programs in
# the two-body-atom fragment that reproduce the generated ground truth
# exactly (tests enforce this per task).
_SOLUTIONS: dict[str, tuple[tuple[tuple[str, int], ...], tuple[str, ...]]] = {
    "predecessor": ((), ("target(X,Y) :- succ(Y,X).",)),
    "undirected_edge": (
        (),
        ("target(X,Y) :- edge(X,Y).", "target(X,Y) :- edge(Y,X)."),
    ),
    "less_than": (
        (),
        ("target(X,Y) :- succ(X,Y).", "target(X,Y) :- target(X,Z), target(Z,Y)."),
    ),
    "member": (
        (),
        ("target(X,Y) :- value(X,Y).", "target(X,Y) :- target(X,Z), cons(Z,Y)."),
    ),
    "connectedness": (
        (),
        ("target(X,Y) :- edge(X,Y).", "target(X,Y) :- target(X,Z), target(Z,Y)."),
    ),
    "son": (
        (("aux1", 1),),
        (
            "aux1(X) :- father(X,Z).",
            "aux1(X) :- brother(X,T).",
            "target(X,Y) :- aux1(X), father(Y,X).",
        ),
    ),
    "grandparent": (
        (("aux1", 2),),
        (
            "aux1(X,Y) :- mother(X,Y).",
            "aux1(X,Y) :- father(X,Y).",
            "target(X,Y) :- aux1(X,Z), aux1(Z,Y).",
        ),
    ),
    "adjacent_to_red": (
        (("aux1", 1),),
        ("aux1(X) :- colour(X,Z), red(Z).", "target(X) :- edge(X,Z), aux1(Z)."),
    ),
    "two_children": (
        (("aux1", 2),),
        ("aux1(X,Y) :- edge(X,Z), neq(Z,Y).", "target(X) :- aux1(X,Z), edge(Z,X)."),
    ),
    "relatedness": (
        (("aux1", 2),),
        (
            "aux1(X,Y) :- parent(X,Y).",
            "aux1(X,Y) :- parent(Y,X).",
            "target(X,Y) :- aux1(X,Y).",
            "target(X,Y) :- target(X,Z), target(Z,Y).",
        ),
    ),
    "cyclic": (
        (("aux1", 2),),
        (
            "aux1(X,Y) :- edge(X,Y).",
            "aux1(X,Y) :- aux1(X,Z), edge(Z,Y).",
            "target(X) :- aux1(X,Z), aux1(Z,X).",
        ),
    ),
    "graph_coloring": (
        (("aux1", 2), ("aux2", 2)),
        (
            "aux2(X,Y) :- colour(Y,X).",
            "aux1(X,Y) :- colour(X,Z), aux2(Z,Y).",
            "target(X,Y) :- edge(X,Y), aux1(Y,X).",
        ),
    ),
    "even_odd": (
        (("aux2", 2),),
        (
            "aux2(X,Y) :- succ(X,Z), succ(Z,Y).",
            "target(X) :- zero(X).",
            "target(X) :- target(Y), aux2(Y,X).",
        ),
    ),
    "buzz": (
        (("aux5", 2),),
        (
            "aux5(X,Y) :- pred1(X,Z), pred2(Z,Y).",
            "target(X) :- zero(X).",
            "target(X) :- target(Y), aux5(Y,X).",
        ),
    ),
    "length": (
        (("aux1", 2), ("aux2", 2)),
        (
            "aux1(X,Y) :- cons(Y,X).",
            "target(X,Y) :- zero(X), zero(Y).",
            "aux2(X,Y) :- target(X,Z), succ(Z,Y).",
            "target(X,Y) :- aux1(X,Z), aux2(Z,Y).",
        ),
    ),
}
_SOLUTIONS["even_succ2"] = _SOLUTIONS["even_odd"]

SOLVED_TASKS = tuple(n for n in TASK_NAMES if n in _SOLUTIONS and n != "length")


def reference_solution(task: IlpTask) -> SymbolicProgram:
    """The hand-coded solution program for a bundled task."""
    if task.name not in _SOLUTIONS:
        raise ValueError(f"no reference solution for task {task.name!r}")
    aux_defs, clause_texts = _SOLUTIONS[task.name]
    predicates = dict(task.predicates_by_name)
    for name, arity in aux_defs:
        predicates[name] = PredicateSymbol(name, arity, kind="auxiliary")
    clauses = [parse_clause(text, predicates) for text in clause_texts]
    return SymbolicProgram(clauses=clauses, target=task.target)
