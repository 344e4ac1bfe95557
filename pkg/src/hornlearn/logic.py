"""First-order data model and a crisp bottom-up evaluator.

The fragment handled here is function-free definite Horn clauses with at
most two body literals and predicates of arity 0, 1 or 2.  The evaluator
is used both to generate ground truth for benchmark tasks and as the
symbolic oracle that scores extracted programs.

Within one evaluation pass, clauses are applied in program order and each
derived fact becomes visible to the clauses that follow (and to later
passes).  The least fixpoint is the same as for the simultaneous
immediate-consequence operator; only the meaning of a truncated pass
differs.  Programs emitted by extraction order their clauses bottom-up by
layer, so a pass here mirrors one soft inference step.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

TRUE_NAME = "true"
FALSE_NAME = "false"

#: Legal variable names, in canonical order: X, Y for head variables,
#: Z, T for existential body variables.
VARIABLES = ("X", "Y", "Z", "T")

_IDENT_RE = re.compile(r"[a-z][a-z0-9_]*\Z")
_ATOM_RE = re.compile(r"\s*([a-z][a-z0-9_]*)\s*\(([^()]*)\)\s*\Z")


class UnknownPredicateError(KeyError):
    """A clause body references a predicate the evaluator knows nothing about."""


@dataclass(frozen=True, order=True)
class PredicateSymbol:
    """A named predicate of fixed arity (0, 1 or 2)."""

    name: str
    arity: int
    kind: str = "input"  # input | auxiliary | target

    def __post_init__(self) -> None:
        if self.arity not in (0, 1, 2):
            raise ValueError(f"arity must be 0, 1 or 2, got {self.arity}")
        if not _IDENT_RE.match(self.name):
            raise ValueError(f"predicate name must be a lowercase identifier: {self.name!r}")
        if self.kind not in ("input", "auxiliary", "target"):
            raise ValueError(f"unknown predicate kind {self.kind!r}")


def true_symbol() -> PredicateSymbol:
    return PredicateSymbol(TRUE_NAME, 0)


def false_symbol() -> PredicateSymbol:
    return PredicateSymbol(FALSE_NAME, 0)


@dataclass(frozen=True, order=True)
class GroundAtom:
    """A predicate applied to constants."""

    predicate: PredicateSymbol
    args: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.args) != self.predicate.arity:
            raise ValueError(
                f"{self.predicate.name} has arity {self.predicate.arity}, got args {self.args}"
            )

    def __str__(self) -> str:
        return format_atom(self.predicate.name, self.args)


@dataclass(frozen=True)
class Literal:
    """A predicate applied to variables, as it appears inside a clause."""

    predicate: PredicateSymbol
    args: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.args) != self.predicate.arity:
            raise ValueError(
                f"{self.predicate.name} has arity {self.predicate.arity}, got args {self.args}"
            )
        for v in self.args:
            if v not in VARIABLES:
                raise ValueError(f"variables must be one of {VARIABLES}, got {v!r}")

    def __str__(self) -> str:
        return format_atom(self.predicate.name, self.args)


@dataclass(frozen=True)
class DefiniteClause:
    """``head :- body``, with one or two body literals.

    Head variables are universally quantified; variables that appear only
    in the body are existential.
    """

    head: Literal
    body: tuple[Literal, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.body) <= 2:
            raise ValueError("clause body must contain one or two literals")

    def __str__(self) -> str:
        return f"{self.head} :- {', '.join(str(b) for b in self.body)}."


@dataclass
class SymbolicProgram:
    """A definite-clause program with a distinguished target predicate."""

    clauses: list[DefiniteClause]
    target: PredicateSymbol

    def to_text(self) -> str:
        return "\n".join(str(c) for c in self.clauses)


# ---------------------------------------------------------------------------
# Rule text grammar
# ---------------------------------------------------------------------------

def format_atom(name: str, args: Sequence[str]) -> str:
    return f"{name}({','.join(args)})"


def parse_atom(text: str) -> tuple[str, tuple[str, ...]]:
    """Parse ``name(a,b)`` into a (name, args) pair; args may be empty."""
    m = _ATOM_RE.match(text)
    if m is None:
        raise ValueError(f"malformed atom: {text!r}")
    name, arg_text = m.group(1), m.group(2).strip()
    args = tuple(a.strip() for a in arg_text.split(",")) if arg_text else ()
    if any(not a for a in args):
        raise ValueError(f"malformed atom arguments: {text!r}")
    return name, args


def parse_clause(text: str, predicates: Mapping[str, PredicateSymbol]) -> DefiniteClause:
    """Parse one ``head(...) :- lit(...), lit(...).`` line."""
    line = text.strip()
    if not line.endswith("."):
        raise ValueError(f"clause must end with '.': {text!r}")
    line = line[:-1]
    if ":-" not in line:
        raise ValueError(f"clause must contain ':-': {text!r}")
    head_text, body_text = line.split(":-", 1)
    head = _literal_from_text(head_text, predicates)
    body = tuple(
        _literal_from_text(part, predicates)
        for part in _split_literals(body_text)
    )
    return DefiniteClause(head=head, body=body)


def _split_literals(text: str) -> list[str]:
    parts, depth, current = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    return [p for p in (s.strip() for s in parts) if p]


def _literal_from_text(text: str, predicates: Mapping[str, PredicateSymbol]) -> Literal:
    name, args = parse_atom(text)
    if name not in predicates:
        raise UnknownPredicateError(name)
    return Literal(predicates[name], args)


# ---------------------------------------------------------------------------
# Forward chaining
# ---------------------------------------------------------------------------

def forward_chain(
    program: SymbolicProgram,
    facts: Iterable[GroundAtom],
    constants: Sequence[str],
    max_steps: int,
    extra_predicates: Iterable[PredicateSymbol] = (),
) -> set[GroundAtom]:
    """Bottom-up evaluation of ``program`` starting from ``facts``.

    Returns the set of ground atoms derivable in at most ``max_steps``
    passes (facts included).  Deterministic and monotone: each pass only
    adds atoms.  ``true()`` always holds, ``false()`` never does.

    ``extra_predicates`` declares predicates that are legal in clause
    bodies even if no fact or head mentions them (e.g. an empty input
    relation).  Any other body predicate raises UnknownPredicateError.
    """
    derived: set[GroundAtom] = set(facts)
    by_pred: dict[str, set[tuple[str, ...]]] = {}
    for atom in derived:
        by_pred.setdefault(atom.predicate.name, set()).add(atom.args)

    known = set(by_pred)
    known.update(p.name for p in extra_predicates)
    known.update(c.head.predicate.name for c in program.clauses)
    known.update((TRUE_NAME, FALSE_NAME))
    for clause in program.clauses:
        for lit in clause.body:
            if lit.predicate.name not in known:
                raise UnknownPredicateError(lit.predicate.name)

    for _ in range(max_steps):
        changed = False
        for clause in program.clauses:
            for head_args in _derive(clause, by_pred, constants):
                rel = by_pred.setdefault(clause.head.predicate.name, set())
                if head_args not in rel:
                    rel.add(head_args)
                    derived.add(GroundAtom(clause.head.predicate, head_args))
                    changed = True
        if not changed:
            break
    return derived


def _match(lit: Literal, by_pred: Mapping[str, set[tuple[str, ...]]]):
    """Yield variable bindings that satisfy one literal against the facts."""
    name = lit.predicate.name
    if name == TRUE_NAME:
        yield {}
        return
    if name == FALSE_NAME:
        return
    for args in by_pred.get(name, ()):
        binding: dict[str, str] = {}
        ok = True
        for var, val in zip(lit.args, args):
            if binding.get(var, val) != val:
                ok = False
                break
            binding[var] = val
        if ok:
            yield binding


def _derive(
    clause: DefiniteClause,
    by_pred: Mapping[str, set[tuple[str, ...]]],
    constants: Sequence[str],
) -> set[tuple[str, ...]]:
    """All head groundings the clause produces on the current facts.

    The two-literal case joins on shared variables through a hash index,
    keeping one pass at O(|facts| + |join|) rather than a full cross
    product.  Head variables not bound by the body range over all
    constants.
    """
    head_vars = clause.head.args
    results: set[tuple[str, ...]] = set()

    if len(clause.body) == 1:
        bindings = _match(clause.body[0], by_pred)
    else:
        lit1, lit2 = clause.body
        shared = tuple(v for v in set(lit1.args) & set(lit2.args))
        index: dict[tuple[str, ...], list[dict[str, str]]] = {}
        for b2 in _match(lit2, by_pred):
            index.setdefault(tuple(b2[v] for v in shared), []).append(b2)

        def joined():
            for b1 in _match(lit1, by_pred):
                key = tuple(b1[v] for v in shared)
                for b2 in index.get(key, ()):
                    yield {**b1, **b2}

        bindings = joined()

    for binding in bindings:
        free = [v for v in head_vars if v not in binding]
        if not free:
            results.add(tuple(binding[v] for v in head_vars))
        else:
            # Unbound head variables are universally grounded.
            for grounding in _groundings(constants, len(free)):
                full = dict(binding)
                full.update(zip(free, grounding))
                results.add(tuple(full[v] for v in head_vars))
    return results


def _groundings(constants: Sequence[str], k: int):
    if k == 1:
        for c in constants:
            yield (c,)
    else:
        for c in constants:
            for rest in _groundings(constants, k - 1):
                yield (c,) + rest


def fixpoint_bound(constants: Sequence[str], predicates: Iterable[PredicateSymbol]) -> int:
    """Pass count that guarantees a fixpoint: |constants|^2 * |predicates|."""
    return max(1, len(constants) ** 2 * len(list(predicates)))


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def mse(predicted: Mapping[GroundAtom, float], truth: Mapping[GroundAtom, float]) -> float:
    """Mean squared difference between two valuations of the same atoms."""
    if set(predicted) != set(truth):
        missing = set(truth) ^ set(predicted)
        raise ValueError(f"atom sets differ on {len(missing)} atoms, e.g. {next(iter(missing))}")
    if not truth:
        return 0.0
    return sum((predicted[a] - truth[a]) ** 2 for a in truth) / len(truth)


# ---------------------------------------------------------------------------
# Clause normalization
# ---------------------------------------------------------------------------

def normalize_aux_clause(
    head: Literal,
    conj: tuple[Literal, Literal],
    disj: Literal | None,
) -> list[DefiniteClause]:
    """Split a ``head <- (b1 and b2) or b3`` shape into definite clauses.

    ``true`` literals are dropped from the conjunct body; a conjunct
    containing ``false`` never fires and is omitted.  A missing or
    ``false`` disjunct contributes no clause; a ``true`` disjunct makes
    the head unconditionally derivable and is kept as ``head :- true().``
    (callers flag that case as degenerate).
    """
    clauses: list[DefiniteClause] = []

    if not any(l.predicate.name == FALSE_NAME for l in conj):
        body = tuple(l for l in conj if l.predicate.name != TRUE_NAME)
        if not body:
            body = (Literal(true_symbol(), ()),)
        clauses.append(DefiniteClause(head=head, body=body))

    if disj is not None and disj.predicate.name != FALSE_NAME:
        clauses.append(DefiniteClause(head=head, body=(disj,)))

    return clauses
