"""From soft model to symbolic program.

Every body slot is assigned the candidate with the highest noise-free
unification score (ties broken toward the lowest layer, then the
lexicographically smallest name, which is how candidate lists are
ordered).  The target picks one top-layer auxiliary; unfolding from there
keeps only reachable auxiliaries.  ``true`` in a conjunct slot drops the
literal, a ``false`` disjunct drops its clause, and a clause left with a
bare ``true()`` body is an unconditional fact schema and gets flagged as
degenerate.
"""

from __future__ import annotations

from dataclasses import dataclass

from .inference import compute_scores
from .logic import (
    FALSE_NAME,
    TRUE_NAME,
    DefiniteClause,
    Literal,
    SymbolicProgram,
    fixpoint_bound,
    forward_chain,
    normalize_aux_clause,
)
from .model import AuxPredicate, Model
from .tasks import IlpTask

SUCCESS_MSE = 1e-4


@dataclass
class ExtractionResult:
    program: SymbolicProgram
    slot_assignments: dict[str, tuple[str, float]]
    pruned: list[str]
    degenerate: list[str]
    target_aux: str
    alphas: dict[str, dict[str, float]]

    def assignment_names(self) -> dict[str, str]:
        return {key: name for key, (name, _) in self.slot_assignments.items()}

    def audit(self) -> dict:
        """JSON-compatible dump with per-slot score vectors."""
        return {
            "program": self.program.to_text(),
            "target_aux": self.target_aux,
            "slots": {
                key: {"chosen": name, "alpha": alpha, "candidates": self.alphas[key]}
                for key, (name, alpha) in self.slot_assignments.items()
            },
            "pruned": list(self.pruned),
            "degenerate": list(self.degenerate),
        }


def _argmax_choice(alpha, candidates, indices=None) -> tuple[str, float]:
    """Winning candidate of one slot; ``indices`` maps candidates into a
    full-width score vector."""
    values = alpha.detach()
    if indices is not None:
        values = values[indices]
    best = int(values.argmax())
    return candidates[best].name, float(values[best])


def _slot_literal(pred_name: str, arity: int, pattern: tuple[str, ...], symbols) -> Literal:
    symbol = symbols[pred_name]
    if arity == 2:
        return Literal(symbol, pattern)
    if arity == 1:
        # projected unary candidates apply to the slot's first variable
        return Literal(symbol, (pattern[0],))
    return Literal(symbol, ())


def _drop_clauses_over_undefined_aux(clauses_by_aux: dict[str, list[DefiniteClause]]) -> None:
    """Remove clauses whose body mentions an auxiliary with no clauses.

    An auxiliary whose conjunct and disjunct both normalized away is
    semantically ``false``; anything built on it can never fire.  Dropping
    those clauses may empty further auxiliaries, so iterate to a fixpoint.
    """
    changed = True
    while changed:
        changed = False
        defined = {name for name, cs in clauses_by_aux.items() if cs}
        for name, cs in clauses_by_aux.items():
            kept = [
                c
                for c in cs
                if all(
                    l.predicate.name not in clauses_by_aux
                    or l.predicate.name in defined
                    for l in c.body
                )
            ]
            if len(kept) != len(cs):
                clauses_by_aux[name] = kept
                changed = True


def _aux_clauses(aux: AuxPredicate, choices, symbols) -> list[DefiniteClause]:
    head = Literal(aux.symbol, aux.rule.head_pattern())
    literals = {}
    for slot in aux.slots:
        name, _ = choices[slot.key]
        literals[slot.spec.role] = _slot_literal(
            name, symbols[name].arity, slot.spec.pattern, symbols
        )
    if aux.rule.id == "I":
        lit = literals["perm"]
        if lit.predicate.name == FALSE_NAME:
            return []
        if lit.predicate.name == TRUE_NAME:
            lit = Literal(symbols[TRUE_NAME], ())
        return [DefiniteClause(head, (lit,))]
    return normalize_aux_clause(
        head, (literals["conj1"], literals["conj2"]), literals.get("disj")
    )


def extract_program(model: Model) -> ExtractionResult:
    """Argmax readout of a trained model as a definite-clause program."""
    scores = compute_scores(model)
    symbols = {p.name: p for p in model.predicate_symbols()}
    symbols[model.target.name] = model.target
    order_index = {
        p.name: i for i, p in enumerate(model.predicates_up_to(model.config.n_layers))
    }

    choices: dict[str, tuple[str, float]] = {}
    alphas: dict[str, dict[str, float]] = {}
    for aux in model.aux_predicates():
        candidates = model.candidate_symbols(aux)
        indices = [order_index[p.name] for p in candidates]
        for slot in aux.slots:
            alpha = scores.slots[slot.key].detach()
            choices[slot.key] = _argmax_choice(alpha, candidates, indices)
            alphas[slot.key] = {
                p.name: float(alpha[i]) for p, i in zip(candidates, indices)
            }
    target_candidates = model.target_candidates()
    target_aux, target_alpha = _argmax_choice(scores.target, target_candidates)
    choices["target"] = (target_aux, target_alpha)
    alphas["target"] = {
        p.name: float(a) for p, a in zip(target_candidates, scores.target.detach())
    }

    clauses_by_aux = {
        aux.name: _aux_clauses(aux, choices, symbols) for aux in model.aux_predicates()
    }
    _drop_clauses_over_undefined_aux(clauses_by_aux)

    reachable: set[str] = set()
    frontier = [target_aux] if clauses_by_aux[target_aux] else []
    while frontier:
        name = frontier.pop()
        if name in reachable:
            continue
        reachable.add(name)
        for clause in clauses_by_aux[name]:
            for lit in clause.body:
                body_name = lit.predicate.name
                if body_name in clauses_by_aux and body_name not in reachable:
                    frontier.append(body_name)

    ordered_aux = [a for a in model.aux_predicates() if a.name in reachable]
    clauses: list[DefiniteClause] = []
    degenerate: list[str] = []
    for aux in ordered_aux:
        for clause in clauses_by_aux[aux.name]:
            clauses.append(clause)
            if all(l.predicate.name == TRUE_NAME for l in clause.body):
                degenerate.append(aux.name)
    if clauses_by_aux[target_aux]:
        head = Literal(model.target, ("X",) if model.target.arity == 1 else ("X", "Y"))
        clauses.append(DefiniteClause(head, (Literal(symbols[target_aux], head.args),)))

    program = SymbolicProgram(clauses=clauses, target=model.target)
    pruned = [a.name for a in model.aux_predicates() if a.name not in reachable]
    return ExtractionResult(
        program=program,
        slot_assignments=choices,
        pruned=pruned,
        degenerate=degenerate,
        target_aux=target_aux,
        alphas=alphas,
    )


def symbolic_evaluate(
    extracted: ExtractionResult | SymbolicProgram,
    task: IlpTask,
    max_steps: int | None = None,
) -> tuple[float, bool]:
    """Crisp evaluation of an extracted program against a task's labels.

    Returns ``(mse, success)`` with success at mse < 1e-4; for a crisp
    program that means zero labeling errors.
    """
    program = extracted.program if isinstance(extracted, ExtractionResult) else extracted
    if max_steps is None:
        heads = {c.head.predicate for c in program.clauses}
        max_steps = fixpoint_bound(task.constants, set(task.input_predicates) | heads)
    derived = forward_chain(
        program,
        task.background,
        task.constants,
        max_steps,
        extra_predicates=task.input_predicates,
    )
    atoms = task.positives | task.negatives
    if not atoms:
        return 0.0, True
    errors = sum(
        (float(a in derived) - value) ** 2 for a, value in task.truth().items()
    )
    mse = errors / len(atoms)
    return mse, mse < SUCCESS_MSE
