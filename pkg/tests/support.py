"""Shared helpers: models seeded with known programs, and their crisp twins."""

import torch

from hornlearn.logic import DefiniteClause, Literal, PredicateSymbol, SymbolicProgram
from hornlearn.model import Model, ModelConfig, build_model, plant_assignments
from hornlearn.tasks import IlpTask, TaskSpec, generate_task

# Slot assignments that realize a known solution inside an R*, depth-4 model.
# Values name the predicate each slot should select; "target" picks the
# top-layer auxiliary the target predicate maps to.
PLANTS: dict[str, dict[str, str]] = {
    "predecessor": {
        "aux_i4.perm": "succ",
        "target": "aux_i4",
    },
    "grandparent": {
        "aux_c1.conj1": "mother",
        "aux_c1.conj2": "true",
        "aux_c1.disj": "father",
        "aux_b4.conj1": "aux_c1",
        "aux_b4.conj2": "aux_c1",
        "aux_b4.disj": "false",
        "target": "aux_b4",
    },
    "connectedness": {
        "aux_b4.conj1": "aux_b4",
        "aux_b4.conj2": "aux_b4",
        "aux_b4.disj": "edge",
        "target": "aux_b4",
    },
}

# The same programs as explicit clauses, ordered bottom-up by layer so a
# truncated crisp pass mirrors one soft inference step.
def planted_program(name: str, task: IlpTask) -> SymbolicProgram:
    preds = dict(task.predicates_by_name)

    def aux(nm, arity):
        preds[nm] = PredicateSymbol(nm, arity, kind="auxiliary")
        return preds[nm]

    def lit(nm, *args):
        return Literal(preds[nm], tuple(args))

    if name == "predecessor":
        aux("aux_i4", 2)
        clauses = [
            DefiniteClause(lit("aux_i4", "X", "Y"), (lit("succ", "Y", "X"),)),
            DefiniteClause(lit("target", "X", "Y"), (lit("aux_i4", "X", "Y"),)),
        ]
    elif name == "grandparent":
        aux("aux_c1", 2)
        aux("aux_b4", 2)
        clauses = [
            DefiniteClause(lit("aux_c1", "X", "Y"), (lit("mother", "X", "Y"),)),
            DefiniteClause(lit("aux_c1", "X", "Y"), (lit("father", "X", "Y"),)),
            DefiniteClause(
                lit("aux_b4", "X", "Y"),
                (lit("aux_c1", "X", "Z"), lit("aux_c1", "Z", "Y")),
            ),
            DefiniteClause(lit("target", "X", "Y"), (lit("aux_b4", "X", "Y"),)),
        ]
    elif name == "connectedness":
        aux("aux_b4", 2)
        clauses = [
            DefiniteClause(
                lit("aux_b4", "X", "Y"),
                (lit("aux_b4", "X", "Z"), lit("aux_b4", "Z", "Y")),
            ),
            DefiniteClause(lit("aux_b4", "X", "Y"), (lit("edge", "X", "Y"),)),
            DefiniteClause(lit("target", "X", "Y"), (lit("aux_b4", "X", "Y"),)),
        ]
    else:
        raise KeyError(name)
    return SymbolicProgram(clauses=clauses, target=task.target)


def planted_model(name: str, task: IlpTask, seed: int = 0) -> Model:
    model = build_model(ModelConfig(), task.input_predicates, task.target, seed=seed)
    plant_assignments(model, PLANTS[name])
    return model


def plant_task(name: str, n: int, seed: int = 0) -> IlpTask:
    return generate_task(TaskSpec(name, n, seed=seed))


def crisp_true_atoms(state, task: IlpTask) -> set:
    """Atoms of the target predicate valued exactly 1; asserts crispness."""
    out = set()
    for atom in task.target_groundings():
        v = state.atom_value(atom)
        assert v in (0.0, 1.0), f"non-crisp valuation {v} at {atom}"
        if v == 1.0:
            out.add(atom)
    return out
