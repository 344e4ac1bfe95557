import pytest
import torch

from support import PLANTS, crisp_true_atoms, plant_task, planted_model

from hornlearn.extraction import SUCCESS_MSE, extract_program, symbolic_evaluate
from hornlearn.inference import run_inference
from hornlearn.logic import SymbolicProgram, parse_clause
from hornlearn.model import ModelConfig, build_model, plant_assignments
from hornlearn.tasks import TaskSpec, generate_task, reference_solution


class TestExtractProgram:
    def test_predecessor_plant_extracts_inverted_succ(self):
        task = plant_task("predecessor", 6)
        model = planted_model("predecessor", task)
        result = extract_program(model)
        assert result.target_aux == "aux_i4"
        assert result.program.to_text() == (
            "aux_i4(X,Y) :- succ(Y,X).\n"
            "target(X,Y) :- aux_i4(X,Y)."
        )
        assert set(result.pruned) == {
            a.name for a in model.aux_predicates()
        } - {"aux_i4"}

    def test_grandparent_plant_extracts_parent_composition(self):
        task = plant_task("grandparent", 9)
        model = planted_model("grandparent", task)
        result = extract_program(model)
        text = result.program.to_text()
        assert "aux_c1(X,Y) :- mother(X,Y)." in text
        assert "aux_c1(X,Y) :- father(X,Y)." in text
        assert "aux_b4(X,Y) :- aux_c1(X,Z), aux_c1(Z,Y)." in text
        assert text.endswith("target(X,Y) :- aux_b4(X,Y).")
        # true in the conjunct slot was eliminated, false disjunct dropped
        assert "true" not in text and "false" not in text

    def test_extraction_is_idempotent(self):
        task = plant_task("grandparent", 9)
        model = planted_model("grandparent", task)
        first = extract_program(model)
        replanted = build_model(
            ModelConfig(), task.input_predicates, task.target, seed=99
        )
        plant_assignments(replanted, first.assignment_names())
        second = extract_program(replanted)
        assert second.program.to_text() == first.program.to_text()

    def test_winning_alpha_reported(self):
        task = plant_task("predecessor", 6)
        model = planted_model("predecessor", task)
        result = extract_program(model)
        name, alpha = result.slot_assignments["aux_i4.perm"]
        assert name == "succ"
        assert alpha > 0.99

    def test_degenerate_true_disjunct_flagged(self):
        task = plant_task("predecessor", 4)
        model = build_model(ModelConfig(), task.input_predicates, task.target, seed=0)
        plant_assignments(
            model,
            {
                "aux_b4.conj1": "false",
                "aux_b4.conj2": "false",
                "aux_b4.disj": "true",
                "target": "aux_b4",
            },
        )
        result = extract_program(model)
        assert "aux_b4" in result.degenerate
        assert "aux_b4(X,Y) :- true()." in result.program.to_text()

    def test_audit_dump_is_json_compatible(self):
        import json

        task = plant_task("predecessor", 4)
        model = planted_model("predecessor", task)
        audit = extract_program(model).audit()
        text = json.dumps(audit)
        assert "aux_i4.perm" in text
        assert audit["slots"]["target"]["chosen"] == "aux_i4"


class TestSymbolicEvaluate:
    def test_less_than_solution_at_eval_size(self):
        task = generate_task(TaskSpec("less_than", 12))
        program = reference_solution(task)
        mse, success = symbolic_evaluate(program, task)
        assert mse == 0.0 and success

    def test_wrong_program_fails(self):
        task = generate_task(TaskSpec("less_than", 8))
        predecessor_like = SymbolicProgram(
            clauses=[
                parse_clause("target(X,Y) :- succ(X,Y).", task.predicates_by_name)
            ],
            target=task.target,
        )
        mse, success = symbolic_evaluate(predecessor_like, task)
        assert mse > SUCCESS_MSE and not success

    def test_empty_program_mse_is_positive_fraction(self):
        task = generate_task(TaskSpec("predecessor", 5))
        program = SymbolicProgram(clauses=[], target=task.target)
        mse, success = symbolic_evaluate(program, task)
        expected = len(task.positives) / (len(task.positives) + len(task.negatives))
        assert mse == pytest.approx(expected)
        assert not success

    def test_planted_models_evaluate_perfectly(self):
        for name, n in (("predecessor", 8), ("grandparent", 9), ("connectedness", 5)):
            task = plant_task(name, n, seed=1)
            result = extract_program(planted_model(name, task))
            mse, success = symbolic_evaluate(result, task)
            assert success, (name, mse)


class TestSoftSymbolicConsistency:
    def test_low_temperature_matches_crisp_oracle(self):
        # tau -> 0 limit: soft inference converges to the extracted
        # program's crisp output at every atom.
        for name, n, steps in (("predecessor", 6, 2), ("grandparent", 8, 4)):
            task = plant_task(name, n, seed=0)
            model = planted_model(name, task)
            result = extract_program(model)
            state, _ = run_inference(model, task, n_steps=steps, tau=1e-4)
            from hornlearn.logic import fixpoint_bound, forward_chain

            derived = forward_chain(
                result.program, task.background, task.constants,
                max_steps=steps,
                extra_predicates=task.input_predicates,
            )
            for atom in task.target_groundings():
                soft = state.atom_value(atom)
                crisp = float(atom in derived)
                assert abs(soft - crisp) < 1e-3, (name, atom, soft, crisp)

    def test_hard_unification_equals_crisp_exactly(self):
        task = plant_task("connectedness", 5, seed=2)
        model = planted_model("connectedness", task)
        result = extract_program(model)
        state, _ = run_inference(model, task, n_steps=6, tau=0.0)
        mse, _ = symbolic_evaluate(result, task, max_steps=6)
        soft_atoms = crisp_true_atoms(state, task)
        from hornlearn.logic import forward_chain

        derived = forward_chain(
            result.program, task.background, task.constants, 6,
            extra_predicates=task.input_predicates,
        )
        assert soft_atoms == {a for a in task.target_groundings() if a in derived}
