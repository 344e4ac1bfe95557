import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from support import PLANTS, crisp_true_atoms, plant_task, planted_model, planted_program

from hornlearn.inference import (
    ScoreSet,
    build_state,
    compute_scores,
    evaluation_mse,
    infer_step_aux,
    infer_target,
    project,
    run_inference,
    unification_scores,
)
from hornlearn.logic import forward_chain
from hornlearn.model import ModelConfig, build_model, plant_assignments
from hornlearn.operators import InferenceProbe, OperatorConfig, ablation_operator_configs
from hornlearn.tasks import TaskSpec, generate_task

DT = torch.float64


class TestProject:
    def test_binary_unchanged(self):
        v = torch.rand(3, 3, dtype=DT)
        assert torch.equal(project(v, 3), v)

    def test_unary_broadcasts_columns(self):
        v = torch.tensor([1.0, 0.0], dtype=DT)
        assert torch.equal(
            project(v, 2), torch.tensor([[1.0, 1.0], [0.0, 0.0]], dtype=DT)
        )

    def test_scalar_fills(self):
        v = torch.tensor(1.0, dtype=DT)
        assert torch.equal(project(v, 2), torch.ones(2, 2, dtype=DT))


class TestUnificationScores:
    def test_single_candidate(self):
        e = torch.tensor([1.0, 0.0], dtype=DT)
        out = unification_scores(e, e[None, :], tau=0.1)
        assert torch.equal(out, torch.tensor([1.0], dtype=DT))

    def test_identical_candidates_split_evenly(self):
        e = torch.tensor([1.0, 2.0], dtype=DT)
        cands = torch.stack([e, e])
        out = unification_scores(e, cands, tau=0.1)
        assert torch.allclose(out, torch.tensor([0.5, 0.5], dtype=DT))

    def test_softmax_of_unit_gap(self):
        # cosines (1.0, 0.0) at tau = 0.1: e^10 / (e^10 + 1)
        slot = torch.tensor([1.0, 0.0], dtype=DT)
        cands = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=DT)
        out = unification_scores(slot, cands, tau=0.1)
        expected = math.exp(10) / (math.exp(10) + 1)
        assert out[0].item() == pytest.approx(expected, rel=1e-9)
        assert out[0].item() == pytest.approx(0.9999546, abs=1e-6)

    def test_zero_norm_cosine_rejected(self):
        slot = torch.zeros(3, dtype=DT)
        cands = torch.eye(3, dtype=DT)
        with pytest.raises(ValueError, match="zero-norm"):
            unification_scores(slot, cands, tau=0.1)

    def test_tau_zero_is_one_hot(self):
        slot = torch.tensor([1.0, 0.0], dtype=DT)
        cands = torch.tensor([[0.9, 0.1], [0.1, 0.9]], dtype=DT)
        out = unification_scores(slot, cands, tau=0.0)
        assert torch.equal(out, torch.tensor([1.0, 0.0], dtype=DT))

    def test_gumbel_noise_is_seeded_and_off_at_zero(self):
        slot = torch.tensor([1.0, 0.5, 0.0], dtype=DT)
        cands = torch.eye(3, dtype=DT)
        clean = unification_scores(slot, cands, tau=0.1, gumbel_scale=0.0)
        again = unification_scores(slot, cands, tau=0.1, gumbel_scale=0.0)
        assert torch.equal(clean, again)
        g1 = torch.Generator().manual_seed(5)
        g2 = torch.Generator().manual_seed(5)
        noisy1 = unification_scores(slot, cands, tau=0.1, gumbel_scale=0.3, generator=g1)
        noisy2 = unification_scores(slot, cands, tau=0.1, gumbel_scale=0.3, generator=g2)
        assert torch.equal(noisy1, noisy2)
        assert not torch.equal(noisy1, clean)

    def test_simplex(self):
        slot = torch.randn(8, dtype=DT)
        cands = torch.randn(5, 8, dtype=DT)
        out = unification_scores(slot, cands, tau=0.1)
        assert (out >= 0).all()
        assert out.sum().item() == pytest.approx(1.0)

    @pytest.mark.parametrize("similarity", ["cosine", "L1", "L2", "scalar_product"])
    def test_batched_scores_match_per_slot_computation(self, similarity):
        # the batched path in compute_scores must agree with the
        # single-slot reference for every similarity function
        from hornlearn.operators import OperatorConfig

        task = plant_task("grandparent", 6, seed=3)
        model = build_model(
            ModelConfig(n_layers=2, recursivity="iso",
                        operators=OperatorConfig(similarity=similarity)),
            task.input_predicates, task.target, seed=5, dtype=torch.float64,
        )
        scores = compute_scores(model)
        order = model.predicates_up_to(model.config.n_layers)
        index = {p.name: i for i, p in enumerate(order)}
        items = model.embedding_items()
        for aux in model.aux_predicates():
            cands = model.candidate_symbols(aux)
            matrix = torch.stack([items[f"pred:{p.name}"] for p in cands])
            for slot in aux.slots:
                expected = unification_scores(
                    items[f"slot:{slot.key}"], matrix,
                    model.config.temperature, similarity,
                )
                got = scores.slots[slot.key][[index[p.name] for p in cands]]
                assert torch.allclose(got, expected, atol=1e-12), (slot.key, similarity)
                off = scores.slots[slot.key].sum() - got.sum()
                assert abs(float(off)) < 1e-12


def uniform_scores(model) -> ScoreSet:
    # full-width slot vectors: uniform over the candidate set, zero outside
    order = model.predicates_up_to(model.config.n_layers)
    index = {p.name: i for i, p in enumerate(order)}
    slots = {}
    for aux in model.aux_predicates():
        cands = model.candidate_symbols(aux)
        alpha = torch.zeros(len(order), dtype=model.dtype)
        for p in cands:
            alpha[index[p.name]] = 1.0 / len(cands)
        for slot in aux.slots:
            slots[slot.key] = alpha
    k_t = len(model.target_candidates())
    return ScoreSet(
        slots=slots, target=torch.full((k_t,), 1.0 / k_t, dtype=model.dtype)
    )


class TestStepOperations:
    def make_chain_model(self):
        task = plant_task("predecessor", 3)
        model = build_model(ModelConfig(), task.input_predicates, task.target, seed=0)
        return task, model

    def test_all_zero_stays_zero(self):
        task, model = self.make_chain_model()
        state = build_state(model, task)
        for name in state.values:
            if name != "true":
                state.values[name] = torch.zeros_like(state.values[name])
        scores = compute_scores(model, tau=0.0)
        aux = model.aux("aux_b1")
        # true is a candidate, so force slots away from it to keep zeros.
        plant_assignments(model, {"aux_b1.conj1": "succ", "aux_b1.conj2": "succ",
                                  "aux_b1.disj": "false"})
        scores = compute_scores(model, tau=0.0)
        out = infer_step_aux(model, aux, state, scores)
        assert torch.equal(out, torch.zeros(3, 3, dtype=DT))

    def test_one_hot_succ_chain_derives_aux_0_2(self):
        # One-hot (succ, succ) on the chain template reproduces the
        # two-step successor composition: aux(0,2) = 1.
        task, model = self.make_chain_model()
        plant_assignments(model, {"aux_b1.conj1": "succ", "aux_b1.conj2": "succ",
                                  "aux_b1.disj": "false"})
        scores = compute_scores(model, tau=0.0)
        state = build_state(model, task)
        out = infer_step_aux(model, model.aux("aux_b1"), state, scores)
        expected = torch.zeros(3, 3, dtype=DT)
        expected[0, 2] = 1.0
        assert torch.equal(out, expected)

    def test_uniform_alpha_over_all_ones_gives_one(self):
        # candidates are the inputs only (no recursivity); with every
        # candidate valuation at 1, the convex pair-pool is exactly 1.
        task = plant_task("predecessor", 3)
        model = build_model(
            ModelConfig(recursivity="none"), task.input_predicates, task.target, seed=0
        )
        state = build_state(model, task)
        for p in task.input_predicates:
            state.values[p.name] = torch.ones_like(state.values[p.name])
        scores = uniform_scores(model)
        out = infer_step_aux(model, model.aux("aux_b1"), state, scores)
        assert torch.allclose(out, torch.ones(3, 3, dtype=model.dtype))

    def test_infer_target_one_hot_and_zero(self):
        task, model = self.make_chain_model()
        state = build_state(model, task)
        q = model.target_candidates()[0].name
        state.values[q] = torch.rand(3, 3, dtype=DT)
        k = len(model.target_candidates())
        alpha = torch.zeros(k, dtype=DT)
        alpha[0] = 1.0
        out = infer_target(model, state, alpha)
        assert torch.equal(out, state.values[q])
        # all top-layer valuations zero: target unchanged
        for p in model.target_candidates():
            state.values[p.name] = torch.zeros(3, 3, dtype=DT)
        state.values["target"] = torch.rand(3, 3, dtype=DT)
        out = infer_target(model, state, alpha)
        assert torch.equal(out, state.values["target"])

    def test_infer_target_blend(self):
        task, model = self.make_chain_model()
        state = build_state(model, task)
        names = [p.name for p in model.target_candidates()]
        state.values[names[0]] = torch.ones(3, 3, dtype=DT)
        for nm in names[1:]:
            state.values[nm] = torch.zeros(3, 3, dtype=DT)
        alpha = torch.zeros(len(names), dtype=DT)
        alpha[0], alpha[1] = 0.6, 0.4
        out = infer_target(model, state, alpha)
        assert torch.allclose(out, torch.full((3, 3), 0.6, dtype=DT))


class TestRunInference:
    def test_rejects_zero_steps(self):
        task = plant_task("predecessor", 4)
        model = build_model(ModelConfig(), task.input_predicates, task.target, seed=0)
        with pytest.raises(ValueError):
            run_inference(model, task, n_steps=0)

    @pytest.mark.parametrize("name,n,steps", [
        ("predecessor", 6, 2),
        ("grandparent", 8, 3),
        ("connectedness", 5, 4),
    ])
    def test_one_hot_model_equals_truncated_oracle(self, name, n, steps):
        task = plant_task(name, n, seed=1)
        model = planted_model(name, task)
        program = planted_program(name, task)
        for k in range(1, steps + 1):
            state, _ = run_inference(model, task, n_steps=k, tau=0.0)
            soft = crisp_true_atoms(state, task)
            derived = forward_chain(
                program, task.background, task.constants, max_steps=k,
                extra_predicates=task.input_predicates,
            )
            oracle = {a for a in task.target_groundings() if a in derived}
            assert soft == oracle

    def test_single_step_predecessor_positives_reached(self):
        task = plant_task("predecessor", 6)
        model = planted_model("predecessor", task)
        state, _ = run_inference(model, task, n_steps=1, tau=0.0)
        assert all(state.atom_value(a) == 1.0 for a in task.positives)
        assert evaluation_mse(state, task) == 0.0

    @settings(max_examples=12, deadline=None)
    @given(seed=st.integers(0, 10_000), ops_idx=st.integers(0, 7))
    def test_bounded_and_monotone_for_all_operators(self, seed, ops_idx):
        ops = ablation_operator_configs()[ops_idx]
        task = plant_task("grandparent", 7, seed=seed % 5)
        model = build_model(
            ModelConfig(n_layers=2, operators=ops),
            task.input_predicates, task.target, seed=seed,
        )
        with torch.no_grad():
            prev = None
            for k in (1, 2, 3):
                state, _ = run_inference(model, task, n_steps=k)
                for name, v in state.values.items():
                    assert (v >= 0).all() and (v <= 1).all(), name
                if prev is not None:
                    for name in state.values:
                        assert (state.values[name] >= prev[name] - 1e-12).all()
                prev = state.values

    def test_permutation_equivariance(self):
        import random as _random
        from dataclasses import replace

        task = plant_task("grandparent", 8, seed=2)
        model = build_model(ModelConfig(), task.input_predicates, task.target, seed=4)
        base, _ = run_inference(model, task, n_steps=3)
        rng = _random.Random(0)
        for _ in range(5):
            perm = list(task.constants)
            rng.shuffle(perm)
            permuted = replace(task, constants=tuple(perm))
            state, _ = run_inference(model, permuted, n_steps=3)
            for atom in task.target_groundings():
                assert state.atom_value(atom) == base.atom_value(atom)

    def test_deterministic_given_seed(self):
        task = plant_task("cyclic", 6, seed=1)
        model = build_model(ModelConfig(), task.input_predicates, task.target, seed=0)
        g1 = torch.Generator().manual_seed(11)
        g2 = torch.Generator().manual_seed(11)
        s1, _ = run_inference(model, task, n_steps=2, gumbel_scale=0.2, generator=g1)
        s2, _ = run_inference(model, task, n_steps=2, gumbel_scale=0.2, generator=g2)
        for name in s1.values:
            assert torch.equal(s1.values[name], s2.values[name])


class TestValuationDump:
    def test_atom_value_lines(self):
        from hornlearn.inference import dump_valuations

        task = plant_task("predecessor", 3)
        model = build_model(ModelConfig(n_layers=1), task.input_predicates, task.target, seed=0)
        state = build_state(model, task)
        text = dump_valuations(state, predicates=["succ", "zero", "true"])
        assert "succ(0,1) = 1.000000" in text
        assert "succ(1,0) = 0.000000" in text
        assert "zero(0) = 1.000000" in text
        assert "true() = 1.000000" in text


class TestComplexityInstrumentation:
    def run_ops(self, n, aux_per_rule=1):
        task = generate_task(TaskSpec("predecessor", n))
        model = build_model(
            ModelConfig(aux_per_rule=aux_per_rule),
            task.input_predicates, task.target, seed=0,
        )
        probe = InferenceProbe()
        with torch.no_grad():
            run_inference(model, task, n_steps=1, probe=probe)
        return probe.elementwise_ops

    def test_cubic_scaling_in_constants(self):
        ratio = self.run_ops(12) / self.run_ops(6)
        # dominated by the existential chain term: ~n^3
        assert 5.0 < ratio < 9.0

    def test_quadratic_scaling_in_candidates(self):
        ratio = self.run_ops(6, aux_per_rule=2) / self.run_ops(6, aux_per_rule=1)
        # candidate count roughly doubles: pairwise terms ~|P|^2
        assert 2.0 < ratio < 5.0
