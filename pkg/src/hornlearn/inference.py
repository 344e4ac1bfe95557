"""Differentiable forward chaining.

One inference step updates every auxiliary predicate layer by layer
(ascending), then the target.  For an auxiliary predicate built from the
disjunctive binary template, the update reads

    term[p, q][x, y] = max_z AND(V_p[x, z], V_q[z, y])
    v_and            = POOL_{p, q} alpha1[p] * alpha2[q] * term[p, q]
    v_or             = OR(v_and, POOL_p alpha3[p] * V_p)
    v_new            = MERGE(v_old, v_or)

with the unary-head and symmetric variants differing only in how slot
variables align and where the existential max applies (always before
pooling).  The permutation template pools transposed candidate
valuations directly.  The target merges a pooled blend of the top-layer
auxiliaries of its arity.

Lower-arity candidates are broadcast into binary slots: a unary valuation
fills rows (V[x] for every second argument), a zero-ary valuation fills
the whole tensor.

Within one step, a layer sees the values that lower layers just produced,
while same-layer candidates (full recursivity) are read from the previous
step, which makes the within-layer update order irrelevant.

Unification scores are softmax-normalized similarities at temperature
``tau``; ``tau = 0`` means the argmax limit (exact one-hot, used to check
the engine against the crisp oracle).  A positive ``gumbel_scale`` adds
scaled Gumbel noise to each similarity before the temperature division.

Internally, predicates live in one fixed order (layer, then name), so the
candidate pool of layer L is a prefix of that order.  Slot score vectors
span the full order with exact zeros outside the slot's candidate set;
pooling over a prefix with zero-weighted non-candidates equals pooling
over the candidate set alone, for both sum and max pooling, because all
pooled terms are nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .logic import GroundAtom
from .model import AuxPredicate, Model
from .operators import (
    InferenceProbe,
    OperatorConfig,
    exist_max,
    fuzzy_and,
    fuzzy_or,
    merge_max,
    pool_pairs,
    pool_single,
    similarity_scores,
)
from .tasks import IlpTask

_NEG_INF = float("-inf")


@dataclass
class ValuationState:
    """Truth-degree tensors per predicate: scalar, (n,) or (n, n)."""

    constants: tuple[str, ...]
    values: dict[str, torch.Tensor]

    @property
    def n(self) -> int:
        return len(self.constants)

    def index(self, constant: str) -> int:
        return self.constants.index(constant)

    def atom_value(self, atom: GroundAtom) -> float:
        t = self.values[atom.predicate.name].detach()
        idx = tuple(self.index(c) for c in atom.args)
        return float(t[idx]) if idx else float(t)

    def as_atom_map(self, atoms) -> dict[GroundAtom, float]:
        return {a: self.atom_value(a) for a in atoms}


@dataclass
class ScoreSet:
    """Softmax unification scores.

    ``slots`` maps a body-slot key to a vector over the model's full
    predicate order (zero outside the slot's candidate set); ``target``
    is a vector over the target's candidate list only.
    """

    slots: dict[str, torch.Tensor]
    target: torch.Tensor

    def all_alphas(self):
        yield from self.slots.values()
        yield self.target


def build_state(model: Model, task: IlpTask) -> ValuationState:
    """Initial valuations: background facts at 1, everything else at 0."""
    n = len(task.constants)
    index = {c: i for i, c in enumerate(task.constants)}
    values: dict[str, torch.Tensor] = {}

    model_inputs = {p.name: p.arity for p in model.inputs}
    task_inputs = {p.name: p.arity for p in task.input_predicates}
    if model_inputs != task_inputs:
        raise ValueError(
            f"task predicates {sorted(task_inputs)} do not match model inputs {sorted(model_inputs)}"
        )
    if task.target.arity != model.target.arity:
        raise ValueError("task target arity does not match the model target")

    dtype = model.dtype

    def zeros(arity: int) -> torch.Tensor:
        shape = {0: (), 1: (n,), 2: (n, n)}[arity]
        return torch.zeros(shape, dtype=dtype)

    for p in task.input_predicates:
        values[p.name] = zeros(p.arity)
    values["true"] = torch.ones((), dtype=dtype)
    for atom in task.background:
        idx = tuple(index[c] for c in atom.args)
        if idx:
            values[atom.predicate.name][idx] = 1.0
        else:
            values[atom.predicate.name] = torch.ones((), dtype=dtype)
    for aux in model.aux_predicates():
        values[aux.name] = zeros(aux.symbol.arity)
    values[model.target.name] = zeros(model.target.arity)
    return ValuationState(constants=tuple(task.constants), values=values)


def project(value: torch.Tensor, n: int) -> torch.Tensor:
    """Broadcast a valuation into the binary space over n constants.

    Binary valuations are returned unchanged; a unary valuation fills
    columns with its value at the row constant; a zero-ary valuation is
    constant everywhere.
    """
    if value.dim() == 2:
        return value
    if value.dim() == 1:
        return value[:, None].expand(n, n)
    return value.expand(n, n)


def unification_scores(
    slot_embedding: torch.Tensor,
    candidate_embeddings: torch.Tensor,
    tau: float,
    similarity: str = "cosine",
    gumbel_scale: float = 0.0,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Softmax-normalized match scores of one slot against its candidates.

    ``tau = 0`` returns the exact argmax one-hot (first maximum wins;
    candidate lists are ordered by layer then name, which realizes the
    deterministic tie-break).
    """
    scores = similarity_scores(slot_embedding, candidate_embeddings, similarity)
    if gumbel_scale > 0.0:
        u = torch.rand(scores.shape, generator=generator, dtype=scores.dtype)
        gumbel = -torch.log(-torch.log(u + 1e-20) + 1e-20)
        scores = scores + gumbel_scale * gumbel
    if tau == 0.0:
        out = torch.zeros_like(scores)
        out[int(scores.argmax())] = 1.0
        return out
    return torch.softmax(scores / tau, dim=0)


# ---------------------------------------------------------------------------
# Batched score computation
# ---------------------------------------------------------------------------

def _structure_cache(model: Model) -> dict:
    """Model-structure constants: predicate order, per-slot candidate masks."""
    cache = getattr(model, "_inference_cache", None)
    if cache is not None:
        return cache
    order = model.predicates_up_to(model.config.n_layers)
    index = {p.name: i for i, p in enumerate(order)}
    slot_keys: list[str] = []
    slot_aux: list[AuxPredicate] = []
    for aux in model.aux_predicates():
        for slot in aux.slots:
            slot_keys.append(slot.key)
            slot_aux.append(aux)
    masks = torch.zeros(len(slot_keys), len(order), dtype=torch.bool)
    cand_indices: dict[str, list[int]] = {}
    seen_aux: set[str] = set()
    for row, (key, aux) in enumerate(zip(slot_keys, slot_aux)):
        if aux.name not in seen_aux:
            seen_aux.add(aux.name)
            cand_indices[aux.name] = [
                index[p.name] for p in model.candidate_symbols(aux)
            ]
        masks[row, cand_indices[aux.name]] = True
    prefix = [0] * (model.config.n_layers + 1)
    prefix[0] = len(model.inputs)
    for layer_idx in range(1, model.config.n_layers + 1):
        prefix[layer_idx] = prefix[layer_idx - 1] + len(model.layers[layer_idx - 1])
    cache = {
        "order": order,
        "index": index,
        "slot_keys": slot_keys,
        "masks": masks,
        "prefix": prefix,
    }
    model._inference_cache = cache
    return cache


def _batched_similarities(slot_matrix, pred_matrix, kind) -> torch.Tensor:
    if kind == "cosine":
        s_norm = slot_matrix.norm(dim=1, keepdim=True)
        p_norm = pred_matrix.norm(dim=1, keepdim=True)
        if (s_norm < 1e-12).any() or (p_norm < 1e-12).any():
            raise ValueError("cosine similarity undefined for zero-norm embedding")
        return (slot_matrix / s_norm) @ (pred_matrix / p_norm).T
    if kind == "L1":
        return -torch.cdist(slot_matrix, pred_matrix, p=1)
    if kind == "L2":
        return -torch.cdist(slot_matrix, pred_matrix, p=2)
    if kind == "scalar_product":
        return slot_matrix @ pred_matrix.T
    raise ValueError(f"unknown similarity {kind!r}")


def compute_scores(
    model: Model,
    embedding_view: dict[str, torch.Tensor] | None = None,
    tau: float | None = None,
    gumbel_scale: float = 0.0,
    generator: torch.Generator | None = None,
) -> ScoreSet:
    """Unification scores for every body slot and the target slot."""
    view = embedding_view or model.embedding_items()
    tau = model.config.temperature if tau is None else tau
    similarity = model.config.operators.similarity
    cache = _structure_cache(model)

    pred_matrix = torch.stack([view[f"pred:{p.name}"] for p in cache["order"]])
    slot_keys = cache["slot_keys"]
    slots: dict[str, torch.Tensor] = {}
    if slot_keys:
        slot_matrix = torch.stack([view[f"slot:{k}"] for k in slot_keys])
        sims = _batched_similarities(slot_matrix, pred_matrix, similarity)
        if gumbel_scale > 0.0:
            u = torch.rand(sims.shape, generator=generator, dtype=sims.dtype)
            sims = sims + gumbel_scale * (-torch.log(-torch.log(u + 1e-20) + 1e-20))
        masked = sims.masked_fill(~cache["masks"], _NEG_INF)
        if tau == 0.0:
            alphas = torch.zeros_like(masked)
            alphas[torch.arange(len(slot_keys)), masked.argmax(dim=1)] = 1.0
        else:
            alphas = torch.softmax(masked / tau, dim=1)
        slots = {key: alphas[i] for i, key in enumerate(slot_keys)}

    target_matrix = torch.stack(
        [view[f"pred:{p.name}"] for p in model.target_candidates()]
    )
    target = unification_scores(
        view["slot:target"], target_matrix, tau, similarity, gumbel_scale, generator
    )
    return ScoreSet(slots=slots, target=target)


# ---------------------------------------------------------------------------
# Inference steps
# ---------------------------------------------------------------------------

@dataclass
class _LayerTerms:
    """Pairwise conjunct tensors shared by every auxiliary in one layer."""

    stack: torch.Tensor        # (k, n, n) projected valuations
    conj_a: torch.Tensor | None = None  # (k, k, n)
    conj_b: torch.Tensor | None = None  # (k, k, n, n)
    conj_c: torch.Tensor | None = None  # (k, k, n, n)
    disj_a: torch.Tensor | None = None  # (k, n)


def _layer_terms(state, symbols, rules_present, ops, probe) -> _LayerTerms:
    n = state.n
    stack = torch.stack([project(state.values[p.name], n) for p in symbols])
    stack_t = stack.transpose(1, 2)
    terms = _LayerTerms(stack=stack)
    if {"A", "A*", "C", "C*"} & rules_present:
        sym_pair = fuzzy_and(stack[:, None], stack_t[None, :], ops.and_op, probe)
        if {"C", "C*"} & rules_present:
            terms.conj_c = sym_pair
        if {"A", "A*"} & rules_present:
            terms.conj_a = exist_max(sym_pair, dim=3, probe=probe)
    if {"B", "B*"} & rules_present:
        pair = fuzzy_and(
            stack[:, None, :, :, None], stack[None, :, None, :, :], ops.and_op, probe
        )
        terms.conj_b = exist_max(pair, dim=3, probe=probe)
    if "A*" in rules_present:
        terms.disj_a = exist_max(stack, dim=2, probe=probe)
    return terms


def _aux_new_value(aux, state, scores, terms, k, ops, probe):
    old = state.values[aux.name]
    rule = aux.rule
    alphas = [scores.slots[s.key][:k] for s in aux.slots]

    if rule.id == "I":
        pooled = pool_single(alphas[0], terms.stack.transpose(1, 2), ops.pool, probe)
        return merge_max(old, pooled, probe)

    conj = {"A": terms.conj_a, "A*": terms.conj_a,
            "B": terms.conj_b, "B*": terms.conj_b,
            "C": terms.conj_c, "C*": terms.conj_c}[rule.id]
    v_and = pool_pairs(alphas[0], alphas[1], conj, ops.pool, probe)

    if not rule.has_disjunct:
        return merge_max(old, v_and, probe)

    disj_stack = terms.disj_a if rule.id == "A*" else terms.stack
    v_disj = pool_single(alphas[2], disj_stack, ops.pool, probe)
    v_or = fuzzy_or(v_and, v_disj, ops.or_op, probe)
    return merge_max(old, v_or, probe)


def infer_step_aux(
    model: Model,
    aux: AuxPredicate,
    state: ValuationState,
    scores: ScoreSet,
    operators: OperatorConfig | None = None,
    probe: InferenceProbe | None = None,
) -> torch.Tensor:
    """New valuation tensor for one auxiliary predicate (state unchanged)."""
    ops = operators or model.config.operators
    cache = _structure_cache(model)
    k = cache["prefix"][aux.layer]
    symbols = cache["order"][:k]
    terms = _layer_terms(state, symbols, {aux.rule.id}, ops, probe)
    return _aux_new_value(aux, state, scores, terms, k, ops, probe)


def infer_target(
    model: Model,
    state: ValuationState,
    target_alpha: torch.Tensor,
    operators: OperatorConfig | None = None,
    probe: InferenceProbe | None = None,
) -> torch.Tensor:
    """Merge the pooled top-layer blend into the target valuation."""
    ops = operators or model.config.operators
    stack = torch.stack(
        [state.values[p.name] for p in model.target_candidates()]
    )
    pooled = pool_single(target_alpha, stack, ops.pool, probe)
    return merge_max(state.values[model.target.name], pooled, probe)


def run_inference(
    model: Model,
    task: IlpTask,
    n_steps: int,
    scores: ScoreSet | None = None,
    operators: OperatorConfig | None = None,
    tau: float | None = None,
    gumbel_scale: float = 0.0,
    embedding_view: dict[str, torch.Tensor] | None = None,
    generator: torch.Generator | None = None,
    probe: InferenceProbe | None = None,
) -> tuple[ValuationState, ScoreSet]:
    """Roll the inference step ``n_steps`` times from the task's facts.

    Scores are computed once per call (embeddings do not change during a
    rollout).  Evaluation calls leave ``gumbel_scale`` at 0 and pass no
    noisy embedding view.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    ops = operators or model.config.operators
    if scores is None:
        scores = compute_scores(model, embedding_view, tau, gumbel_scale, generator)

    cache = _structure_cache(model)
    order, prefix = cache["order"], cache["prefix"]
    rules_by_layer = [{aux.rule.id for aux in layer} for layer in model.layers]

    state = build_state(model, task)
    for _ in range(n_steps):
        for layer_idx, layer in enumerate(model.layers, start=1):
            k = prefix[layer_idx]
            terms = _layer_terms(
                state, order[:k], rules_by_layer[layer_idx - 1], ops, probe
            )
            updates = {
                aux.name: _aux_new_value(aux, state, scores, terms, k, ops, probe)
                for aux in layer
            }
            state.values.update(updates)
        state.values[model.target.name] = infer_target(
            model, state, scores.target, ops, probe
        )
    return state, scores


def evaluation_mse(state: ValuationState, task: IlpTask) -> float:
    """Mean squared error of the target valuation against the task labels."""
    truth = task.truth()
    if not truth:
        return 0.0
    predicted = state.as_atom_map(truth)
    return sum((predicted[a] - truth[a]) ** 2 for a in truth) / len(truth)


def dump_valuations(state: ValuationState, predicates=None) -> str:
    """Debug dump: one ``atom = value`` line per grounding, sorted."""
    from .logic import format_atom

    names = sorted(predicates) if predicates else sorted(state.values)
    lines = []
    for name in names:
        t = state.values[name].detach()
        if t.dim() == 0:
            lines.append(f"{format_atom(name, ())} = {float(t):.6f}")
        elif t.dim() == 1:
            for i, c in enumerate(state.constants):
                lines.append(f"{format_atom(name, (c,))} = {float(t[i]):.6f}")
        else:
            for i, a in enumerate(state.constants):
                for j, b in enumerate(state.constants):
                    lines.append(f"{format_atom(name, (a, b))} = {float(t[i, j]):.6f}")
    return "\n".join(lines) + "\n"
