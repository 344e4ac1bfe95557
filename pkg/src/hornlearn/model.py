"""Hierarchical model construction.

A model holds one auxiliary predicate per proto-rule per layer (times
``aux_per_rule``), an embedding per predicate, an embedding per body
slot, and one embedding for the target slot.  Candidate sets follow the
chosen recursivity mode:

* ``none``: predicates strictly below the layer,
* ``iso``:  strictly below, plus the auxiliary itself,
* ``full``: at or below the layer.

The target is matched against top-layer auxiliaries of its own arity
only; lower-arity predicates can fill higher-arity body slots (they are
broadcast at inference time) but never the other way around.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import torch

from .logic import FALSE_NAME, TRUE_NAME, PredicateSymbol
from .operators import OperatorConfig

DEFAULT_DTYPE = torch.float32

RECURSIVITY_MODES = ("none", "iso", "full")
PROTO_SETS = ("R0", "R0v", "R*")

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SlotSpec:
    """One body slot of a proto-rule: its role and variable pattern."""

    role: str  # conj1 | conj2 | disj | perm
    pattern: tuple[str, ...]


@dataclass(frozen=True)
class ProtoRule:
    """A second-order template with learnable body slots.

    ``A``-shaped rules have a unary head, the rest are binary.  Variables
    other than the head's are existential (Z in conjuncts, T in the unary
    disjunct).
    """

    id: str
    head_arity: int
    slots: tuple[SlotSpec, ...]

    @property
    def letter(self) -> str:
        return self.id[0].lower()

    @property
    def has_disjunct(self) -> bool:
        return any(s.role == "disj" for s in self.slots)

    def head_pattern(self) -> tuple[str, ...]:
        return ("X",) if self.head_arity == 1 else ("X", "Y")


_CONJ_A = (SlotSpec("conj1", ("X", "Z")), SlotSpec("conj2", ("Z", "X")))
_CONJ_B = (SlotSpec("conj1", ("X", "Z")), SlotSpec("conj2", ("Z", "Y")))
_CONJ_C = (SlotSpec("conj1", ("X", "Y")), SlotSpec("conj2", ("Y", "X")))

PROTO_RULES: dict[str, ProtoRule] = {
    "A": ProtoRule("A", 1, _CONJ_A),
    "B": ProtoRule("B", 2, _CONJ_B),
    "C": ProtoRule("C", 2, _CONJ_C),
    "A*": ProtoRule("A*", 1, _CONJ_A + (SlotSpec("disj", ("X", "T")),)),
    "B*": ProtoRule("B*", 2, _CONJ_B + (SlotSpec("disj", ("X", "Y")),)),
    "C*": ProtoRule("C*", 2, _CONJ_C + (SlotSpec("disj", ("X", "Y")),)),
    "I": ProtoRule("I", 2, (SlotSpec("perm", ("Y", "X")),)),
}

_PROTO_SET_RULES = {
    "R0": ("A", "B", "C"),
    "R0v": ("A*", "B*", "C*"),
    "R*": ("A*", "B*", "C*", "I"),
}


@dataclass
class ModelConfig:
    n_layers: int = 4
    embedding_dim: int | None = None  # None: max(16, number of predicates)
    recursivity: str = "full"
    temperature: float = 0.1
    proto_set: str = "R*"
    aux_per_rule: int = 1
    operators: OperatorConfig = field(default_factory=OperatorConfig)

    def __post_init__(self) -> None:
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.embedding_dim is not None and self.embedding_dim < 2:
            raise ValueError("embedding_dim must be >= 2")
        if self.recursivity not in RECURSIVITY_MODES:
            raise ValueError(f"recursivity must be one of {RECURSIVITY_MODES}")
        if self.proto_set not in _PROTO_SET_RULES:
            raise ValueError(f"proto_set must be one of {PROTO_SETS}")
        if self.aux_per_rule < 1:
            raise ValueError("aux_per_rule must be >= 1")

    def rules(self) -> tuple[ProtoRule, ...]:
        return tuple(PROTO_RULES[r] for r in _PROTO_SET_RULES[self.proto_set])


@dataclass
class BodySlot:
    key: str
    spec: SlotSpec
    embedding: torch.Tensor


@dataclass
class AuxPredicate:
    symbol: PredicateSymbol
    rule: ProtoRule
    layer: int
    slots: list[BodySlot]

    @property
    def name(self) -> str:
        return self.symbol.name


class Model:
    """Layered auxiliary predicates plus the embedding store."""

    def __init__(
        self,
        config: ModelConfig,
        inputs: tuple[PredicateSymbol, ...],
        target: PredicateSymbol,
        layers: list[list[AuxPredicate]],
        pred_embeddings: dict[str, torch.Tensor],
        target_slot: torch.Tensor,
    ) -> None:
        self.config = config
        self.inputs = inputs
        self.target = target
        self.layers = layers
        self.pred_embeddings = pred_embeddings
        self.target_slot = target_slot
        self._aux_by_name = {a.name: a for layer in layers for a in layer}

    # -- structure ---------------------------------------------------------

    def aux_predicates(self):
        for layer in self.layers:
            yield from layer

    def aux(self, name: str) -> AuxPredicate:
        return self._aux_by_name[name]

    def predicate_symbols(self) -> list[PredicateSymbol]:
        return list(self.inputs) + [a.symbol for a in self.aux_predicates()]

    def embedding_dim(self) -> int:
        return self.target_slot.shape[0]

    @property
    def dtype(self) -> torch.dtype:
        return self.target_slot.dtype

    def predicates_up_to(self, layer: int) -> list[PredicateSymbol]:
        """All predicates at layers <= ``layer``, ordered by (layer, name)."""
        out = sorted(self.inputs, key=lambda p: p.name)
        for idx in range(min(layer, len(self.layers))):
            out.extend(sorted((a.symbol for a in self.layers[idx]), key=lambda p: p.name))
        return out

    def candidate_symbols(self, aux: AuxPredicate) -> list[PredicateSymbol]:
        return candidate_set(self, aux.layer, aux)

    def target_candidates(self) -> list[PredicateSymbol]:
        top = self.layers[-1]
        return sorted(
            (a.symbol for a in top if a.symbol.arity == self.target.arity),
            key=lambda p: p.name,
        )

    # -- embeddings --------------------------------------------------------

    def embedding_items(self) -> dict[str, torch.Tensor]:
        items = {f"pred:{name}": t for name, t in self.pred_embeddings.items()}
        for aux in self.aux_predicates():
            for slot in aux.slots:
                items[f"slot:{slot.key}"] = slot.embedding
        items["slot:target"] = self.target_slot
        return items

    def predicate_parameters(self) -> list[torch.Tensor]:
        return list(self.pred_embeddings.values())

    def rule_parameters(self) -> list[torch.Tensor]:
        params = [slot.embedding for aux in self.aux_predicates() for slot in aux.slots]
        params.append(self.target_slot)
        return params

    def slot_by_key(self, key: str) -> BodySlot:
        for aux in self.aux_predicates():
            for slot in aux.slots:
                if slot.key == key:
                    return slot
        raise KeyError(key)


def candidate_set(model: Model, layer: int, aux: AuxPredicate) -> list[PredicateSymbol]:
    """Body candidates for an auxiliary predicate, per the recursivity mode.

    The target predicate is never a candidate; True and False always are.
    """
    if not 1 <= layer <= model.config.n_layers:
        raise ValueError(f"layer must be in 1..{model.config.n_layers}")
    mode = model.config.recursivity
    if mode == "full":
        return model.predicates_up_to(layer)
    below = model.predicates_up_to(layer - 1)
    if mode == "iso":
        merged = below + [aux.symbol]
        return sorted(merged, key=_layer_name_key(model))
    return below


def _layer_name_key(model: Model):
    layer_of = {p.name: 0 for p in model.inputs}
    for idx, layer in enumerate(model.layers, start=1):
        for a in layer:
            layer_of[a.name] = idx

    def key(p: PredicateSymbol):
        return (layer_of[p.name], p.name)

    return key


def build_model(
    config: ModelConfig,
    inputs: tuple[PredicateSymbol, ...] | list[PredicateSymbol],
    target: PredicateSymbol,
    seed: int = 0,
    dtype: torch.dtype = DEFAULT_DTYPE,
) -> Model:
    """Construct a model with freshly initialized embeddings.

    Embeddings are i.i.d. normal scaled by 1/sqrt(d); the same seed always
    yields the same initialization.  float32 is the training default;
    gradient checking builds float64 models.
    """
    inputs = tuple(inputs)
    names = [p.name for p in inputs]
    if len(set(names)) != len(names):
        raise ValueError("duplicate input predicate names")
    if TRUE_NAME not in names or FALSE_NAME not in names:
        raise ValueError("inputs must include true and false")
    if target.arity not in (1, 2):
        raise ValueError("target arity must be 1 or 2")

    rules = config.rules()
    n_aux = config.n_layers * len(rules) * config.aux_per_rule
    dim = config.embedding_dim or max(16, len(inputs) + n_aux)
    config = replace(config, embedding_dim=dim)
    gen = torch.Generator().manual_seed(seed)

    def fresh() -> torch.Tensor:
        e = torch.randn(dim, generator=gen, dtype=dtype) / math.sqrt(dim)
        return e.requires_grad_()

    pred_embeddings = {p.name: fresh() for p in inputs}
    layers: list[list[AuxPredicate]] = []
    for layer_idx in range(1, config.n_layers + 1):
        layer = []
        for rule in rules:
            for j in range(config.aux_per_rule):
                suffix = "" if config.aux_per_rule == 1 else f"_{j + 1}"
                name = f"aux_{rule.letter}{layer_idx}{suffix}"
                symbol = PredicateSymbol(name, rule.head_arity, kind="auxiliary")
                slots = [
                    BodySlot(key=f"{name}.{spec.role}", spec=spec, embedding=fresh())
                    for spec in rule.slots
                ]
                layer.append(AuxPredicate(symbol=symbol, rule=rule, layer=layer_idx, slots=slots))
                pred_embeddings[name] = fresh()
        layers.append(layer)

    return Model(
        config=config,
        inputs=inputs,
        target=target,
        layers=layers,
        pred_embeddings=pred_embeddings,
        target_slot=fresh(),
    )


def plant_assignments(model: Model, assignments: dict[str, str]) -> None:
    """Copy predicate embeddings into slots so chosen candidates win argmax.

    ``assignments`` maps a slot key (or ``"target"``) to a predicate name;
    unassigned body slots are aligned with ``false`` so they contribute
    nothing.  Used to seed a model with a known program.
    """
    with torch.no_grad():
        for aux in model.aux_predicates():
            for slot in aux.slots:
                name = assignments.get(slot.key, FALSE_NAME)
                slot.embedding.copy_(model.pred_embeddings[name])
        if "target" in assignments:
            model.target_slot.copy_(model.pred_embeddings[assignments["target"]])


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: Model, path: str | Path) -> None:
    cfg = model.config
    data = {
        "version": CHECKPOINT_VERSION,
        "dtype": str(model.dtype).removeprefix("torch."),
        "config": {
            "n_layers": cfg.n_layers,
            "embedding_dim": model.embedding_dim(),
            "recursivity": cfg.recursivity,
            "temperature": cfg.temperature,
            "proto_set": cfg.proto_set,
            "aux_per_rule": cfg.aux_per_rule,
            "operators": {
                "pool": cfg.operators.pool,
                "and_op": cfg.operators.and_op,
                "or_op": cfg.operators.or_op,
                "merge": cfg.operators.merge,
                "similarity": cfg.operators.similarity,
            },
        },
        "inputs": [{"name": p.name, "arity": p.arity} for p in model.inputs],
        "target": {"name": model.target.name, "arity": model.target.arity},
        "embeddings": {
            key: tensor.detach().tolist()
            for key, tensor in model.embedding_items().items()
        },
    }
    Path(path).write_text(json.dumps(data, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> Model:
    data = json.loads(Path(path).read_text())
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {data.get('version')!r}")
    cfg_data = dict(data["config"])
    ops = OperatorConfig(**cfg_data.pop("operators"))
    config = ModelConfig(operators=ops, **cfg_data)
    inputs = tuple(
        PredicateSymbol(p["name"], p["arity"]) for p in data["inputs"]
    )
    target = PredicateSymbol(data["target"]["name"], data["target"]["arity"], kind="target")
    dtype = getattr(torch, data.get("dtype", "float32"))
    model = build_model(config, inputs, target, seed=0, dtype=dtype)
    items = model.embedding_items()
    saved = data["embeddings"]
    if set(saved) != set(items):
        raise ValueError("checkpoint embeddings do not match the model structure")
    with torch.no_grad():
        for key, values in saved.items():
            items[key].copy_(torch.tensor(values, dtype=dtype))
    return model
