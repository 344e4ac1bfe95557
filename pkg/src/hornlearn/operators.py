"""Fuzzy-logic tensor operators, similarity scores, and instrumentation.

All operators map [0,1] tensors to [0,1] tensors.  Pooling weights come
from softmax distributions, so a sum-pool is a convex combination and the
whole inference step is closed over [0,1].
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

POOLS = ("sum", "max")
AND_OPS = ("min", "product")
OR_OPS = ("max", "prodminus")
SIMILARITIES = ("cosine", "L1", "L2", "scalar_product")

_ZERO_NORM_TOL = 1e-12


@dataclass(frozen=True)
class OperatorConfig:
    """Which implementation to use for POOL / AND / OR / MERGE and the
    embedding similarity.  prodminus(a, b) = a + b - a*b."""

    pool: str = "sum"
    and_op: str = "min"
    or_op: str = "max"
    merge: str = "max"
    similarity: str = "cosine"

    def __post_init__(self) -> None:
        if self.pool not in POOLS:
            raise ValueError(f"pool must be one of {POOLS}")
        if self.and_op not in AND_OPS:
            raise ValueError(f"and_op must be one of {AND_OPS}")
        if self.or_op not in OR_OPS:
            raise ValueError(f"or_op must be one of {OR_OPS}")
        if self.merge != "max":
            raise ValueError("merge must be 'max'")
        if self.similarity not in SIMILARITIES:
            raise ValueError(f"similarity must be one of {SIMILARITIES}")


def ablation_operator_configs() -> list[OperatorConfig]:
    """Default plus every single-operator swap, plus the full cross product."""
    seen: dict[tuple, OperatorConfig] = {}
    for pool in POOLS:
        for and_op in AND_OPS:
            for or_op in OR_OPS:
                cfg = OperatorConfig(pool=pool, and_op=and_op, or_op=or_op)
                seen[(pool, and_op, or_op)] = cfg
    return list(seen.values())


class InferenceProbe:
    """Counts elementwise work and near-ties at min/max sites.

    Ties within ``tie_tol`` make subgradients ambiguous; gradient checking
    resamples its evaluation point whenever a probe reports any.
    """

    def __init__(self, tie_tol: float = 1e-6) -> None:
        self.tie_tol = tie_tol
        self.ties = 0
        self.elementwise_ops = 0

    def binary(self, a: torch.Tensor, b: torch.Tensor) -> None:
        # Exactly equal pairs are crisp constants (0/0, 1/1) with no
        # gradient path; only a small nonzero gap marks a real kink.
        diff = (a - b).abs()
        self.ties += int(((diff < self.tie_tol) & (diff > 0)).sum())
        self.elementwise_ops += max(a.numel(), b.numel())

    def reduction(self, t: torch.Tensor, dim: int) -> None:
        self.elementwise_ops += t.numel()
        if t.shape[dim] >= 2:
            top2 = torch.topk(t, 2, dim=dim).values
            gaps = (top2.select(dim, 0) - top2.select(dim, 1)).abs()
            self.ties += int(((gaps < self.tie_tol) & (gaps > 0)).sum())


def fuzzy_and(a: torch.Tensor, b: torch.Tensor, op: str, probe: InferenceProbe | None = None):
    if probe is not None and op == "min":
        probe.binary(a, b)
    elif probe is not None:
        probe.elementwise_ops += max(a.numel(), b.numel())
    return torch.minimum(a, b) if op == "min" else a * b


def fuzzy_or(a: torch.Tensor, b: torch.Tensor, op: str, probe: InferenceProbe | None = None):
    if probe is not None and op == "max":
        probe.binary(a, b)
    elif probe is not None:
        probe.elementwise_ops += max(a.numel(), b.numel())
    return torch.maximum(a, b) if op == "max" else a + b - a * b


def merge_max(old: torch.Tensor, new: torch.Tensor, probe: InferenceProbe | None = None):
    if probe is not None:
        probe.binary(old, new)
    return torch.maximum(old, new)


def exist_max(t: torch.Tensor, dim: int, probe: InferenceProbe | None = None):
    if probe is not None:
        probe.reduction(t, dim)
    return t.amax(dim=dim)


def pool_pairs(
    alpha1: torch.Tensor,
    alpha2: torch.Tensor,
    term: torch.Tensor,
    pool: str,
    probe: InferenceProbe | None = None,
):
    """POOL over candidate pairs of alpha1[p] * alpha2[q] * term[p, q, ...]."""
    if probe is not None:
        probe.elementwise_ops += term.numel()
    if pool == "sum":
        return torch.einsum("p,q,pq...->...", alpha1, alpha2, term)
    weights = (alpha1[:, None] * alpha2[None, :]).reshape(
        alpha1.shape[0], alpha2.shape[0], *([1] * (term.dim() - 2))
    )
    weighted = weights * term
    if probe is not None:
        probe.reduction(weighted.flatten(0, 1), 0)
    return weighted.amax(dim=(0, 1))


def pool_single(
    alpha: torch.Tensor,
    stack: torch.Tensor,
    pool: str,
    probe: InferenceProbe | None = None,
):
    """POOL over single candidates of alpha[p] * stack[p, ...]."""
    if probe is not None:
        probe.elementwise_ops += stack.numel()
    if pool == "sum":
        return torch.einsum("p,p...->...", alpha, stack)
    weighted = alpha.reshape(-1, *([1] * (stack.dim() - 1))) * stack
    if probe is not None:
        probe.reduction(weighted, 0)
    return weighted.amax(dim=0)


def similarity_scores(
    slot_embedding: torch.Tensor,
    candidates: torch.Tensor,
    kind: str,
) -> torch.Tensor:
    """Per-candidate similarity between one slot embedding and a (k, d) matrix.

    L1/L2 enter as negated distances so that larger always means closer;
    scalar_product enters raw.
    """
    if kind == "cosine":
        e_norm = slot_embedding.norm()
        c_norms = candidates.norm(dim=1)
        if e_norm < _ZERO_NORM_TOL or (c_norms < _ZERO_NORM_TOL).any():
            raise ValueError("cosine similarity undefined for zero-norm embedding")
        return (candidates @ slot_embedding) / (c_norms * e_norm)
    if kind == "L1":
        return -(candidates - slot_embedding).abs().sum(dim=1)
    if kind == "L2":
        return -(candidates - slot_embedding).norm(dim=1)
    if kind == "scalar_product":
        return candidates @ slot_embedding
    raise ValueError(f"unknown similarity {kind!r}")
