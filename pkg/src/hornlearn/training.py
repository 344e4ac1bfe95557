"""Training: loss terms, annealed noise, optimization, gradient checking.

Each iteration draws one training instance, perturbs every embedding with
geometrically decaying Gaussian noise, computes softmax unification
scores under linearly decaying Gumbel noise, rolls the inference steps,
and minimizes summed binary cross-entropy on the target valuation plus
the interpretability penalty ``weight * sum(alpha * (1 - alpha))`` that
pushes unification scores toward one-hot.

Predicate embeddings and slot embeddings form two optimizer parameter
groups with their own step sizes.
"""

from __future__ import annotations

import io
import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import torch

from .inference import ScoreSet, compute_scores, run_inference
from .model import Model, ModelConfig, build_model
from .operators import InferenceProbe
from .tasks import DETERMINISTIC_TASKS, IlpTask, TaskSpec, generate_task

BCE_EPS = 1e-7


class TrainingDivergedError(RuntimeError):
    """Raised when the loss stops being finite; carries a diagnostic dump."""


@dataclass
class TrainConfig:
    n_iterations: int = 2000
    lr: float = 0.01
    lr_rules: float = 0.03
    reg_weight: float = 0.1
    gumbel_scale0: float = 0.3
    gauss_sigma0: float = 0.1
    gauss_decay: float | None = None  # None: sigma reaches sigma0/10 at n_T/2
    train_steps: int = 4
    seed: int = 0
    optimizer: str = "adam"
    gumbel_variant: bool = False

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.lr_rules <= 0:
            raise ValueError("learning rates must be positive")
        if self.reg_weight < 0:
            raise ValueError("reg_weight must be >= 0")
        if self.gumbel_scale0 < 0:
            raise ValueError("gumbel_scale0 must be >= 0")
        if self.gauss_decay is not None and not 0 < self.gauss_decay < 1:
            raise ValueError("gauss_decay must be in (0, 1)")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")

    def resolved_gauss_decay(self) -> float:
        if self.gauss_decay is not None:
            return self.gauss_decay
        return 10.0 ** (-2.0 / self.n_iterations)


@dataclass
class LogRow:
    iteration: int
    loss: float
    bce: float
    reg: float
    train_mse: float
    gumbel: float
    sigma: float


@dataclass
class TrainResult:
    model: Model
    log: list[LogRow]

    @property
    def final_train_mse(self) -> float:
        return self.log[-1].train_mse if self.log else float("nan")


# ---------------------------------------------------------------------------
# Loss terms and schedules
# ---------------------------------------------------------------------------

def truth_tensor(task: IlpTask, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Closed-world labels over all target groundings (positives at 1)."""
    n = len(task.constants)
    index = {c: i for i, c in enumerate(task.constants)}
    shape = (n,) if task.target.arity == 1 else (n, n)
    out = torch.zeros(shape, dtype=dtype)
    for atom in task.positives:
        out[tuple(index[c] for c in atom.args)] = 1.0
    return out


def bce_loss(valuation: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Summed binary cross-entropy, with valuations clamped to [eps, 1-eps]."""
    if valuation.shape != truth.shape:
        raise ValueError(f"shape mismatch: {tuple(valuation.shape)} vs {tuple(truth.shape)}")
    v = valuation.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return (-truth * v.log() - (1.0 - truth) * (1.0 - v).log()).sum()


def interpretability_reg(scores: ScoreSet, weight: float) -> torch.Tensor:
    total = sum((alpha * (1.0 - alpha)).sum() for alpha in scores.all_alphas())
    return weight * total


def gumbel_scale_at(t: int, config: TrainConfig) -> float:
    """Linear decay from gumbel_scale0 to exactly 0 at t = n_iterations."""
    g = max(config.gumbel_scale0 * (1.0 - t / config.n_iterations), 0.0)
    if config.gumbel_variant and 0.0 < g < 1.0:
        # Experimental amplitude rescaling, clamped at 0; off by default.
        g = max(math.log(-math.log(g)), 0.0)
    return g


def gauss_sigma_at(t: int, config: TrainConfig) -> float:
    return config.gauss_sigma0 * config.resolved_gauss_decay() ** t


def perturb_embeddings(
    model: Model,
    sigma: float,
    generator: torch.Generator | None = None,
) -> dict[str, torch.Tensor]:
    """Forward-pass view of every embedding with i.i.d. Gaussian noise added.

    The model parameters themselves are untouched; gradients flow through
    the additive noise back to them.
    """
    items = model.embedding_items()
    if sigma == 0.0:
        return items
    return {
        key: t + sigma * torch.randn(t.shape, generator=generator, dtype=t.dtype)
        for key, t in items.items()
    }


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def _instance_seed(base_seed: int, iteration: int) -> int:
    return (base_seed * 1_000_003 + iteration) & 0x7FFF_FFFF


def make_optimizer(model: Model, config: TrainConfig) -> torch.optim.Optimizer:
    groups = [
        {"params": model.predicate_parameters(), "lr": config.lr},
        {"params": model.rule_parameters(), "lr": config.lr_rules},
    ]
    if config.optimizer == "adam":
        return torch.optim.Adam(groups)
    return torch.optim.SGD(groups)


def _diagnostics(scores: ScoreSet, state_values: dict) -> str:
    alphas = list(scores.all_alphas())
    lo = min(float(a.min()) for a in alphas)
    hi = max(float(a.max()) for a in alphas)
    vals = [v for v in state_values.values()]
    vlo = min(float(v.min()) for v in vals)
    vhi = max(float(v.max()) for v in vals)
    return f"alpha range [{lo:.3e}, {hi:.3e}], valuation range [{vlo:.3e}, {vhi:.3e}]"


def train(
    source: IlpTask | TaskSpec,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
) -> TrainResult:
    """Fit a model on one task (fixed instance or per-iteration generator).

    A ``TaskSpec`` source regenerates a fresh instance per iteration for
    the randomized tasks; deterministic tasks and fixed ``IlpTask``
    sources train on one instance throughout.
    """
    model_config = model_config or ModelConfig()
    cfg = train_config or TrainConfig()

    if isinstance(source, IlpTask):
        fixed: IlpTask | None = source
        spec = None
    else:
        spec = source
        fixed = generate_task(spec) if spec.name in DETERMINISTIC_TASKS else None

    first = fixed if fixed is not None else generate_task(
        replace(spec, seed=_instance_seed(cfg.seed, 0))
    )
    model = build_model(model_config, first.input_predicates, first.target, seed=cfg.seed)
    optimizer = make_optimizer(model, cfg)
    noise_gen = torch.Generator().manual_seed(cfg.seed * 7919 + 13)

    log: list[LogRow] = []
    for t in range(cfg.n_iterations):
        if fixed is not None:
            instance = fixed
        else:
            instance = generate_task(replace(spec, seed=_instance_seed(cfg.seed, t)))

        sigma = gauss_sigma_at(t, cfg)
        g = gumbel_scale_at(t, cfg)
        view = perturb_embeddings(model, sigma, noise_gen)
        scores = compute_scores(model, view, gumbel_scale=g, generator=noise_gen)
        state, _ = run_inference(model, instance, cfg.train_steps, scores=scores)

        truth = truth_tensor(instance, model.dtype)
        valuation = state.values[model.target.name]
        bce = bce_loss(valuation, truth)
        reg = interpretability_reg(scores, cfg.reg_weight)
        loss = bce + reg
        if not torch.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at iteration {t}: {_diagnostics(scores, state.values)}"
            )

        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        with torch.no_grad():
            train_mse = float(((valuation - truth) ** 2).mean())
        log.append(
            LogRow(t, loss.item(), bce.item(), reg.item(), train_mse, g, sigma)
        )
    return TrainResult(model=model, log=log)


def log_to_csv(log: list[LogRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["iteration", "loss", "bce", "reg", "train_mse", "g_t", "sigma_t"])
    for row in log:
        writer.writerow(
            [row.iteration, row.loss, row.bce, row.reg, row.train_mse, row.gumbel, row.sigma]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    tolerance: float
    passed: bool
    inconclusive: bool
    resamples: int
    worst_key: str = ""

    def summary(self) -> str:
        status = "INCONCLUSIVE" if self.inconclusive else ("PASS" if self.passed else "FAIL")
        return (
            f"{status}: max relative error {self.max_rel_error:.3e} over "
            f"{self.checked} coordinates (tolerance {self.tolerance:.1e})"
        )


def central_difference(loss_fn, tensor: torch.Tensor, index: tuple[int, ...], h: float) -> float:
    with torch.no_grad():
        original = float(tensor[index])
        tensor[index] = original + h
        plus = float(loss_fn())
        tensor[index] = original - h
        minus = float(loss_fn())
        tensor[index] = original
    return (plus - minus) / (2.0 * h)


def check_gradients(
    task: IlpTask,
    n_steps: int,
    model_config: ModelConfig | None = None,
    reg_weight: float = 0.1,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    n_coords: int = 40,
    seed: int = 0,
    max_resamples: int = 8,
) -> GradCheckReport:
    """Compare autograd against central finite differences at a random point.

    A coordinate whose finite differences at h and h/2 disagree sits on a
    min/max tie inside its difference window (the loss is piecewise there)
    and is excluded rather than scored.  If more than half of a point's
    sampled coordinates are excluded, the whole point is re-drawn with a
    fresh model; after ``max_resamples`` such points the check reports
    inconclusive.
    """
    model_config = model_config or ModelConfig()

    last_report: GradCheckReport | None = None
    for attempt in range(max(1, max_resamples)):
        # finite differences at h = 1e-5 need float64 forward passes
        model = build_model(
            model_config, task.input_predicates, task.target,
            seed=seed + 101 * attempt, dtype=torch.float64,
        )

        def full_loss() -> torch.Tensor:
            scores = compute_scores(model)
            state, _ = run_inference(model, task, n_steps, scores=scores)
            return bce_loss(
                state.values[model.target.name], truth_tensor(task, torch.float64)
            ) + interpretability_reg(scores, reg_weight)

        loss = full_loss()
        items = model.embedding_items()
        raw = torch.autograd.grad(loss, list(items.values()), allow_unused=True)
        grads = {
            key: (g if g is not None else torch.zeros_like(items[key]))
            for key, g in zip(items.keys(), raw)
        }

        rng = torch.Generator().manual_seed(seed + 17 + attempt)
        keys = sorted(items)
        max_rel, worst_key, checked, excluded = 0.0, "", 0, 0
        for _ in range(n_coords):
            key = keys[int(torch.randint(len(keys), (1,), generator=rng))]
            tensor = items[key]
            i = int(torch.randint(tensor.shape[0], (1,), generator=rng))
            fd = central_difference(full_loss, tensor, (i,), h)
            fd_half = central_difference(full_loss, tensor, (i,), h / 2)
            ad = float(grads[key][i])
            scale = max(abs(fd), abs(fd_half), abs(ad))
            if scale < 1e-10:
                checked += 1
                continue
            if abs(fd - fd_half) / scale > tolerance / 4:
                excluded += 1
                continue
            rel = abs(fd - ad) / scale
            checked += 1
            if rel > max_rel:
                max_rel, worst_key = rel, f"{key}[{i}]"
        report = GradCheckReport(
            max_rel_error=max_rel,
            checked=checked,
            tolerance=tolerance,
            passed=checked > 0 and max_rel <= tolerance,
            inconclusive=False,
            resamples=attempt,
            worst_key=worst_key,
        )
        if excluded <= n_coords // 2:
            return report
        last_report = report
    if last_report is None:
        last_report = GradCheckReport(
            max_rel_error=float("nan"),
            checked=0,
            tolerance=tolerance,
            passed=False,
            inconclusive=True,
            resamples=max_resamples,
        )
    return replace(last_report, inconclusive=True, passed=False)


# ---------------------------------------------------------------------------
# Config files (key = value, Table-style names)
# ---------------------------------------------------------------------------

_MODEL_KEYS = {
    "recursivity": ("recursivity", str),
    "max-depth": ("n_layers", int),
    "temperature": ("temperature", float),
    "embedding-dim": ("embedding_dim", int),
    "proto-set": ("proto_set", str),
    "aux-per-rule": ("aux_per_rule", int),
}
_OPERATOR_KEYS = {
    "fuzzy-and": ("and_op", str),
    "fuzzy-or": ("or_op", str),
    "pool": ("pool", str),
    "similarity": ("similarity", str),
}
_TRAIN_KEYS = {
    "lr": ("lr", float),
    "lr-rules": ("lr_rules", float),
    "gumbel-noise": ("gumbel_scale0", float),
    "lambda": ("reg_weight", float),
    "train-steps": ("train_steps", int),
    "train-iterations": ("n_iterations", int),
    "gauss-sigma0": ("gauss_sigma0", float),
    "gauss-decay": ("gauss_decay", float),
    "optimizer": ("optimizer", str),
    "seed": ("seed", int),
}
_EXTRA_KEYS = {
    "eval-steps": int,
    "train-num-constants": int,
    "eval-num-constants": int,
    "gumbel-noise-decay-mode": str,
}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read ``key = value`` lines; '#' starts a comment."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key] = value
    return entries


def configs_from_entries(
    entries: dict[str, str],
    base_model: ModelConfig | None = None,
    base_train: TrainConfig | None = None,
) -> tuple[ModelConfig, TrainConfig, dict[str, int]]:
    """Materialize configs from parsed entries; returns eval overrides too."""
    model_cfg = base_model or ModelConfig()
    train_cfg = base_train or TrainConfig()
    model_kwargs, op_kwargs, train_kwargs, extras = {}, {}, {}, {}
    for key, value in entries.items():
        if key in _MODEL_KEYS:
            name, cast = _MODEL_KEYS[key]
            model_kwargs[name] = cast(value)
        elif key in _OPERATOR_KEYS:
            name, cast = _OPERATOR_KEYS[key]
            op_kwargs[name] = cast(value)
        elif key in _TRAIN_KEYS:
            name, cast = _TRAIN_KEYS[key]
            train_kwargs[name] = cast(value)
        elif key in _EXTRA_KEYS:
            if key == "gumbel-noise-decay-mode":
                if value != "linear":
                    raise ValueError(f"unsupported gumbel-noise-decay-mode: {value!r}")
            else:
                extras[key] = _EXTRA_KEYS[key](value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    if op_kwargs:
        model_kwargs["operators"] = replace(model_cfg.operators, **op_kwargs)
    if model_kwargs:
        model_cfg = replace(model_cfg, **model_kwargs)
    if train_kwargs:
        train_cfg = replace(train_cfg, **train_kwargs)
    return model_cfg, train_cfg, extras
