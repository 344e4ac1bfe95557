"""Multi-seed experiment runner and report emission.

Reproduces the benchmark protocol: per seed, train on train-sized
instances, then measure three numbers on a freshly generated eval-sized
instance: noise-free soft-inference MSE, the extracted program's crisp
MSE, and a noise-free train-sized MSE.  A run succeeds on a metric when
its MSE is below 1e-4.  Reports aggregate success percentages per task.

Per-task defaults (inference steps and instance sizes) follow the
benchmark's published per-task values; fizz and length have no published
row and mirror buzz and member respectively.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace

import torch

from .extraction import SUCCESS_MSE, extract_program, symbolic_evaluate
from .inference import evaluation_mse, run_inference
from .model import ModelConfig
from .tasks import DETERMINISTIC_TASKS, TASK_NAMES, TaskSpec, generate_task
from .training import TrainConfig, train

WORKERS_ENV = "HORNLEARN_WORKERS"


@dataclass(frozen=True)
class TaskDefaults:
    max_depth: int
    train_steps: int
    eval_steps: int
    train_num_constants: int
    eval_num_constants: int
    aux_per_rule: int = 1


TASK_DEFAULTS: dict[str, TaskDefaults] = {
    "predecessor": TaskDefaults(4, 2, 4, 10, 14),
    "undirected_edge": TaskDefaults(4, 2, 2, 4, 6),
    "less_than": TaskDefaults(4, 12, 12, 10, 12),
    "member": TaskDefaults(4, 12, 12, 5, 7),
    "connectedness": TaskDefaults(4, 4, 4, 5, 5),
    "son": TaskDefaults(4, 4, 4, 9, 10),
    "grandparent": TaskDefaults(4, 4, 4, 9, 11),
    "adjacent_to_red": TaskDefaults(4, 4, 4, 7, 9),
    "two_children": TaskDefaults(4, 4, 5, 5, 7),
    "relatedness": TaskDefaults(4, 10, 12, 8, 10),
    "cyclic": TaskDefaults(4, 4, 4, 6, 7),
    "graph_coloring": TaskDefaults(4, 4, 4, 8, 10),
    "even_odd": TaskDefaults(4, 6, 8, 11, 15),
    "even_succ2": TaskDefaults(4, 6, 8, 11, 15),
    "buzz": TaskDefaults(4, 8, 10, 11, 16),
    # no published rows; mirrored from buzz / member
    "fizz": TaskDefaults(4, 8, 10, 11, 16),
    "length": TaskDefaults(4, 12, 12, 5, 7),
}


@dataclass
class RunRecord:
    task: str
    seed: int
    train_mse: float
    soft_eval_mse: float
    symbolic_eval_mse: float
    train_success: bool
    soft_success: bool
    symbolic_success: bool
    wall_time: float
    program_text: str


@dataclass
class ExperimentReport:
    task: str
    seeds: list[int]
    records: list[RunRecord]
    fingerprint: str

    def _pct(self, attr: str) -> float:
        if not self.records:
            return 0.0
        return 100.0 * sum(getattr(r, attr) for r in self.records) / len(self.records)

    @property
    def pct_train(self) -> float:
        return self._pct("train_success")

    @property
    def pct_soft(self) -> float:
        return self._pct("soft_success")

    @property
    def pct_symbolic(self) -> float:
        return self._pct("symbolic_success")


def defaults_for(task_name: str) -> TaskDefaults:
    if task_name not in TASK_DEFAULTS:
        raise ValueError(f"unknown task {task_name!r}; expected one of {', '.join(TASK_NAMES)}")
    return TASK_DEFAULTS[task_name]


def resolve_configs(
    task_name: str,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    overrides: dict[str, int] | None = None,
) -> tuple[ModelConfig, TrainConfig, TaskDefaults]:
    """Fill per-task defaults into the configs.

    Explicit ``model_config``/``train_config`` win over task defaults;
    ``overrides`` (eval-steps / train-num-constants / eval-num-constants)
    win over everything.
    """
    d = defaults_for(task_name)
    model_config = model_config or ModelConfig(
        n_layers=d.max_depth, aux_per_rule=d.aux_per_rule
    )
    train_config = train_config or TrainConfig(train_steps=d.train_steps)
    merged = replace(
        d,
        max_depth=model_config.n_layers,
        train_steps=train_config.train_steps,
        aux_per_rule=model_config.aux_per_rule,
    )
    for key, value in (overrides or {}).items():
        attr = key.replace("-", "_")
        merged = replace(merged, **{attr: value})
    return model_config, train_config, merged


def _eval_seed(seed: int, repeat: int) -> int:
    return 900_000_011 + 7919 * seed + repeat


def run_single(
    task_name: str,
    seed: int,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    overrides: dict[str, int] | None = None,
    eval_repeats: int = 1,
) -> RunRecord:
    """Train one seed and evaluate it the three protocol ways."""
    model_config, train_config, d = resolve_configs(
        task_name, model_config, train_config, overrides
    )
    train_config = replace(train_config, seed=seed, train_steps=d.train_steps)
    start = time.perf_counter()
    result = train(
        TaskSpec(task_name, d.train_num_constants, seed=seed),
        model_config,
        train_config,
    )
    model = result.model

    with torch.no_grad():
        train_task = generate_task(
            TaskSpec(task_name, d.train_num_constants, seed=_eval_seed(seed, 0) + 1)
        )
        state, _ = run_inference(model, train_task, d.train_steps)
        train_mse = evaluation_mse(state, train_task)

        extracted = extract_program(model)
        soft_mses, sym_mses = [], []
        for repeat in range(eval_repeats):
            eval_task = generate_task(
                TaskSpec(task_name, d.eval_num_constants, seed=_eval_seed(seed, repeat))
            )
            state, _ = run_inference(model, eval_task, d.eval_steps)
            soft_mses.append(evaluation_mse(state, eval_task))
            # the crisp twin of an n-step soft model is the program
            # truncated at the same step budget
            sym_mses.append(
                symbolic_evaluate(extracted, eval_task, max_steps=d.eval_steps)[0]
            )
    soft_mse = sum(soft_mses) / len(soft_mses)
    sym_mse = sum(sym_mses) / len(sym_mses)

    return RunRecord(
        task=task_name,
        seed=seed,
        train_mse=train_mse,
        soft_eval_mse=soft_mse,
        symbolic_eval_mse=sym_mse,
        train_success=train_mse < SUCCESS_MSE,
        soft_success=soft_mse < SUCCESS_MSE,
        symbolic_success=sym_mse < SUCCESS_MSE,
        wall_time=time.perf_counter() - start,
        program_text=extracted.program.to_text(),
    )


def config_fingerprint(
    task_name: str,
    model_config: ModelConfig,
    train_config: TrainConfig,
    defaults: TaskDefaults,
) -> str:
    payload = {
        "task": task_name,
        "model": {**asdict(model_config), "operators": asdict(model_config.operators)},
        "train": asdict(train_config),
        "defaults": asdict(defaults),
    }
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _worker(args):
    task_name, seed, model_config, train_config, overrides, eval_repeats = args
    torch.set_num_threads(1)
    return run_single(task_name, seed, model_config, train_config, overrides, eval_repeats)


def run_experiment(
    task_name: str,
    seeds: list[int],
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    overrides: dict[str, int] | None = None,
    eval_repeats: int = 1,
) -> ExperimentReport:
    """Train/evaluate every seed; per-seed failures are recorded, never raised."""
    model_config, train_config, d = resolve_configs(
        task_name, model_config, train_config, overrides
    )
    fingerprint = config_fingerprint(task_name, model_config, train_config, d)

    records: list[RunRecord] = []
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    jobs = [
        (task_name, seed, model_config, train_config, overrides, eval_repeats)
        for seed in seeds
    ]
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_worker, job) for job in jobs]
            for seed, future in zip(seeds, futures):
                try:
                    records.append(future.result())
                except Exception as exc:  # noqa: BLE001 - sweep must survive
                    records.append(_failure_record(task_name, seed, exc))
    else:
        for job in jobs:
            try:
                records.append(run_single(*job))
            except Exception as exc:  # noqa: BLE001
                records.append(_failure_record(task_name, job[1], exc))
    return ExperimentReport(
        task=task_name, seeds=list(seeds), records=records, fingerprint=fingerprint
    )


def _failure_record(task_name: str, seed: int, exc: Exception) -> RunRecord:
    return RunRecord(
        task=task_name,
        seed=seed,
        train_mse=float("nan"),
        soft_eval_mse=float("nan"),
        symbolic_eval_mse=float("nan"),
        train_success=False,
        soft_success=False,
        symbolic_success=False,
        wall_time=0.0,
        program_text=f"# run failed: {exc}",
    )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def parse_grid(text: str) -> dict[str, list[str]]:
    """Parse ``key=v1|v2;key2=v3`` into an ordered grid specification."""
    grid: dict[str, list[str]] = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"grid cell {part!r} is not key=v1|v2")
        key, values = part.split("=", 1)
        grid[key.strip()] = [v.strip() for v in values.split("|") if v.strip()]
    if not grid:
        raise ValueError("empty sweep grid")
    return grid


def grid_cells(grid: dict[str, list[str]]) -> list[dict[str, str]]:
    cells: list[dict[str, str]] = [{}]
    for key, values in grid.items():
        cells = [{**cell, key: v} for cell in cells for v in values]
    return cells


def sweep(
    task_name: str,
    grid: dict[str, list[str]],
    seeds: list[int],
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
) -> list[tuple[dict[str, str], ExperimentReport]]:
    """One experiment per grid cell; cell entries use config-file key names."""
    from .training import configs_from_entries

    results = []
    for cell in grid_cells(grid):
        cell_model, cell_train, extras = configs_from_entries(
            cell, model_config, train_config
        )
        report = run_experiment(
            task_name, seeds, cell_model, cell_train, overrides=extras or None
        )
        results.append((cell, report))
    return results


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

def report_markdown(reports: list[ExperimentReport]) -> str:
    lines = [
        "| Task | Train | Soft evaluation | Symbolic evaluation | Seeds | Config |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    for r in reports:
        lines.append(
            f"| {r.task} | {r.pct_train:.0f} | {r.pct_soft:.0f} | "
            f"{r.pct_symbolic:.0f} | {len(r.records)} | {r.fingerprint} |"
        )
    text = "\n".join(lines) + "\n"
    if any(r.task == "length" for r in reports):
        text += (
            "\nlength: no negative-example set is published; the full "
            "complement of the enumerated positives is used.\n"
        )
    return text


_RECORD_FIELDS = [
    "task", "seed", "train_mse", "soft_eval_mse", "symbolic_eval_mse",
    "train_success", "soft_success", "symbolic_success", "wall_time",
]


def records_csv(reports: list[ExperimentReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(_RECORD_FIELDS)
    for report in reports:
        for r in report.records:
            writer.writerow([getattr(r, f) for f in _RECORD_FIELDS])
    return buf.getvalue()


def sweep_csv(cells: list[tuple[dict[str, str], ExperimentReport]]) -> str:
    keys = sorted({k for cell, _ in cells for k in cell})
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(keys + ["pct_train", "pct_soft", "pct_symbolic", "seeds"])
    for cell, report in cells:
        writer.writerow(
            [cell.get(k, "") for k in keys]
            + [report.pct_train, report.pct_soft, report.pct_symbolic, len(report.records)]
        )
    return buf.getvalue()
