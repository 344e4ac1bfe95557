"""Command-line interface.

Subcommands: gen-task, train, eval, extract, experiment, sweep,
check-grad.  Commands that act as acceptance gates (check-grad, and eval
with --gate) exit nonzero when the gate fails.  The only environment
variable read is HORNLEARN_WORKERS (experiment/sweep worker count).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import torch

from .extraction import SUCCESS_MSE, extract_program, symbolic_evaluate
from .harness import (
    defaults_for,
    parse_grid,
    records_csv,
    report_markdown,
    resolve_configs,
    run_experiment,
    sweep,
    sweep_csv,
)
from .inference import evaluation_mse, run_inference
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .tasks import TASK_NAMES, IlpTask, TaskSpec, generate_task, load_task, save_task
from .training import TrainConfig, check_gradients, configs_from_entries, log_to_csv, parse_config_file, train


def _load_configs(args) -> tuple[ModelConfig | None, TrainConfig | None, dict[str, int]]:
    if not getattr(args, "config", None):
        return None, None, {}
    entries = parse_config_file(args.config)
    task = getattr(args, "task", None)
    if task:
        d = defaults_for(task)
        base_model = ModelConfig(n_layers=d.max_depth, aux_per_rule=d.aux_per_rule)
        base_train = TrainConfig(train_steps=d.train_steps)
    else:
        base_model = base_train = None
    model_cfg, train_cfg, extras = configs_from_entries(entries, base_model, base_train)
    return model_cfg, train_cfg, extras


def _task_for_eval(args, default_n: int) -> IlpTask:
    if args.task_file:
        return load_task(args.task_file)
    n = args.n or default_n
    return generate_task(TaskSpec(args.task, n, seed=args.task_seed))


def cmd_gen_task(args) -> int:
    task = generate_task(
        TaskSpec(args.task, args.n, seed=args.seed),
        negative_fraction=args.negative_fraction,
    )
    save_task(task, args.out)
    print(f"wrote {args.task} ({args.n} constants, seed {args.seed}) to {args.out}")
    return 0


def cmd_train(args) -> int:
    model_cfg, train_cfg, extras = _load_configs(args)
    d = defaults_for(args.task)
    model_cfg, train_cfg, d = resolve_configs(args.task, model_cfg, train_cfg, extras)
    train_cfg = replace(train_cfg, seed=args.seed)
    if args.iterations is not None:
        train_cfg = replace(train_cfg, n_iterations=args.iterations)
    n = args.n or d.train_num_constants
    result = train(TaskSpec(args.task, n, seed=args.seed), model_cfg, train_cfg)
    save_checkpoint(result.model, args.out)
    if args.log:
        Path(args.log).write_text(log_to_csv(result.log))
    print(
        f"trained {args.task} for {train_cfg.n_iterations} iterations "
        f"(final train mse {result.final_train_mse:.3e}); checkpoint: {args.out}"
    )
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    default_n = defaults_for(args.task).eval_num_constants if args.task else 0
    task = _task_for_eval(args, default_n)
    steps = args.steps or (defaults_for(task.name).eval_steps if task.name in TASK_NAMES else 4)
    with torch.no_grad():
        state, _ = run_inference(model, task, steps)
        soft = evaluation_mse(state, task)
    print(f"soft evaluation mse: {soft:.6e} ({'success' if soft < SUCCESS_MSE else 'failure'})")
    worst = soft
    if args.symbolic:
        extracted = extract_program(model)
        sym, ok = symbolic_evaluate(extracted, task, max_steps=steps)
        print(f"symbolic evaluation mse: {sym:.6e} ({'success' if ok else 'failure'})")
        print(extracted.program.to_text())
        worst = max(worst, sym)
    if args.gate and worst >= SUCCESS_MSE:
        return 1
    return 0


def cmd_extract(args) -> int:
    model = load_checkpoint(args.checkpoint)
    result = extract_program(model)
    if args.json:
        print(json.dumps(result.audit(), indent=2))
    else:
        print(result.program.to_text())
    return 0


def cmd_experiment(args) -> int:
    model_cfg, train_cfg, extras = _load_configs(args)
    seeds = list(range(args.seeds))
    report = run_experiment(
        args.task, seeds, model_cfg, train_cfg,
        overrides=extras or None, eval_repeats=args.eval_repeats,
    )
    print(report_markdown([report]))
    if args.csv:
        Path(args.csv).write_text(records_csv([report]))
        print(f"per-seed records: {args.csv}")
    return 0


def cmd_sweep(args) -> int:
    model_cfg, train_cfg, _ = _load_configs(args)
    grid = parse_grid(args.grid)
    cells = sweep(args.task, grid, list(range(args.seeds)), model_cfg, train_cfg)
    text = sweep_csv(cells)
    if args.csv:
        Path(args.csv).write_text(text)
        print(f"sweep results: {args.csv}")
    else:
        print(text, end="")
    return 0


def cmd_check_grad(args) -> int:
    task = generate_task(TaskSpec(args.task, args.n or defaults_for(args.task).train_num_constants))
    d = defaults_for(args.task)
    report = check_gradients(
        task,
        n_steps=args.steps or d.train_steps,
        model_config=ModelConfig(n_layers=d.max_depth),
        n_coords=args.coords,
        tolerance=args.tolerance,
        seed=args.seed,
    )
    print(report.summary())
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hornlearn",
        description="Differentiable rule induction over Horn-clause templates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-task", help="generate a task file")
    p.add_argument("--task", required=True, choices=TASK_NAMES)
    p.add_argument("--n", type=int, required=True, help="number of constants")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--negative-fraction", type=float, default=1.0)
    p.set_defaults(func=cmd_gen_task)

    p = sub.add_parser("train", help="train one model and write a checkpoint")
    p.add_argument("--task", required=True, choices=TASK_NAMES)
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, help="training constants (default: task table)")
    p.add_argument("--iterations", type=int, help="override training iterations")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="write the training log CSV here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a task")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--task", choices=TASK_NAMES)
    p.add_argument("--task-file", help="evaluate on a task file instead")
    p.add_argument("--n", type=int, help="eval constants (default: task table)")
    p.add_argument("--task-seed", type=int, default=0)
    p.add_argument("--steps", type=int, help="inference steps (default: task table)")
    p.add_argument("--symbolic", action="store_true", help="also evaluate the extracted program")
    p.add_argument("--gate", action="store_true", help="exit nonzero unless mse < 1e-4")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract", help="print the symbolic program of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--json", action="store_true", help="structured dump with slot scores")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("experiment", help="multi-seed protocol run")
    p.add_argument("--task", required=True, choices=TASK_NAMES)
    p.add_argument("--seeds", type=int, required=True, help="number of seeds (0..K-1)")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--csv", help="write per-seed records here")
    p.add_argument("--eval-repeats", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("sweep", help="grid sweep, e.g. --grid 'similarity=cosine|L2;max-depth=1|4'")
    p.add_argument("--task", required=True, choices=TASK_NAMES)
    p.add_argument("--grid", required=True)
    p.add_argument("--seeds", type=int, required=True)
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--csv", help="write the sweep table here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check-grad", help="finite-difference gradient verification")
    p.add_argument("--task", default="predecessor", choices=TASK_NAMES)
    p.add_argument("--n", type=int, help="constants (default: task table)")
    p.add_argument("--steps", type=int, help="inference steps (default: task table)")
    p.add_argument("--coords", type=int, default=60)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check_grad)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "task_file", None) is None and args.command == "eval" and not args.task:
        print("eval needs --task or --task-file", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
