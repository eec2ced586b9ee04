"""Command-line pipeline: generate data, train policies, simulate, reproduce.

Exit codes: 0 success, 1 gate or runtime failure, 2 usage/config error.
`FORMCTL_THREADS` caps worker threads for per-agent training.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .control import ONLINE_MODES
from .datagen import (
    agent_training_arrays,
    expert_error_summary,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .errors import ConfigError, EmptyDataset, FormctlError, IoFailure
from .formation import solve_equilibrium
from .neuralnet import (
    InputLayout,
    TrainHyper,
    gradient_check,
    init_policy,
    load_policy,
    save_policy,
    train,
)
from .plots import plot_error_curves, plot_plan_view
from .simcore import SimConfig, metrics, run_closed_loop, write_csv

EXPERT_CONVERGENCE_GATE = 1e-2  # max final error for every training run
FINAL_ERROR_FRACTION = 0.05  # final error vs initial, per agent
HOLD_BAND_FRACTION = 0.10  # band the error must stay inside from t >= HOLD_FROM
HOLD_FROM = 45.0
EQUILIBRIUM_GATE = 1e-2  # final positions vs the linear-system solution
GRAD_CHECK_GATE = 1e-4


def _worker_count(num_agents: int) -> int:
    cap = os.environ.get("FORMCTL_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(num_agents, limit))


def _overrides(args) -> dict:
    return {
        "seed": getattr(args, "seed", None),
        "trajectories": getattr(args, "trajectories", None),
        "mode": getattr(args, "mode", None),
        "out_dir": getattr(args, "out", None),
        "fast": getattr(args, "fast", False),
    }


def _load(args) -> ExperimentConfig:
    cfg = load_config(getattr(args, "config", None), _overrides(args))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    t0 = time.perf_counter()
    dataset = generate_dataset(cfg.gen)
    write_dataset(dataset, cfg.dataset_path)
    finals = expert_error_summary(dataset, cfg.graph, cfg.spec, cfg.leader)
    per_agent = len(dataset.records) // cfg.graph.num_followers
    print(f"dataset: {cfg.dataset_path}")
    print(
        f"trajectories={dataset.meta.num_trajectories} records={len(dataset.records)} "
        f"({per_agent} per agent)"
    )
    print(
        f"expert final errors: max={finals.max():.3e} mean={finals.mean():.3e} "
        f"({time.perf_counter() - t0:.1f}s)"
    )
    return 0


def _train_one(cfg: ExperimentConfig, dataset, agent: int):
    layout = InputLayout(owner=agent, n=cfg.dimension, num_followers=cfg.graph.num_followers)
    X, Y = agent_training_arrays(dataset, agent, layout)
    if len(X) == 0:
        raise EmptyDataset(f"dataset has no records for agent {agent}")
    hyper = TrainHyper(
        epochs=cfg.hyper.epochs,
        batch_size=cfg.hyper.batch_size,
        learning_rate=cfg.hyper.learning_rate,
        momentum=cfg.hyper.momentum,
        validation_fraction=cfg.hyper.validation_fraction,
        seed=cfg.hyper.seed + agent,
    )
    policy = init_policy(layout, cfg.hidden, seed=hyper.seed)
    return train(policy, X, Y, hyper)


def cmd_train(args) -> int:
    cfg = _load(args)
    if not cfg.dataset_path.exists():
        raise IoFailure(f"dataset not found: {cfg.dataset_path} (run gen-data first)")
    dataset = read_dataset(cfg.dataset_path)
    agents = list(range(1, cfg.graph.num_followers + 1))
    t0 = time.perf_counter()
    workers = _worker_count(len(agents))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: _train_one(cfg, dataset, i), agents))
    else:
        results = [_train_one(cfg, dataset, i) for i in agents]
    report_path = cfg.out_dir / "training_report.txt"
    with open(report_path, "w") as fh:
        for agent, (policy, report) in zip(agents, results):
            save_policy(policy, cfg.policy_path(agent))
            ratio = report.final_val_mse / max(report.target_variance, 1e-300)
            line = (
                f"agent {agent}: train {report.train_losses[0]:.4e} -> "
                f"{report.train_losses[-1]:.4e}  val_mse {report.final_val_mse:.4e} "
                f"({100 * ratio:.1f}% of target variance)"
            )
            print(line)
            fh.write(line + "\n")
    print(f"policies: {cfg.out_dir}/policy_agent*.json ({time.perf_counter() - t0:.1f}s)")
    return 0


def _sim_config(cfg: ExperimentConfig, mode: str) -> SimConfig:
    policies = None
    if mode in ("neuro-adaptive", "nn-only"):
        paths = [cfg.policy_path(i) for i in range(1, cfg.graph.num_followers + 1)]
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise IoFailure(f"policy files missing (run train first): {missing}")
        policies = [load_policy(p) for p in paths]
    return SimConfig(
        graph=cfg.graph,
        spec=cfg.spec,
        gains=cfg.gains,
        leader=cfg.leader,
        mode=mode,
        dt=cfg.sim_dt,
        t_end=cfg.sim_t_end,
        log_stride=cfg.log_stride,
        system_seed=cfg.system_seed,
        variation=cfg.variation,
        init_seed=cfg.init_seed,
        init_halfwidth=cfg.sim_init_halfwidth,
        policies=policies,
        expert_kp=cfg.gen.expert_kp,
        expert_kd=cfg.gen.expert_kd,
    )


def cmd_simulate(args) -> int:
    cfg = _load(args)
    mode = cfg.mode
    t0 = time.perf_counter()
    log = run_closed_loop(_sim_config(cfg, mode))
    csv_path = cfg.out_dir / f"sim_{mode}.csv"
    write_csv(log, csv_path)
    plot_error_curves(log, cfg.out_dir / f"errors_{mode}.svg")
    plot_plan_view(log, cfg.leader, cfg.out_dir / f"planview_{mode}.svg")
    m = metrics(log)
    print(f"simulated mode={mode} t_end={cfg.sim_t_end}s ({time.perf_counter() - t0:.1f}s)")
    print(f"log: {csv_path}")
    for i in range(cfg.graph.num_followers):
        print(
            f"agent {i + 1}: initial {m.initial[i]:.3f} final {m.final[i]:.3e} "
            f"peak {m.peak[i]:.3f} settle(5%) {m.settling_time[i]:.1f}s"
        )
    print(f"audit violations: {int(log.audit_violations.sum())}")
    return 0


def cmd_reproduce(args) -> int:
    cfg = _load(args)
    t_start = time.perf_counter()
    print("[1/3] generating expert dataset...")
    rc = cmd_gen_data(args)
    if rc != 0:
        return rc
    print("[2/3] training per-agent policies...")
    rc = cmd_train(args)
    if rc != 0:
        return rc
    print("[3/3] simulating the adaptive controller...")
    log = run_closed_loop(_sim_config(cfg, "neuro-adaptive"))
    write_csv(log, cfg.out_dir / "sim_neuro-adaptive.csv")
    plot_error_curves(log, cfg.out_dir / "errors_neuro-adaptive.svg")
    plot_plan_view(log, cfg.leader, cfg.out_dir / "planview_neuro-adaptive.svg")

    dataset = read_dataset(cfg.dataset_path)
    finals = expert_error_summary(dataset, cfg.graph, cfg.spec, cfg.leader)
    m = metrics(log)
    hold = log.t >= HOLD_FROM
    gates = [
        (
            f"expert runs converge (max final error {finals.max():.2e} <= {EXPERT_CONVERGENCE_GATE})",
            bool(finals.max() <= EXPERT_CONVERGENCE_GATE),
        ),
        (
            f"final error <= {FINAL_ERROR_FRACTION:.0%} of initial for every agent",
            bool(np.all(m.final <= FINAL_ERROR_FRACTION * m.initial)),
        ),
        (
            f"error stays <= {HOLD_BAND_FRACTION:.0%} of initial for t >= {HOLD_FROM:g}s",
            bool(np.all(m.series[hold] <= HOLD_BAND_FRACTION * m.initial[None, :])),
        ),
    ]
    x0_final = cfg.leader.position(float(log.t[-1]))
    eq = np.array(solve_equilibrium(cfg.graph, cfg.spec, x0_final))
    pos_err = float(np.max(np.linalg.norm(log.x1[-1] - eq, axis=1)))
    gates.append(
        (
            f"final positions match equilibrium solve (max {pos_err:.2e} <= {EQUILIBRIUM_GATE})",
            bool(pos_err <= EQUILIBRIUM_GATE),
        )
    )
    gates.append(
        ("locality audit clean (zero out-of-neighborhood reads)",
         int(log.audit_violations.sum()) == 0),
    )

    print(f"\nverdicts (wall time {time.perf_counter() - t_start:.1f}s):")
    all_ok = True
    for label, ok in gates:
        print(f"  [{'PASS' if ok else 'FAIL'}] {label}")
        all_ok &= ok
    return 0 if all_ok else 1


def cmd_grad_check(args) -> int:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    worst = 0.0
    for depth in (1, 2, 3):
        for width in (4, 16, 32):
            for _ in range(5):
                layout = InputLayout(owner=1, n=2, num_followers=2)
                policy = init_policy(layout, (width,) * depth, seed=int(rng.integers(2**31)))
                for w in policy.weights:
                    w += rng.normal(0, 0.3, w.shape)
                x = rng.normal(0, 1, layout.width)
                x[layout.mask_index(0)] = 1.0
                x[layout.mask_index(1)] = 0.0
                y = rng.normal(0, 1, layout.n)
                worst = max(worst, gradient_check(policy, (x, y)))
    ok = worst <= GRAD_CHECK_GATE
    print(f"gradient check: max relative error {worst:.3e} (gate {GRAD_CHECK_GATE})")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="formctl",
        description="Distributed neuro-adaptive formation control pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mode_flag=False):
        p.add_argument("--config", type=str, default=None, help="TOML config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--trajectories", type=int, default=None, help="override trajectory count")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--fast", action="store_true", help="fast variant (20 trajectories)")
        if mode_flag:
            p.add_argument(
                "--mode",
                choices=["expert", *ONLINE_MODES],
                default=None,
                help="controller to simulate",
            )

    common(sub.add_parser("gen-data", help="generate the expert trajectory dataset"))
    common(sub.add_parser("train", help="train one policy per agent"))
    common(sub.add_parser("simulate", help="run the closed loop and emit CSV + SVG"), mode_flag=True)
    common(sub.add_parser("reproduce", help="full pipeline plus pass/fail verdicts"))
    gc = sub.add_parser("grad-check", help="backprop vs finite differences battery")
    gc.add_argument("--seed", type=int, default=None)
    return parser


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "reproduce": cmd_reproduce,
    "grad-check": cmd_grad_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, IoFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FormctlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
