"""Experiment execution: problem construction, the training loop, metric
records, and on-disk outputs.

Every random choice flows from the config seed through labeled substreams
(problem, init, tasks), so two runs of the same config produce bit-identical
metric logs. metrics.csv is written row-by-row and fsync'd before
summary.json, so a partial run is detectable by the missing summary.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import closeness, cosine_matrix, mean_pairwise_cosine
from .config import ExperimentConfig
from .errors import DegenerateGradient, MissingField
from .mlp import MLPSpec, MLPTask, make_synthetic_sources
from .nexus import NexusConfig, inner_loop
from .numerics import RngStream, rng_root, rng_substream
from .optimizers import AdamWState, Schedule, adamw_step, clip_grad, nsgd_direction, schedule_lr, sgd_step
from .tasks import (
    QuadraticTask,
    TaskFamily,
    TaskSet,
    random_cubic_task,
    sample_family,
    taskset_from_json,
    train_grad,
    train_loss,
)

CSV_HEADER = "step,lr,train_loss,ood_loss,mean_pairwise_cos,grad_norm,pseudo_grad_norm"


@dataclass
class MetricsRow:
    step: int
    lr: float
    train_loss: float
    ood_loss: float | None
    mean_pairwise_cos: float | None
    grad_norm: float
    pseudo_grad_norm: float | None

    def to_csv(self) -> str:
        def fmt(x):
            return "" if x is None else repr(float(x))

        return ",".join(
            [str(self.step), fmt(self.lr), fmt(self.train_loss), fmt(self.ood_loss),
             fmt(self.mean_pairwise_cos), fmt(self.grad_norm), fmt(self.pseudo_grad_norm)]
        )


@dataclass
class RunRecord:
    config: dict
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    final_theta: np.ndarray | None = None


@dataclass
class Problem:
    taskset: TaskSet
    theta0: np.ndarray
    ood_task: object = None
    has_analytic_minimizers: bool = False


def build_problem(cfg: ExperimentConfig, rng: RngStream) -> Problem:
    kind = cfg["problem.kind"]
    prob_rng = rng_substream(rng, "problem")
    init_rng = rng_substream(rng, "init")
    if kind == "quadratic_family":
        family = TaskFamily(
            np.zeros(cfg["problem.dim"]), cfg["problem.variance"], cfg["problem.curvature"], cfg["problem.depth"]
        )
        ts = sample_family(family, cfg["problem.k"], rng_substream(prob_rng, "train"))
        ood = family.sample_task(rng_substream(prob_rng, "ood"))
        theta0 = cfg["problem.init_scale"] * init_rng.generator.standard_normal(cfg["problem.dim"])
        return Problem(ts, theta0, ood, has_analytic_minimizers=True)
    if kind == "cubic_set":
        tasks = [
            random_cubic_task(cfg["problem.dim"], rng_substream(prob_rng, f"train/{k}"), cfg["problem.third_bound"])
            for k in range(cfg["problem.k"])
        ]
        ood = random_cubic_task(cfg["problem.dim"], rng_substream(prob_rng, "ood"), cfg["problem.third_bound"])
        theta0 = cfg["problem.init_scale"] * init_rng.generator.standard_normal(cfg["problem.dim"])
        return Problem(TaskSet(tasks), theta0, ood)
    if kind == "mlp_multisource":
        spec = MLPSpec(tuple(cfg["problem.widths"]), cfg["problem.activation"])
        sources, held_out = make_synthetic_sources(
            cfg["problem.k"],
            cfg["problem.d_in"],
            cfg["problem.d_out"],
            cfg["problem.n_per_source"],
            cfg["problem.shared_fraction"],
            rng_substream(prob_rng, "data"),
        )
        ts = TaskSet([MLPTask(spec, src) for src in sources])
        ood = MLPTask(spec, held_out)
        theta0 = cfg["problem.init_scale"] * spec.init_params(init_rng)
        return Problem(ts, theta0, ood)
    if kind == "custom_taskset_file":
        if not cfg["problem.path"]:
            raise MissingField("problem.path required for custom_taskset_file", "problem.path")
        with open(cfg["problem.path"], "r", encoding="utf-8") as fh:
            ts = taskset_from_json(fh.read())
        theta0 = cfg["problem.init_scale"] * init_rng.generator.standard_normal(ts.dim)
        analytic = all(isinstance(t, QuadraticTask) for t in ts.tasks)
        return Problem(ts, theta0, None, has_analytic_minimizers=analytic)
    raise ValueError(f"unknown problem kind {kind!r}")


def make_schedule(cfg: ExperimentConfig) -> Schedule:
    return Schedule(
        cfg["schedule.kind"],
        cfg["schedule.base_lr"],
        cfg["total_steps"],
        cfg["schedule.warmup_steps"],
        cfg["schedule.decay_steps"],
    )


def make_nexus_config(cfg: ExperimentConfig) -> NexusConfig:
    variant = "dot" if cfg["optimizer.kind"] == "nexus_dot_adamw" else "cosine"
    return NexusConfig(
        cfg["nexus.gamma"], cfg["nexus.inner_steps"], cfg["nexus.sampling"], variant, cfg["nexus.grad_floor"]
    )


def train(
    ts: TaskSet,
    total_steps: int,
    mode: str,
    schedule: Schedule,
    rng: RngStream,
    theta0: np.ndarray,
    nexus_cfg: NexusConfig | None = None,
    ood_task=None,
    metric_cadence: int = 1,
    adamw_kwargs: dict | None = None,
    clip_norm: float = 0.0,
) -> RunRecord:
    """Deterministic training loop returning per-step metrics.

    Modes: adamw and sgd take the full training gradient; nsgd_adamw feeds the
    gamma-scaled unit gradient of one sampled task to AdamW (the one-inner-step
    trajectory); nexus_adamw / nexus_dot_adamw run the dual loop.
    """
    theta = np.array(theta0, dtype=np.float64)
    task_rng = rng_substream(rng, "tasks")
    adamw_kwargs = adamw_kwargs or {}
    opt_state = None if mode == "sgd" else AdamWState.init(len(theta), **adamw_kwargs)
    needs_nexus = mode in ("nsgd_adamw", "nexus_adamw", "nexus_dot_adamw")
    if needs_nexus and nexus_cfg is None:
        raise ValueError(f"mode {mode} requires a NexusConfig")

    record = RunRecord(config={"mode": mode, "total_steps": total_steps})
    last_pg_norm: float | None = None

    def pairwise_cos(point: np.ndarray) -> float | None:
        if len(ts) < 2:
            return None
        try:
            value = mean_pairwise_cosine(cosine_matrix(ts, point))
        except DegenerateGradient:
            return None
        return value if np.isfinite(value) else None

    def emit(step: int) -> None:
        lr = schedule_lr(schedule, step)
        tl = train_loss(ts, theta)
        g = train_grad(ts, theta)
        ood = ood_task.loss(theta) if ood_task is not None else None
        record.rows.append(
            MetricsRow(step, lr, tl, ood, pairwise_cos(theta), float(np.linalg.norm(g)), last_pg_norm)
        )

    start = time.perf_counter()
    if total_steps > 0:
        emit(0)
    for step in range(1, total_steps + 1):
        lr = schedule_lr(schedule, step)
        if mode == "sgd":
            g = train_grad(ts, theta)
            if clip_norm > 0:
                g = clip_grad(g, clip_norm)
            theta = sgd_step(theta, g, lr)
        elif mode == "adamw":
            g = train_grad(ts, theta)
            if clip_norm > 0:
                g = clip_grad(g, clip_norm)
            opt_state, theta = adamw_step(opt_state, theta, g, lr)
        elif mode == "nsgd_adamw":
            k = int(task_rng.generator.integers(0, len(ts)))
            d = nsgd_direction(ts[k].grad(theta), nexus_cfg.gamma, nexus_cfg.grad_floor)
            last_pg_norm = float(np.linalg.norm(d))
            opt_state, theta = adamw_step(opt_state, theta, d, lr)
        else:  # nexus_adamw / nexus_dot_adamw
            if nexus_cfg.sampling == "fixed_sequence":
                base = (step - 1) * nexus_cfg.inner_steps
                seq = [(base + m) % len(ts) for m in range(nexus_cfg.inner_steps)]
                pg = inner_loop(theta, ts, nexus_cfg, sequence=seq)
            else:
                pg = inner_loop(theta, ts, nexus_cfg, rng=task_rng)
            last_pg_norm = float(np.linalg.norm(pg.value))
            opt_state, theta = adamw_step(opt_state, theta, pg.value, lr)
        if step % metric_cadence == 0 or step == total_steps:
            emit(step)
    record.wall_clock = time.perf_counter() - start
    record.final_theta = theta
    record.summary = {
        "train_loss": train_loss(ts, theta),
        "ood_loss": ood_task.loss(theta) if ood_task is not None else None,
        "mean_pairwise_cos": pairwise_cos(theta),
        "steps": total_steps,
    }
    return record


def run(cfg: ExperimentConfig) -> RunRecord:
    """Execute one experiment described by a validated config."""
    rng = rng_root(cfg["seed"])
    problem = build_problem(cfg, rng)
    schedule = make_schedule(cfg)
    mode = cfg["optimizer.kind"]
    nexus_cfg = make_nexus_config(cfg) if mode in ("nsgd_adamw", "nexus_adamw", "nexus_dot_adamw") else None
    record = train(
        problem.taskset,
        cfg["total_steps"],
        mode,
        schedule,
        rng,
        problem.theta0,
        nexus_cfg=nexus_cfg,
        ood_task=problem.ood_task,
        metric_cadence=cfg["metric_cadence"],
        adamw_kwargs={
            "beta1": cfg["optimizer.beta1"],
            "beta2": cfg["optimizer.beta2"],
            "eps": cfg["optimizer.eps"],
            "weight_decay": cfg["optimizer.weight_decay"],
        },
        clip_norm=cfg["optimizer.clip_norm"],
    )
    record.config = dict(cfg.values)
    if problem.has_analytic_minimizers and record.final_theta is not None:
        report = closeness(record.final_theta, problem.taskset)
        record.summary["closeness_mean_sq"] = report.mean_sq
    record.summary["name"] = cfg["name"]
    return record


def write_outputs(record: RunRecord, out_dir: str) -> None:
    """metrics.csv (fsync'd), then summary.json and config.resolved.json.

    summary.json is written last so its absence marks an incomplete run.
    """
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "metrics.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in record.rows:
            fh.write(row.to_csv() + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    with open(os.path.join(out_dir, "config.resolved.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(record.config, indent=2, sort_keys=True))
    summary = dict(record.summary)
    summary["wall_clock"] = record.wall_clock
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(summary, indent=2, sort_keys=True))


def derive_sweep_seeds(root_seed: int, count: int) -> list:
    """Independent per-run seeds derived from the root seed's sweep substream."""
    stream = rng_substream(rng_root(root_seed), "sweep")
    return [int(s) for s in stream.generator.integers(0, 2**63 - 1, size=count)]


def sweep(
    base: ExperimentConfig,
    out_dir: str,
    overrides: dict | None = None,
    num_seeds: int = 0,
    max_workers: int = 1,
) -> list:
    """Cartesian product of config overrides, each run in its own directory.

    ``overrides`` maps config keys to lists of values. ``num_seeds`` > 0 adds a
    seed axis with seeds derived from the base seed. When exactly two runs
    result, a diff.json with final-metric deltas is emitted alongside.
    """
    import itertools
    from concurrent.futures import ThreadPoolExecutor

    overrides = dict(overrides or {})
    if num_seeds > 0:
        overrides["seed"] = derive_sweep_seeds(base["seed"], num_seeds)
    keys = sorted(overrides)
    combos = list(itertools.product(*(overrides[k] for k in keys))) if keys else [()]
    jobs = []
    for combo in combos:
        patch = dict(zip(keys, combo))
        label = "-".join(f"{k.split('.')[-1]}={v}" for k, v in patch.items()) or "base"
        jobs.append((label, base.with_overrides(patch)))

    def execute(job):
        label, cfg = job
        record = run(cfg)
        write_outputs(record, os.path.join(out_dir, label))
        return label, record

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(execute, jobs))
    else:
        results = [execute(job) for job in jobs]

    index = {
        label: {k: v for k, v in record.summary.items() if not isinstance(v, np.ndarray)}
        for label, record in results
    }
    with open(os.path.join(out_dir, "sweep.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(index, indent=2, sort_keys=True, default=float))
    if len(results) == 2:
        (label_a, rec_a), (label_b, rec_b) = results
        diff = {}
        for key in ("train_loss", "ood_loss", "mean_pairwise_cos"):
            va, vb = rec_a.summary.get(key), rec_b.summary.get(key)
            diff[key] = None if va is None or vb is None else vb - va
        doc = {"runs": [label_a, label_b], "final_metric_deltas": diff}
        with open(os.path.join(out_dir, "diff.json"), "w", encoding="utf-8") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True))
    return results
