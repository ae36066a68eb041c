"""Batch experiment runner: seeded policy runs, CSV emission, OPT ratios.

Jobs fan out over a process pool sized by the FLUIDALLOC_WORKERS environment
variable (default 1); output rows are sorted canonically so files do not
depend on scheduling. The deterministic guide policies (galg, astgalg) are
forced to a single replication.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import benchmarks, generators, rounding
from .assortment import run_astalg, run_astgalg
from .guide import run_galg
from .model import (
    Instance,
    derive_seed,
    draw_sample_path,
    instance_from_json,
    instance_to_json,
    load_instance,
)

__all__ = [
    "ExperimentConfig",
    "STOCHASTIC_POLICIES",
    "DETERMINISTIC_POLICIES",
    "simulate_rows",
    "compare_rows",
    "run_experiment",
    "write_csv",
    "worker_count",
]

STOCHASTIC_POLICIES = ("greedy", "ib", "rba", "alg", "astalg")
DETERMINISTIC_POLICIES = ("galg", "astgalg")
ALL_POLICIES = STOCHASTIC_POLICIES + DETERMINISTIC_POLICIES


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("FLUIDALLOC_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass
class ExperimentConfig:
    """One batch job: an instance source, policies, and replication plan."""

    policies: Sequence[str]
    replications: int = 1
    seed: int = 0
    instance_path: Optional[str] = None
    generator: Optional[dict] = None     # {"kind": ..., **params}
    delta_const: float = rounding.DEFAULT_DELTA_CONST
    opt: str | float = "auto"            # "auto" | "off" | explicit bound
    out: Optional[str] = None
    fmt: str = "csv"
    figures: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replication count must be >= 1")
        if (self.instance_path is None) == (self.generator is None):
            raise ValueError("exactly one of instance_path/generator required")
        for p in self.policies:
            if p not in ALL_POLICIES:
                raise ValueError(f"unknown policy {p!r}; choose from {ALL_POLICIES}")

    def load(self) -> tuple[Instance, str]:
        if self.instance_path is not None:
            return load_instance(self.instance_path), Path(self.instance_path).stem
        params = {k: v for k, v in self.generator.items() if k != "kind"}
        kind = self.generator["kind"]
        label = kind + "".join(f"_{k}{v}" for k, v in sorted(params.items()))
        return generators.generate(kind, **params), label

    def closed_form_opt(self, instance: Instance) -> Optional[float]:
        """Known exact optimum for generated families (offline counting)."""
        if self.generator and self.generator.get("kind") == "greedy_tight":
            c = int(self.generator.get("c", 100))
            reward = float(self.generator.get("reward", 1.0))
            return 2.0 * c * reward
        return None


def _deterministic_row(instance: Instance, policy: str, seed: int) -> dict:
    if policy == "galg":
        guide, reward = run_galg(instance)
        per_resource = guide.resource_reward(instance)
        rejections = sum(1 for t in range(guide.num_arrivals)
                         if sum(guide.row(t).values()) <= 1e-12)
    else:
        plan, reward = run_astgalg(instance)
        per_resource = {r.id: float(r.reward * plan.consumption(r.id).sum())
                        for r in instance.resources}
        rejections = sum(1 for row in plan.rows
                         if sum(w for _, w in row) <= 1e-12)
    row = {"seed": seed, "algorithm": policy, "total_reward": reward}
    row.update({f"reward_{rid}": per_resource.get(rid, 0.0) for rid in instance.sorted_ids()})
    row["rejections"] = rejections
    return row


def _stochastic_row(instance: Instance, policy: str, seed: int, delta_const: float,
                    cache: dict) -> dict:
    path = draw_sample_path(instance, seed)
    if policy == "alg":
        if "guide" not in cache:
            cache["guide"] = run_galg(instance)[0]
        deltas = rounding.DeltaSchedule.default(instance, const=delta_const)
        record = rounding.run_alg(instance, cache["guide"], deltas, path)
    elif policy == "astalg":
        if "plan" not in cache:
            cache["plan"] = run_astgalg(instance)[0]
        deltas = rounding.DeltaSchedule.default(instance, const=delta_const)
        record = run_astalg(instance, cache["plan"], deltas, path)
    elif policy == "greedy":
        record = benchmarks.run_greedy(instance, path)
    elif policy == "ib":
        record = benchmarks.run_ib(instance, path)
    elif policy == "rba":
        record = benchmarks.run_rba(instance, path)
    else:
        raise ValueError(f"unknown stochastic policy {policy!r}")
    record.validate(instance)
    per_resource = record.reward_by_resource()
    row = {"seed": seed, "algorithm": policy, "total_reward": record.total_reward}
    row.update({f"reward_{rid}": per_resource.get(rid, 0.0) for rid in instance.sorted_ids()})
    row["rejections"] = record.rejection_count()
    return row


def _policy_job(doc: dict, policy: str, seeds: list[int], delta_const: float) -> list[dict]:
    instance = instance_from_json(doc)
    cache: dict = {}
    return [_stochastic_row(instance, policy, s, delta_const, cache) for s in seeds]


def _fan_out(instance: Instance, jobs: list[tuple[str, list[int]]],
             delta_const: float) -> list[dict]:
    workers = worker_count()
    if workers <= 1 or len(jobs) <= 1:
        cache_by_policy: dict[str, dict] = {}
        rows = []
        for policy, seeds in jobs:
            cache = cache_by_policy.setdefault(policy, {})
            for s in seeds:
                rows.append(_stochastic_row(instance, policy, s, delta_const, cache))
        return rows
    doc = instance_to_json(instance)
    rows = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_policy_job, doc, policy, seeds, delta_const)
                   for policy, seeds in jobs]
        for fut in futures:
            rows.extend(fut.result())
    return rows


def _chunks(seq: list[int], n: int) -> list[list[int]]:
    size = max(1, math.ceil(len(seq) / n))
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def simulate_rows(instance: Instance, policy: str, replications: int, seed: int,
                  delta_const: float = rounding.DEFAULT_DELTA_CONST) -> list[dict]:
    """Per-replication rows plus one aggregate (seed="mean") row."""
    if policy in DETERMINISTIC_POLICIES:
        rows = [_deterministic_row(instance, policy, seed)]
    else:
        rep_seeds = [derive_seed(seed, "run", policy, j) & 0x7FFFFFFFFFFF
                     for j in range(replications)]
        jobs = [(policy, chunk) for chunk in _chunks(rep_seeds, worker_count() * 4)]
        rows = _fan_out(instance, jobs, delta_const)
        rows.sort(key=lambda r: rep_seeds.index(r["seed"]))
    agg = {"seed": "mean", "algorithm": policy,
           "total_reward": float(np.mean([r["total_reward"] for r in rows]))}
    for key in rows[0]:
        if key.startswith("reward_"):
            agg[key] = float(np.mean([r[key] for r in rows]))
    agg["rejections"] = float(np.mean([r["rejections"] for r in rows]))
    return rows + [agg]


def compare_rows(instance: Instance, instance_id: str, policies: Sequence[str],
                 replications: int, seed: int,
                 delta_const: float = rounding.DEFAULT_DELTA_CONST,
                 opt: str | float = "auto",
                 closed_form: Optional[float] = None) -> tuple[list[dict], list[str]]:
    """Per-policy mean/stderr rows with the OPT bound and ratio when known."""
    warnings: list[str] = []
    opt_bound: Optional[float] = None
    if isinstance(opt, (int, float)):
        opt_bound = float(opt)
    elif opt == "auto":
        if closed_form is not None:
            opt_bound = closed_form
        else:
            try:
                opt_bound = benchmarks.clairvoyant_dp(instance)
            except ValueError as exc:
                warnings.append(f"opt=auto skipped: {exc}")
    elif opt != "off":
        raise ValueError("opt must be 'auto', 'off', or a number")

    rows = []
    for policy in policies:
        if policy in DETERMINISTIC_POLICIES:
            mean = _deterministic_row(instance, policy, seed)["total_reward"]
            stderr = 0.0
        else:
            rep_seeds = [derive_seed(seed, "run", policy, j) & 0x7FFFFFFFFFFF
                         for j in range(replications)]
            jobs = [(policy, chunk) for chunk in _chunks(rep_seeds, worker_count() * 4)]
            totals = [r["total_reward"] for r in _fan_out(instance, jobs, delta_const)]
            mean = float(np.mean(totals))
            stderr = float(np.std(totals, ddof=1) / math.sqrt(len(totals))) if len(totals) > 1 else 0.0
        rows.append({
            "instance_id": instance_id,
            "policy": policy,
            "mean_reward": mean,
            "std_err": stderr,
            "opt_bound": "" if opt_bound is None else opt_bound,
            "ratio": "" if not opt_bound else mean / opt_bound,
        })
    rows.sort(key=lambda r: r["policy"])
    return rows, warnings


def write_csv(rows: list[dict], path) -> None:
    """Canonical CSV: header from the first row, repr-formatted floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(rows[0].keys())
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in (row[h] for h in header)])


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute one config; writes CSV (and figures) when ``out`` is set.

    Returns {"rows": ..., "files": ..., "warnings": ...}. Configs with a
    single policy produce simulate-style per-seed rows; multi-policy configs
    produce compare-style summary rows.
    """
    instance, label = config.load()
    files: list[str] = []
    warnings: list[str] = []
    if len(config.policies) == 1:
        rows = simulate_rows(instance, config.policies[0], config.replications,
                             config.seed, config.delta_const)
        figure_kind = "simulate"
    else:
        rows, warnings = compare_rows(
            instance, label, config.policies, config.replications, config.seed,
            config.delta_const, config.opt, config.closed_form_opt(instance))
        figure_kind = "compare"

    if config.out:
        out = Path(config.out)
        if config.fmt == "json":
            out.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        else:
            write_csv(rows, out)
        files.append(str(out))
        if config.figures:
            from . import plots

            fig_path = out.with_suffix(".png")
            if figure_kind == "simulate":
                plots.render_simulate_figure(rows, str(fig_path))
            else:
                plots.render_compare_figure(rows, str(fig_path))
            files.append(str(fig_path))
    return {"rows": rows, "files": files, "warnings": warnings}
