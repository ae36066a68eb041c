"""Figure rendering for the CLI report path.

Kept out of the algorithm modules so library use never touches matplotlib.
Figures are written with fixed metadata and layout, so repeated runs with
the same data produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SAVE_KW = {"dpi": 120, "metadata": {"Software": "fluidalloc"}}


def render_simulate_figure(rows: list[dict], path: str) -> None:
    """Per-seed total rewards for one policy, mean drawn as a line."""
    per_seed = [r for r in rows if r["seed"] != "mean"]
    mean_row = next((r for r in rows if r["seed"] == "mean"), None)
    totals = [r["total_reward"] for r in per_seed]
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.bar(range(len(totals)), totals, color="#4878d0", label="per-seed total reward")
    if mean_row is not None:
        ax.axhline(mean_row["total_reward"], color="#d65f5f", linestyle="--",
                   label=f"mean = {mean_row['total_reward']:.4g}")
    ax.set_xlabel("replication")
    ax.set_ylabel("total reward")
    ax.set_title(f"{per_seed[0]['algorithm']}: {len(totals)} run(s)")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_compare_figure(rows: list[dict], path: str) -> None:
    """Mean reward with stderr bars per policy; OPT bound as a line."""
    policies = [r["policy"] for r in rows]
    means = [r["mean_reward"] for r in rows]
    errs = [3.0 * (r["std_err"] or 0.0) for r in rows]
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.bar(policies, means, yerr=errs, capsize=4, color="#4878d0",
           label="mean reward (3 s.e.)")
    bound = next((r["opt_bound"] for r in rows if r["opt_bound"] != ""), None)
    if bound is not None:
        ax.axhline(float(bound), color="#d65f5f", linestyle="--",
                   label=f"clairvoyant bound = {float(bound):.4g}")
    ax.set_ylabel("reward")
    ax.set_title(f"instance {rows[0]['instance_id']}")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
