"""Randomized rounding of guide fractions into physical matches (``alg``).

At each arrival one uniform draw selects at most one resource: the guide
fractions x_it, each shrunk by 1/(1+delta_i), are laid out as consecutive
intervals in ascending resource-id order and the draw picks the interval it
lands in. The selected resource is matched only if a unit is physically
available. Selection never looks at realized inventory, which is what makes
the policy non-adaptive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .guide import FractionalMatch
from .model import Instance, RunRecord, SamplePath, derive_seed, draw_sample_path

__all__ = [
    "DeltaSchedule",
    "run_alg",
    "availability_estimate",
    "scaled_mass_bound_margin",
]

DEFAULT_DELTA_CONST = 100.0


@dataclass(frozen=True)
class DeltaSchedule:
    """Per-resource down-scaling safety margins delta_i >= 0."""

    deltas: dict[str, float]

    def __post_init__(self):
        for rid, d in self.deltas.items():
            if not d >= 0.0:
                raise ValueError(f"delta for {rid} must be >= 0")

    @classmethod
    def default(cls, instance: Instance, const: float = DEFAULT_DELTA_CONST) -> "DeltaSchedule":
        """delta_i = sqrt(const * ln(c_i) / c_i) (natural log), 0 at c_i = 1."""
        return cls({r.id: math.sqrt(const * math.log(r.capacity) / r.capacity)
                    for r in instance.resources})

    @classmethod
    def zero(cls, instance: Instance) -> "DeltaSchedule":
        """Ablation mode: no down-scaling. The availability bound may fail."""
        return cls({r.id: 0.0 for r in instance.resources})

    def scale(self, rid: str) -> float:
        return 1.0 / (1.0 + self.deltas[rid])


class _Inventory:
    """Physical unit tracking: return times plus per-unit sample cursors."""

    def __init__(self, instance: Instance):
        self.capacity = {r.id: r.capacity for r in instance.resources}
        self.return_time = {r.id: np.full(r.capacity, -np.inf) for r in instance.resources}
        self.next_sample = {r.id: np.zeros(r.capacity, dtype=int) for r in instance.resources}

    def available_counts(self, now: float) -> dict[str, int]:
        return {rid: int((rt <= now).sum()) for rid, rt in self.return_time.items()}

    def has_available(self, rid: str, now: float) -> bool:
        return bool((self.return_time[rid] <= now).any())

    def commit_lowest(self, rid: str, now: float, path: SamplePath) -> float:
        """Match the lowest-index available unit; returns the drawn duration."""
        avail = np.nonzero(self.return_time[rid] <= now)[0]
        k = int(avail[0])
        cursor = self.next_sample[rid][k]
        duration = float(path.durations[(rid, k)][cursor])
        self.next_sample[rid][k] = cursor + 1
        self.return_time[rid][k] = now + duration
        return duration


def _propose(guide_row: dict[str, float], edges, deltas: DeltaSchedule, u: float):
    """Interval rule: which resource (if any) the uniform draw asks for."""
    hi = 0.0
    for rid in sorted(edges):
        width = guide_row.get(rid, 0.0) * deltas.scale(rid)
        lo, hi = hi, hi + width
        if lo < u <= hi:
            return rid
    return None


def run_alg(
    instance: Instance,
    guide: FractionalMatch,
    deltas: DeltaSchedule,
    path: SamplePath,
) -> RunRecord:
    """One physical run: returns, a selection draw, then match-if-available."""
    if instance.mode != "matching":
        raise ValueError("run_alg requires a matching-mode instance")
    if guide.num_arrivals != instance.num_arrivals:
        raise ValueError("guide and instance disagree on the number of arrivals")
    rewards_of = {r.id: r.reward for r in instance.resources}
    inv = _Inventory(instance)
    decisions, rewards, trace, proposals = [], [], [], []
    for t, arrival in enumerate(instance.arrivals):
        now = arrival.time
        trace.append(inv.available_counts(now))
        row = guide.row(t)
        proposal = _propose(row, arrival.edges, deltas, path.uniform(t, 0))
        proposals.append(proposal)
        if proposal is not None and inv.has_available(proposal, now):
            inv.commit_lowest(proposal, now, path)
            decisions.append(proposal)
            rewards.append(rewards_of[proposal])
        else:
            decisions.append(None)
            rewards.append(0.0)
    return RunRecord(policy="alg", seed=path.seed, decisions=decisions, rewards=rewards,
                     inventory_trace=trace, proposals=proposals)


def availability_estimate(
    instance: Instance,
    guide: FractionalMatch,
    deltas: DeltaSchedule,
    resource: str,
    arrival: int,
    replications: int,
    seed: int,
) -> float:
    """Monte Carlo frequency that the resource has a free unit at the arrival.

    ``arrival`` is 1-based. Fresh sample paths per replication, seeds derived
    from the replication index.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    arr = instance.arrivals[arrival - 1]
    if arr.edges is None or resource not in arr.edges:
        raise ValueError(f"no edge between {resource!r} and arrival {arrival}")
    hits = 0
    for j in range(replications):
        path = draw_sample_path(instance, derive_seed(seed, "alg-rep", j))
        record = run_alg(instance, guide, deltas, path)
        if record.inventory_trace[arrival - 1][resource] > 0:
            hits += 1
    return hits / replications


def scaled_mass_bound_margin(
    instance: Instance, guide: FractionalMatch, deltas: DeltaSchedule
) -> dict[tuple[str, int], float]:
    """Deterministic slack of the expected-in-use bound behind the rounding.

    For every resource/arrival pair, the expected number of units the
    rounding keeps in use, sum over past arrivals of
    x_i,tau * (1 - F_i(a(t)-a(tau))) / (1+delta_i), never exceeds
    c_i/(1+delta_i) because the guide keeps total in-use fluid mass at most
    c_i. Returns the margin c_i/(1+delta_i) - expectation per (rid, t);
    all margins should be >= -1e-9.
    """
    times = np.asarray(guide.times)
    margins: dict[tuple[str, int], float] = {}
    for r in instance.resources:
        scale = deltas.scale(r.id)
        xs = guide.x[r.id]
        for t in range(len(times)):
            survive = 1.0 - r.usage.cdf_array(times[t] - times[:t])
            mu = float(xs[:t] @ survive) * scale
            margins[(r.id, t + 1)] = r.capacity * scale - mu
    return margins
