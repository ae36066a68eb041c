"""Fluid-guided fractional online matching (the ``galg`` policy).

The guide keeps, for every unit k of every resource, the fraction z_i(k)
of that unit still available under a deterministic view of reusability:
mass matched at time a(tau) flows back according to the usage cdf, so by
time a(t) exactly cdf(a(t)-a(tau)) of it has returned. Each arrival is then
matched fractionally, always to the highest-indexed unit with positive
availability of the resource with the largest inventory-discounted price
r_i * (1 - g(k/c_i)), g(x) = exp(-x).

The output fractions are infeasible as physical matches (mass returns
fractionally, not stochastically); they exist to guide the rounding policy
in :mod:`fluidalloc.rounding`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import Arrival, Instance, Resource

__all__ = [
    "FluidState",
    "FractionalMatch",
    "MatchStep",
    "default_tradeoff",
    "fluid_update",
    "match_arrival",
    "run_galg",
    "unit_process_spec",
]

SNAP_TOL = 1e-12


def default_tradeoff(x: float) -> float:
    return math.exp(-x)


@dataclass
class _ResourceState:
    """Per-resource availability bookkeeping for the guide."""

    resource: Resource
    z: np.ndarray                      # (c,) available fraction per unit
    y: np.ndarray                      # (c, T) matched fraction per unit/arrival
    z_pre: np.ndarray                  # (c, T) z right after the fluid update at each arrival
    matched: np.ndarray                # (c,) cumulative matched mass
    returned: np.ndarray               # (c,) cumulative returned mass
    atoms: Optional[list[tuple[float, float]]]  # finite return atoms, else None
    atom_ptrs: list[int] = field(default_factory=list)

    @classmethod
    def create(cls, resource: Resource, T: int) -> "_ResourceState":
        c = resource.capacity
        atoms = resource.usage.support_atoms()
        finite = None
        if atoms is not None:
            finite = [(v, p) for v, p in atoms if math.isfinite(v) and p > 0.0]
        return cls(
            resource=resource,
            z=np.ones(c),
            y=np.zeros((c, T)),
            z_pre=np.zeros((c, T)),
            matched=np.zeros(c),
            returned=np.zeros(c),
            atoms=finite,
            atom_ptrs=[0] * len(finite) if finite is not None else [],
        )

    def top_unit(self) -> int:
        """Highest 1-based unit index with positive availability, 0 if none.

        Fractions at or below the snap tolerance are zeroed first so that
        "positive" is unambiguous in the match loop.
        """
        self.z[self.z <= SNAP_TOL] = 0.0
        nz = np.nonzero(self.z > 0.0)[0]
        return int(nz[-1]) + 1 if nz.size else 0


@dataclass
class FluidState:
    """Guide state across arrivals: unit availabilities plus match history."""

    instance: Instance
    per_resource: dict[str, _ResourceState]
    times_seen: list[float] = field(default_factory=list)
    last_update_time: float = -math.inf
    arrivals_done: int = 0

    @classmethod
    def create(cls, instance: Instance) -> "FluidState":
        T = instance.num_arrivals
        return cls(
            instance=instance,
            per_resource={r.id: _ResourceState.create(r, T) for r in instance.resources},
        )


@dataclass
class MatchStep:
    """One iteration of the per-arrival matching loop."""

    arrival: int
    resource: str
    unit: int          # 1-based
    fraction: float
    reduced_price: float


@dataclass
class FractionalMatch:
    """Full output of a guide run.

    ``x[rid][t]`` is the fraction of arrival t matched to the resource;
    ``unit_y[rid][k, t]`` its per-unit breakdown; ``unit_z_pre[rid][k, t]``
    the unit's availability just before arrival t was matched (after the
    fluid update). ``steps[t]`` lists the match-loop iterations in order.
    """

    times: list[float]
    x: dict[str, np.ndarray]
    unit_y: dict[str, np.ndarray]
    unit_z_pre: dict[str, np.ndarray]
    steps: list[list[MatchStep]]
    reward: float

    @property
    def num_arrivals(self) -> int:
        return len(self.times)

    def row(self, t: int) -> dict[str, float]:
        return {rid: float(col[t]) for rid, col in self.x.items() if col[t] > 0.0}

    def resource_reward(self, instance: Instance) -> dict[str, float]:
        return {r.id: float(r.reward * self.x[r.id].sum()) for r in instance.resources}


def fluid_update(state: FluidState, arrival_time: float, instance: Instance) -> None:
    """Flow returned mass back into z for every unit, up to ``arrival_time``.

    For finite-support usage distributions the update walks each return atom
    forward with a pointer (each past match is touched once per atom); for
    continuous distributions it scans the full match history with cdf
    increments. Both produce the same z values.
    """
    if arrival_time < state.last_update_time:
        raise ValueError("fluid updates must move forward in time")
    t_prev = state.last_update_time
    n_hist = state.arrivals_done
    if n_hist > 0 and arrival_time > t_prev:
        times = state.times_seen
        for rs in state.per_resource.values():
            if rs.atoms is not None:
                for a_idx, (v, p_atom) in enumerate(rs.atoms):
                    ptr = rs.atom_ptrs[a_idx]
                    while ptr < n_hist and v <= arrival_time - times[ptr]:
                        delta = p_atom * rs.y[:, ptr]
                        rs.z += delta
                        rs.returned += delta
                        ptr += 1
                    rs.atom_ptrs[a_idx] = ptr
            else:
                past = np.asarray(times[:n_hist])
                usage = rs.resource.usage
                inc = usage.cdf_array(arrival_time - past) - usage.cdf_array(t_prev - past)
                if inc.any():
                    delta = rs.y[:, :n_hist] @ inc
                    rs.z += delta
                    rs.returned += delta
            if np.any(rs.z > 1.0 + 1e-9):
                raise AssertionError(
                    f"resource {rs.resource.id}: availability exceeded 1 after fluid update")
            np.clip(rs.z, 0.0, 1.0, out=rs.z)
    state.last_update_time = max(t_prev, arrival_time)


def match_arrival(
    state: FluidState,
    arrival: Arrival,
    instance: Instance,
    g: Callable[[float], float] = default_tradeoff,
) -> list[MatchStep]:
    """Fractionally match one arrival; mutates ``state`` and returns the steps.

    The loop matches the best reduced-price unit until the arrival is fully
    matched or no candidate has availability left. Ties go to the lowest
    resource id. Requires the fluid update for this arrival time to have run.
    """
    t = state.arrivals_done
    edges = sorted(arrival.edges if arrival.edges is not None else ())
    steps: list[MatchStep] = []
    eta = 0.0
    budget = sum(state.per_resource[rid].resource.capacity for rid in edges)
    while eta < 1.0 - SNAP_TOL:
        best_rid = None
        best_price = -1.0
        best_k = 0
        for rid in edges:
            rs = state.per_resource[rid]
            k = rs.top_unit()
            price = rs.resource.reward * (1.0 - g(k / rs.resource.capacity))
            if price > best_price:
                best_rid, best_price, best_k = rid, price, k
        if best_rid is None or best_k == 0:
            break
        rs = state.per_resource[best_rid]
        y = min(float(rs.z[best_k - 1]), 1.0 - eta)
        rs.z[best_k - 1] -= y
        if rs.z[best_k - 1] <= SNAP_TOL:
            rs.z[best_k - 1] = 0.0
        rs.y[best_k - 1, t] += y
        rs.matched[best_k - 1] += y
        eta += y
        steps.append(MatchStep(arrival=arrival.index, resource=best_rid,
                               unit=best_k, fraction=y, reduced_price=best_price))
        assert len(steps) <= budget, "matching loop exceeded the unit budget"
    state.times_seen.append(arrival.time)
    state.arrivals_done += 1
    return steps


def run_galg(
    instance: Instance,
    g: Callable[[float], float] = default_tradeoff,
    trace_path=None,
) -> tuple[FractionalMatch, float]:
    """Run the guide over the whole arrival sequence. Fully deterministic.

    With ``trace_path`` set, every match-loop iteration is appended to a
    JSON-lines file as {"t", "i", "k", "y", "reduced_price"}.
    """
    if instance.mode != "matching":
        raise ValueError("run_galg requires a matching-mode instance")
    state = FluidState.create(instance)
    T = instance.num_arrivals
    all_steps: list[list[MatchStep]] = []
    for arrival in instance.arrivals:
        fluid_update(state, arrival.time, instance)
        t = state.arrivals_done
        for rs in state.per_resource.values():
            rs.z_pre[:, t] = rs.z
        all_steps.append(match_arrival(state, arrival, instance, g=g))

    x: dict[str, np.ndarray] = {}
    reward = 0.0
    for rid, rs in state.per_resource.items():
        x[rid] = rs.y.sum(axis=0)
        reward += rs.resource.reward * float(x[rid].sum())
        # conservation: matched minus returned mass accounts for what is gone
        gone = 1.0 - rs.z
        drift = np.abs((rs.matched - rs.returned) - gone)
        assert float(drift.max(initial=0.0)) < 1e-6, f"mass leak on resource {rid}"

    result = FractionalMatch(
        times=[a.time for a in instance.arrivals],
        x=x,
        unit_y={rid: rs.y for rid, rs in state.per_resource.items()},
        unit_z_pre={rid: rs.z_pre for rid, rs in state.per_resource.items()},
        steps=all_steps,
        reward=float(reward),
    )
    if trace_path is not None:
        with open(trace_path, "w", encoding="utf-8") as fh:
            for steps in all_steps:
                for s in steps:
                    fh.write(json.dumps({"t": s.arrival, "i": s.resource, "k": s.unit,
                                         "y": s.fraction, "reduced_price": s.reduced_price}) + "\n")
    return result, float(reward)


def unit_process_spec(guide: FractionalMatch, instance: Instance, rid: str, unit: int):
    """Availability process equivalent to one unit's trajectory in the guide.

    Points are the (shifted) times of arrivals with an edge to the resource;
    the probability at each point is the fraction of the then-available mass
    the guide consumed there. Returns (spec, z_pre restricted to those
    points, matched fractions restricted to those points).
    """
    from .fluid import PointProcessSpec, points_from_times

    edge_ts = [i for i, a in enumerate(instance.arrivals)
               if a.edges is not None and rid in a.edges]
    if not edge_ts:
        return None
    times = [instance.arrivals[i].time for i in edge_ts]
    z_pre = [float(guide.unit_z_pre[rid][unit - 1, i]) for i in edge_ts]
    y = [float(guide.unit_y[rid][unit - 1, i]) for i in edge_ts]
    probs = [min(max(yy / zz, 0.0), 1.0) if zz > 0.0 else 0.0 for yy, zz in zip(y, z_pre)]
    usage = instance.resource_map()[rid].usage
    spec = PointProcessSpec(dist=usage, points=tuple(points_from_times(times)), probs=tuple(probs))
    return spec, z_pre, y
