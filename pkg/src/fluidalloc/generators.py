"""Deterministic instance and test-case generators.

Every generator is a pure function of its parameters (seeds included), and
every output passes instance validation. The curated ``golden_suite`` holds
tiny finite-support instances within the clairvoyant oracle's guard, all
with at least two units per resource.
"""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .assortment import ChoiceContext, MNLChoiceModel, TableChoiceModel
from .fluid import PointProcessSpec
from .model import (
    Arrival,
    Instance,
    Resource,
    UsageDistribution,
    derive_rng,
)

__all__ = [
    "GENERATOR_KINDS",
    "generate",
    "golden_suite",
    "random_point_process",
    "table_from_rankings",
    "random_choice_model",
]

GENERATOR_KINDS = ("greedy_tight", "random_dense", "reuse_stress", "assortment_mnl")

_USAGE_MENU = ("deterministic", "exponential", "two_point", "geometric", "empirical_discrete")


def _rid(i: int) -> str:
    return f"r{i:02d}"


def _random_usage(rng: np.random.Generator, kinds: Iterable[str]) -> UsageDistribution:
    kind = str(rng.choice(list(kinds)))
    if kind == "deterministic":
        return UsageDistribution.deterministic(float(rng.uniform(0.3, 4.0)))
    if kind == "exponential":
        return UsageDistribution.exponential(float(rng.uniform(0.3, 2.0)))
    if kind == "geometric":
        return UsageDistribution.geometric(float(rng.uniform(0.2, 0.9)), scale=float(rng.uniform(0.5, 1.5)))
    if kind == "two_point":
        lo = float(rng.uniform(0.2, 1.0))
        hi = lo + float(rng.uniform(0.5, 4.0))
        p = float(rng.uniform(0.1, 0.9))
        return UsageDistribution.two_point([lo, hi], [p, 1.0 - p])
    values = sorted(float(v) for v in rng.uniform(0.2, 5.0, size=3))
    raw = rng.uniform(0.1, 1.0, size=3)
    probs = [float(w) for w in raw / raw.sum()]
    return UsageDistribution.empirical(values, probs)


def generate(kind: str, **params) -> Instance:
    """Build an instance of the named family; raises ValueError on bad params."""
    if kind == "greedy_tight":
        return _greedy_tight(**params)
    if kind == "random_dense":
        return _random_dense(**params)
    if kind == "reuse_stress":
        return _reuse_stress(**params)
    if kind == "assortment_mnl":
        return _assortment_mnl(**params)
    raise ValueError(f"unknown generator kind {kind!r}; choose from {GENERATOR_KINDS}")


def _greedy_tight(c: int = 100, reward: float = 1.0) -> Instance:
    """Two equal-reward non-reusable resources; the myopically preferred one
    ("a", first in id order) is the only option for the second half of the
    arrivals, so a greedy policy earns exactly half the optimum 2*c*reward."""
    c = int(c)
    if c < 1:
        raise ValueError("c must be >= 1")
    if not reward > 0.0:
        raise ValueError("reward must be > 0")
    never = UsageDistribution.never_returns()
    resources = (
        Resource(id="a", capacity=c, reward=float(reward), usage=never),
        Resource(id="b", capacity=c, reward=float(reward), usage=never),
    )
    arrivals = []
    for t in range(2 * c):
        edges = ("a", "b") if t < c else ("a",)
        arrivals.append(Arrival(index=t + 1, time=float(t + 1), edges=edges))
    return Instance(resources=resources, arrivals=tuple(arrivals), mode="matching")


def _random_dense(
    n_resources: int = 3,
    capacity: int | tuple[int, int] = 2,
    T: int = 20,
    seed: int = 0,
    edge_prob: float = 0.7,
    rate: float = 1.0,
    kinds: Iterable[str] = _USAGE_MENU,
    reward_range: tuple[float, float] = (0.5, 2.0),
) -> Instance:
    """Poisson-spaced arrivals with Bernoulli edges and random usage laws."""
    if n_resources < 1 or T < 1:
        raise ValueError("need n_resources >= 1 and T >= 1")
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError("edge_prob must be in [0, 1]")
    if not rate > 0.0:
        raise ValueError("rate must be > 0")
    rng = derive_rng(int(seed), "random_dense")
    resources = []
    for i in range(n_resources):
        if isinstance(capacity, (tuple, list)):
            cap = int(rng.integers(int(capacity[0]), int(capacity[1]) + 1))
        else:
            cap = int(capacity)
        if cap < 1:
            raise ValueError("capacities must be >= 1")
        resources.append(Resource(
            id=_rid(i), capacity=cap,
            reward=float(rng.uniform(*reward_range)),
            usage=_random_usage(rng, kinds)))
    times = np.cumsum(rng.exponential(1.0 / rate, size=T))
    arrivals = []
    for t in range(T):
        edges = tuple(r.id for r in resources if rng.random() < edge_prob)
        arrivals.append(Arrival(index=t + 1, time=float(times[t]), edges=edges))
    return Instance(resources=tuple(resources), arrivals=tuple(arrivals), mode="matching")


def _reuse_stress(
    d: float = 1.0,
    eps: float = 0.1,
    T: int = 12,
    c: int = 1,
    reward: float = 1.0,
) -> Instance:
    """One deterministic-duration resource with gaps straddling the duration:
    the fluid availability alternates between empty and full."""
    if not (0.0 < eps < d):
        raise ValueError("need 0 < eps < d")
    if T < 1 or c < 1:
        raise ValueError("need T >= 1 and c >= 1")
    resource = Resource(id="a", capacity=int(c), reward=float(reward),
                        usage=UsageDistribution.deterministic(float(d)))
    times = [1.0]
    for t in range(1, T):
        times.append(times[-1] + (d - eps if t % 2 == 1 else d + eps))
    arrivals = tuple(Arrival(index=t + 1, time=times[t], edges=("a",)) for t in range(T))
    return Instance(resources=(resource,), arrivals=arrivals, mode="matching")


def _assortment_mnl(
    n_resources: int = 3,
    capacity: int = 5,
    T: int = 8,
    seed: int = 0,
    rate: float = 1.0,
    family: str = "all",
    k: Optional[int] = None,
    kinds: Iterable[str] = _USAGE_MENU,
    weight_range: tuple[float, float] = (0.3, 3.0),
    reward_range: tuple[float, float] = (0.5, 2.0),
) -> Instance:
    """MNL choice contexts with fresh random weights at every arrival."""
    if n_resources < 1 or T < 1 or capacity < 1:
        raise ValueError("need n_resources, T, capacity >= 1")
    rng = derive_rng(int(seed), "assortment_mnl")
    resources = tuple(
        Resource(id=_rid(i), capacity=int(capacity),
                 reward=float(rng.uniform(*reward_range)),
                 usage=_random_usage(rng, kinds))
        for i in range(n_resources))
    times = np.cumsum(rng.exponential(1.0 / rate, size=T))
    arrivals = []
    for t in range(T):
        m = int(rng.integers(1, n_resources + 1))
        chosen = sorted(str(rid) for rid in rng.choice([r.id for r in resources], size=m, replace=False))
        weights = {rid: float(rng.uniform(*weight_range)) for rid in chosen}
        ctx = ChoiceContext(model=MNLChoiceModel(weights), family=family, k=k)
        arrivals.append(Arrival(index=t + 1, time=float(times[t]), choice=ctx))
    return Instance(resources=resources, arrivals=tuple(arrivals), mode="assortment")


# ---------------------------------------------------------------------------
# Curated tiny instances for the exact oracle
# ---------------------------------------------------------------------------

def golden_suite() -> list[tuple[str, Instance]]:
    """Finite-support instances inside the oracle guard, all with c_min >= 2."""
    suite: list[tuple[str, Instance]] = []

    suite.append(("greedy_tight_c2", _greedy_tight(c=2)))
    suite.append(("greedy_tight_c3", _greedy_tight(c=3)))

    # single reusable resource, deterministic duration shorter than most gaps
    res = Resource(id="a", capacity=2, reward=1.0,
                   usage=UsageDistribution.deterministic(1.5))
    arrivals = tuple(Arrival(index=t + 1, time=float(t + 1), edges=("a",)) for t in range(6))
    suite.append(("det_reuse_c2", Instance((res,), arrivals, "matching")))

    # two-point durations: quick return half the time
    res = Resource(id="a", capacity=2, reward=1.0,
                   usage=UsageDistribution.two_point([0.5, 5.0], [0.5, 0.5]))
    arrivals = tuple(Arrival(index=t + 1, time=float(t + 1), edges=("a",)) for t in range(6))
    suite.append(("two_point_c2", Instance((res,), arrivals, "matching")))

    # uneven rewards, shared arrivals, mixed supports
    r1 = Resource(id="a", capacity=2, reward=2.0,
                  usage=UsageDistribution.two_point([1.2, 6.0], [0.4, 0.6]))
    r2 = Resource(id="b", capacity=3, reward=1.0,
                  usage=UsageDistribution.deterministic(2.2))
    arrivals = tuple(Arrival(index=t + 1, time=1.0 + 0.9 * t, edges=("a", "b"))
                     for t in range(7))
    suite.append(("mixed_rewards", Instance((r1, r2), arrivals, "matching")))

    # non-reusable pair with asymmetric edges (a also demanded alone)
    never = UsageDistribution.never_returns()
    r1 = Resource(id="a", capacity=2, reward=1.5, usage=never)
    r2 = Resource(id="b", capacity=2, reward=1.0, usage=never)
    arrivals = []
    for t in range(6):
        edges = ("a", "b") if t % 2 == 0 else ("a",)
        arrivals.append(Arrival(index=t + 1, time=float(t + 1), edges=edges))
    suite.append(("nonreusable_asym", Instance((r1, r2), tuple(arrivals), "matching")))

    # three-atom empirical durations, tight arrival spacing
    res = Resource(id="a", capacity=3, reward=1.0,
                   usage=UsageDistribution.empirical([0.6, 1.1, 9.0], [0.3, 0.4, 0.3]))
    arrivals = tuple(Arrival(index=t + 1, time=1.0 + 0.5 * t, edges=("a",)) for t in range(8))
    suite.append(("empirical_c3", Instance((res,), arrivals, "matching")))

    # two reusable resources with an availability trap on the cheap one
    r1 = Resource(id="a", capacity=2, reward=1.0,
                  usage=UsageDistribution.deterministic(0.8))
    r2 = Resource(id="b", capacity=2, reward=1.2,
                  usage=UsageDistribution.two_point([0.7, 4.0], [0.6, 0.4]))
    arrivals = []
    for t in range(7):
        edges = ("a", "b") if t < 4 else ("b",)
        arrivals.append(Arrival(index=t + 1, time=1.0 + 0.75 * t, edges=edges))
    suite.append(("reuse_trap", Instance((r1, r2), tuple(arrivals), "matching")))

    return suite


# ---------------------------------------------------------------------------
# Random fixtures for the property batteries
# ---------------------------------------------------------------------------

def random_point_process(
    rng: np.random.Generator,
    max_points: int = 20,
    kinds: Iterable[str] = _USAGE_MENU,
    force_zeros: bool = False,
) -> PointProcessSpec:
    """Random availability process; ``force_zeros`` biases toward specs with
    exhausted-availability points (tight deterministic gaps, sure activation)."""
    T = int(rng.integers(1, max_points + 1))
    if force_zeros and rng.random() < 0.6:
        dist = UsageDistribution.deterministic(float(rng.uniform(1.0, 3.0)))
        gaps = rng.uniform(0.2, 0.9 * dist.params["duration"], size=T)
        probs = np.ones(T)
        soften = rng.random(T) < 0.3
        probs[soften] = rng.uniform(0.0, 1.0, size=int(soften.sum()))
    else:
        dist = _random_usage(rng, kinds)
        gaps = rng.uniform(0.05, 2.5, size=T)
        probs = rng.uniform(0.0, 1.0, size=T)
        sure = rng.random(T) < 0.2
        probs[sure] = 1.0
    points = np.cumsum(gaps) + float(rng.uniform(0.01, 1.0))
    return PointProcessSpec(dist=dist, points=tuple(float(s) for s in points),
                            probs=tuple(float(p) for p in probs))


def table_from_rankings(
    universe: Iterable[str],
    rankings: Iterable[tuple[tuple[str, ...], float]],
) -> TableChoiceModel:
    """Explicit choice table for a mixture of strict preference lists.

    Each (ranking, weight) customer type buys its highest-ranked offered item
    and walks away if none of its ranked items is offered. Mixtures of
    rankings are substitutable by construction.
    """
    import itertools as it

    universe = sorted(universe)
    entries: dict[frozenset, dict[str, float]] = {}
    for size in range(1, len(universe) + 1):
        for combo in it.combinations(universe, size):
            s = frozenset(combo)
            probs: dict[str, float] = {}
            for ranking, weight in rankings:
                top = next((item for item in ranking if item in s), None)
                if top is not None:
                    probs[top] = probs.get(top, 0.0) + weight
            entries[s] = probs
    return TableChoiceModel(entries)


def random_choice_model(
    rng: np.random.Generator, items: list[str], kind: str
) -> MNLChoiceModel | TableChoiceModel:
    if kind == "mnl":
        return MNLChoiceModel({i: float(rng.uniform(0.2, 3.0)) for i in items})
    n_types = int(rng.integers(1, 4))
    raw = rng.uniform(0.2, 1.0, size=n_types)
    weights = raw / raw.sum() * float(rng.uniform(0.5, 1.0))
    rankings = []
    for w in weights:
        order = list(items)
        rng.shuffle(order)
        keep = int(rng.integers(1, len(order) + 1))  # unranked tail never buys
        rankings.append((tuple(order[:keep]), float(w)))
    return table_from_rankings(items, rankings)
