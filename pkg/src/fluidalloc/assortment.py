"""Assortment-mode policies: set-valued guide and its rounded counterpart.

Choice models give the probability phi(S, i) that a customer offered set S
picks item i. Models must be substitutable (probabilities never drop when
the offered set shrinks) and sub-stochastic on every set. The guide
(``astgalg``) fractionally matches each arrival to a collection of
revenue-maximizing assortments under the same fluid availability as the
matching guide; the physical policy (``astalg``) re-expresses each planned
assortment over the currently-available items via probability matching, so
every available item keeps its planned (down-scaled) chance of being chosen.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .guide import FluidState, default_tradeoff, fluid_update
from .model import Instance, InstanceError, RunRecord, SamplePath

__all__ = [
    "ChoiceModel",
    "MNLChoiceModel",
    "TableChoiceModel",
    "ChoiceContext",
    "AssortmentPlan",
    "MatchedCollection",
    "choice_context_from_json",
    "best_assortment",
    "run_astgalg",
    "probability_match",
    "run_astalg",
]

GAMMA_TOL = 1e-12
COVERAGE_TOL = 1e-9


class ChoiceModel:
    """Interface: phi(offer_set, item) plus the item universe."""

    items: tuple[str, ...]

    def phi(self, offer: Iterable[str], item: str) -> float:
        raise NotImplementedError

    def offer_probs(self, offer: Iterable[str]) -> dict[str, float]:
        offer = frozenset(offer)
        return {i: self.phi(offer, i) for i in sorted(offer)}

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class MNLChoiceModel(ChoiceModel):
    """Multinomial logit: phi(S, i) = w_i / (1 + sum_{j in S} w_j)."""

    weights: dict[str, float]

    def __post_init__(self):
        if not self.weights:
            raise InstanceError("mnl model needs at least one weight")
        for rid, w in self.weights.items():
            if not w > 0.0:
                raise InstanceError(f"mnl weight for {rid!r} must be > 0")
        object.__setattr__(self, "items", tuple(sorted(self.weights)))

    def phi(self, offer: Iterable[str], item: str) -> float:
        offer = frozenset(offer)
        if item not in offer or item not in self.weights:
            return 0.0
        denom = 1.0 + sum(self.weights[j] for j in offer if j in self.weights)
        return self.weights[item] / denom

    def to_json(self) -> dict:
        return {"kind": "mnl", "weights": {k: float(v) for k, v in sorted(self.weights.items())}}


@dataclass(frozen=True)
class TableChoiceModel(ChoiceModel):
    """Explicit map (offer set, item) -> probability over a small universe.

    The table must cover every non-empty subset of its universe. Construction
    validates sub-stochasticity and substitutability via one-element
    removals, which implies monotonicity over all nested pairs.
    """

    entries: dict[frozenset, dict[str, float]]

    def __post_init__(self):
        universe = frozenset().union(*self.entries) if self.entries else frozenset()
        object.__setattr__(self, "items", tuple(sorted(universe)))
        n = len(universe)
        if n > 16:
            raise InstanceError("table choice model universe too large (max 16 items)")
        for size in range(1, n + 1):
            for combo in itertools.combinations(sorted(universe), size):
                if frozenset(combo) not in self.entries:
                    raise InstanceError(f"table model missing entry for set {sorted(combo)}")
        for s, probs in self.entries.items():
            extra = set(probs) - set(s)
            if extra:
                raise InstanceError(f"table entry {sorted(s)}: probabilities for non-members {sorted(extra)}")
            if any(p < -1e-12 for p in probs.values()):
                raise InstanceError(f"table entry {sorted(s)}: negative probability")
            if sum(probs.values()) > 1.0 + 1e-9:
                raise InstanceError(f"table entry {sorted(s)}: probabilities sum past 1")
        for s in self.entries:
            if len(s) < 2:
                continue
            for drop in s:
                smaller = s - {drop}
                for i in smaller:
                    if self.phi(smaller, i) < self.phi(s, i) - 1e-12:
                        raise InstanceError(
                            f"substitutability violated: item {i!r} loses probability "
                            f"when {drop!r} is removed from {sorted(s)}")

    def phi(self, offer: Iterable[str], item: str) -> float:
        offer = frozenset(offer)
        if item not in offer:
            return 0.0
        return float(self.entries[offer].get(item, 0.0))

    def to_json(self) -> dict:
        entries = []
        for s in sorted(self.entries, key=lambda s: (len(s), tuple(sorted(s)))):
            entries.append({"set": sorted(s),
                            "probs": {k: float(v) for k, v in sorted(self.entries[s].items())}})
        return {"kind": "table", "entries": entries}


@dataclass(frozen=True)
class ChoiceContext:
    """An arrival's demand in assortment mode: model plus feasible family.

    ``family`` is one of "all" (any subset of the item universe), "card"
    (subsets of size <= k) or "explicit" (a listed, downward-closed family).
    """

    model: ChoiceModel
    family: str = "all"
    k: Optional[int] = None
    sets: Optional[tuple[frozenset, ...]] = None

    def __post_init__(self):
        if self.family not in ("all", "card", "explicit"):
            raise InstanceError(f"unknown feasible family {self.family!r}")
        if self.family == "card":
            if self.k is None or int(self.k) < 1:
                raise InstanceError("card family requires k >= 1")
        if self.family == "explicit":
            if not self.sets:
                raise InstanceError("explicit family requires a non-empty set list")
            listed = set(self.sets)
            universe = set(self.model.items)
            for s in self.sets:
                if not s <= universe:
                    raise InstanceError(f"family set {sorted(s)} leaves the item universe")
                for drop in s:
                    if len(s) > 1 and (s - {drop}) not in listed:
                        raise InstanceError(
                            f"family not downward-closed: {sorted(s - {drop})} missing")

    @property
    def items(self) -> tuple[str, ...]:
        return self.model.items

    def feasible_sets(self, candidates: frozenset) -> list[frozenset]:
        """All feasible non-empty assortments within ``candidates``, in
        (size, lexicographic) order."""
        pool = sorted(candidates)
        if self.family == "explicit":
            sets = sorted({s & candidates for s in self.sets if s & candidates},
                          key=lambda s: (len(s), tuple(sorted(s))))
            return [s for s in sets if s]
        max_size = len(pool) if self.family == "all" else min(int(self.k), len(pool))
        out = []
        for size in range(1, max_size + 1):
            out.extend(frozenset(c) for c in itertools.combinations(pool, size))
        return out

    def to_json(self) -> dict:
        doc = self.model.to_json()
        doc["family"] = self.family
        if self.family == "card":
            doc["k"] = int(self.k)
        if self.family == "explicit":
            doc["sets"] = [sorted(s) for s in sorted(self.sets, key=lambda s: (len(s), tuple(sorted(s))))]
        return doc


_CHOICE_KEYS = {"kind", "weights", "entries", "family", "k", "sets"}


def choice_context_from_json(doc: dict, where: str = "choice") -> ChoiceContext:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise InstanceError(f"{where}: choice object needs a kind")
    unknown = set(doc) - _CHOICE_KEYS
    if unknown:
        raise InstanceError(f"{where}: unknown choice fields {sorted(unknown)}")
    kind = doc["kind"]
    if kind == "mnl":
        if "weights" not in doc or "entries" in doc:
            raise InstanceError(f"{where}: mnl model requires weights")
        model: ChoiceModel = MNLChoiceModel({str(k): float(v) for k, v in doc["weights"].items()})
    elif kind == "table":
        if "entries" not in doc or "weights" in doc:
            raise InstanceError(f"{where}: table model requires entries")
        entries: dict[frozenset, dict[str, float]] = {}
        for e in doc["entries"]:
            if set(e) != {"set", "probs"}:
                raise InstanceError(f"{where}: table entry needs exactly set and probs")
            entries[frozenset(e["set"])] = {str(k): float(v) for k, v in e["probs"].items()}
        model = TableChoiceModel(entries)
    else:
        raise InstanceError(f"{where}: unknown choice model kind {kind!r}")
    family = doc.get("family", "all")
    if "k" in doc and family != "card":
        raise InstanceError(f"{where}: field k only belongs to the card family")
    if "sets" in doc and family != "explicit":
        raise InstanceError(f"{where}: field sets only belongs to the explicit family")
    k = int(doc["k"]) if "k" in doc else None
    sets = tuple(frozenset(s) for s in doc["sets"]) if "sets" in doc else None
    return ChoiceContext(model=model, family=family, k=k, sets=sets)


# ---------------------------------------------------------------------------
# Revenue-maximizing assortment oracle
# ---------------------------------------------------------------------------

def _revenue(model: ChoiceModel, offer: frozenset, prices: dict[str, float]) -> float:
    return sum(prices[i] * model.phi(offer, i) for i in offer)


def best_assortment(
    prices: dict[str, float], context: ChoiceContext, candidates: Optional[Iterable[str]] = None
) -> frozenset:
    """Feasible assortment maximizing expected price revenue under the model.

    MNL with the unrestricted family uses the nested-by-price structure of
    the optimum (scan prefixes of the price-sorted order); the cardinality
    constrained MNL uses the same scan capped at k; everything else is
    exhaustive over the (small) feasible family. Items with zero choice
    probability are never part of the answer; the empty set is returned when
    no assortment earns positive revenue.
    """
    for i, p in prices.items():
        if p < -1e-12:
            raise ValueError(f"reduced price for {i!r} must be >= 0")
    pool = frozenset(candidates) if candidates is not None else frozenset(prices)
    pool = pool & frozenset(context.items) & frozenset(prices)
    if not pool:
        return frozenset()

    model = context.model
    if isinstance(model, MNLChoiceModel) and context.family in ("all", "card"):
        order = sorted(pool, key=lambda i: (-prices[i], i))
        cap = len(order) if context.family == "all" else min(int(context.k), len(order))
        best, best_rev = frozenset(), 0.0
        num = den = 0.0
        for j in range(cap):
            i = order[j]
            num += prices[i] * model.weights[i]
            den += model.weights[i]
            rev = num / (1.0 + den)
            if rev > best_rev + 1e-15:
                best, best_rev = frozenset(order[: j + 1]), rev
        chosen = best
    else:
        best, best_rev = frozenset(), 0.0
        for s in context.feasible_sets(pool):
            rev = _revenue(model, s, prices)
            if rev > best_rev + 1e-15:
                best, best_rev = s, rev
        chosen = best

    return frozenset(i for i in chosen if model.phi(chosen, i) > 0.0)


# ---------------------------------------------------------------------------
# Set-valued guide
# ---------------------------------------------------------------------------

@dataclass
class AssortmentPlan:
    """Guide output: per arrival, weighted assortments plus unit consumption."""

    times: list[float]
    rows: list[list[tuple[frozenset, float]]]
    unit_y: dict[str, np.ndarray]
    unit_z_pre: dict[str, np.ndarray]
    reward: float

    @property
    def num_arrivals(self) -> int:
        return len(self.times)

    def consumption(self, rid: str) -> np.ndarray:
        """Total fraction of the resource consumed at each arrival."""
        return self.unit_y[rid].sum(axis=0)


def run_astgalg(
    instance: Instance, g: Callable[[float], float] = default_tradeoff
) -> tuple[AssortmentPlan, float]:
    """Deterministic set-valued guide under fluid reusability.

    Per arrival, repeatedly offers the revenue-maximizing assortment at
    current reduced prices, pushing as much weight on it as the bottleneck
    unit allows, until the arrival is fully allocated or candidates run out.
    """
    if instance.mode != "assortment":
        raise ValueError("run_astgalg requires an assortment-mode instance")
    state = FluidState.create(instance)
    rows: list[list[tuple[frozenset, float]]] = []
    for arrival in instance.arrivals:
        fluid_update(state, arrival.time, instance)
        t = state.arrivals_done
        for rs in state.per_resource.values():
            rs.z_pre[:, t] = rs.z
        ctx: ChoiceContext = arrival.choice
        row: list[tuple[frozenset, float]] = []
        eta = 0.0
        budget = sum(state.per_resource[rid].resource.capacity for rid in ctx.items)
        while eta < 1.0 - GAMMA_TOL:
            tops: dict[str, int] = {}
            prices: dict[str, float] = {}
            for rid in ctx.items:
                rs = state.per_resource[rid]
                k = rs.top_unit()
                if k == 0:
                    continue
                tops[rid] = k
                prices[rid] = rs.resource.reward * (1.0 - g(k / rs.resource.capacity))
            if not tops:
                break
            offer = best_assortment(prices, ctx, candidates=tops.keys())
            if not offer:
                break
            phis = {i: ctx.model.phi(offer, i) for i in offer}
            cap = min(float(state.per_resource[i].z[tops[i] - 1]) / phis[i] for i in offer)
            weight = min(1.0 - eta, cap)
            row.append((offer, weight))
            eta += weight
            for i in offer:
                rs = state.per_resource[i]
                take = weight * phis[i]
                rs.z[tops[i] - 1] = max(rs.z[tops[i] - 1] - take, 0.0)
                rs.y[tops[i] - 1, t] += take
                rs.matched[tops[i] - 1] += take
            assert len(row) <= budget, "assortment loop exceeded the unit budget"
        rows.append(row)
        state.times_seen.append(arrival.time)
        state.arrivals_done += 1

    reward = 0.0
    for rid, rs in state.per_resource.items():
        reward += rs.resource.reward * float(rs.y.sum())
    plan = AssortmentPlan(
        times=[a.time for a in instance.arrivals],
        rows=rows,
        unit_y={rid: rs.y for rid, rs in state.per_resource.items()},
        unit_z_pre={rid: rs.z_pre for rid, rs in state.per_resource.items()},
        reward=float(reward),
    )
    return plan, float(reward)


# ---------------------------------------------------------------------------
# Probability matching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatchedCollection:
    """Nested assortments with weights realizing prescribed item probabilities.

    ``pivots[j]`` is the item whose target was met (and which is dropped)
    when ``assortments[j]`` was emitted; zero-weight steps are not emitted.
    """

    assortments: tuple[frozenset, ...]
    weights: tuple[float, ...]
    pivots: tuple[str, ...]

    @property
    def total_weight(self) -> float:
        return float(sum(self.weights))


def probability_match(
    items: Iterable[str],
    model: ChoiceModel,
    targets: dict[str, float],
) -> MatchedCollection:
    """Decompose a set into nested assortments hitting per-item probabilities.

    Each iteration offers the whole remaining set with just enough weight to
    finish the item with the least remaining need (relative to its current
    choice probability), then drops that item. Requires
    0 <= targets[s] <= phi(items, s); the result satisfies
    sum_j weights[j] * phi(A_j, s) = targets[s] exactly for every item.

    MNL models take a sorted fast path; its output matches the generic
    iteration to float precision.
    """
    order0 = sorted(items)
    if not order0:
        return MatchedCollection((), (), ())
    for s in order0:
        p = targets.get(s, 0.0)
        q = model.phi(order0, s)
        if p < -1e-12:
            raise ValueError(f"target for {s!r} is negative")
        if p > q + 1e-9:
            raise ValueError(f"target for {s!r} exceeds its choice probability ({p} > {q})")

    if isinstance(model, MNLChoiceModel):
        return _probability_match_mnl(order0, model, targets)
    return _probability_match_generic(order0, model, targets)


def _probability_match_generic(
    items: Iterable[str], model: ChoiceModel, targets: dict[str, float]
) -> MatchedCollection:
    order0 = sorted(items)
    current = list(order0)
    rem = {s: min(max(targets.get(s, 0.0), 0.0), model.phi(order0, s)) for s in order0}
    sets: list[frozenset] = []
    weights: list[float] = []
    pivots: list[str] = []
    for _ in range(len(order0)):
        q = {s: model.phi(current, s) for s in current}
        gamma: dict[str, float] = {}
        for s in current:
            if q[s] <= 0.0:
                if rem[s] > COVERAGE_TOL:
                    raise RuntimeError(
                        f"item {s!r} has remaining target {rem[s]} but zero probability; "
                        "the choice model is not substitutable")
                gamma[s] = 0.0
            else:
                gamma[s] = rem[s] / q[s]
        pivot = min(current, key=lambda s: (gamma[s], s))
        w = max(gamma[pivot], 0.0)
        if w > GAMMA_TOL:
            sets.append(frozenset(current))
            weights.append(w)
            pivots.append(pivot)
            for s in current:
                rem[s] = max(rem[s] - w * q[s], 0.0)
        current.remove(pivot)
        if not current:
            break
    return MatchedCollection(tuple(sets), tuple(weights), tuple(pivots))


def _probability_match_mnl(
    order0: list[str], model: MNLChoiceModel, targets: dict[str, float]
) -> MatchedCollection:
    # IIA keeps the gamma-order fixed, so one sort by target/weight suffices.
    w = model.weights
    ranked = sorted(order0, key=lambda s: (targets.get(s, 0.0) / w[s], s))
    total_w = sum(w[s] for s in ranked)
    consumed = 0.0  # sum over emitted sets of weight_j / (1 + W_j)
    sets: list[frozenset] = []
    weights: list[float] = []
    pivots: list[str] = []
    for j, s in enumerate(ranked):
        ratio = max(targets.get(s, 0.0), 0.0) / w[s]
        y = (ratio - consumed) * (1.0 + total_w)
        if y > GAMMA_TOL:
            sets.append(frozenset(ranked[j:]))
            weights.append(y)
            pivots.append(s)
            consumed += y / (1.0 + total_w)
        total_w -= w[s]
    return MatchedCollection(tuple(sets), tuple(weights), tuple(pivots))


# ---------------------------------------------------------------------------
# Physical assortment policy
# ---------------------------------------------------------------------------

def _categorical(pairs: Sequence[tuple[object, float]], u: float):
    """Pick the first entry whose cumulative weight interval contains u."""
    hi = 0.0
    for obj, weight in pairs:
        lo, hi = hi, hi + weight
        if lo < u <= hi:
            return obj
    return None


def run_astalg(
    instance: Instance,
    plan: AssortmentPlan,
    deltas,
    path: SamplePath,
) -> RunRecord:
    """Physical assortment policy: rounded offers from the guide's plan.

    Per arrival: returns are processed; the planned assortment collection is
    sampled; the sampled assortment, cut down to available items, is
    re-expressed by probability matching with per-item targets
    phi(A, s)/(1+delta_s); one nested assortment (or rejection) is sampled
    and offered; the customer's choice is realized from the model. A sale
    commits the lowest-index available unit and consumes its next duration.
    """
    from .rounding import _Inventory  # shared physical-unit bookkeeping

    if instance.mode != "assortment":
        raise ValueError("run_astalg requires an assortment-mode instance")
    if plan.num_arrivals != instance.num_arrivals:
        raise ValueError("plan and instance disagree on the number of arrivals")
    rewards_of = {r.id: r.reward for r in instance.resources}
    inv = _Inventory(instance)
    decisions, rewards, trace, offered = [], [], [], []
    for t, arrival in enumerate(instance.arrivals):
        now = arrival.time
        counts = inv.available_counts(now)
        trace.append(counts)
        ctx: ChoiceContext = arrival.choice
        chosen_item = None
        offer_out = None

        planned = _categorical(plan.rows[t], path.uniform(t, 0))
        if planned is not None:
            available = frozenset(i for i in planned if counts.get(i, 0) > 0)
            if available:
                targets = {s: ctx.model.phi(planned, s) / (1.0 + deltas.deltas[s])
                           for s in available}
                collection = probability_match(available, ctx.model, targets)
                offer = _categorical(
                    list(zip(collection.assortments, collection.weights)), path.uniform(t, 1))
                if offer is not None:
                    offer_out = offer
                    probs = [(s, ctx.model.phi(offer, s)) for s in sorted(offer)]
                    chosen_item = _categorical(probs, path.uniform(t, 2))

        if chosen_item is not None:
            inv.commit_lowest(chosen_item, now, path)
            decisions.append(chosen_item)
            rewards.append(rewards_of[chosen_item])
        else:
            decisions.append(None)
            rewards.append(0.0)
        offered.append(offer_out)
    return RunRecord(policy="astalg", seed=path.seed, decisions=decisions, rewards=rewards,
                     inventory_trace=trace, offered=offered)
