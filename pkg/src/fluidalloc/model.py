"""Domain types for reusable-resource allocation instances.

An instance is a set of resources (each with an integer capacity, a scalar
reward and a usage-duration distribution) plus an ordered sequence of
arrivals. In ``matching`` mode each arrival carries an edge set of resource
ids; in ``assortment`` mode it carries a choice context (model + feasible
assortment family). All randomness used by any policy flows through
:class:`SamplePath` objects drawn from explicit seeds, so equal seeds give
bit-identical runs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "InstanceError",
    "UsageDistribution",
    "Resource",
    "Arrival",
    "Instance",
    "SamplePath",
    "RunRecord",
    "derive_seed",
    "derive_rng",
    "load_instance",
    "save_instance",
    "draw_sample_path",
]

DISTRIBUTION_KINDS = (
    "deterministic",
    "exponential",
    "two_point",
    "geometric",
    "empirical_discrete",
)


class InstanceError(ValueError):
    """Raised for schema or invariant violations in instance data."""


def derive_seed(root: int, *tags) -> int:
    """Derive a stable 128-bit sub-seed from a root seed and hashable tags.

    Streams are keyed by content (e.g. resource id), not by position, so
    adding a resource or arrival does not perturb unrelated streams.
    """
    digest = hashlib.sha256(repr((int(root), tags)).encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def derive_rng(root: int, *tags) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *tags))


@dataclass(frozen=True)
class UsageDistribution:
    """Distribution of the time a matched unit stays in use.

    ``cdf`` is right-continuous with cdf(d)=0 for d<0, so a unit matched at
    time a with realized duration d is available again for an arrival at
    exactly a+d. Durations must be strictly positive (an atom at 0 would
    make "in use" meaningless); +inf atoms model non-reusable resources and
    leave the cdf limit below 1.
    """

    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in DISTRIBUTION_KINDS:
            raise InstanceError(f"unknown usage distribution kind {self.kind!r}")
        p = self.params
        try:
            if self.kind == "deterministic":
                self._check_keys(p, {"duration"})
                d = float(p["duration"])
                if not d > 0.0:
                    raise InstanceError("deterministic duration must be > 0")
            elif self.kind == "exponential":
                self._check_keys(p, {"rate"})
                if not float(p["rate"]) > 0.0:
                    raise InstanceError("exponential rate must be > 0")
            elif self.kind == "geometric":
                self._check_keys(p, {"p"}, optional={"scale"})
                q = float(p["p"])
                if not 0.0 < q <= 1.0:
                    raise InstanceError("geometric p must be in (0, 1]")
                if not float(p.get("scale", 1.0)) > 0.0:
                    raise InstanceError("geometric scale must be > 0")
            else:  # two_point, empirical_discrete
                self._check_keys(p, {"values", "probs"})
                values = [float(v) for v in p["values"]]
                probs = [float(w) for w in p["probs"]]
                if self.kind == "two_point" and len(values) != 2:
                    raise InstanceError("two_point needs exactly 2 values")
                if len(values) != len(probs) or not values:
                    raise InstanceError("values and probs must be equal-length and non-empty")
                if any(not v > 0.0 for v in values):
                    raise InstanceError("atom durations must be > 0")
                if len(set(values)) != len(values):
                    raise InstanceError("atom durations must be distinct")
                if any(w < 0.0 for w in probs) or abs(sum(probs) - 1.0) > 1e-9:
                    raise InstanceError("atom probabilities must be >= 0 and sum to 1")
        except (KeyError, TypeError) as exc:
            raise InstanceError(f"bad parameters for {self.kind}: {exc}") from exc

    @staticmethod
    def _check_keys(params: dict, required: set, optional: set = frozenset()):
        keys = set(params)
        missing = required - keys
        unknown = keys - required - optional
        if missing or unknown:
            raise InstanceError(f"missing={sorted(missing)} unknown={sorted(unknown)}")

    @classmethod
    def deterministic(cls, duration: float) -> "UsageDistribution":
        return cls("deterministic", {"duration": float(duration)})

    @classmethod
    def exponential(cls, rate: float) -> "UsageDistribution":
        return cls("exponential", {"rate": float(rate)})

    @classmethod
    def two_point(cls, values, probs) -> "UsageDistribution":
        return cls("two_point", {"values": [float(v) for v in values],
                                 "probs": [float(p) for p in probs]})

    @classmethod
    def geometric(cls, p: float, scale: float = 1.0) -> "UsageDistribution":
        return cls("geometric", {"p": float(p), "scale": float(scale)})

    @classmethod
    def empirical(cls, values, probs) -> "UsageDistribution":
        return cls("empirical_discrete", {"values": [float(v) for v in values],
                                          "probs": [float(p) for p in probs]})

    @classmethod
    def never_returns(cls) -> "UsageDistribution":
        """All mass at +inf: a matched unit never comes back (non-reusable)."""
        return cls.deterministic(math.inf)

    def cdf(self, d: float) -> float:
        """P(duration <= d); right-continuous, 0 for d < 0."""
        if d < 0.0:
            return 0.0
        if self.kind == "deterministic":
            return 1.0 if d >= self.params["duration"] else 0.0
        if self.kind == "exponential":
            return -math.expm1(-self.params["rate"] * d)
        if self.kind == "geometric":
            trials = math.floor(d / self.params.get("scale", 1.0))
            if trials <= 0:
                return 0.0
            return -math.expm1(trials * math.log1p(-self.params["p"])) if self.params["p"] < 1.0 else 1.0
        total = 0.0
        for v, w in zip(self.params["values"], self.params["probs"]):
            if v <= d:
                total += w
        return total

    def cdf_array(self, d: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`cdf`; keeps the guide's history scans at C speed."""
        d = np.asarray(d, dtype=float)
        if self.kind == "deterministic":
            return ((d >= self.params["duration"])).astype(float)
        if self.kind == "exponential":
            return -np.expm1(-self.params["rate"] * np.clip(d, 0.0, None))
        if self.kind == "geometric":
            trials = np.floor(np.clip(d, 0.0, None) / self.params.get("scale", 1.0))
            p = self.params["p"]
            if p >= 1.0:
                return (trials >= 1.0).astype(float)
            return -np.expm1(trials * math.log1p(-p))
        out = np.zeros_like(d)
        for v, w in zip(self.params["values"], self.params["probs"]):
            if math.isfinite(v):
                out += w * (d >= v)
        return out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` i.i.d. durations."""
        if self.kind == "deterministic":
            return np.full(size, float(self.params["duration"]))
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.params["rate"], size)
        if self.kind == "geometric":
            return self.params.get("scale", 1.0) * rng.geometric(self.params["p"], size).astype(float)
        values = np.asarray(self.params["values"], dtype=float)
        probs = np.asarray(self.params["probs"], dtype=float)
        return rng.choice(values, size=size, p=probs / probs.sum())

    def support_atoms(self) -> Optional[list[tuple[float, float]]]:
        """Sorted (duration, prob) atoms for finite-support kinds, else None.

        +inf atoms are included; exponential and geometric return None.
        """
        if self.kind == "deterministic":
            return [(float(self.params["duration"]), 1.0)]
        if self.kind in ("two_point", "empirical_discrete"):
            return sorted(zip((float(v) for v in self.params["values"]),
                              (float(p) for p in self.params["probs"])))
        return None

    def discrete_support(self) -> list[float]:
        """Atom durations when the support is finite; empty otherwise."""
        atoms = self.support_atoms()
        return [v for v, _ in atoms] if atoms else []

    def is_reusable(self) -> bool:
        """False when all mass sits at +inf."""
        atoms = self.support_atoms()
        if atoms is None:
            return True
        return any(math.isfinite(v) and p > 0.0 for v, p in atoms)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True)
class Resource:
    id: str
    capacity: int
    reward: float
    usage: UsageDistribution

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise InstanceError("resource id must be a non-empty string")
        if not isinstance(self.capacity, int) or self.capacity < 1:
            raise InstanceError(f"resource {self.id}: capacity must be an integer >= 1")
        if not self.reward >= 0.0:
            raise InstanceError(f"resource {self.id}: reward must be >= 0")


@dataclass(frozen=True)
class Arrival:
    """One online vertex: 1-based index, arrival time, and its demand.

    ``edges`` (matching mode) is a sorted tuple of resource ids; ``choice``
    (assortment mode) is a ChoiceContext from :mod:`fluidalloc.assortment`.
    """

    index: int
    time: float
    edges: Optional[tuple[str, ...]] = None
    choice: Optional[object] = None

    def __post_init__(self):
        if self.index < 1:
            raise InstanceError("arrival index must be >= 1")
        if not self.time >= 0.0:
            raise InstanceError(f"arrival {self.index}: time must be >= 0")
        if (self.edges is None) == (self.choice is None):
            raise InstanceError(f"arrival {self.index}: exactly one of edges/choice required")

    def demand_ids(self) -> tuple[str, ...]:
        if self.edges is not None:
            return self.edges
        return self.choice.items


@dataclass(frozen=True)
class Instance:
    resources: tuple[Resource, ...]
    arrivals: tuple[Arrival, ...]
    mode: str  # "matching" | "assortment"

    def __post_init__(self):
        if self.mode not in ("matching", "assortment"):
            raise InstanceError(f"unknown mode {self.mode!r}")
        ids = [r.id for r in self.resources]
        if len(set(ids)) != len(ids):
            raise InstanceError("duplicate resource ids")
        known = set(ids)
        prev_time = -math.inf
        for arr in self.arrivals:
            if arr.time <= prev_time:
                raise InstanceError(
                    f"arrival {arr.index}: time {arr.time} not strictly greater than previous {prev_time}")
            prev_time = arr.time
            if self.mode == "matching" and arr.edges is None:
                raise InstanceError(f"arrival {arr.index}: matching mode requires an edge set")
            if self.mode == "assortment" and arr.choice is None:
                raise InstanceError(f"arrival {arr.index}: assortment mode requires a choice context")
            for rid in arr.demand_ids():
                if rid not in known:
                    raise InstanceError(f"arrival {arr.index}: unknown resource id {rid!r}")

    @property
    def num_arrivals(self) -> int:
        return len(self.arrivals)

    @property
    def c_min(self) -> int:
        return min(r.capacity for r in self.resources)

    @property
    def times(self) -> list[float]:
        return [a.time for a in self.arrivals]

    def resource_map(self) -> dict[str, Resource]:
        return {r.id: r for r in self.resources}

    def sorted_ids(self) -> list[str]:
        return sorted(r.id for r in self.resources)


@dataclass
class SamplePath:
    """Pre-drawn randomness for one run: the full state of the world.

    ``durations[(rid, k)]`` holds exactly T durations for unit k (0-based) of
    resource ``rid``, consumed strictly in order as that unit is matched.
    ``arrival_uniforms`` has shape (T, 3); column 0 drives the rounding rule
    (or collection sampling in assortment mode), column 1 the
    assortment-within-collection draw, column 2 the realized customer choice.
    """

    seed: int
    durations: dict[tuple[str, int], np.ndarray]
    arrival_uniforms: np.ndarray

    def uniform(self, t: int, purpose: int = 0) -> float:
        return float(self.arrival_uniforms[t, purpose])


@dataclass
class RunRecord:
    """Outcome log of one policy run on one sample path.

    ``decisions[t]`` is the matched resource id (or chosen item in assortment
    mode) or None; ``proposals[t]`` is what the policy asked for before
    availability was consulted (equals decisions for adaptive baselines).
    ``inventory_trace[t][rid]`` counts available units just before arrival t
    is served (after returns are processed).
    """

    policy: str
    seed: int
    decisions: list[Optional[str]]
    rewards: list[float]
    inventory_trace: list[dict[str, int]]
    proposals: list[Optional[str]] = field(default_factory=list)
    offered: list[Optional[frozenset]] = field(default_factory=list)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    def reward_by_resource(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for rid, rew in zip(self.decisions, self.rewards):
            if rid is not None:
                out[rid] = out.get(rid, 0.0) + rew
        return out

    def rejection_count(self) -> int:
        return sum(1 for d in self.decisions if d is None)

    def validate(self, instance: Instance) -> None:
        caps = {r.id: r.capacity for r in instance.resources}
        assert len(self.decisions) == instance.num_arrivals
        assert abs(self.total_reward - sum(self.rewards)) < 1e-9
        for row in self.inventory_trace:
            for rid, avail in row.items():
                assert 0 <= avail <= caps[rid], f"inventory out of bounds for {rid}"


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_INSTANCE_KEYS = {"mode", "resources", "arrivals"}
_RESOURCE_KEYS = {"id", "capacity", "reward", "usage"}
_USAGE_KEYS = {"kind", "params"}


def _parse_number(x, ctx: str) -> float:
    if isinstance(x, str) and x.lower() in ("inf", "infinity"):
        return math.inf
    if not isinstance(x, (int, float)):
        raise InstanceError(f"{ctx}: expected a number, got {x!r}")
    return float(x)


def instance_from_json(doc: dict) -> Instance:
    """Build and validate an Instance from the JSON schema dict."""
    from .assortment import choice_context_from_json  # local import: avoid cycle

    if not isinstance(doc, dict):
        raise InstanceError("instance document must be a JSON object")
    unknown = set(doc) - _INSTANCE_KEYS
    if unknown:
        raise InstanceError(f"unknown instance fields {sorted(unknown)}")
    for key in _INSTANCE_KEYS:
        if key not in doc:
            raise InstanceError(f"missing instance field {key!r}")

    resources = []
    for i, rdoc in enumerate(doc["resources"]):
        unknown = set(rdoc) - _RESOURCE_KEYS
        if unknown:
            raise InstanceError(f"resource #{i}: unknown fields {sorted(unknown)}")
        try:
            udoc = rdoc["usage"]
            if set(udoc) - _USAGE_KEYS or "kind" not in udoc:
                raise InstanceError(f"resource #{i}: bad usage object")
            params = {k: (_parse_number(v, f"resource #{i} usage") if not isinstance(v, list)
                          else [_parse_number(x, f"resource #{i} usage") for x in v])
                      for k, v in udoc.get("params", {}).items()}
            usage = UsageDistribution(udoc["kind"], params)
            resources.append(Resource(id=rdoc["id"], capacity=int(rdoc["capacity"]),
                                      reward=float(rdoc["reward"]), usage=usage))
        except KeyError as exc:
            raise InstanceError(f"resource #{i}: missing field {exc}") from exc

    arrivals = []
    for i, adoc in enumerate(doc["arrivals"]):
        idx = i + 1
        keys = set(adoc)
        if "time" not in keys:
            raise InstanceError(f"arrival #{idx}: missing time")
        extra = keys - {"time", "edges", "choice"}
        if extra:
            raise InstanceError(f"arrival #{idx}: unknown fields {sorted(extra)}")
        time = _parse_number(adoc["time"], f"arrival #{idx}")
        if "edges" in keys and "choice" in keys:
            raise InstanceError(f"arrival #{idx}: both edges and choice present")
        if "edges" in keys:
            edges = tuple(sorted(adoc["edges"]))
            arrivals.append(Arrival(index=idx, time=time, edges=edges))
        elif "choice" in keys:
            ctx = choice_context_from_json(adoc["choice"], where=f"arrival #{idx}")
            arrivals.append(Arrival(index=idx, time=time, choice=ctx))
        else:
            raise InstanceError(f"arrival #{idx}: needs edges or choice")

    return Instance(resources=tuple(resources), arrivals=tuple(arrivals), mode=doc["mode"])


def instance_to_json(instance: Instance) -> dict:
    arrivals = []
    for a in instance.arrivals:
        if a.edges is not None:
            arrivals.append({"time": a.time, "edges": list(a.edges)})
        else:
            arrivals.append({"time": a.time, "choice": a.choice.to_json()})
    return {
        "mode": instance.mode,
        "resources": [
            {"id": r.id, "capacity": r.capacity, "reward": r.reward, "usage": r.usage.to_json()}
            for r in instance.resources
        ],
        "arrivals": arrivals,
    }


def load_instance(path) -> Instance:
    """Load and validate an instance file; raises InstanceError with context."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not valid JSON: {exc}") from exc
    return instance_from_json(doc)


def save_instance(instance: Instance, path) -> None:
    """Write an instance in canonical form (sorted keys, fixed indentation).

    Canonical output makes load -> save -> load byte-stable.
    """
    doc = instance_to_json(instance)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Sample paths
# ---------------------------------------------------------------------------

def draw_sample_path(instance: Instance, seed: int) -> SamplePath:
    """Pre-draw all randomness for one run, deterministically from the seed.

    Each (resource, unit) gets its own duration stream and each arrival its
    own uniform stream, keyed by id/index rather than position.
    """
    T = instance.num_arrivals
    durations: dict[tuple[str, int], np.ndarray] = {}
    for r in instance.resources:
        for k in range(r.capacity):
            rng = derive_rng(seed, "durations", r.id, k)
            durations[(r.id, k)] = r.usage.sample(rng, T)
    uniforms = np.empty((T, 3), dtype=float)
    for t in range(T):
        uniforms[t] = derive_rng(seed, "arrival", t + 1).random(3)
    return SamplePath(seed=int(seed), durations=durations, arrival_uniforms=uniforms)
