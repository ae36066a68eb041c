"""Baseline policies, a tiny-instance clairvoyant oracle, and certificates.

The baselines (greedy, inventory balancing, rank-based allocation) are
adaptive unit-tracking policies sharing one executor and the guide's
tie-breaking (lowest resource id). The clairvoyant oracle knows the whole
arrival sequence but, like any policy here, observes a usage duration only
when the unit comes back; on finite-support instances small enough for its
state-space guard it computes the exact optimum by dynamic programming over
information states and can replay its decision rule on sample paths.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .guide import FractionalMatch, default_tradeoff
from .model import Instance, RunRecord, SamplePath

__all__ = [
    "POLICY_IDS",
    "run_greedy",
    "run_ib",
    "run_rba",
    "DPOracle",
    "clairvoyant_dp",
    "exact_policy_value",
    "certificate_values",
    "certificate_check",
    "CertificateReport",
]

POLICY_IDS = ("greedy", "ib", "rba", "alg", "astalg")

AVAILABLE = -1  # unit status: available now, else the 0-based arrival it left at


# ---------------------------------------------------------------------------
# Adaptive unit-tracking baselines
# ---------------------------------------------------------------------------

def _run_unit_policy(instance: Instance, path: SamplePath, policy: str,
                     g: Callable[[float], float] = default_tradeoff) -> RunRecord:
    if instance.mode != "matching":
        raise ValueError(f"{policy} requires a matching-mode instance")
    resources = instance.resource_map()
    return_time = {r.id: np.full(r.capacity, -np.inf) for r in instance.resources}
    cursor = {r.id: np.zeros(r.capacity, dtype=int) for r in instance.resources}
    decisions, rewards, trace = [], [], []
    for t, arrival in enumerate(instance.arrivals):
        now = arrival.time
        counts = {rid: int((rt <= now).sum()) for rid, rt in return_time.items()}
        trace.append(counts)
        # greedy matches any available candidate; ib and rba reject when every
        # reduced price is zero
        best_rid = None
        best_score = -1.0 if policy == "greedy" else 0.0
        for rid in sorted(arrival.edges):
            if counts[rid] == 0:
                continue
            r = resources[rid]
            if policy == "greedy":
                score = r.reward
            elif policy == "ib":
                score = r.reward * (1.0 - g(counts[rid] / r.capacity))
            else:  # rba: rank by the highest available unit index
                top = int(np.nonzero(return_time[rid] <= now)[0][-1]) + 1
                score = r.reward * (1.0 - g(top / r.capacity))
            if score > best_score:
                best_rid, best_score = rid, score
        if best_rid is not None:
            avail = np.nonzero(return_time[best_rid] <= now)[0]
            k = int(avail[-1])  # highest-index available unit
            d = float(path.durations[(best_rid, k)][cursor[best_rid][k]])
            cursor[best_rid][k] += 1
            return_time[best_rid][k] = now + d
            decisions.append(best_rid)
            rewards.append(resources[best_rid].reward)
        else:
            decisions.append(None)
            rewards.append(0.0)
    return RunRecord(policy=policy, seed=path.seed, decisions=decisions, rewards=rewards,
                     inventory_trace=trace, proposals=list(decisions))


def run_greedy(instance: Instance, path: SamplePath) -> RunRecord:
    """Match each arrival to the highest-reward resource with a free unit."""
    return _run_unit_policy(instance, path, "greedy")


def run_ib(instance: Instance, path: SamplePath,
           g: Callable[[float], float] = default_tradeoff) -> RunRecord:
    """Inventory balancing: price by the remaining-inventory fraction."""
    return _run_unit_policy(instance, path, "ib", g=g)


def run_rba(instance: Instance, path: SamplePath,
            g: Callable[[float], float] = default_tradeoff) -> RunRecord:
    """Rank-based allocation: price by the highest available unit's rank."""
    return _run_unit_policy(instance, path, "rba", g=g)


# ---------------------------------------------------------------------------
# Clairvoyant oracle (exact DP on information states)
# ---------------------------------------------------------------------------

DP_MAX_ARRIVALS = 10
DP_MAX_TOTAL_UNITS = 6
DP_MAX_SUPPORT = 3


def _dp_eligible(instance: Instance) -> Optional[str]:
    if instance.mode != "matching":
        return "oracle supports matching mode only"
    if instance.num_arrivals > DP_MAX_ARRIVALS:
        return f"too many arrivals ({instance.num_arrivals} > {DP_MAX_ARRIVALS})"
    total_units = sum(r.capacity for r in instance.resources)
    if total_units > DP_MAX_TOTAL_UNITS:
        return f"too many units ({total_units} > {DP_MAX_TOTAL_UNITS})"
    for r in instance.resources:
        atoms = r.usage.support_atoms()
        if atoms is None:
            return f"resource {r.id}: usage distribution has unbounded support"
        if len(atoms) > DP_MAX_SUPPORT:
            return f"resource {r.id}: support size {len(atoms)} > {DP_MAX_SUPPORT}"
    return None


class DPOracle:
    """Exact clairvoyant optimum for tiny finite-support instances.

    The information state lists, per resource, which units are out and since
    which arrival; usage outcomes enter only through the conditional
    probability of returning by the next arrival given not back yet. Units of
    a resource are exchangeable, so out-times are kept as sorted multisets.
    """

    def __init__(self, instance: Instance):
        reason = _dp_eligible(instance)
        if reason is not None:
            est = instance.num_arrivals * (instance.num_arrivals + 1) ** sum(
                r.capacity for r in instance.resources)
            raise ValueError(
                f"instance outside the oracle guard: {reason} "
                f"(state-space estimate ~{est:,})")
        self.instance = instance
        self.ids = instance.sorted_ids()
        self.resources = instance.resource_map()
        self.times = instance.times
        self.T = instance.num_arrivals
        self._pre_cache: dict = {}
        self._post_cache: dict = {}
        self._action_cache: dict = {}
        initial = tuple(
            tuple([AVAILABLE] * self.resources[rid].capacity) for rid in self.ids)
        self.value = self._value_pre(0, initial)

    # -- probabilities ------------------------------------------------------

    def _hazard(self, rid: str, since: int, t: int) -> float:
        """P(unit back by arrival t | matched at ``since``, out at t-1)."""
        cdf = self.resources[rid].usage.cdf
        gap_now = self.times[t] - self.times[since]
        gap_prev = self.times[t - 1] - self.times[since] if t - 1 > since else 0.0
        p_prev = cdf(gap_prev) if t - 1 > since else 0.0
        denom = 1.0 - p_prev
        if denom <= 0.0:
            return 1.0
        return min(max((cdf(gap_now) - p_prev) / denom, 0.0), 1.0)

    # -- state transitions --------------------------------------------------

    @staticmethod
    def _canon(state: tuple) -> tuple:
        return tuple(tuple(sorted(units)) for units in state)

    def _resolve_returns(self, t: int, state: tuple,
                         keep_order: bool = False) -> list[tuple[tuple, float]]:
        """All post-return states at arrival t with their probabilities.

        The canonical form groups exchangeable units and branches over
        binomial return counts; ``keep_order`` branches per unit slot instead,
        for policies whose rule depends on unit ranks.
        """
        per_resource_options: list[list[tuple[tuple, float]]] = []
        for r_idx, units in enumerate(state):
            rid = self.ids[r_idx]
            outcomes: list[tuple[tuple, float]] = []
            if keep_order:
                out_slots = [(pos, since) for pos, since in enumerate(units)
                             if since != AVAILABLE]
                for combo in itertools.product((True, False), repeat=len(out_slots)):
                    prob = 1.0
                    new_units = list(units)
                    for (pos, since), back in zip(out_slots, combo):
                        h = self._hazard(rid, since, t)
                        prob *= h if back else (1.0 - h)
                        if back:
                            new_units[pos] = AVAILABLE
                    if prob > 0.0:
                        outcomes.append((tuple(new_units), prob))
            else:
                groups: dict[int, int] = {}
                n_avail = 0
                for s in units:
                    if s == AVAILABLE:
                        n_avail += 1
                    else:
                        groups[s] = groups.get(s, 0) + 1
                group_items = sorted(groups.items())
                ranges = [range(n + 1) for _, n in group_items]
                for combo in itertools.product(*ranges):
                    prob = 1.0
                    new_units = [AVAILABLE] * n_avail
                    for (since, n), back in zip(group_items, combo):
                        h = self._hazard(rid, since, t)
                        prob *= math.comb(n, back) * (h ** back) * ((1.0 - h) ** (n - back))
                        new_units.extend([AVAILABLE] * back + [since] * (n - back))
                    if prob > 0.0:
                        outcomes.append((tuple(sorted(new_units)), prob))
            per_resource_options.append(outcomes)
        results: list[tuple[tuple, float]] = []
        for combo in itertools.product(*per_resource_options):
            prob = 1.0
            for _, p in combo:
                prob *= p
            results.append((tuple(units for units, _ in combo), prob))
        return results

    def _commit(self, state: tuple, r_idx: int, t: int) -> tuple:
        units = list(state[r_idx])
        units[units.index(AVAILABLE)] = t
        new = list(state)
        new[r_idx] = tuple(sorted(units))
        return tuple(new)

    # -- value recursion ----------------------------------------------------

    def _value_pre(self, t: int, state: tuple) -> float:
        if t >= self.T:
            return 0.0
        key = (t, state)
        cached = self._pre_cache.get(key)
        if cached is not None:
            return cached
        total = 0.0
        for post, prob in self._resolve_returns(t, state):
            total += prob * self._value_post(t, post)
        self._pre_cache[key] = total
        return total

    def _value_post(self, t: int, post: tuple) -> float:
        key = (t, post)
        cached = self._post_cache.get(key)
        if cached is not None:
            return cached
        edges = self.instance.arrivals[t].edges or ()
        best_val = self._value_pre(t + 1, post)
        best_action: Optional[str] = None
        for rid in sorted(edges):
            r_idx = self.ids.index(rid)
            if AVAILABLE not in post[r_idx]:
                continue
            val = self.resources[rid].reward + self._value_pre(t + 1, self._commit(post, r_idx, t))
            if val > best_val + 1e-12:
                best_val, best_action = val, rid
        self._post_cache[key] = best_val
        self._action_cache[key] = best_action
        return best_val

    def decide(self, t: int, post: tuple) -> Optional[str]:
        """Optimal action at the (canonical) post-return state of arrival t."""
        post = self._canon(post)
        key = (t, post)
        if key not in self._action_cache:
            self._value_post(t, post)
        return self._action_cache[key]

    # -- replay on a sample path ---------------------------------------------

    def replay(self, path: SamplePath) -> RunRecord:
        """Execute the optimal decision rule against realized durations."""
        return_time = {rid: np.full(self.resources[rid].capacity, -np.inf) for rid in self.ids}
        matched_at = {rid: np.full(self.resources[rid].capacity, AVAILABLE, dtype=int)
                      for rid in self.ids}
        cursor = {rid: np.zeros(self.resources[rid].capacity, dtype=int) for rid in self.ids}
        decisions, rewards, trace = [], [], []
        for t, arrival in enumerate(self.instance.arrivals):
            now = arrival.time
            counts = {}
            state = []
            for rid in self.ids:
                back = return_time[rid] <= now
                matched_at[rid][back] = AVAILABLE
                counts[rid] = int(back.sum())
                state.append(tuple(int(s) for s in matched_at[rid]))
            trace.append(counts)
            action = self.decide(t, tuple(state))
            if action is not None:
                avail = np.nonzero(return_time[action] <= now)[0]
                k = int(avail[0])
                d = float(path.durations[(action, k)][cursor[action][k]])
                cursor[action][k] += 1
                return_time[action][k] = now + d
                matched_at[action][k] = t
                decisions.append(action)
                rewards.append(self.resources[action].reward)
            else:
                decisions.append(None)
                rewards.append(0.0)
        return RunRecord(policy="dp", seed=path.seed, decisions=decisions, rewards=rewards,
                         inventory_trace=trace, proposals=list(decisions))


def clairvoyant_dp(instance: Instance) -> float:
    """Exact expected reward of the clairvoyant optimum (tiny instances)."""
    return DPOracle(instance).value


def exact_policy_value(instance: Instance, policy: str,
                       g: Callable[[float], float] = default_tradeoff) -> float:
    """Exact expected reward of a baseline policy on a DP-eligible instance.

    Evaluates the same information-state recursion as the oracle but follows
    the policy's decision rule. ``rba`` distinguishes unit ranks, so its
    states are kept order-sensitive; greedy and ib only see counts.
    """
    reason = _dp_eligible(instance)
    if reason is not None:
        raise ValueError(f"instance outside the oracle guard: {reason}")
    oracle = DPOracle.__new__(DPOracle)  # reuse transition machinery, no solve
    oracle.instance = instance
    oracle.ids = instance.sorted_ids()
    oracle.resources = instance.resource_map()
    oracle.times = instance.times
    oracle.T = instance.num_arrivals
    canonical = policy in ("greedy", "ib")
    resources = oracle.resources
    caps = {rid: resources[rid].capacity for rid in oracle.ids}
    memo: dict = {}

    def decide(t: int, post: tuple) -> Optional[tuple[int, int]]:
        edges = instance.arrivals[t].edges or ()
        best = None
        best_score = -1.0 if policy == "greedy" else 0.0
        for rid in sorted(edges):
            r_idx = oracle.ids.index(rid)
            avail_positions = [i for i, s in enumerate(post[r_idx]) if s == AVAILABLE]
            if not avail_positions:
                continue
            r = resources[rid]
            if policy == "greedy":
                score = r.reward
                matchable = True
            elif policy == "ib":
                score = r.reward * (1.0 - g(len(avail_positions) / caps[rid]))
                matchable = score > 0.0
            elif policy == "rba":
                top = max(avail_positions) + 1
                score = r.reward * (1.0 - g(top / caps[rid]))
                matchable = score > 0.0
            else:
                raise ValueError(f"no exact evaluator for policy {policy!r}")
            if matchable and (best is None or score > best_score):
                unit = max(avail_positions)
                best, best_score = (r_idx, unit), score
        return best

    def value_pre(t: int, state: tuple) -> float:
        if t >= oracle.T:
            return 0.0
        key = (t, state)
        if key in memo:
            return memo[key]
        total = 0.0
        for post, prob in oracle._resolve_returns(t, state, keep_order=not canonical):
            action = decide(t, post)
            if action is None:
                total += prob * value_pre(t + 1, post)
            else:
                r_idx, unit = action
                units = list(post[r_idx])
                if canonical:
                    units[units.index(AVAILABLE)] = t
                    units = sorted(units)
                else:
                    units[unit] = t
                nxt = list(post)
                nxt[r_idx] = tuple(units)
                rid = oracle.ids[r_idx]
                total += prob * (resources[rid].reward + value_pre(t + 1, tuple(nxt)))
        memo[key] = total
        return total

    initial = tuple(tuple([AVAILABLE] * caps[rid]) for rid in oracle.ids)
    return value_pre(0, initial)


# ---------------------------------------------------------------------------
# Path-based certificate
# ---------------------------------------------------------------------------

def certificate_values(
    instance: Instance,
    unit_y: dict[str, np.ndarray],
    g: Callable[[float], float] = default_tradeoff,
) -> tuple[np.ndarray, dict[str, float]]:
    """Per-arrival and per-resource certificate values from unit consumption.

    lambda_t collects reward weighted by the matched units' discounted rank
    factors 1 - g(k/c); theta_i collects the complementary g(k/c) share,
    inflated by e^(1/c_i).
    """
    T = instance.num_arrivals
    lambdas = np.zeros(T)
    thetas: dict[str, float] = {}
    for r in instance.resources:
        y = unit_y[r.id]
        ks = (np.arange(r.capacity) + 1) / r.capacity
        gk = np.array([g(v) for v in ks])
        lambdas += r.reward * ((1.0 - gk) @ y)
        thetas[r.id] = math.exp(1.0 / r.capacity) * r.reward * float(gk @ y.sum(axis=1))
    return lambdas, thetas


@dataclass(frozen=True)
class ResourceCertRow:
    resource: str
    theta: float
    lhs_mean: float
    rhs_mean: float
    stderr: float
    slack: float
    ok: bool


@dataclass(frozen=True)
class CertificateReport:
    galg_reward: float
    identity_value: float
    identity_ok: bool
    alpha: float
    beta: float
    rows: tuple[ResourceCertRow, ...]

    @property
    def ok(self) -> bool:
        return self.identity_ok and all(r.ok for r in self.rows)


def certificate_check(
    instance: Instance,
    guide: FractionalMatch,
    opt_paths: Sequence[RunRecord] = (),
    g: Callable[[float], float] = default_tradeoff,
) -> CertificateReport:
    """Verify the two certificate conditions for a guide run.

    (a) sum_t lambda_t + sum_i e^(-1/c_i) theta_i reproduces the guide reward
    exactly; (b) for each resource, the expected lambda mass collected on the
    clairvoyant's matches plus theta_i covers (1-1/e) of the clairvoyant's
    reward from that resource, within Monte Carlo noise of the supplied
    replayed paths.
    """
    lambdas, thetas = certificate_values(instance, guide.unit_y, g=g)
    identity = float(lambdas.sum()) + sum(
        math.exp(-1.0 / r.capacity) * thetas[r.id] for r in instance.resources)
    identity_ok = abs(identity - guide.reward) <= 1e-9
    alpha = 1.0 - 1.0 / math.e
    beta = math.exp(1.0 / instance.c_min) if instance.resources else 1.0

    rows = []
    n = len(opt_paths)
    for r in instance.resources:
        if n == 0:
            rows.append(ResourceCertRow(r.id, thetas[r.id], thetas[r.id], 0.0, 0.0,
                                        thetas[r.id], True))
            continue
        vals = np.empty(n)
        lhs = np.empty(n)
        rhs = np.empty(n)
        for w, record in enumerate(opt_paths):
            matched_ts = [t for t, rid in enumerate(record.decisions) if rid == r.id]
            lam_sum = float(lambdas[matched_ts].sum()) if matched_ts else 0.0
            opt_i = r.reward * len(matched_ts)
            lhs[w] = lam_sum
            rhs[w] = alpha * opt_i
            vals[w] = lam_sum - alpha * opt_i
        stderr = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        slack = float(vals.mean()) + thetas[r.id]
        ok = slack >= -3.0 * stderr - 1e-9
        rows.append(ResourceCertRow(r.id, thetas[r.id], float(lhs.mean()) + thetas[r.id],
                                    float(rhs.mean()), stderr, slack, ok))
    return CertificateReport(
        galg_reward=guide.reward, identity_value=identity, identity_ok=identity_ok,
        alpha=alpha, beta=beta, rows=tuple(rows))
