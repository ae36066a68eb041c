"""Named property batteries exposed through ``fluidalloc verify``.

Each suite replays a batch of randomized cases against an exact reference
(the availability recursion, algebraic identities, or the clairvoyant
oracle) and reports per-case failures. Failing cases are serialized so they
can be replayed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import assortment as ast
from . import benchmarks, fluid, generators, rounding
from .guide import run_galg
from .model import derive_rng, derive_seed, draw_sample_path, instance_to_json

__all__ = ["SUITES", "VerifyReport", "verify_lemmas", "availability_battery"]

SUITES = ("lemma1", "lemma3", "monotone", "probmatch", "availability", "certificate")


@dataclass
class VerifyReport:
    suite: str
    trials: int
    failures: list[str] = field(default_factory=list)
    failing_cases: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def dump_failures(self, directory) -> list[str]:
        paths = []
        for i, case in enumerate(self.failing_cases):
            p = Path(directory) / f"failing_case_{self.suite}_{i}.json"
            p.write_text(json.dumps(case, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            paths.append(str(p))
        return paths


def verify_lemmas(suite: str, trials: int, seed: int, replications: int | None = None) -> VerifyReport:
    """Run one named battery. ``trials`` is the number of random cases."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    runner = {
        "lemma1": _suite_lemma1,
        "lemma3": _suite_lemma3,
        "monotone": _suite_monotone,
        "probmatch": _suite_probmatch,
        "availability": _suite_availability,
        "certificate": _suite_certificate,
    }[suite]
    if suite == "lemma1":
        return runner(trials, seed, replications or 100_000)
    if suite == "availability":
        return runner(trials, seed, replications or 2_000)
    return runner(trials, seed)


# Per-point comparisons run in the thousands per battery; a literal 3-sigma
# bound there would reject a correct implementation almost surely. 4.75 sigma
# keeps the family-wise false-positive rate around 1% for batteries of a few
# thousand comparisons while still catching any real bias (which shows up at
# hundreds of sigma with 1e5 replications). The per-spec mean-reward check
# stays at 3 sample-stderrs.
POINTWISE_Z = 4.75


def _suite_lemma1(trials: int, seed: int, replications: int) -> VerifyReport:
    """Monte Carlo process agrees with the exact fluid recursion: mean reward
    within 3 sample-stderrs per spec, availability frequencies within a
    family-wise-adjusted binomial bound."""
    report = VerifyReport(suite="lemma1", trials=trials)
    rng = derive_rng(seed, "lemma1")
    for case in range(trials):
        spec = generators.random_point_process(rng, max_points=20)
        trace = fluid.fluid_availability(spec)
        mean, freqs, stderr = fluid.simulate_random_process_stats(
            spec, replications, derive_seed(seed, "lemma1-mc", case))
        if abs(mean - trace.reward) > 3.0 * stderr + 1e-12:
            report.failures.append(
                f"case {case}: mean {mean:.6f} vs fluid {trace.reward:.6f} (3se={3*stderr:.6f})")
            report.failing_cases.append(spec.to_json())
            continue
        for t, (freq, eta) in enumerate(zip(freqs, trace.availability)):
            se = math.sqrt(eta * (1.0 - eta) / replications)
            if abs(freq - eta) > POINTWISE_Z * se + 1e-9:
                report.failures.append(
                    f"case {case}: availability at point {t}: {freq:.6f} vs {eta:.6f}")
                report.failing_cases.append(spec.to_json())
                break
    return report


def _suite_lemma3(trials: int, seed: int) -> VerifyReport:
    """Forcing sure activation at zero-availability points leaves the fluid
    reward unchanged."""
    report = VerifyReport(suite="lemma3", trials=trials)
    rng = derive_rng(seed, "lemma3")
    touched = 0
    for case in range(trials):
        spec = generators.random_point_process(rng, max_points=20, force_zeros=True)
        before = fluid.fluid_availability(spec).reward
        augmented = fluid.augment_zero_set(spec)
        after = fluid.fluid_availability(augmented).reward
        if augmented.probs != spec.probs:
            touched += 1
        if abs(before - after) > 1e-9:
            report.failures.append(f"case {case}: reward moved {before} -> {after}")
            report.failing_cases.append(spec.to_json())
    report.notes.append(f"{touched}/{trials} specs had zero-availability points")
    return report


def _suite_monotone(trials: int, seed: int) -> VerifyReport:
    """Fluid reward is monotone under pointwise-increased probabilities."""
    report = VerifyReport(suite="monotone", trials=trials)
    rng = derive_rng(seed, "monotone")
    for case in range(trials):
        spec_hi = generators.random_point_process(rng, max_points=15)
        lo_probs = tuple(float(p * rng.uniform(0.0, 1.0)) for p in spec_hi.probs)
        spec_lo = fluid.PointProcessSpec(spec_hi.dist, spec_hi.points, lo_probs)
        witness = fluid.compare_monotone(spec_lo, spec_hi)
        if not witness.holds:
            report.failures.append(
                f"case {case}: reward decreased {witness.reward_lo} -> {witness.reward_hi}")
            report.failing_cases.append(
                {"lo": spec_lo.to_json(), "hi": spec_hi.to_json()})
    return report


def _check_matched_collection(items, model, targets, coll) -> str | None:
    prev = None
    for s in coll.assortments:
        if not s <= frozenset(items):
            return f"set {sorted(s)} escapes {sorted(items)}"
        if prev is not None and not s < prev:
            return "collection is not strictly nested"
        prev = s
    if coll.total_weight > 1.0 + 1e-9:
        return f"weights sum to {coll.total_weight}"
    if any(w <= 0.0 for w in coll.weights):
        return "non-positive weight emitted"
    for s_item in items:
        covered = sum(w * model.phi(a, s_item)
                      for a, w in zip(coll.assortments, coll.weights) if s_item in a)
        if abs(covered - targets.get(s_item, 0.0)) > 1e-9:
            return f"coverage of {s_item!r}: {covered} vs target {targets.get(s_item, 0.0)}"
    # running-prefix bound from the weight-sum argument
    gamma0 = {s: (targets.get(s, 0.0) / model.phi(items, s)) if model.phi(items, s) > 0 else 0.0
              for s in items}
    running = 0.0
    for s, w in zip(coll.pivots, coll.weights):
        running += w
        if running > gamma0[s] + 1e-9:
            return f"prefix weight {running} exceeds gamma0[{s!r}]={gamma0[s]}"
    return None


def _suite_probmatch(trials: int, seed: int) -> VerifyReport:
    """Probability matching: nested sets, weight budget, exact coverage, and
    the MNL fast path agreeing with the generic iteration."""
    report = VerifyReport(suite="probmatch", trials=trials)
    rng = derive_rng(seed, "probmatch")
    max_residual = 0.0
    for case in range(trials):
        kind = "mnl" if rng.random() < 0.5 else "table"
        n = int(rng.integers(1, 13 if kind == "mnl" else 10))
        items = [f"s{i}" for i in range(n)]
        model = generators.random_choice_model(rng, items, kind)
        base = model.offer_probs(items)
        targets = {s: float(rng.uniform(0.0, 1.0)) * base[s] for s in items}
        if rng.random() < 0.1:
            for s in items[: max(1, n // 3)]:
                targets[s] = 0.0
        try:
            coll = ast.probability_match(items, model, targets)
        except Exception as exc:  # battery should never raise
            report.failures.append(f"case {case}: raised {exc!r}")
            report.failing_cases.append({"kind": kind, "targets": targets})
            continue
        err = _check_matched_collection(items, model, targets, coll)
        if err:
            report.failures.append(f"case {case}: {err}")
            report.failing_cases.append({"kind": kind, "targets": targets,
                                         "model": model.to_json()})
            continue
        for s_item in items:
            covered = sum(w * model.phi(a, s_item)
                          for a, w in zip(coll.assortments, coll.weights) if s_item in a)
            max_residual = max(max_residual, abs(covered - targets[s_item]))
        if kind == "mnl":
            fast = coll
            slow = ast._probability_match_generic(items, model, targets)
            if len(fast.assortments) != len(slow.assortments):
                report.failures.append(f"case {case}: fast/generic path lengths differ")
                report.failing_cases.append({"kind": kind, "targets": targets})
                continue
            for a1, w1, a2, w2 in zip(fast.assortments, fast.weights,
                                      slow.assortments, slow.weights):
                if a1 != a2 or abs(w1 - w2) > 1e-12:
                    report.failures.append(f"case {case}: fast/generic paths disagree")
                    report.failing_cases.append({"kind": kind, "targets": targets})
                    break
    report.notes.append(f"max coverage residual {max_residual:.3e}")
    return report


def _suite_availability(trials: int, seed: int, replications: int) -> VerifyReport:
    """Deterministic load bound behind the rounding policy, plus a Monte
    Carlo spot-check of per-resource availability at stressed capacity."""
    report = VerifyReport(suite="availability", trials=trials)
    rng = derive_rng(seed, "availability")
    for case in range(trials):
        inst = generators.generate(
            "random_dense", n_resources=int(rng.integers(2, 4)),
            capacity=(1, 4), T=int(rng.integers(5, 15)),
            seed=int(rng.integers(0, 2**31)), edge_prob=0.8)
        guide, _ = run_galg(inst)
        deltas = rounding.DeltaSchedule.default(inst)
        margins = rounding.scaled_mass_bound_margin(inst, guide, deltas)
        worst = min(margins.values(), default=0.0)
        if worst < -1e-9:
            report.failures.append(f"case {case}: load bound violated by {-worst}")
            report.failing_cases.append(instance_to_json(inst))
    stats = availability_battery(replications=replications, seed=derive_seed(seed, "avail-mc"),
                                 capacity=25, n_resources=2, T=30)
    report.notes.append(
        f"MC availability min {stats['min_freq']:.4f} (bound {stats['bound']:.4f})")
    if not stats["ok"]:
        report.failures.append("Monte Carlo availability fell below 1 - 1/c - 3se")
    return report


def availability_battery(replications: int, seed: int, capacity: int = 25,
                         n_resources: int = 3, T: int = 75,
                         delta_const: float = rounding.DEFAULT_DELTA_CONST) -> dict:
    """Empirical availability and per-resource reward bound on a dense
    instance with uniform capacity. Returns summary statistics."""
    inst = generators.generate(
        "random_dense", n_resources=n_resources, capacity=capacity, T=T,
        seed=derive_seed(seed, "dense-instance"), edge_prob=1.0)
    guide, galg_reward = run_galg(inst)
    deltas = rounding.DeltaSchedule.default(inst, const=delta_const)
    counts = {(r.id, t): 0 for r in inst.resources for t in range(T)}
    reward_sums = {r.id: 0.0 for r in inst.resources}
    reward_sq = {r.id: 0.0 for r in inst.resources}
    for j in range(replications):
        path = draw_sample_path(inst, derive_seed(seed, "avail-rep", j))
        record = rounding.run_alg(inst, guide, deltas, path)
        for t, row in enumerate(record.inventory_trace):
            for rid, avail in row.items():
                if avail > 0:
                    counts[(rid, t)] += 1
        for rid, rew in record.reward_by_resource().items():
            reward_sums[rid] += rew
        for r in inst.resources:
            reward_sq[r.id] += record.reward_by_resource().get(r.id, 0.0) ** 2

    bound = 1.0 - 1.0 / capacity
    min_freq, availability_ok = 1.0, True
    for (rid, t), hit in counts.items():
        freq = hit / replications
        se = math.sqrt(max(freq * (1.0 - freq), 1e-12) / replications)
        min_freq = min(min_freq, freq)
        if freq < bound - 3.0 * se:
            availability_ok = False

    reward_ok = True
    reward_rows = {}
    for r in inst.resources:
        mean = reward_sums[r.id] / replications
        var = max(reward_sq[r.id] / replications - mean ** 2, 0.0)
        se = math.sqrt(var / replications)
        galg_i = r.reward * float(guide.x[r.id].sum())
        target = (1.0 - 1.0 / r.capacity) / (1.0 + deltas.deltas[r.id]) * galg_i
        reward_rows[r.id] = {"mean": mean, "target": target, "se": se}
        if mean < target - 3.0 * se - 1e-9:
            reward_ok = False

    return {
        "instance_arrivals": T,
        "capacity": capacity,
        "bound": bound,
        "min_freq": min_freq,
        "ok": availability_ok and reward_ok,
        "availability_ok": availability_ok,
        "reward_ok": reward_ok,
        "reward_rows": reward_rows,
        "galg_reward": galg_reward,
    }


def _suite_certificate(trials: int, seed: int) -> VerifyReport:
    """Certificate identity on random instances; both conditions on oracle-
    eligible golden instances with replayed optimal paths."""
    report = VerifyReport(suite="certificate", trials=trials)
    rng = derive_rng(seed, "certificate")
    for case in range(trials):
        inst = generators.generate(
            "random_dense", n_resources=int(rng.integers(1, 4)),
            capacity=(1, 5), T=int(rng.integers(1, 25)),
            seed=int(rng.integers(0, 2**31)))
        guide, reward = run_galg(inst)
        rep = benchmarks.certificate_check(inst, guide)
        if not rep.identity_ok:
            report.failures.append(
                f"case {case}: identity {rep.identity_value} != reward {reward}")
            report.failing_cases.append(instance_to_json(inst))
    for name, inst in generators.golden_suite():
        oracle = benchmarks.DPOracle(inst)
        guide, _ = run_galg(inst)
        paths = [oracle.replay(draw_sample_path(inst, derive_seed(seed, name, j)))
                 for j in range(400)]
        rep = benchmarks.certificate_check(inst, guide, paths)
        if not rep.ok:
            report.failures.append(f"golden {name}: certificate conditions failed")
            report.failing_cases.append(instance_to_json(inst))
        report.notes.append(
            f"golden {name}: identity ok, min slack "
            f"{min((r.slack for r in rep.rows), default=0.0):.4f}")
    return report
