"""Acceptance gate: one test per criterion, printed as a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``. Every tolerance is fixed
here; Monte Carlo batteries use pinned seeds so the whole suite is
deterministic.
"""

import math
import time

from fluidalloc.assortment import run_astalg, run_astgalg
from fluidalloc.benchmarks import certificate_check, clairvoyant_dp, exact_policy_value
from fluidalloc.generators import generate, golden_suite
from fluidalloc.guide import run_galg
from fluidalloc.harness import ExperimentConfig, run_experiment
from fluidalloc.model import derive_rng, derive_seed, draw_sample_path
from fluidalloc.rounding import DeltaSchedule
from fluidalloc.verify import availability_battery, verify_lemmas

ALPHA = 1.0 - 1.0 / math.e


def report(criterion: str, ok: bool, detail: str = ""):
    line = f"[acceptance] {'PASS' if ok else 'FAIL'} {criterion}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def test_criterion_01_fluid_equivalence_battery():
    t0 = time.time()
    rep = verify_lemmas("lemma1", trials=200, seed=2028, replications=100_000)
    elapsed = time.time() - t0
    report("1 fluid-vs-monte-carlo equivalence, 200 specs x 1e5 reps",
           rep.passed and elapsed < 120.0,
           f"{elapsed:.1f}s, failures={rep.failures[:2]}")


def test_criterion_02_zero_set_invariance():
    t0 = time.time()
    rep = verify_lemmas("lemma3", trials=500, seed=404)
    elapsed = time.time() - t0
    report("2 zero-availability augmentation keeps reward, 500 specs",
           rep.passed and elapsed < 10.0, f"{elapsed:.1f}s, {rep.notes[0]}")


def test_criterion_03_probability_monotonicity():
    t0 = time.time()
    rep = verify_lemmas("monotone", trials=1000, seed=405)
    elapsed = time.time() - t0
    report("3 reward monotone in activation probabilities, 1000 pairs",
           rep.passed and elapsed < 10.0, f"{elapsed:.1f}s")


def test_criterion_04_probability_match_battery():
    t0 = time.time()
    rep = verify_lemmas("probmatch", trials=1000, seed=406)
    elapsed = time.time() - t0
    report("4 probability matching: nesting, budget, coverage, fast path",
           rep.passed and elapsed < 30.0, f"{elapsed:.1f}s, {rep.notes[0]}")


def test_criterion_05_certificate_identity():
    t0 = time.time()
    rng = derive_rng(407, "cert-acceptance")
    worst = 0.0
    for _ in range(100):
        inst = generate("random_dense",
                        n_resources=int(rng.integers(1, 4)),
                        capacity=(1, 5), T=int(rng.integers(1, 30)),
                        seed=int(rng.integers(0, 2**31)))
        guide, reward = run_galg(inst)
        rep = certificate_check(inst, guide)
        worst = max(worst, abs(rep.identity_value - reward))
    elapsed = time.time() - t0
    report("5 certificate identity equals guide reward on 100 instances",
           worst <= 1e-9 and elapsed < 60.0,
           f"max residual {worst:.2e}, {elapsed:.1f}s")


def test_criterion_06_tiny_instance_optimality_gaps():
    t0 = time.time()
    failures = []
    for name, inst in golden_suite():
        opt = clairvoyant_dp(inst)
        _, galg = run_galg(inst)
        greedy = exact_policy_value(inst, "greedy")
        if galg < ALPHA * opt - 1e-6:
            failures.append(f"{name}: galg {galg:.6f} < {ALPHA:.4f}*{opt:.6f}")
        if greedy < 0.5 * opt - 1e-6:
            failures.append(f"{name}: greedy {greedy:.6f} < 0.5*{opt:.6f}")
    elapsed = time.time() - t0
    report("6 golden-suite gaps: galg >= (1-1/e)OPT, greedy >= OPT/2",
           not failures and elapsed < 300.0,
           f"{len(golden_suite())} instances, {elapsed:.1f}s {failures[:2]}")


def test_criterion_07_greedy_tightness_at_scale():
    t0 = time.time()
    config = ExperimentConfig(policies=("greedy", "galg", "alg"),
                              replications=64, seed=408,
                              generator={"kind": "greedy_tight", "c": 100},
                              figures=False)
    rows = {r["policy"]: r for r in run_experiment(config)["rows"]}
    greedy_ratio = rows["greedy"]["ratio"]
    galg_ratio = rows["galg"]["ratio"]
    elapsed = time.time() - t0
    report("7 greedy_tight(c=100): greedy/OPT = 0.5 exactly, galg/OPT >= 0.63",
           greedy_ratio == 0.5 and galg_ratio >= 0.63 and elapsed < 60.0,
           f"greedy={greedy_ratio}, galg={galg_ratio:.4f}, {elapsed:.1f}s")


def test_criterion_08_availability_and_reward_bounds():
    t0 = time.time()
    stats = availability_battery(replications=10_000, seed=409,
                                 capacity=25, n_resources=3, T=75)
    elapsed = time.time() - t0
    report("8 rounding keeps availability >= 1-1/25 and per-resource reward bound",
           stats["ok"] and elapsed < 600.0,
           f"min availability {stats['min_freq']:.4f} vs bound {stats['bound']:.4f}, "
           f"{elapsed:.1f}s")


def test_criterion_09_assortment_choice_fidelity():
    t0 = time.time()
    inst = generate("assortment_mnl", n_resources=3, capacity=8, T=4, seed=410)
    plan, _ = run_astgalg(inst)
    deltas = DeltaSchedule.zero(inst)
    n = 100_000
    counts = {(t, r.id): 0 for t in range(inst.num_arrivals) for r in inst.resources}
    for j in range(n):
        record = run_astalg(inst, plan, deltas,
                            draw_sample_path(inst, derive_seed(411, "fid", j)))
        for t, rid in enumerate(record.decisions):
            if rid is not None:
                counts[(t, rid)] += 1
    bad = []
    for (t, rid), hits in counts.items():
        target = float(plan.consumption(rid)[t])
        se = math.sqrt(max(target * (1.0 - target), 1e-12) / n)
        if abs(hits / n - target) > 3.0 * se + 1e-9:
            bad.append((t, rid, hits / n, target))
    elapsed = time.time() - t0
    report("9 physical assortment choice frequencies reproduce the plan (1e5 reps)",
           not bad and elapsed < 300.0, f"{elapsed:.1f}s {bad[:2]}")


def test_criterion_10_collapse_checks():
    from fluidalloc.assortment import ChoiceContext
    from fluidalloc.benchmarks import run_ib
    from fluidalloc.generators import table_from_rankings
    from fluidalloc.model import Arrival, Instance, Resource, UsageDistribution

    t0 = time.time()
    failures = []

    # non-reusable instances: the guide's integral trace equals inventory
    # balancing decision-for-decision
    rng = derive_rng(412, "collapse")
    for trial in range(20):
        base = generate("random_dense", n_resources=3, capacity=(1, 3), T=15,
                        seed=int(rng.integers(0, 2**31)), edge_prob=0.8)
        resources = tuple(Resource(id=r.id, capacity=r.capacity, reward=r.reward,
                                   usage=UsageDistribution.never_returns())
                          for r in base.resources)
        inst = Instance(resources=resources, arrivals=base.arrivals, mode="matching")
        guide, _ = run_galg(inst)
        record = run_ib(inst, draw_sample_path(inst, 0))
        for t in range(inst.num_arrivals):
            pick = guide.steps[t][0].resource if guide.steps[t] else None
            if pick != record.decisions[t]:
                failures.append(f"ib-collapse trial {trial} arrival {t}")
                break

    # deterministic single-choice customers: set-valued guide equals the
    # matching guide to 1e-9
    for trial in range(10):
        base = generate("random_dense", n_resources=3, capacity=(1, 3), T=10,
                        seed=int(rng.integers(0, 2**31)), edge_prob=0.8)
        ranking = tuple(sorted(r.id for r in base.resources))
        ast_arrivals, match_arrivals = [], []
        for a in base.arrivals:
            if not a.edges:
                continue
            idx = len(ast_arrivals) + 1
            model = table_from_rankings(a.edges, [(ranking, 1.0)])
            ast_arrivals.append(Arrival(index=idx, time=a.time,
                                        choice=ChoiceContext(model=model)))
            match_arrivals.append(Arrival(index=idx, time=a.time, edges=a.edges))
        ast_inst = Instance(resources=base.resources, arrivals=tuple(ast_arrivals),
                            mode="assortment")
        match_inst = Instance(resources=base.resources,
                              arrivals=tuple(match_arrivals), mode="matching")
        _, ast_reward = run_astgalg(ast_inst)
        _, galg_reward = run_galg(match_inst)
        if abs(ast_reward - galg_reward) > 1e-9:
            failures.append(
                f"single-choice trial {trial}: {ast_reward} vs {galg_reward}")
    elapsed = time.time() - t0
    report("10 collapse: guide = inventory balancing (non-reusable), "
           "set guide = matching guide (single choice)",
           not failures and elapsed < 60.0, f"{elapsed:.1f}s {failures[:2]}")


def test_criterion_11_byte_identical_outputs(tmp_path):
    from fluidalloc.cli import main
    from fluidalloc.model import save_instance

    inst_path = tmp_path / "inst.json"
    save_instance(generate("random_dense", T=10, seed=6, n_resources=2, capacity=2),
                  inst_path)
    blobs = []
    for tag in ("first", "second"):
        sim = tmp_path / f"sim_{tag}.csv"
        cmp_ = tmp_path / f"cmp_{tag}.csv"
        assert main(["simulate", "--instance", str(inst_path), "--policy", "alg",
                     "--reps", "6", "--seed", "5", "--out", str(sim)]) == 0
        assert main(["compare", "--instance", str(inst_path),
                     "--policies", "greedy,ib,rba,alg", "--reps", "5", "--seed", "5",
                     "--out", str(cmp_)]) == 0
        blobs.append((sim.read_bytes(), sim.with_suffix(".png").read_bytes(),
                      cmp_.read_bytes(), cmp_.with_suffix(".png").read_bytes()))
    report("11 repeated simulate/compare invocations are byte-identical",
           blobs[0] == blobs[1])
