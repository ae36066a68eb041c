import json
import subprocess
import sys

import numpy as np
import pytest

from fluidalloc.cli import main
from fluidalloc.generators import generate
from fluidalloc.guide import run_galg
from fluidalloc.harness import ExperimentConfig, run_experiment, simulate_rows
from fluidalloc.model import load_instance, save_instance


def run_cli(*argv):
    return main(list(argv))


# --- generators through the CLI ----------------------------------------------

def test_generate_round_trips_and_validates(tmp_path):
    out = tmp_path / "dense.json"
    assert run_cli("generate", "--kind", "random_dense",
                   "--params", "T=12", "seed=5", "n_resources=2", "capacity=1:3",
                   "--out", str(out)) == 0
    inst = load_instance(out)
    assert inst.num_arrivals == 12
    # determinism: identical parameters give identical bytes
    out2 = tmp_path / "dense2.json"
    run_cli("generate", "--kind", "random_dense",
            "--params", "T=12", "seed=5", "n_resources=2", "capacity=1:3",
            "--out", str(out2))
    assert out.read_bytes() == out2.read_bytes()


def test_generate_rejects_bad_params(tmp_path, capsys):
    rc = run_cli("generate", "--kind", "greedy_tight", "--params", "c=-3",
                 "--out", str(tmp_path / "x.json"))
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_generator_outputs_validate():
    for kind, params in [
        ("greedy_tight", {"c": 4}),
        ("random_dense", {"T": 10, "seed": 1}),
        ("reuse_stress", {"d": 1.0, "eps": 0.2, "T": 9}),
        ("assortment_mnl", {"T": 6, "seed": 2}),
    ]:
        inst = generate(kind, **params)
        assert inst.num_arrivals >= 1  # construction already validates


def test_reuse_stress_alternating_availability():
    inst = generate("reuse_stress", d=1.0, eps=0.25, T=9)
    guide, _ = run_galg(inst)
    z = guide.unit_z_pre["a"][0]
    # first arrival full; then gaps d-eps (unit still out) alternate with
    # gaps d+eps (unit back)
    assert z[0] == 1.0
    assert list(z[1:5]) == [0.0, 1.0, 0.0, 1.0]


# --- simulate --------------------------------------------------------------

def test_simulate_rows_aggregate_mean():
    inst = generate("random_dense", T=10, seed=3, n_resources=2, capacity=2)
    rows = simulate_rows(inst, "greedy", replications=10, seed=5)
    assert len(rows) == 11
    per_seed = [r for r in rows if r["seed"] != "mean"]
    agg = rows[-1]
    assert agg["seed"] == "mean"
    assert agg["total_reward"] == pytest.approx(
        np.mean([r["total_reward"] for r in per_seed]))


def test_simulate_deterministic_policy_forces_single_row():
    inst = generate("random_dense", T=10, seed=3, n_resources=2, capacity=2)
    rows = simulate_rows(inst, "galg", replications=50, seed=5)
    assert len(rows) == 2  # one run plus aggregate


def test_simulate_cli_end_to_end(tmp_path):
    inst_path = tmp_path / "inst.json"
    save_instance(generate("random_dense", T=8, seed=9, n_resources=2, capacity=2),
                  inst_path)
    out = tmp_path / "runs.csv"
    assert run_cli("simulate", "--instance", str(inst_path), "--policy", "alg",
                   "--reps", "5", "--seed", "11", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "seed,algorithm,total_reward,reward_r00,reward_r01,rejections"
    assert len(lines) == 7
    assert (tmp_path / "runs.png").exists()


def test_simulate_byte_identical_reruns(tmp_path):
    inst_path = tmp_path / "inst.json"
    save_instance(generate("random_dense", T=8, seed=9, n_resources=2, capacity=2),
                  inst_path)
    outputs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        run_cli("simulate", "--instance", str(inst_path), "--policy", "greedy",
                "--reps", "6", "--seed", "4", "--out", str(out))
        outputs.append((out.read_bytes(), out.with_suffix(".png").read_bytes()))
    assert outputs[0] == outputs[1]


def test_worker_pool_matches_sequential(tmp_path, monkeypatch):
    inst_path = tmp_path / "inst.json"
    save_instance(generate("random_dense", T=8, seed=9, n_resources=2, capacity=2),
                  inst_path)
    seq = tmp_path / "seq.csv"
    run_cli("simulate", "--instance", str(inst_path), "--policy", "ib",
            "--reps", "8", "--seed", "2", "--out", str(seq), "--no-figure")
    monkeypatch.setenv("FLUIDALLOC_WORKERS", "3")
    par = tmp_path / "par.csv"
    run_cli("simulate", "--instance", str(inst_path), "--policy", "ib",
            "--reps", "8", "--seed", "2", "--out", str(par), "--no-figure")
    assert seq.read_bytes() == par.read_bytes()


def test_simulate_json_format(tmp_path):
    inst_path = tmp_path / "inst.json"
    save_instance(generate("greedy_tight", c=3), inst_path)
    out = tmp_path / "rows.json"
    run_cli("simulate", "--instance", str(inst_path), "--policy", "galg",
            "--reps", "1", "--seed", "0", "--out", str(out), "--format", "json",
            "--no-figure")
    rows = json.loads(out.read_text())
    assert rows[0]["algorithm"] == "galg"


# --- compare ------------------------------------------------------------------

def test_compare_with_oracle_ratio(tmp_path):
    inst_path = tmp_path / "tiny.json"
    save_instance(generate("greedy_tight", c=2), inst_path)
    out = tmp_path / "cmp.csv"
    assert run_cli("compare", "--instance", str(inst_path),
                   "--policies", "greedy,galg", "--reps", "4", "--seed", "1",
                   "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "instance_id,policy,mean_reward,std_err,opt_bound,ratio"
    rows = {line.split(",")[1]: line.split(",") for line in lines[1:]}
    assert float(rows["greedy"][5]) == pytest.approx(0.5)
    assert float(rows["galg"][5]) == pytest.approx(0.75)


def test_compare_oversized_oracle_leaves_ratio_empty(tmp_path, capsys):
    inst_path = tmp_path / "big.json"
    save_instance(generate("greedy_tight", c=30), inst_path)
    out = tmp_path / "cmp.csv"
    assert run_cli("compare", "--instance", str(inst_path),
                   "--policies", "greedy,ib", "--reps", "2", "--seed", "1",
                   "--out", str(out), "--no-figure") == 0
    err = capsys.readouterr().err
    assert "warning" in err
    for line in out.read_text().splitlines()[1:]:
        assert line.endswith(",,")


def test_compare_closed_form_opt_via_generator_config():
    config = ExperimentConfig(policies=("greedy", "galg"), replications=2, seed=3,
                              generator={"kind": "greedy_tight", "c": 10},
                              out=None, figures=False)
    result = run_experiment(config)
    rows = {r["policy"]: r for r in result["rows"]}
    assert rows["greedy"]["opt_bound"] == pytest.approx(20.0)
    assert rows["greedy"]["ratio"] == pytest.approx(0.5)
    assert rows["galg"]["ratio"] >= 0.63


def test_compare_byte_identical_reruns(tmp_path):
    inst_path = tmp_path / "tiny.json"
    save_instance(generate("random_dense", T=6, seed=2, n_resources=2, capacity=2),
                  inst_path)
    blobs = []
    for name in ("c1.csv", "c2.csv"):
        out = tmp_path / name
        run_cli("compare", "--instance", str(inst_path),
                "--policies", "greedy,ib,rba,alg", "--reps", "5", "--seed", "6",
                "--out", str(out))
        blobs.append((out.read_bytes(), out.with_suffix(".png").read_bytes()))
    assert blobs[0] == blobs[1]


# --- verify -------------------------------------------------------------------

def test_verify_cli_pass_and_fail_codes(tmp_path, capsys):
    assert run_cli("verify", "--suite", "lemma3", "--trials", "25", "--seed", "3",
                   "--dump-dir", str(tmp_path)) == 0
    out = capsys.readouterr().out
    assert "PASS lemma3" in out


def test_verify_zero_trials_is_argument_error():
    with pytest.raises(SystemExit) as exc:
        run_cli("verify", "--suite", "lemma3", "--trials", "0", "--seed", "1")
    assert exc.value.code == 2


def test_console_script_installed():
    proc = subprocess.run([sys.executable, "-m", "fluidalloc.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "generate" in proc.stdout and "verify" in proc.stdout


def test_delta_const_flag_changes_rounding(tmp_path):
    inst_path = tmp_path / "tight.json"
    save_instance(generate("greedy_tight", c=5), inst_path)
    totals = {}
    for const in ("100.0", "0.0"):
        out = tmp_path / f"d{const}.csv"
        run_cli("simulate", "--instance", str(inst_path), "--policy", "alg",
                "--reps", "40", "--seed", "8", "--out", str(out),
                "--delta-const", const, "--no-figure")
        mean_line = out.read_text().splitlines()[-1].split(",")
        totals[const] = float(mean_line[2])
    # no margin means the full guide mass is proposed: strictly more matches
    assert totals["0.0"] > totals["100.0"]
