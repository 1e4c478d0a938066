"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import json
import random

import numpy as np
import pytest

from oracles import bh_reference, brute_force_closed, exact_pvalues, naive_permutations, random_dataset
from sigrules.cli import main
from sigrules.corrections import bh_select
from sigrules.evaluate import run_trials
from sigrules.fisher import build_log_factorials, build_pvalue_buffer, fisher_p
from sigrules.miner import mine_closed
from sigrules.permutation import FULL_OPTIMIZATION, run_permutations
from sigrules.rules import score_rules
from sigrules.synth import SynthParams


def test_buffer_n20_c11_s6(acceptance_report):
    buf = build_pvalue_buffer(20, 11, 6, build_log_factorials(20))
    want_p = [0.0021672, 0.049845, 0.33591, 1.0000, 0.64241, 0.15712, 0.014087]
    want_h = [0.0021672, 0.035759, 0.17879, 0.35759, 0.30650, 0.10728, 0.011920]
    err = max(np.max(np.abs(buf.pvals - want_p)), np.max(np.abs(buf.pmf - want_h)))
    ok = acceptance_report(1, "p-value buffer n=20 n_c=11 sx=6", err <= 1e-5 and len(buf.pvals) == 7,
                           f"max abs error {err:.2e} (tol 1e-5), H(3)={buf.pmf[3]:.5f}")
    assert ok


def test_worked_pvalues(acceptance_report):
    a = fisher_p(5, 5, 1000, 500)
    b = fisher_p(110, 200, 1000, 500)
    ok = abs(a - 0.062) <= 1e-3 and abs(b - 0.133) <= 1e-3
    assert acceptance_report(2, "worked p-values", ok, f"p(5;5)={a:.4f} (0.062), p(110;200)={b:.4f} (0.133)")


def test_exhaustive_definition(acceptance_report):
    worst, count = 0.0, 0
    for n in range(1, 31):
        table = build_log_factorials(n)
        for n_c in range(n + 1):
            for sx in range(1, n + 1):
                _, ref = exact_pvalues(n, n_c, sx)
                buf = build_pvalue_buffer(n, n_c, sx, table)
                worst = max(worst, float(np.max(np.abs(buf.pvals - ref))))
                count += len(ref)
    assert acceptance_report(3, "buffer vs exhaustive definition, n <= 30", worst <= 1e-10,
                             f"{count} p-values, max abs error {worst:.2e} (tol 1e-10)")


def test_closed_miner_oracle(acceptance_report):
    rng = np.random.default_rng(20240601)
    mismatches = 0
    for _ in range(50):
        n = int(rng.integers(5, 31))
        attrs = int(rng.integers(1, 7))
        d = random_dataset(rng, n, attrs, 3)
        min_sup = int(rng.integers(1, max(2, n // 4) + 1))
        got = {m.items: (m.support, tuple(int(c) for c in m.class_support)) for m in mine_closed(d, min_sup)}
        if got != brute_force_closed(d, min_sup):
            mismatches += 1
    assert acceptance_report(4, "closed miner vs brute force", mismatches == 0,
                             f"{50 - mismatches}/50 datasets identical")


def test_optimization_equivalence(acceptance_report):
    d = random_dataset(np.random.default_rng(77), 200, 8, 4)
    mined = mine_closed(d, 10)
    rules = score_rules(mined, d)
    same = 0
    for seed in range(10):
        run = run_permutations(mined, d, 50, seed, rules, FULL_OPTIMIZATION)
        mins, pooled = naive_permutations(mined, d, rules, 50, seed)
        same += int(np.array_equal(run.min_p_per_perm, mins) and np.array_equal(run.pooled_p, pooled))
    assert acceptance_report(5, "Diffsets + buffers vs naive recompute", same == 10,
                             f"{same}/10 seeds bit-identical, {len(rules)} rules, N=50")


def test_fwer_control_random_data(acceptance_report):
    params = SynthParams(n_records=500, n_classes=2, n_attributes=10, n_rules=0)
    res = run_trials(params, ["none", "bc", "perm-fwer", "hd-bc"], 0.05, 50, 100, master_seed=6,
                     n_perms=1000)
    f = {m: res["metrics"][m].fwer for m in ("none", "bc", "perm-fwer", "hd-bc")}
    ok = f["none"] >= 0.9 and all(f[m] <= 0.12 for m in ("bc", "perm-fwer", "hd-bc"))
    detail = ", ".join(f"{m} {v:.2f}" for m, v in f.items())
    assert acceptance_report(6, "FWER on random data (None >= 0.9, others <= 0.12)", ok, detail)


@pytest.fixture(scope="module")
def power_runs():
    out = {}
    for conf in (0.6, 0.7):
        params = SynthParams(n_records=800, n_classes=2, n_attributes=16, n_rules=1,
                             min_s=160, max_s=160, min_c=conf, max_c=conf)
        out[conf] = run_trials(params, ["none", "bc", "perm-fwer", "hd-bc"], 0.05, 60, 100,
                               master_seed=7, n_perms=200)
    return out


def test_power_ordering(acceptance_report, power_runs):
    power = {c: {m: power_runs[c]["metrics"][m].power for m in ("perm-fwer", "bc", "hd-bc")}
             for c in power_runs}
    ordered = all(p["perm-fwer"] >= p["bc"] >= p["hd-bc"] for p in power.values())
    rising = all(power[0.7][m] > power[0.6][m] for m in ("perm-fwer", "bc", "hd-bc"))
    detail = "; ".join(
        f"conf {c}: " + ", ".join(f"{m} {v:.2f}" for m, v in p.items()) for c, p in power.items()
    )
    assert acceptance_report(7, "power Perm >= BC >= HD_BC, rising in confidence", ordered and rising, detail)


def test_no_correction_detects(acceptance_report, power_runs):
    rows = power_runs[0.7]["trials"]
    hits = sum(int(r["methods"]["none"]["power"] == 1.0) for r in rows)
    assert acceptance_report(9, "uncorrected detection at coverage 160, conf 0.70", hits >= 99,
                             f"{hits}/100 trials")


def test_bh_oracle(acceptance_report):
    rnd = random.Random(8)
    agree = 0
    for _ in range(1000):
        n = rnd.randint(0, 20)
        grid = rnd.random() < 0.5
        ps = [rnd.choice([0.001, 0.005, 0.01, 0.02, 0.04, 0.05, 0.2, 1.0]) if grid else rnd.random() ** 3
              for _ in range(n)]
        alpha = rnd.choice([0.01, 0.05, 0.1, 0.25])
        agree += int(bh_select(ps, alpha) == bh_reference(ps, alpha))
    assert acceptance_report(8, "BH step-up vs rank-scan definition", agree == 1000, f"{agree}/1000 lists")


def test_eval_determinism(acceptance_report, tmp_path):
    blobs = []
    for w in ("1", "2"):
        out = tmp_path / f"metrics{w}.json"
        code = main(["eval", "--N", "400", "--A", "8", "--rules", "1", "--max-l", "6", "--min-s", "80",
                     "--max-s", "80", "--min-c", "0.7", "--max-c", "0.7", "--method",
                     "none,bc,bh,perm-fwer,perm-fdr,hd-bc,hd-bh,rh-bc,rh-bh", "--trials", "6",
                     "--min-sup", "40", "--n-perms", "100", "--seed", "11", "--workers", w,
                     "--out", str(out)])
        assert code == 0
        blobs.append(out.read_bytes())
    json.loads(blobs[0])
    ok = blobs[0] == blobs[1]
    assert acceptance_report(10, "eval metrics.json identical for workers 1 and 2", ok,
                             f"{len(blobs[0])} bytes, identical={ok}")
