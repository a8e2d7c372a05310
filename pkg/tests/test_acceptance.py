"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The directional criteria train real models on 400-student synthetic datasets
and take several minutes on one core.
"""
import itertools
import json
import math
import os
import time

import numpy as np
import pytest

from codedkt import bkt, codepaths as cp, dataset, evaluation as ev, experiment, gradcheck
from codedkt.codepaths import CodePath, extract_paths
from codedkt.dataset import encode_attempt
from codedkt.javaparse import AstNode, parse_source
from codedkt.ktmodels.config import ABLATION_VARIANTS
from codedkt.synth import SynthConfig, generate

# reduced desk-scale configuration shared by the directional criteria
DESK = dict(hidden_size=32, code_embedding_size=16, epochs=30, R=50, learning_rate=0.005)
REPS = 5


@pytest.fixture(scope="session")
def synthetic(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    out = {}
    for name, cfg in (("structural", SynthConfig(seed=0)),
                      ("random", SynthConfig(seed=0, code_mode="random")),
                      ("corrupt", SynthConfig(seed=1, corrupt_fraction=0.1))):
        generate(cfg, str(root / name))
        out[name] = str(root / name)
    out["root"] = root
    return out


def desk_config(data, model, out, **kw):
    return experiment.RunConfig(data=data, assignment="A1", model=model, model_overrides=dict(DESK),
                                repetitions=REPS, out=out, workers=1, **kw)


_cache = {}


def run_cached(key, fn):
    if key not in _cache:
        t0 = time.perf_counter()
        _cache[key] = (fn(), time.perf_counter() - t0)
    return _cache[key]


def test_criterion_1_encoding(verdict):
    t0 = time.perf_counter()
    ok = encode_attempt(0, 1, 3).tolist() == [1, 0, 0, 0, 0, 0]
    ok &= encode_attempt(0, 0, 3).tolist() == [0, 0, 0, 1, 0, 0]
    rng = np.random.default_rng(0)
    for _ in range(1000):
        M = int(rng.integers(1, 40))
        q, a = int(rng.integers(M)), int(rng.integers(2))
        x = encode_attempt(q, a, M)
        want = np.zeros(2 * M)
        want[q + (1 - a) * M] = 1
        ok &= x.shape == (2 * M,) and np.array_equal(x, want)
    dt = time.perf_counter() - t0
    verdict(1, "encoding fidelity", ok and dt < 1, f"worked examples + 1000 random checks exact, {dt:.3f}s")


def _brute_paths(tree, cap):
    leaves = []

    def walk(node, chain):
        chain = chain + [node]
        if not node.children:
            leaves.append(chain)
        for c in node.children:
            walk(c, chain)

    walk(tree, [])
    out = []
    for a, b in itertools.combinations(leaves, 2):
        k = 0
        while k < min(len(a), len(b)) and a[k] is b[k]:
            k += 1
        nodes = a[k - 1:][::-1] + b[k:]
        if cap and len(nodes) > cap:
            continue
        labels = [cp.leaf_label(nodes[0].label)] + [n.label for n in nodes[1:-1]] + [cp.leaf_label(nodes[-1].label)]
        out.append(CodePath(labels[0], "|".join(labels), labels[-1]))
    return out


def _random_tree(rng, max_leaves=12):
    nodes = [AstNode(f"t{i % 5}") for i in range(int(rng.integers(1, max_leaves + 1)))]
    k = 0
    while len(nodes) > 1:
        take = int(rng.integers(1, min(4, len(nodes)) + 1))
        at = int(rng.integers(0, len(nodes) - take + 1))
        nodes[at:at + take] = [AstNode(f"n{k % 3}", nodes[at:at + take])]
        k += 1
    return nodes[0]


def test_criterion_2_paths(verdict):
    t0 = time.perf_counter()
    tree = AstNode("method", [AstNode("input"), AstNode("body", [AstNode("String", [AstNode('"value"')])])])
    ok = [p.path for p in extract_paths(tree) if (p.start, p.end) == ("input", "value")] == \
        ["input|method|body|String|value"]
    parsed = extract_paths(parse_source('public String greet(String input) { return "value"; }').tree)
    ok &= any(p.start == "input" and p.end == "value" for p in parsed)
    rng = np.random.default_rng(2)
    for _ in range(200):
        t = _random_tree(rng)
        L = len(t.leaves())
        ok &= len(extract_paths(t, 0)) == L * (L - 1) // 2 == len(_brute_paths(t, 0))
        ok &= extract_paths(t, 8) == _brute_paths(t, 8)
    dt = time.perf_counter() - t0
    verdict(2, "path fidelity", ok and dt < 5, f"example path + 200 random trees vs brute force, {dt:.2f}s")


def test_criterion_3_gradients(verdict):
    t0 = time.perf_counter()
    rows = gradcheck.run(instances=50, seed=3)
    dt = time.perf_counter() - t0
    per_case = {}
    for name, _, err in rows:
        per_case[name] = max(per_case.get(name, 0.0), err)
    counts = {name: sum(1 for n, _, _ in rows if n == name) for name in per_case}
    worst = max(per_case.values())
    ok = min(counts.values()) >= 50 and worst < 1e-4 and dt < 120
    ok &= set(gradcheck.OP_CASES) | set(gradcheck.MODEL_CASES) == set(per_case)
    name = max(per_case, key=per_case.get)
    verdict(3, "gradient correctness", ok,
            f"{len(per_case)} cases x 50 instances, worst {worst:.2e} ({name}), {dt:.1f}s")


def _pair_auc(y, s):
    pos, neg = s[y == 1], s[y == 0]
    d = pos[:, None] - neg[None, :]
    return ((d > 0).sum() + 0.5 * (d == 0).sum()) / (len(pos) * len(neg))


def test_criterion_4_auc(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst, done = 0.0, 0
    while done < 1000:
        n = int(rng.integers(2, 101))
        y = rng.integers(2, size=n)
        if y.min() == y.max():
            continue
        s = np.round(rng.random(n), int(rng.integers(1, 3)))  # few decimals, many ties
        worst = max(worst, abs(ev.auc(y, s) - _pair_auc(y, s)))
        done += 1
    dt = time.perf_counter() - t0
    verdict(4, "AUC correctness", worst < 1e-12 and dt < 10, f"1000 instances, max |diff| {worst:.1e}, {dt:.2f}s")


def test_criterion_5_bkt_recovery(verdict):
    true = bkt.BktParams(0.3, 0.2, 0.15, 0.1)
    t0 = time.perf_counter()
    hits = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        seqs = []
        for _ in range(500):
            known = rng.random() < true.L0
            obs = []
            for _ in range(20):
                obs.append(int(rng.random() < ((1 - true.S) if known else true.G)))
                known = known or rng.random() < true.T
            seqs.append(obs)
        got, _, _ = bkt.fit_hmm(seqs, np.random.default_rng(100 + seed))
        hits.append(all(abs(getattr(got, k) - getattr(true, k)) <= 0.05 for k in ("L0", "T", "G", "S")))
    dt = time.perf_counter() - t0
    verdict(5, "BKT recovery", sum(hits) >= 4 and dt < 60, f"{sum(hits)}/5 seeds within 0.05, {dt:.1f}s")


def _structural_ablation(synthetic):
    rc = desk_config(synthetic["structural"], "codedkt", str(synthetic["root"] / "ablation"))
    variants = [v for v in ABLATION_VARIANTS if v[0] != "Model: RNN"]
    return run_cached("ablation", lambda: experiment.run_ablation(rc, variants))


def _mean_auc(synthetic, name, model):
    rc = desk_config(synthetic[name], model, str(synthetic["root"] / f"{name}_{model}"))
    d, dt = run_cached((name, model), lambda: experiment.run_experiment(rc))
    return d["summary"]["overall_auc"]["mean"], dt


@pytest.mark.slow
def test_criterion_6_directional(synthetic, verdict):
    abl, t_abl = _structural_ablation(synthetic)
    final = abl["rows"][0]
    assert final["variant"] == ABLATION_VARIANTS[0][0]
    code_s = final["overall_auc"]
    dkt_s, t1 = _mean_auc(synthetic, "structural", "dkt")
    code_r, t2 = _mean_auc(synthetic, "random", "codedkt")
    dkt_r, t3 = _mean_auc(synthetic, "random", "dkt")
    gap_s, gap_r = 100 * (code_s - dkt_s), 100 * (code_r - dkt_r)
    # the structural Code-DKT runs are shared with the ablation; count a fifth of it
    dt = t_abl / 4 + t1 + t2 + t3
    ok = gap_s >= 2.0 and abs(gap_r) <= 1.0 and dt < 900
    verdict(6, "directional replication", ok,
            f"structural Code-DKT {code_s:.4f} vs DKT {dkt_s:.4f} (gap {gap_s:+.2f} pts); "
            f"random {code_r:.4f} vs {dkt_r:.4f} (gap {gap_r:+.2f} pts); ~{dt / 60:.1f} min")


@pytest.mark.slow
def test_criterion_7_ablation(synthetic, verdict):
    abl, dt = _structural_ablation(synthetic)
    rows = {r["variant"]: r["overall_auc"] for r in abl["rows"]}
    final = rows[ABLATION_VARIANTS[0][0]]
    static = rows["Embedding: Static"]
    att, trace = rows["Correctness: Attention Only"], rows["Correctness: Trace Only"]
    ok = static < final and abs(att - final) <= 0.015 and abs(trace - final) <= 0.015 and dt < 1200
    verdict(7, "ablation direction", ok,
            f"final {final:.4f}, static {static:.4f}, attention-only {att:.4f}, trace-only {trace:.4f}; "
            f"{dt / 60:.1f} min")


@pytest.mark.slow
def test_criterion_8_first_attempt(synthetic, verdict):
    t0 = time.perf_counter()
    rc = desk_config(synthetic["structural"], "bkt", str(synthetic["root"] / "bkt"))
    data = experiment.Dataset(rc)
    exact = True
    by_student = {s.student_id: s for s in data.sequences}
    for r in range(REPS):
        seed = experiment.repetition_seed(rc.seed, r)
        _, train_seqs, test_seqs = data.split(seed)
        traces, _ = experiment.fit_and_predict("bkt", None, data, train_seqs, test_seqs, seed)
        want = [rec for tr in traces for rec in tr.records
                if by_student[tr.student_id].attempts[rec.t].first_attempt_flag == 1]
        exact &= ev.first_attempt_subset(traces) == want and len(want) > 0
    d = experiment.run_experiment(rc, data=data)
    first = d["summary"]["first_attempt_auc"]["mean"]
    dt = time.perf_counter() - t0
    ok = exact and 0.45 <= first <= 0.55 and dt < 300
    verdict(8, "first-attempt decomposition", ok,
            f"subset exact on {REPS} splits: {exact}; BKT first-attempt AUC {first:.4f}; {dt:.0f}s")


@pytest.mark.slow
def test_criterion_9_determinism(synthetic, verdict):
    t0 = time.perf_counter()
    root = synthetic["root"]
    results = []
    for model in ("codedkt", "bkt"):
        rc = experiment.RunConfig(data=synthetic["structural"], assignment="A1", model=model, repetitions=2,
                                  out=str(root / f"det_{model}_a"), workers=1,
                                  model_overrides=dict(DESK, epochs=5))
        experiment.run_experiment(rc)
        again = experiment.load_run_config(os.path.join(rc.out, experiment.RUN_CONFIG_FILE))
        again = again.replace(out=str(root / f"det_{model}_b"), workers=1)
        experiment.run_experiment(again)
        a = open(os.path.join(rc.out, "report.json"), "rb").read()
        b = open(os.path.join(again.out, "report.json"), "rb").read()
        results.append(a == b)
    dt = time.perf_counter() - t0
    verdict(9, "determinism", all(results) and dt < 900,
            f"report.json bitwise identical on re-run for codedkt, bkt: {results}; {dt:.0f}s")


@pytest.mark.slow
def test_criterion_10_robust_ingestion(synthetic, verdict):
    t0 = time.perf_counter()
    path = synthetic["corrupt"]
    records, _ = dataset.load_progsnap2(path)
    modes = [parse_source(r.source_text).mode for r in records]
    frac = modes.count("fallback_flat") / len(modes)
    finite = True
    for model in ("codedkt", "dkt_tfidf", "dkt_expert"):
        rc = experiment.RunConfig(data=path, assignment="A1", model=model, repetitions=1,
                                  out=str(synthetic["root"] / f"corrupt_{model}"), workers=1,
                                  model_overrides=dict(DESK, epochs=10))
        experiment.run_experiment(rc)
        with open(os.path.join(rc.out, "loss_history.json"), encoding="utf-8") as f:
            hist = json.load(f)
        finite &= all(math.isfinite(v) for h in hist.values() for v in h) and len(hist["0"]) == 10
    dt = time.perf_counter() - t0
    ok = finite and 0.05 <= frac <= 0.15 and dt < 600
    verdict(10, "robust ingestion", ok,
            f"{100 * frac:.1f}% submissions fall back to flat parse; 3 models trained, all losses finite; {dt:.0f}s")
