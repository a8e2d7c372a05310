import csv

import numpy as np
import pytest

from codedkt import bkt
from codedkt.bkt import BktParams, bkt_fit, bkt_predict, bkt_update, fit_hmm
from codedkt.dataset import Attempt, AttemptSequence

TRUE = BktParams(0.3, 0.2, 0.15, 0.1)


def generate(params, n_students, n_attempts, rng):
    """Observation lists drawn from the absorbing two-state HMM."""
    out = []
    for _ in range(n_students):
        known = rng.random() < params.L0
        obs = []
        for _ in range(n_attempts):
            p = 1 - params.S if known else params.G
            obs.append(int(rng.random() < p))
            if not known and rng.random() < params.T:
                known = True
        out.append(obs)
    return out


def test_predict_examples():
    assert bkt_predict(1.0, 0.3, 0.0) == 1.0
    assert bkt_predict(0.0, 0.2, 0.4) == 0.2
    assert abs(bkt_predict(0.5, 0.2, 0.1) - 0.55) < 1e-15


def test_update_examples():
    assert bkt_update(0.5, 1, 0.0, 0.0, 0.0) == 1.0
    post = 0.45 / 0.55
    assert abs(bkt_update(0.5, 1, 0.2, 0.1, 0.3) - (post + (1 - post) * 0.3)) < 1e-15
    assert abs(bkt_update(0.5, 1, 0.2, 0.1, 0.3) - 0.8727) < 1e-4
    assert bkt_update(1.0, 0, 0.2, 0.0, 0.3) == 1.0


def test_forward_likelihood_matches_enumeration():
    rng = np.random.default_rng(0)
    p = BktParams(0.4, 0.25, 0.2, 0.15)
    seqs = [list(rng.integers(2, size=int(rng.integers(1, 6)))) for _ in range(6)]
    total = 0.0
    for obs in seqs:
        # sum over k, the first attempt made in the known state (k = L: never)
        L = len(obs)
        like = 0.0
        for k in range(L + 1):
            if k == 0:
                pk = p.L0
            elif k < L:
                pk = (1 - p.L0) * (1 - p.T) ** (k - 1) * p.T
            else:
                pk = (1 - p.L0) * (1 - p.T) ** (L - 1)
            term = pk
            for t, o in enumerate(obs):
                known = t >= k
                q = 1 - p.S if known else p.G
                term *= q if o else 1 - q
            like += term
        total += np.log(like)
    assert abs(bkt.log_likelihood(seqs, p) - total) < 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_recovery(seed):
    rng = np.random.default_rng(seed)
    seqs = generate(TRUE, 500, 20, rng)
    got, _, _ = fit_hmm(seqs, np.random.default_rng(100 + seed))
    for name in ("L0", "T", "G", "S"):
        assert abs(getattr(got, name) - getattr(TRUE, name)) < 0.05, (name, got)


def test_all_correct_hits_boundary_and_ll_monotone():
    seqs = [[1] * 6 for _ in range(30)]
    p, ll, history = fit_hmm(seqs, np.random.default_rng(0))
    assert all(b >= a - 1e-9 * max(1, abs(a)) for a, b in zip(history, history[1:]))
    assert p.G >= bkt.MAX_GUESS - 1e-9 or p.L0 >= 1 - bkt.FLOOR - 1e-9


def test_clamps_hold_on_noise():
    rng = np.random.default_rng(7)
    seqs = [list(rng.integers(2, size=10)) for _ in range(40)]
    p, _, history = fit_hmm(seqs, rng)
    assert p.G <= 0.5 and p.S <= 0.5
    assert all(bkt.FLOOR <= v <= 1 - bkt.FLOOR for v in (p.L0, p.T, p.G, p.S))


def seqs_of(rows):
    out = []
    for i, row in enumerate(rows):
        seen = set()
        atts = []
        for t, (q, a) in enumerate(row):
            atts.append(Attempt(q, a, "", int(q not in seen), str(q), str(t)))
            seen.add(q)
        out.append(AttemptSequence(f"s{i}", tuple(atts)))
    return out


def test_fit_is_deterministic_and_falls_back():
    rng = np.random.default_rng(1)
    rows = [[(0, int(rng.integers(2))) for _ in range(5)] for _ in range(10)]
    rows[0].append((1, 1))  # problem 1 has a single observation
    seqs = seqs_of(rows)
    a = bkt_fit(seqs, 3, seed=4)
    b = bkt_fit(seqs, 3, seed=4)
    assert a == b
    assert a[1] == a[bkt.POOLED] and a[2] == a[bkt.POOLED]
    assert a[0] != a[bkt.POOLED]


def test_trace_matches_records_and_uses_l0_for_first_attempts():
    params = {0: BktParams(0.3, 0.2, 0.1, 0.1), 1: BktParams(0.6, 0.1, 0.2, 0.05)}
    params[bkt.POOLED] = params[0]
    (seq,) = seqs_of([[(0, 0), (1, 1), (0, 1), (1, 0)]])
    tr = bkt.bkt_trace(params, seq, full_rows=True)
    assert [(r.t, r.q_next, r.a_next, r.first) for r in tr.records] == [(1, 1, 1, 1), (2, 0, 1, 0), (3, 1, 0, 0)]
    p1 = params[1]
    assert tr.records[0].p == bkt_predict(p1.L0, p1.G, p1.S)
    k0 = bkt_update(0.3, 0, 0.1, 0.1, 0.2)
    assert abs(tr.records[1].p - bkt_predict(k0, 0.1, 0.1)) < 1e-15
    assert tr.rows.shape == (3, 2) and tr.rows[0, 1] == tr.records[0].p


def test_export_csv(tmp_path):
    params = {0: TRUE, 1: TRUE, bkt.POOLED: TRUE}
    bkt.export_csv(params, tmp_path / "b.csv", ["p1", "p2"])
    rows = list(csv.reader(open(tmp_path / "b.csv")))
    assert rows[0] == ["problem", "L0", "T", "G", "S"]
    assert [r[0] for r in rows[1:]] == ["p1", "p2"] and float(rows[1][3]) == 0.15
