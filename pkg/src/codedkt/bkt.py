"""Four-parameter Bayesian Knowledge Tracing with problems as skills.

Each problem is a two-state HMM (unknown -> known, no forgetting) fit by
Baum-Welch with random restarts.
"""
import csv
import logging
from dataclasses import dataclass

import numpy as np

from .codepaths import stable_seed
from .ktmodels.training import PredictionTrace, TraceRecord

log = logging.getLogger(__name__)

MAX_GUESS = MAX_SLIP = 0.5
# keeps every emission/transition probability strictly inside (0, 1)
FLOOR = 1e-6
MIN_OBSERVATIONS = 5
POOLED = "<pooled>"


@dataclass(frozen=True)
class BktParams:
    L0: float
    T: float
    G: float
    S: float

    def clamped(self):
        return BktParams(float(np.clip(self.L0, FLOOR, 1 - FLOOR)), float(np.clip(self.T, FLOOR, 1 - FLOOR)),
                         float(np.clip(self.G, FLOOR, MAX_GUESS)), float(np.clip(self.S, FLOOR, MAX_SLIP)))


def bkt_predict(p_know, G, S):
    return p_know * (1.0 - S) + (1.0 - p_know) * G


def bkt_update(p_know, observation, G, S, T):
    """Posterior after one observation followed by the learning transition."""
    if observation:
        num, den = p_know * (1.0 - S), p_know * (1.0 - S) + (1.0 - p_know) * G
    else:
        num, den = p_know * S, p_know * S + (1.0 - p_know) * (1.0 - G)
    if den == 0:
        return p_know
    post = num / den
    return post + (1.0 - post) * T


def _pad(sequences):
    L = max(len(s) for s in sequences)
    obs = np.zeros((len(sequences), L), dtype=np.float64)
    mask = np.zeros((len(sequences), L), dtype=bool)
    for i, s in enumerate(sequences):
        obs[i, :len(s)] = s
        mask[i, :len(s)] = True
    return obs, mask


def _emissions(obs, G, S):
    # columns: unknown, known
    return np.stack([np.where(obs == 1, G, 1 - G), np.where(obs == 1, 1 - S, S)], axis=-1)


def forward_backward(obs, mask, params):
    """Posterior state marginals, summed transitions and the log-likelihood."""
    n, L = obs.shape
    A = np.array([[1 - params.T, params.T], [0.0, 1.0]])
    B = _emissions(obs, params.G, params.S)
    alpha = np.zeros((n, L, 2))
    c = np.ones((n, L))
    a = np.stack([np.full(n, 1 - params.L0), np.full(n, params.L0)], axis=-1) * B[:, 0]
    c[:, 0] = a.sum(-1)
    alpha[:, 0] = a / c[:, 0, None]
    for t in range(1, L):
        a = (alpha[:, t - 1] @ A) * B[:, t]
        live = mask[:, t]
        c[live, t] = a[live].sum(-1)
        alpha[live, t] = a[live] / c[live, t, None]
        alpha[~live, t] = alpha[~live, t - 1]
    beta = np.ones((n, L, 2))
    xi = np.zeros((2, 2))
    for t in range(L - 2, -1, -1):
        live = mask[:, t + 1]
        nb = B[:, t + 1] * beta[:, t + 1]
        bt = (nb @ A.T) / c[:, t + 1, None]
        beta[live, t] = bt[live]
        x = alpha[live, t][:, :, None] * A[None] * (nb[live] / c[live, t + 1, None])[:, None, :]
        xi += x.sum(0)
    gamma = alpha * beta
    gamma /= gamma.sum(-1, keepdims=True)
    ll = float(np.log(c[mask]).sum())
    return gamma, xi, ll


def _m_step(obs, mask, gamma, xi):
    g0 = gamma[..., 0] * mask
    g1 = gamma[..., 1] * mask
    L0 = gamma[:, 0, 1].mean()
    # transitions leave from every non-final observed step
    trans_from = g0.copy()
    last = mask.sum(1) - 1
    trans_from[np.arange(len(last)), last] = 0.0
    den_T = trans_from.sum()
    T = xi[0, 1] / den_T if den_T > 0 else FLOOR
    G = (g0 * (obs == 1)).sum() / g0.sum() if g0.sum() > 0 else FLOOR
    S = (g1 * (obs == 0)).sum() / g1.sum() if g1.sum() > 0 else FLOOR
    return BktParams(L0, T, G, S).clamped()


def log_likelihood(sequences, params):
    obs, mask = _pad(sequences)
    return forward_backward(obs, mask, params)[2]


def fit_hmm(sequences, rng, restarts=5, max_iter=100, tol=1e-5):
    """Best-of-``restarts`` Baum-Welch fit; returns (params, loglik, history)."""
    obs, mask = _pad(sequences)
    best = None
    for _ in range(restarts):
        p = BktParams(rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.5),
                      rng.uniform(0.05, 0.45), rng.uniform(0.05, 0.45))
        history = []
        for _ in range(max_iter):
            gamma, xi, ll = forward_backward(obs, mask, p)
            if history and ll < history[-1] - 1e-9 * max(1.0, abs(history[-1])):
                raise AssertionError(f"EM log-likelihood decreased: {history[-1]} -> {ll}")
            history.append(ll)
            if len(history) > 1 and history[-1] - history[-2] < tol:
                break
            p = _m_step(obs, mask, gamma, xi)
        ll = history[-1] if len(history) > 1 and history[-1] - history[-2] < tol \
            else forward_backward(obs, mask, p)[2]
        if best is None or ll > best[1]:
            best = (p, ll, history)
    return best


def _by_problem(sequences):
    groups = {}
    for seq in sequences:
        per = {}
        for at in seq.attempts:
            per.setdefault(at.q, []).append(at.a)
        for q, obs in per.items():
            groups.setdefault(q, []).append(obs)
    return groups


def bkt_fit(sequences, M, max_iter=100, tol=1e-5, seed=0, restarts=5):
    """``{q: BktParams}`` for q in 0..M-1, plus the pooled fit under ``POOLED``."""
    groups = _by_problem(sequences)
    pooled_seqs = [s for q in sorted(groups) for s in groups[q]]
    if not pooled_seqs:
        raise ValueError("no observations to fit BKT on")
    pooled = fit_hmm(pooled_seqs, np.random.default_rng(stable_seed(seed, "bkt", POOLED)),
                     restarts, max_iter, tol)[0]
    out = {POOLED: pooled}
    for q in range(M):
        seqs = groups.get(q, [])
        if sum(len(s) for s in seqs) < MIN_OBSERVATIONS:
            log.info("problem %d: %d observations, using pooled BKT parameters", q, sum(map(len, seqs)))
            out[q] = pooled
            continue
        out[q] = fit_hmm(seqs, np.random.default_rng(stable_seed(seed, "bkt", q)), restarts, max_iter, tol)[0]
    return out


def bkt_trace(params, sequence, full_rows=False):
    """PredictionTrace for one sequence; first attempts read the problem's L0."""
    M = sum(1 for k in params if k != POOLED)
    know = {q: params[q].L0 for q in range(M)}
    recs = []
    rows = []
    atts = sequence.attempts
    for t, at in enumerate(atts):
        if t > 0:
            if full_rows:
                rows.append([bkt_predict(know[k], params[k].G, params[k].S) for k in range(M)])
            p = params[at.q]
            recs.append(TraceRecord(t, at.q, float(bkt_predict(know[at.q], p.G, p.S)), at.a,
                                    at.first_attempt_flag))
        p = params[at.q]
        know[at.q] = bkt_update(know[at.q], at.a, p.G, p.S, p.T)
    rows = np.array(rows).reshape(len(rows), M) if full_rows else None
    return PredictionTrace(sequence.student_id, recs, rows, tuple(atts))


def bkt_predict_all(params, sequences, full_rows=False):
    return [bkt_trace(params, s, full_rows) for s in sequences]


def export_csv(params, path, problem_ids=None):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["problem", "L0", "T", "G", "S"])
        for q in sorted(k for k in params if k != POOLED):
            p = params[q]
            name = problem_ids[q] if problem_ids is not None else q
            w.writerow([name, repr(p.L0), repr(p.T), repr(p.G), repr(p.S)])
