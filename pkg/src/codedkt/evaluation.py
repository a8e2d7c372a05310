"""AUC metrics, per-problem / first-attempt decomposition and prediction heatmaps."""
import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np
from scipy.stats import rankdata

log = logging.getLogger(__name__)

THRESHOLD = 0.5


def auc(labels, scores):
    """Mann-Whitney AUC with average ranks for ties; None for a single-class input."""
    y = np.asarray(labels).astype(bool).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise ValueError(f"auc: {y.shape[0]} labels vs {s.shape[0]} scores")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        log.warning("AUC undefined for a single-class group (%d positives, %d negatives)", n_pos, n_neg)
        return None
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _flatten(traces):
    recs = [r for tr in traces for r in tr.records]
    q = np.array([r.q_next for r in recs], dtype=np.int64)
    p = np.array([r.p for r in recs], dtype=np.float64)
    a = np.array([r.a_next for r in recs], dtype=np.int64)
    first = np.array([r.first for r in recs], dtype=np.int64)
    return q, p, a, first


def first_attempt_subset(traces):
    """The records evaluated by the first-attempt metric."""
    return [r for tr in traces for r in tr.records if r.first == 1]


def recall_precision(labels, scores, threshold=THRESHOLD):
    y = np.asarray(labels).astype(bool)
    hat = np.asarray(scores) >= threshold
    tp = int((y & hat).sum())
    recall = tp / int(y.sum()) if y.any() else None
    precision = tp / int(hat.sum()) if hat.any() else None
    return recall, precision


def decompose(traces, M=None):
    """Metrics of one run: overall, first-attempt and per-problem AUC."""
    q, p, a, first = _flatten(traces)
    M = M if M is not None else (int(q.max()) + 1 if q.size else 0)
    f = first == 1
    recall, precision = recall_precision(a, p)
    per = {}
    for k in range(M):
        g = q == k
        per[k] = {"overall_auc": auc(a[g], p[g]) if g.any() else None,
                  "first_auc": auc(a[g & f], p[g & f]) if (g & f).any() else None,
                  "n_predictions": int(g.sum()), "n_first": int((g & f).sum())}
    return {
        "overall_auc": auc(a, p) if a.size else None,
        "first_attempt_auc": auc(a[f], p[f]) if f.any() else None,
        "n_predictions": int(a.size), "n_first": int(f.sum()),
        "recall": recall, "precision": precision,
        "per_problem": per,
    }


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    if len(set(vals)) == 1:
        # exact, where np.mean/np.std can be an ulp off
        return float(vals[0]), 0.0
    return float(np.mean(vals)), float(np.std(vals))


@dataclass
class EvalReport:
    model: str
    config_hash: str
    seeds: list
    runs: list
    problem_ids: list
    pool_per_problem: bool = False
    traces: list = field(default_factory=list, repr=False)

    def summary(self):
        out = {}
        for key in ("overall_auc", "first_attempt_auc", "recall", "precision"):
            m, s = _mean_std([r[key] for r in self.runs])
            out[key] = {"mean": m, "std": s}
        return out

    def per_problem(self):
        rows = {}
        for k, pid in enumerate(self.problem_ids):
            entries = [r["per_problem"][k] for r in self.runs]
            if self.pool_per_problem and self.traces:
                q, p, a, first = _flatten([t for run in self.traces for t in run])
                g = q == k
                f = g & (first == 1)
                o_m, o_s = (auc(a[g], p[g]) if g.any() else None), 0.0
                f_m, f_s = (auc(a[f], p[f]) if f.any() else None), 0.0
            else:
                o_m, o_s = _mean_std([e["overall_auc"] for e in entries])
                f_m, f_s = _mean_std([e["first_auc"] for e in entries])
            rows[pid] = {"overall_auc": o_m, "overall_std": o_s, "first_auc": f_m, "first_std": f_s,
                         "n_predictions": int(sum(e["n_predictions"] for e in entries)),
                         "n_first": int(sum(e["n_first"] for e in entries)),
                         "null": o_m is None}
        return rows

    def to_dict(self):
        return {"model": self.model, "config_hash": self.config_hash, "seeds": list(self.seeds),
                "summary": self.summary(), "per_problem": self.per_problem(),
                "per_problem_mode": "pooled" if self.pool_per_problem else "mean_of_runs",
                "runs": [_jsonable_run(r, self.problem_ids) for r in self.runs]}


def _jsonable_run(run, problem_ids):
    out = dict(run)
    out["per_problem"] = {problem_ids[k]: v for k, v in run["per_problem"].items()}
    return out


def write_report(report, out_dir):
    d = report.to_dict()
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as f:
        json.dump(d, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, "report.csv"), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["model", "problem", "overall_auc", "overall_std", "first_auc", "first_std",
                    "n_predictions", "n_first"])
        s = d["summary"]
        w.writerow([report.model, "ALL", _fmt(s["overall_auc"]["mean"]), _fmt(s["overall_auc"]["std"]),
                    _fmt(s["first_attempt_auc"]["mean"]), _fmt(s["first_attempt_auc"]["std"]),
                    sum(r["n_predictions"] for r in report.runs), sum(r["n_first"] for r in report.runs)])
        for pid, row in d["per_problem"].items():
            if row["null"]:
                continue
            w.writerow([report.model, pid, _fmt(row["overall_auc"]), _fmt(row["overall_std"]),
                        _fmt(row["first_auc"]), _fmt(row["first_std"]), row["n_predictions"], row["n_first"]])
    return d


def _fmt(v):
    return "" if v is None else repr(v)


# heatmaps

@dataclass
class HeatmapMatrix:
    student_id: str
    probs: np.ndarray        # (M, T-1)
    attempted: np.ndarray    # (T-1,) problem index of q_{t+1}
    labels: np.ndarray       # (T-1,) a_{t+1}
    accurate: np.ndarray     # (T-1,) (p >= 0.5) == a_{t+1} at the attempted cell

    @property
    def n_columns(self):
        return self.probs.shape[1]


def build_heatmap(trace):
    if trace.rows is None:
        raise ValueError("trace has no full output rows; predict with full_rows=True")
    probs = np.asarray(trace.rows).T
    attempted = np.array([r.q_next for r in trace.records], dtype=np.int64)
    labels = np.array([r.a_next for r in trace.records], dtype=np.int64)
    p_att = np.array([r.p for r in trace.records])
    accurate = ((p_att >= THRESHOLD).astype(np.int64) == labels)
    return HeatmapMatrix(trace.student_id, probs, attempted, labels, accurate)


def find_trace(traces, student_id):
    for tr in traces:
        if tr.student_id == student_id:
            return tr
    raise KeyError(f"student {student_id!r} not found in prediction traces")


def shade(p):
    """Grey level for a probability: 1.0 is black, 0.0 white."""
    return int(round(255 * (1.0 - min(max(p, 0.0), 1.0))))


def heatmap_svg(hm, problem_ids, cell=24):
    M, C = hm.probs.shape
    left, top = 60, 20
    w, h = left + C * cell + 10, top + M * cell + 30
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
             f'<title>{escape(str(hm.student_id))}</title>']
    for k in range(M):
        y = top + k * cell
        parts.append(f'<text x="{left - 4}" y="{y + cell * 0.7:.1f}" font-size="11" '
                     f'text-anchor="end">{escape(str(problem_ids[k]))}</text>')
        for t in range(C):
            g = shade(hm.probs[k, t])
            parts.append(f'<rect class="cell" x="{left + t * cell}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="rgb({g},{g},{g})" data-p="{hm.probs[k, t]:.6f}"/>')
    for t in range(C):
        k = int(hm.attempted[t])
        color = "black" if hm.accurate[t] else "grey"
        cls = "frame-correct" if hm.accurate[t] else "frame-wrong"
        parts.append(f'<rect class="{cls}" x="{left + t * cell + 1.5}" y="{top + k * cell + 1.5}" '
                     f'width="{cell - 3}" height="{cell - 3}" fill="none" stroke="{color}" stroke-width="3"/>')
        parts.append(f'<text x="{left + t * cell + cell / 2:.1f}" y="{top + M * cell + 16}" font-size="10" '
                     f'text-anchor="middle">{hm.labels[t]}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_heatmap(traces, student_id, problem_ids, out_prefix):
    """Write ``<prefix>.csv`` and ``<prefix>.svg`` for one student; returns the matrix."""
    hm = build_heatmap(find_trace(traces, student_id))
    with open(out_prefix + ".csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["row"] + [str(t + 1) for t in range(hm.n_columns)])
        for k, pid in enumerate(problem_ids):
            w.writerow([pid] + [repr(float(v)) for v in hm.probs[k]])
        w.writerow(["attempted"] + [problem_ids[int(k)] for k in hm.attempted])
        w.writerow(["label"] + [int(v) for v in hm.labels])
        w.writerow(["accurate"] + [int(v) for v in hm.accurate])
    with open(out_prefix + ".svg", "w", encoding="utf-8") as f:
        f.write(heatmap_svg(hm, problem_ids))
    return hm


def is_valid_auc(v):
    return v is None or (isinstance(v, float) and math.isfinite(v) and 0.0 <= v <= 1.0)
