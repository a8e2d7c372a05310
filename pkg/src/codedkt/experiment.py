"""Repeated split/train/predict/evaluate runs, ablations and grid tuning."""
import concurrent.futures
import dataclasses
import hashlib
import itertools
import json
import logging
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import bkt, dataset, evaluation
from .codepaths import PathIndex, stable_seed
from .ktmodels import checkpoint
from .ktmodels import training
from .ktmodels.config import ABLATION_VARIANTS, ModelConfig

log = logging.getLogger(__name__)

RUN_KINDS = ("bkt", "dkt", "codedkt", "dkt_tfidf", "dkt_expert")
RUN_CONFIG_FILE = "run_config.json"

DEFAULT_GRID = {
    "code_embedding_size": (50, 100, 150, 300, 350),
    "learning_rate": (0.00005, 0.0005, 0.005, 0.01),
    "epochs": (20, 40, 100),
}


@dataclass(frozen=True)
class RunConfig:
    data: str
    assignment: str
    model: str = "codedkt"
    model_overrides: dict = field(default_factory=dict)
    repetitions: int = 10
    out: str = "out"
    seed: int = 0
    skills: str = None
    workers: int = 1
    pool_per_problem: bool = False

    def __post_init__(self):
        if self.model not in RUN_KINDS:
            raise ValueError(f"model must be one of {RUN_KINDS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        self.model_config()  # validate overrides early

    def model_config(self, **extra):
        return ModelConfig.from_dict({**self.model_overrides, **extra})

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown RunConfig fields: {sorted(unknown)}")
        return cls(**d)

    def digest(self):
        d = self.to_dict()
        d.pop("out")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


def save_run_config(rc, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(rc.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def load_run_config(path):
    with open(path, encoding="utf-8") as f:
        return RunConfig.from_dict(json.load(f))


def repetition_seed(global_seed, r):
    return stable_seed(global_seed, "repetition", r) % 2**31


class Dataset:
    """One assignment's sequences and catalog, loaded once per process."""

    def __init__(self, rc):
        records, self.warnings = dataset.load_progsnap2(rc.data)
        skills_path = rc.skills
        if skills_path is None and os.path.isfile(os.path.join(rc.data, "skills.json")):
            skills_path = os.path.join(rc.data, "skills.json")
        vectors = dataset.load_skill_vectors(skills_path) if skills_path else None
        if rc.assignment not in {r.assignment_id for r in records}:
            raise dataset.IngestError(f"assignment {rc.assignment!r} not found in {rc.data}")
        self.catalog = dataset.build_catalog(records, rc.assignment, vectors)
        self.sequences = dataset.build_sequences(records, rc.assignment, self.catalog)
        cfg = rc.model_config()
        self.path_index = PathIndex(cfg.max_path_nodes, cfg.direction_markers)

    def split(self, seed):
        s = dataset.split_students(self.sequences, seed)
        return s, dataset.select(self.sequences, s.train_students), dataset.select(self.sequences, s.test_students)


def fit_and_predict(kind, cfg, data, train_seqs, test_seqs, seed, full_rows=False):
    """(traces, fitted model or BKT params)."""
    if kind == "bkt":
        params = bkt.bkt_fit(train_seqs, data.catalog.M, seed=seed)
        return bkt.bkt_predict_all(params, test_seqs, full_rows), params
    index = data.path_index if kind == "codedkt" else None
    model = training.train(kind, train_seqs, cfg, data.catalog, path_index=index)
    return training.predict(model, test_seqs, path_index=index, full_rows=full_rows), model


def _run_one(rc, r, data=None, extra=None):
    data = data or Dataset(rc)
    seed = repetition_seed(rc.seed, r)
    split, train_seqs, test_seqs = data.split(seed)
    cfg = rc.model_config(seed=seed, **(extra or {}))
    t0 = time.perf_counter()
    traces, fitted = fit_and_predict(rc.model, cfg, data, train_seqs, test_seqs, seed)
    metrics = evaluation.decompose(traces, data.catalog.M)
    metrics["seed"] = seed
    metrics["split_digest"] = hashlib.sha256(split.to_json().encode()).hexdigest()[:12]
    history = None if rc.model == "bkt" else list(fitted.loss_history)
    log.info("%s repetition %d seed %d split %s: overall AUC %s (%.1fs)", rc.model, r, seed,
             metrics["split_digest"], metrics["overall_auc"], time.perf_counter() - t0)
    return r, metrics, history, traces


def _run_all(rc, extra=None, data=None):
    reps = range(rc.repetitions)
    if rc.workers > 1 and rc.repetitions > 1:
        with concurrent.futures.ProcessPoolExecutor(rc.workers) as ex:
            results = list(ex.map(_run_one, itertools.repeat(rc), reps, itertools.repeat(None),
                                  itertools.repeat(extra)))
    else:
        data = data or Dataset(rc)
        results = [_run_one(rc, r, data, extra) for r in reps]
    results.sort(key=lambda x: x[0])
    return results


class _Staging:
    """Write outputs into a scratch directory, moved into place only on success."""

    def __init__(self, out):
        self.out = out

    def __enter__(self):
        parent = os.path.dirname(os.path.abspath(self.out))
        os.makedirs(parent, exist_ok=True)
        self.tmp = tempfile.mkdtemp(prefix=".partial-", dir=parent)
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        os.makedirs(self.out, exist_ok=True)
        for name in sorted(os.listdir(self.tmp)):
            dest = os.path.join(self.out, name)
            if os.path.isdir(dest):
                shutil.rmtree(dest)
            os.replace(os.path.join(self.tmp, name), dest)
        os.rmdir(self.tmp)
        return False


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def make_report(rc, results, problem_ids, model_label=None):
    cfg_hash = rc.model_config().digest() if rc.model != "bkt" else rc.digest()
    return evaluation.EvalReport(model_label or rc.model, cfg_hash, [m["seed"] for _, m, _, _ in results],
                                 [m for _, m, _, _ in results], list(problem_ids), rc.pool_per_problem,
                                 [tr for _, _, _, tr in results])


def run_experiment(rc, data=None):
    """Evaluate ``rc.model`` over ``rc.repetitions`` seeded splits; returns the report dict."""
    data = data or (Dataset(rc) if rc.workers <= 1 else None)
    problem_ids = (data or Dataset(rc)).catalog.problem_ids
    results = _run_all(rc, data=data)
    report = make_report(rc, results, problem_ids)
    with _Staging(rc.out) as tmp:
        save_run_config(rc, os.path.join(tmp, RUN_CONFIG_FILE))
        d = evaluation.write_report(report, tmp)
        if rc.model != "bkt":
            _write_json({str(r): h for r, _, h, _ in results}, os.path.join(tmp, "loss_history.json"))
    return d


def run_ablation(rc, variants=ABLATION_VARIANTS, data=None):
    """One row per ablation variant, all sharing the same seeds and splits."""
    if rc.model != "codedkt":
        raise ValueError("ablation runs need model kind codedkt")
    data = data or (Dataset(rc) if rc.workers <= 1 else None)
    rows = []
    digests = None
    for label, overrides in variants:
        results = _run_all(rc, extra=overrides, data=data)
        split_digests = [m["split_digest"] for _, m, _, _ in results]
        if digests is None:
            digests = split_digests
        if split_digests != digests:
            raise RuntimeError("ablation variants saw different splits")
        log.info("variant %r reused splits %s", label, ",".join(split_digests))
        aucs = [m["overall_auc"] for _, m, _, _ in results]
        firsts = [m["first_attempt_auc"] for _, m, _, _ in results]
        rows.append({"variant": label, "overrides": overrides,
                     "overall_auc": _mean(aucs), "overall_std": _std(aucs),
                     "first_attempt_auc": _mean(firsts), "runs": aucs,
                     "seeds": [m["seed"] for _, m, _, _ in results]})
    out = {"rows": rows, "split_digests": digests}
    with _Staging(rc.out) as tmp:
        save_run_config(rc, os.path.join(tmp, RUN_CONFIG_FILE))
        _write_json(out, os.path.join(tmp, "ablation.json"))
        with open(os.path.join(tmp, "ablation.csv"), "w", encoding="utf-8") as f:
            f.write("variant,overall_auc,overall_std\n")
            for row in rows:
                f.write(f"{row['variant']},{row['overall_auc']!r},{row['overall_std']!r}\n")
    return out


def _mean(v):
    v = [x for x in v if x is not None]
    return float(np.mean(v)) if v else None


def _std(v):
    v = [x for x in v if x is not None]
    return float(np.std(v)) if v else None


def grid_points(grid):
    keys = list(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def run_tuning(rc, grid=None, repetitions=5, data=None):
    """Average validation AUC of every grid point on a 3:1 fit/validation split of
    each repetition's training students; ties go to the earliest grid point."""
    grid = grid or DEFAULT_GRID
    data = data or Dataset(rc)
    points = grid_points(grid)
    scores = []
    for g, point in enumerate(points):
        aucs = []
        for r in range(repetitions):
            seed = repetition_seed(rc.seed, r)
            _, train_seqs, _ = data.split(seed)
            fit = dataset.split_students(train_seqs, stable_seed(seed, "tune") % 2**31, train_fraction=0.75)
            cfg = rc.model_config(seed=seed, **point)
            traces, _ = fit_and_predict(rc.model, cfg, data, dataset.select(train_seqs, fit.train_students),
                                        dataset.select(train_seqs, fit.test_students), seed)
            aucs.append(evaluation.decompose(traces, data.catalog.M)["overall_auc"])
        scores.append(_mean(aucs))
        log.info("grid point %d %s: validation AUC %s", g, point, scores[-1])
    best = max(range(len(points)), key=lambda i: (scores[i] if scores[i] is not None else -1.0, -i))
    out = {"best": points[best], "best_index": best, "best_auc": scores[best],
           "points": [{"index": i, "params": p, "validation_auc": s} for i, (p, s) in enumerate(zip(points, scores))],
           "repetitions": repetitions}
    with _Staging(rc.out) as tmp:
        save_run_config(rc, os.path.join(tmp, RUN_CONFIG_FILE))
        _write_json(out, os.path.join(tmp, "tuning.json"))
    return out


def train_checkpoint(rc, data=None, repetition=0):
    """Train once on repetition ``repetition``'s training split and save a checkpoint."""
    if rc.model == "bkt":
        raise ValueError("bkt has no checkpoint; use evaluate")
    data = data or Dataset(rc)
    seed = repetition_seed(rc.seed, repetition)
    split, train_seqs, _ = data.split(seed)
    cfg = rc.model_config(seed=seed)
    model = training.train(rc.model, train_seqs, cfg, data.catalog, path_index=data.path_index)
    with _Staging(rc.out) as tmp:
        save_run_config(rc, os.path.join(tmp, RUN_CONFIG_FILE))
        checkpoint.save(model, os.path.join(tmp, "model.npz"))
        _write_json({"loss_history": model.loss_history, "pretrain_history": model.pretrain_history},
                    os.path.join(tmp, "loss_history.json"))
        with open(os.path.join(tmp, "split.json"), "w", encoding="utf-8") as f:
            f.write(split.to_json() + "\n")
    return model


def heatmap(rc, students, checkpoint_path=None, data=None):
    """Heatmap files for ``students`` (test-split students by default)."""
    data = data or Dataset(rc)
    seed = repetition_seed(rc.seed, 0)
    split, train_seqs, test_seqs = data.split(seed)
    wanted = students or list(split.test_students[:1])
    seqs = dataset.select(data.sequences, wanted)
    missing = sorted(set(wanted) - {s.student_id for s in seqs})
    if missing:
        raise KeyError(f"students not in assignment {rc.assignment!r}: {missing}")
    if checkpoint_path:
        model = checkpoint.load(checkpoint_path)
        traces = training.predict(model, seqs, full_rows=True)
    else:
        traces, _ = fit_and_predict(rc.model, rc.model_config(seed=seed), data, train_seqs, seqs, seed,
                                    full_rows=True)
    written = []
    with _Staging(rc.out) as tmp:
        for sid in wanted:
            evaluation.export_heatmap(traces, sid, list(data.catalog.problem_ids),
                                      os.path.join(tmp, f"heatmap_{sid}"))
            written.append(sid)
    return written
