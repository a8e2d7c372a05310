"""ProgSnap2-style ingestion, per-assignment attempt sequences and input encodings."""
import collections
import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 50
N_SKILLS = 9
MAIN_COLUMNS = ("SubjectID", "AssignmentID", "ProblemID", "Order", "Score", "CodeStateID")


class IngestError(Exception):
    pass


@dataclass(frozen=True)
class SubmissionRecord:
    student_id: str
    assignment_id: str
    problem_id: str
    order_key: object
    score: float
    source_text: str
    code_state_id: str = ""
    row: int = 0


@dataclass(frozen=True)
class Attempt:
    q: int
    a: int
    code: str
    first_attempt_flag: int
    problem_id: str = ""
    submission_id: str = ""


@dataclass(frozen=True)
class AttemptSequence:
    student_id: str
    attempts: tuple

    def __len__(self):
        return len(self.attempts)


@dataclass(frozen=True)
class DataSplit:
    train_students: tuple
    test_students: tuple
    seed: int

    def to_json(self):
        return json.dumps({"seed": self.seed, "train": list(self.train_students),
                           "test": list(self.test_students)}, sort_keys=True)


@dataclass(frozen=True)
class ProblemCatalog:
    problem_ids: tuple
    skill_vectors: Optional[dict] = None
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        idx = {p: i for i, p in enumerate(self.problem_ids)}
        if len(idx) != len(self.problem_ids):
            raise ValueError("duplicate problem id in catalog")
        object.__setattr__(self, "index", idx)
        if self.skill_vectors is not None:
            for p in self.problem_ids:
                vec = self.skill_vectors.get(p)
                if vec is None:
                    raise ValueError(f"no skill vector for problem {p!r}")
                if len(vec) != N_SKILLS:
                    raise ValueError(f"skill vector for {p!r} has length {len(vec)}, expected {N_SKILLS}")
                if not any(vec):
                    raise ValueError(f"skill vector for {p!r} is all zero")

    @property
    def M(self):
        return len(self.problem_ids)

    def skill_vector(self, q):
        return np.asarray(self.skill_vectors[self.problem_ids[q]], dtype=np.float64)


def _order_value(raw):
    try:
        return (0, float(raw), "")
    except ValueError:
        return (1, 0.0, raw)


def _natural_key(pid):
    try:
        return (0, float(pid), pid)
    except ValueError:
        return (1, 0.0, pid)


def _find(root, *candidates):
    for name in candidates:
        path = os.path.join(root, name)
        if os.path.isfile(path):
            return path
    raise IngestError(f"missing file: {os.path.join(root, candidates[0])}")


def load_code_states(path):
    codes = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"CodeStateID", "Code"} <= set(reader.fieldnames):
            raise IngestError(f"{path}: expected columns CodeStateID, Code")
        for row in reader:
            cid = row["CodeStateID"]
            if cid in codes:
                raise IngestError(f"{path}: duplicate CodeStateID {cid!r}")
            codes[cid] = row["Code"] or ""
    return codes


def load_progsnap2(root):
    """Read ``MainTable.csv`` + ``CodeStates/CodeStates.csv`` under ``root``.

    Returns ``(records, warnings)`` where ``warnings`` counts skipped
    malformed rows and rows whose code state was missing.
    """
    main_path = _find(root, "MainTable.csv")
    code_path = _find(root, os.path.join("CodeStates", "CodeStates.csv"), "CodeStates.csv")
    codes = load_code_states(code_path)
    warnings = collections.Counter()
    records = []
    with open(main_path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{main_path}: empty file") from None
        missing = [c for c in MAIN_COLUMNS if c not in header]
        if missing:
            raise IngestError(f"{main_path}: missing columns {missing}")
        col = {c: header.index(c) for c in MAIN_COLUMNS}
        for rownum, row in enumerate(reader, start=1):
            if len(row) != len(header):
                warnings["malformed_row"] += 1
                continue
            try:
                score = float(row[col["Score"]])
            except ValueError:
                warnings["malformed_row"] += 1
                continue
            sid, aid, pid = row[col["SubjectID"]], row[col["AssignmentID"]], row[col["ProblemID"]]
            order = row[col["Order"]]
            if not (sid and aid and pid and order) or not (0.0 <= score <= 1.0) or math.isnan(score):
                warnings["malformed_row"] += 1
                continue
            cid = row[col["CodeStateID"]]
            if cid not in codes:
                warnings["missing_code"] += 1
            records.append(SubmissionRecord(sid, aid, pid, _order_value(order), score,
                                            codes.get(cid, ""), cid, rownum))
    for kind, n in warnings.items():
        log.warning("%s: %d %s", main_path, n, kind.replace("_", " "))
    return records, warnings


def build_catalog(records, assignment_id, skill_vectors=None):
    pids = sorted({r.problem_id for r in records if r.assignment_id == assignment_id}, key=_natural_key)
    if skill_vectors is not None:
        # extra entries (other assignments) are dropped; missing ones fail validation
        skill_vectors = {p: tuple(int(b) for b in skill_vectors[p]) for p in pids if p in skill_vectors}
    return ProblemCatalog(tuple(pids), skill_vectors)


def build_sequences(records, assignment_id, catalog, max_len=MAX_ATTEMPTS):
    by_student = collections.defaultdict(list)
    for r in records:
        if r.assignment_id == assignment_id:
            by_student[r.student_id].append(r)
    sequences = []
    for sid in sorted(by_student):
        subs = sorted(by_student[sid], key=lambda r: (r.order_key, r.row))
        seen = set()
        attempts = []
        for i, r in enumerate(subs):
            q = catalog.index[r.problem_id]
            first = int(q not in seen)
            seen.add(q)
            attempts.append(Attempt(q, int(r.score == 1.0), r.source_text, first,
                                    r.problem_id, f"{sid}#{i}"))
        sequences.append(AttemptSequence(sid, tuple(attempts[-max_len:])))
    return sequences


def split_students(sequences, seed, train_fraction=0.8):
    students = sorted(s.student_id for s in sequences)
    if len(students) < 5:
        raise ValueError(f"need at least 5 students to split, got {len(students)}")
    order = np.random.default_rng(seed).permutation(len(students))
    n_train = math.ceil(train_fraction * len(students))
    train = tuple(sorted(students[i] for i in order[:n_train]))
    test = tuple(sorted(students[i] for i in order[n_train:]))
    return DataSplit(train, test, seed)


def select(sequences, students):
    keep = set(students)
    return [s for s in sequences if s.student_id in keep]


def encode_attempt(q, a, M):
    """One-hot of length 2M: slot q for a correct attempt, q + M for an incorrect one."""
    if not 0 <= q < M:
        raise ValueError(f"problem index {q} out of range for M={M}")
    x = np.zeros(2 * M)
    x[q if a else q + M] = 1.0
    return x


def encode_attempt_skills(skill_vector, a):
    skill_vector = np.asarray(skill_vector, dtype=np.float64)
    if skill_vector.shape != (N_SKILLS,):
        raise ValueError(f"skill vector must have length {N_SKILLS}, got {skill_vector.shape}")
    zeros = np.zeros(N_SKILLS)
    return np.concatenate([skill_vector, zeros] if a else [zeros, skill_vector])


def load_skill_vectors(path):
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    return {str(k): tuple(int(b) for b in v) for k, v in data.items()}


def dump_sequences(sequences, assignment_id, path):
    with open(path, "w", encoding="utf-8") as f:
        for s in sequences:
            f.write(json.dumps({
                "student": s.student_id, "assignment": assignment_id,
                "attempts": [{"q": t.q, "a": t.a, "first": t.first_attempt_flag, "code": t.code}
                             for t in s.attempts],
            }) + "\n")
