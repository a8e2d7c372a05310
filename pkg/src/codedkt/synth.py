"""Synthetic ProgSnap2 datasets from a latent-skill student model.

Every problem needs a few skills. A student's mastery of each skill is a
hidden bit that can flip on with every practice. An attempt succeeds with
probability 1 - slip when all needed skills are mastered and ``guess``
otherwise. In ``structural`` mode the submitted code writes each needed
skill with a characteristic idiom (nested if, ``&&``, ``Math.abs`` ...)
far more often when the skill is mastered, so the code carries evidence
about mastery that correctness alone does not.
"""
import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .dataset import N_SKILLS
from .evaluation import auc

CODE_MODES = ("structural", "random", "none")

# per skill: (idiom used when mastered, plain alternative)
SKILL_SNIPPETS = (
    ("if (a > 0) {\n      if (b > 0) {\n        r = r + 1;\n      }\n    }",
     "if (a > 0) {\n      r = r + 1;\n    }"),
    ("if (a > 0 && b > 0) {\n      r = r + 2;\n    }",
     "if (a > 0) {\n      r = r + 2;\n    }"),
    ("if (a < 0 || b < 0) {\n      r = r - 1;\n    }",
     "if (a < 0) {\n      r = r - 1;\n    }"),
    ("if (a > b) {\n      r = r + 3;\n    } else if (a < b) {\n      r = r - 3;\n    }",
     "if (a > b) {\n      r = r + 3;\n    }"),
    ("if (flag) {\n      r = r * 2;\n    }",
     "if (flag == true) {\n      r = r * 2;\n    }"),
    ("ok = r > 3;",
     "if (r > 3) {\n      ok = true;\n    }"),
    ("int d = Math.abs(a - b);\n    r = r + d;",
     "int d = a - b;\n    r = r + d;"),
    ("if (!flag) {\n      r = 0;\n    }",
     "if (flag == false) {\n      r = 0;\n    }"),
    ("int s = a + b;\n    r = r + s;",
     "r = r + a + b;"),
)

FILLERS = ("", "int tmp = 0;", "r = r + 0;")
CORRECT_RETURN = "return r;"
BUGGY_RETURNS = ("return r + 1;", "return -r;", "return 0;")


def cyclic_skills(n_problems, n_skills=N_SKILLS, per_problem=2):
    """Problem i needs skills i, i+1, ... (mod n_skills)."""
    m = np.zeros((n_problems, n_skills), dtype=np.int64)
    for i in range(n_problems):
        for k in range(per_problem):
            m[i, (i + k) % n_skills] = 1
    return m.tolist()


@dataclass(frozen=True)
class SynthConfig:
    n_students: int = 400
    n_problems: int = 9
    n_assignments: int = 1
    skills: tuple = None               # (n_problems, 9) binary; None = cyclic pairs
    p_init: float = 0.2                # mean initial mastery per skill
    init_concentration: float = 4.0    # Beta concentration of per-student mastery rates
    learn: float = 0.3                 # mean per-practice learning probability
    learn_concentration: float = 4.0   # Beta concentration of per-student learning rates
    guess: float = 0.05
    slip: float = 0.1
    max_attempts: int = 10             # per problem, before the student moves on
    code_mode: str = "structural"
    marker_if_mastered: float = 0.95
    marker_if_unmastered: float = 0.1
    corrupt_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.code_mode not in CODE_MODES:
            raise ValueError(f"code_mode must be one of {CODE_MODES}")
        for name in ("p_init", "learn", "guess", "slip", "marker_if_mastered", "marker_if_unmastered",
                     "corrupt_fraction"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.n_students < 1 or self.n_problems < 1 or self.max_attempts < 1 or self.n_assignments < 1:
            raise ValueError("counts must be positive")
        if self.init_concentration <= 0 or self.learn_concentration <= 0:
            raise ValueError("concentrations must be positive")
        skills = self.skill_matrix()
        if skills.shape != (self.n_problems, N_SKILLS) or not set(np.unique(skills)) <= {0, 1}:
            raise ValueError(f"skills must be a binary ({self.n_problems}, {N_SKILLS}) matrix")
        if (skills.sum(1) == 0).any():
            raise ValueError("every problem needs at least one skill")
        if self.n_problems >= 2 and not ((skills @ skills.T) - np.diag(skills.sum(1)) > 0).any():
            raise ValueError("at least two problems must share a skill")

    def skill_matrix(self):
        m = self.skills if self.skills is not None else cyclic_skills(self.n_problems)
        return np.asarray(m, dtype=np.int64)

    def to_dict(self):
        d = dict(self.__dict__)
        d["skills"] = self.skill_matrix().tolist()
        return d


def problem_ids(config, assignment):
    return [str(assignment * config.n_problems + i + 1) for i in range(config.n_problems)]


def assignment_ids(config):
    return [f"A{k + 1}" for k in range(config.n_assignments)]


def render_code(problem_name, slots, success, filler, return_variant):
    """Java source for one attempt: one snippet per needed skill, in skill order."""
    body = "\n    ".join(s for s in [filler] + slots if s)
    ret = CORRECT_RETURN if success else BUGGY_RETURNS[return_variant]
    return (f"public int {problem_name}(int a, int b, boolean flag) {{\n"
            f"    int r = 0;\n    boolean ok = false;\n    {body}\n    {ret}\n}}\n")


def corrupt(source, rng):
    """Break the syntax of ``source`` so the parser has to fall back."""
    cuts = [i for i, ch in enumerate(source) if ch in "{};()"]
    i = cuts[int(rng.integers(len(cuts)))]
    return source[:i] + source[i + 1:]


@dataclass
class SynthAttempt:
    student: str
    assignment: str
    problem: str
    q: int
    order: int
    true_p: float
    label: int
    code: str
    markers: tuple = field(default=())   # per needed skill: idiom written?


def simulate(config):
    """All attempts of all students, in (student, time) order."""
    rng = np.random.default_rng(config.seed)
    skills = config.skill_matrix()
    needed = [np.flatnonzero(row) for row in skills]
    rows = []
    for s in range(config.n_students):
        sid = f"S{s + 1:04d}"
        for k, aid in enumerate(assignment_ids(config)):
            pids = problem_ids(config, k)
            rate = _beta(rng, config.p_init, config.init_concentration)
            mastered = rng.random(N_SKILLS) < rate
            learn = _beta(rng, config.learn, config.learn_concentration)
            order = 0
            for q in rng.permutation(config.n_problems):
                for _ in range(config.max_attempts):
                    ok = bool(mastered[needed[q]].all())
                    p = 1.0 - config.slip if ok else config.guess
                    label = int(rng.random() < p)
                    code, marks = _code_for(config, rng, q, needed[q], mastered, label)
                    rows.append(SynthAttempt(sid, aid, pids[q], int(q), order, p, label, code, marks))
                    order += 1
                    learned = rng.random(len(needed[q])) < learn
                    mastered[needed[q]] |= learned
                    if label:
                        break
    return rows


def _beta(rng, mean, concentration):
    if mean <= 0.0 or mean >= 1.0:
        return mean
    return rng.beta(mean * concentration, (1.0 - mean) * concentration)


def _code_for(config, rng, q, needed, mastered, label):
    if config.code_mode == "none":
        return "", ()
    marks = []
    slots = []
    for sk in needed:
        if config.code_mode == "structural":
            p_mark = config.marker_if_mastered if mastered[sk] else config.marker_if_unmastered
        else:
            p_mark = 0.5
        m = bool(rng.random() < p_mark)
        marks.append(m)
        slots.append(SKILL_SNIPPETS[sk][0 if m else 1])
    filler = FILLERS[int(rng.integers(len(FILLERS)))]
    success = bool(label) if config.code_mode == "structural" else bool(rng.random() < 0.5)
    code = render_code(f"problem{q + 1}", slots, success, filler, int(rng.integers(len(BUGGY_RETURNS))))
    if config.corrupt_fraction and rng.random() < config.corrupt_fraction:
        code = corrupt(code, rng)
    return code, tuple(marks)


def generate(config, out_dir):
    """Write a ProgSnap2-style dataset plus ``skills.json`` and ``ground_truth.csv``.

    Returns the simulated attempts.
    """
    rows = simulate(config)
    os.makedirs(os.path.join(out_dir, "CodeStates"), exist_ok=True)
    code_ids = {}
    with open(os.path.join(out_dir, "MainTable.csv"), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["EventID", "SubjectID", "AssignmentID", "ProblemID", "Order", "Score", "CodeStateID",
                    "EventType"])
        for i, r in enumerate(rows):
            cid = code_ids.setdefault(r.code, str(len(code_ids) + 1))
            w.writerow([i + 1, r.student, r.assignment, r.problem, r.order, "1.0" if r.label else "0.0",
                        cid, "Submit"])
    with open(os.path.join(out_dir, "CodeStates", "CodeStates.csv"), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["CodeStateID", "Code"])
        for code, cid in code_ids.items():
            w.writerow([cid, code])
    skills = config.skill_matrix()
    vectors = {}
    for k in range(config.n_assignments):
        for i, pid in enumerate(problem_ids(config, k)):
            vectors[pid] = skills[i].tolist()
    with open(os.path.join(out_dir, "skills.json"), "w", encoding="utf-8") as f:
        json.dump(vectors, f, indent=1, sort_keys=True)
        f.write("\n")
    write_ground_truth(rows, os.path.join(out_dir, "ground_truth.csv"))
    with open(os.path.join(out_dir, "synth_config.json"), "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=1, sort_keys=True)
        f.write("\n")
    return rows


def write_ground_truth(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["student", "assignment", "problem", "attempt", "true_p", "label"])
        for r in rows:
            w.writerow([r.student, r.assignment, r.problem, r.order + 1, repr(r.true_p), r.label])


def read_ground_truth(path):
    with open(path, newline="", encoding="utf-8") as f:
        return [{"student": r["student"], "assignment": r["assignment"], "problem": r["problem"],
                 "attempt": int(r["attempt"]), "true_p": float(r["true_p"]), "label": int(r["label"])}
                for r in csv.DictReader(f)]


def oracle_auc(true_p, labels):
    """AUC of the generating probabilities; a degenerate group counts as a full tie."""
    v = auc(labels, true_p)
    return 0.5 if v is None else v


def marker_success_mi(rows):
    """Mutual information (bits) between an attempt writing every idiom its
    problem calls for and the success of the student's next attempt."""
    counts = np.zeros((2, 2))
    for prev, nxt in zip(rows, rows[1:]):
        if prev.student != nxt.student or prev.assignment != nxt.assignment or not prev.markers:
            continue
        counts[int(all(prev.markers)), nxt.label] += 1
    return mutual_information(counts)


def mutual_information(counts):
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    pxy = counts / n
    px = pxy.sum(1, keepdims=True)
    py = pxy.sum(0, keepdims=True)
    nz = pxy > 0
    return float((pxy[nz] * np.log2(pxy[nz] / (px @ py)[nz])).sum())
