"""Minibatch training and next-step prediction for the deep KT models."""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import autodiff as ad
from ..codepaths import PAD, CodeBank, PathIndex, stable_seed
from ..dataset import encode_attempt, encode_attempt_skills
from . import networks as nw
from .config import MODEL_KINDS, ModelConfig
from .features import ExpertFeaturizer, TfidfFeaturizer

log = logging.getLogger(__name__)

# sampling epoch used whenever the model is evaluated rather than trained
EVAL_EPOCH = -1


@dataclass(frozen=True)
class TraceRecord:
    t: int          # 1-based step whose output y_t is read
    q_next: int
    p: float
    a_next: int
    first: int


@dataclass
class PredictionTrace:
    student_id: str
    records: list
    rows: Optional[np.ndarray] = None     # (T-1, M) full outputs, when requested
    attempts: tuple = ()


@dataclass
class KTModel:
    kind: str
    config: ModelConfig
    M: int
    skill_vectors: Optional[list]
    params: dict
    vocab: object = None
    featurizer: object = None
    loss_history: list = field(default_factory=list)
    pretrain_history: list = field(default_factory=list)

    @property
    def x_dim(self):
        return nw.attempt_dim(self.kind, self.M, self.skill_vectors is not None)

    @property
    def trainable(self):
        if self.kind == "codedkt" and self.config.embedding_mode == "static_pretrained":
            return [k for k in self.params if k not in nw.ENCODER_PARAMS]
        return list(self.params)


class SequenceArrays:
    """Padded (n, T) arrays for a list of AttemptSequence, plus a code bank
    row for every real attempt (padding points at an all-PAD row)."""

    def __init__(self, sequences, model, path_index=None):
        cfg = model.config
        self.students = [s.student_id for s in sequences]
        self.attempts = [s.attempts[-cfg.max_seq_len:] for s in sequences]
        n = len(sequences)
        T = max([len(a) for a in self.attempts] + [1])
        self.lengths = np.array([len(a) for a in self.attempts], dtype=np.int64)
        self.q = np.zeros((n, T), dtype=np.int64)
        self.a = np.zeros((n, T), dtype=np.int64)
        self.first = np.zeros((n, T), dtype=np.int64)
        self.row = np.full((n, T), -1, dtype=np.int64)
        flat = []
        for i, atts in enumerate(self.attempts):
            for t, at in enumerate(atts):
                self.q[i, t], self.a[i, t], self.first[i, t] = at.q, at.a, at.first_attempt_flag
                self.row[i, t] = len(flat)
                flat.append(at)
        self.n_rows = len(flat)
        self.row[self.row < 0] = self.n_rows
        self.x = self._encode(model, flat)
        self.bank = None
        if model.kind == "codedkt":
            index = path_index or PathIndex(cfg.max_path_nodes, cfg.direction_markers)
            cids = [index.add(at.code) for at in flat]
            keys = [f"{s.student_id}#{at.submission_id or t}" for s, atts in zip(sequences, self.attempts)
                    for t, at in enumerate(atts)]
            self.bank = CodeBank(index, cids, keys, index.remap_for(model.vocab), cfg.R, cfg.seed)

    def _encode(self, model, flat):
        rows = np.zeros((len(flat) + 1, model.x_dim))
        for k, at in enumerate(flat):
            if model.skill_vectors is not None and model.kind in ("dkt_tfidf", "dkt_expert"):
                rows[k] = encode_attempt_skills(model.skill_vectors[at.q], at.a)
            else:
                rows[k] = encode_attempt(at.q, at.a, model.M)
        if model.featurizer is not None:
            feats = np.zeros((len(flat) + 1, model.featurizer.k))
            feats[:-1] = model.featurizer.transform([at.code for at in flat])
            rows = np.concatenate([rows, feats], axis=1)
        return rows

    def code_arrays(self, epoch):
        """Sampled path arrays with one trailing all-PAD row."""
        arrays = self.bank.sample(epoch)
        return [np.concatenate([a, np.zeros((1, a.shape[1]), dtype=a.dtype)]) for a in arrays]

    def batch(self, idx, code=None):
        T = max(int(self.lengths[idx].max()), 1)
        rows = self.row[idx, :T]
        b = {"rows": rows, "q": self.q[idx, :T], "a": self.a[idx, :T],
             "len": self.lengths[idx]}
        b["x"] = self.x[rows]
        if code is not None:
            b["starts"], b["paths"], b["ends"], b["mask"] = (c[rows] for c in code)
        return b


def _transition_loss(Y, b):
    """Masked BCE of y_t[q_{t+1}] against a_{t+1} for every real transition."""
    T = Y.shape[1]
    if T < 2:
        return None
    pred = ad.pick(ad.slice_axis(Y, 0, T - 1, axis=1), b["q"][:, 1:])
    mask = (np.arange(1, T)[None, :] < b["len"][:, None]).astype(np.float64)
    if mask.sum() == 0:
        return None
    return ad.bce_loss(pred, b["a"][:, 1:], mask)


def _tensors(params, trainable):
    return {k: (ad.parameter(v) if k in trainable else ad.Tensor(v)) for k, v in params.items()}


def _zero_pad_rows(params):
    for k in ("W_enode", "W_epath"):
        if k in params:
            params[k][PAD] = 0.0


def _sampling_epoch(config, epoch):
    return epoch if config.resample_paths else 0


def _check_finite(value, what):
    if not math.isfinite(value):
        raise FloatingPointError(f"non-finite {what}: {value}")


def new_model(kind, config, catalog, train_sequences, path_index=None):
    """Untrained model with vocabulary / featurizer fit on ``train_sequences``."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"model kind must be one of {MODEL_KINDS}")
    skills = None
    if kind in ("dkt_tfidf", "dkt_expert") and catalog.skill_vectors is not None:
        skills = [list(catalog.skill_vectors[p]) for p in catalog.problem_ids]
    model = KTModel(kind, config, catalog.M, skills, {})
    corpus = [at.code for s in train_sequences for at in s.attempts[-config.max_seq_len:]]
    n_nodes = n_paths = 2
    if kind == "codedkt":
        index = path_index or PathIndex(config.max_path_nodes, config.direction_markers)
        model.vocab, _ = index.build_vocab([index.add(c) for c in corpus], config.min_count)
        n_nodes, n_paths = model.vocab.n_nodes, model.vocab.n_paths
    elif kind == "dkt_tfidf":
        model.featurizer = TfidfFeaturizer(config.tfidf_k).fit(corpus)
    elif kind == "dkt_expert":
        model.featurizer = ExpertFeaturizer(config.expert_rules)
    model.params = nw.init_params(kind, config, catalog.M, model.x_dim, n_nodes, n_paths,
                                  seed=stable_seed(config.seed, "init", kind))
    return model


def train(kind, train_sequences, config, catalog, path_index=None, progress=None):
    """Fit a fresh model; returns the KTModel with its per-epoch loss history."""
    if not train_sequences or not any(len(s) > 1 for s in train_sequences):
        raise ValueError("training set has no transitions to learn from")
    cfg = config
    model = new_model(kind, cfg, catalog, train_sequences, path_index)
    data = SequenceArrays(train_sequences, model, path_index)
    if kind == "codedkt" and cfg.embedding_mode == "static_pretrained":
        pretrain_static_embedding(model, data)
    trainable = model.trainable
    opt = ad.Adam([model.params[k].shape for k in trainable], lr=cfg.learning_rate)
    rng = np.random.default_rng(stable_seed(cfg.seed, "batches"))
    n = len(data.students)
    for epoch in range(cfg.epochs):
        code = data.code_arrays(_sampling_epoch(cfg, epoch)) if data.bank is not None else None
        order = rng.permutation(n)
        total, weight = 0.0, 0.0
        for start in range(0, n, cfg.batch_size):
            b = data.batch(order[start:start + cfg.batch_size], code)
            P = _tensors(model.params, trainable)
            Y, _ = nw.forward(kind, P, b, cfg)
            loss = _transition_loss(Y, b)
            if loss is None:
                continue
            ad.backward(loss)
            grads = ad.clip_global_norm(ad.grads_for([P[k] for k in trainable]), cfg.grad_clip)
            new = opt.step([model.params[k] for k in trainable], grads)
            for k, v in zip(trainable, new):
                model.params[k] = v
            _zero_pad_rows(model.params)
            w = float(np.sum(np.maximum(b["len"] - 1, 0)))
            total += float(loss.value) * w
            weight += w
        epoch_loss = total / weight if weight else 0.0
        _check_finite(epoch_loss, "training loss")
        model.loss_history.append(epoch_loss)
        if progress:
            progress(epoch, epoch_loss)
        log.debug("%s epoch %d loss %.6f", kind, epoch, epoch_loss)
    return model


def pretrain_static_embedding(model, data):
    """Fit the code encoder as a per-submission correctness classifier, then
    leave its weights for the recurrent training to treat as constants.

    The correctness one-hot is zeroed inside the encoder here, so the
    classifier can only use the code.
    """
    cfg = model.config
    head = nw.init_head(cfg, stable_seed(cfg.seed, "head"))
    names = list(nw.ENCODER_PARAMS) + list(nw.HEAD_PARAMS)
    values = {**{k: model.params[k] for k in nw.ENCODER_PARAMS}, **head}
    n = data.n_rows
    real = data.row < n
    labels = np.zeros(n)
    labels[data.row[real]] = data.a[real]
    opt = ad.Adam([values[k].shape for k in names], lr=cfg.learning_rate)
    rng = np.random.default_rng(stable_seed(cfg.seed, "pretrain"))
    x_zero = np.zeros((1, model.x_dim))
    for epoch in range(cfg.pretrain_epochs):
        s, p, e, m = (c[:n] for c in data.code_arrays(_sampling_epoch(cfg, epoch)))
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.pretrain_batch_size):
            idx = order[start:start + cfg.pretrain_batch_size]
            P = {k: ad.parameter(values[k]) for k in names}
            prob = _classifier(P, cfg, x_zero, s[idx], p[idx], e[idx], m[idx])
            loss = ad.bce_loss(prob, labels[idx], np.ones(len(idx)))
            ad.backward(loss)
            grads = ad.clip_global_norm(ad.grads_for([P[k] for k in names]), cfg.grad_clip)
            for k, v in zip(names, opt.step([values[k] for k in names], grads)):
                values[k] = v
            _zero_pad_rows(values)
            total += float(loss.value) * len(idx)
        epoch_loss = total / max(n, 1)
        _check_finite(epoch_loss, "pretraining loss")
        model.pretrain_history.append(epoch_loss)
    for k in nw.ENCODER_PARAMS:
        model.params[k] = values[k]
    return head


def _classifier(P, cfg, x_zero, s, p, e, m):
    x = np.broadcast_to(x_zero, (s.shape[0], x_zero.shape[1]))
    z, _ = nw.encode_code(P, x, s, p, e, m, cfg.code_embedding_size, cfg.code_in_attention)
    logit = ad.add(ad.matmul(z, P["head_w"]), P["head_b"])
    return ad.reshape(ad.sigmoid(logit), (s.shape[0],))


def classifier_predict(model, head, data):
    """Correctness probabilities of the pretraining classifier for every attempt row."""
    cfg = model.config
    P = {k: ad.Tensor(v) for k, v in {**model.params, **head}.items()}
    s, p, e, m = (c[:data.n_rows] for c in data.code_arrays(EVAL_EPOCH))
    return _classifier(P, cfg, np.zeros((1, model.x_dim)), s, p, e, m).value


def predict(model, sequences, path_index=None, full_rows=False):
    """One PredictionTrace per sequence (records for t = 1..T-1)."""
    cfg = model.config
    traces = []
    if not sequences:
        return traces
    data = SequenceArrays(sequences, model, path_index)
    code = data.code_arrays(EVAL_EPOCH) if data.bank is not None else None
    P = {k: ad.Tensor(v) for k, v in model.params.items()}
    n = len(data.students)
    for start in range(0, n, cfg.batch_size):
        idx = np.arange(start, min(n, start + cfg.batch_size))
        b = data.batch(idx, code)
        Y, _ = nw.forward(model.kind, P, b, cfg)
        Y = Y.value
        for j, i in enumerate(idx):
            L = int(data.lengths[i])
            recs = []
            for t in range(1, L):
                recs.append(TraceRecord(t, int(data.q[i, t]), float(Y[j, t - 1, data.q[i, t]]),
                                        int(data.a[i, t]), int(data.first[i, t])))
            rows = Y[j, :max(L - 1, 0)].copy() if full_rows else None
            traces.append(PredictionTrace(data.students[i], recs, rows, tuple(data.attempts[i])))
    return traces


def attention_weights(model, sequences, path_index=None):
    """Per-attempt attention weights (n_rows, R) and the matching bank."""
    if model.kind != "codedkt":
        raise ValueError("attention weights exist only for codedkt models")
    data = SequenceArrays(sequences, model, path_index)
    s, p, e, m = (c[:data.n_rows] for c in data.code_arrays(EVAL_EPOCH))
    P = {k: ad.Tensor(v) for k, v in model.params.items()}
    rows = np.arange(data.n_rows)
    x = data.x[rows]
    _, alpha = nw.encode_code(P, x, s, p, e, m, model.config.code_embedding_size,
                              model.config.code_in_attention)
    return alpha.value, m
