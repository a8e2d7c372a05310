"""Randomised finite-difference checks for every differentiable op and for
the full model losses."""
import csv

import numpy as np

from . import autodiff as ad


def _weights(rng, shape):
    return rng.normal(size=shape)


def _contract(out, w):
    """Scalar ``sum(out * w)`` so every output coordinate matters."""
    return ad.sum_last(ad.reshape(ad.mul(out, w), (1, -1)), keepdims=False) if out.value.ndim else out


def _case_add(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4,))
    w = _weights(rng, (3, 4))
    return (lambda x, y: _contract(ad.add(x, y), w)), [a, b]


def _case_mul(rng):
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    w = _weights(rng, (2, 3))
    return (lambda x, y: _contract(ad.mul(x, y), w)), [a, b]


def _case_matmul(rng):
    a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 2))
    w = _weights(rng, (2, 3, 2))
    return (lambda x, y: _contract(ad.matmul(x, y), w)), [a, b]


def _case_tanh(rng):
    a = rng.normal(size=(3, 3))
    w = _weights(rng, (3, 3))
    return (lambda x: _contract(ad.tanh(x), w)), [a]


def _case_sigmoid(rng):
    a = rng.normal(scale=2.0, size=(3, 3))
    w = _weights(rng, (3, 3))
    return (lambda x: _contract(ad.sigmoid(x), w)), [a]


def _case_concat(rng):
    a, b = rng.normal(size=(2, 2)), rng.normal(size=(2, 3))
    w = _weights(rng, (2, 5))
    return (lambda x, y: _contract(ad.concat([x, y], axis=-1), w)), [a, b]


def _case_slice(rng):
    a = rng.normal(size=(3, 6))
    w = _weights(rng, (3, 3))
    return (lambda x: _contract(ad.slice_axis(x, 1, 4), w)), [a]


def _case_take_step(rng):
    a = rng.normal(size=(2, 4, 3))
    w = _weights(rng, (2, 3))
    t = int(rng.integers(4))
    return (lambda x: _contract(ad.take_step(x, t), w)), [a]


def _case_stack(rng):
    a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    w = _weights(rng, (2, 2, 3))
    return (lambda x, y: _contract(ad.stack([x, y], axis=1), w)), [a, b]


def _case_embedding(rng):
    table = rng.normal(size=(5, 3))
    idx = rng.integers(5, size=(2, 4))
    w = _weights(rng, (2, 4, 3))
    return (lambda t: _contract(ad.embedding_lookup(t, idx), w)), [table]


def _case_gather(rng):
    vec = rng.normal(size=(6, 1))
    idx = rng.integers(6, size=(3, 4))
    w = _weights(rng, (3, 4))
    return (lambda v: _contract(ad.gather_scalars(v, idx), w)), [vec]


def _case_masked_softmax(rng):
    logits = rng.normal(size=(3, 5))
    mask = (rng.random((3, 5)) < 0.7).astype(np.int8)
    mask[0] = 0
    w = _weights(rng, (3, 5))
    return (lambda x: _contract(ad.masked_softmax(x, mask), w)), [logits]


def _case_weighted_sum(rng):
    vecs, wts = rng.normal(size=(2, 4, 3)), rng.random((2, 4))
    w = _weights(rng, (2, 3))
    return (lambda v, a: _contract(ad.weighted_sum(v, a), w)), [vecs, wts]


def _case_pooled_lookup(rng):
    wts, table = rng.random((3, 4)), rng.normal(size=(6, 2))
    idx = rng.integers(6, size=(3, 4))
    w = _weights(rng, (3, 2))
    return (lambda a, t: _contract(ad.pooled_lookup(a, idx, t), w)), [wts, table]


def _case_pick(rng):
    x = rng.normal(size=(2, 3, 4))
    idx = rng.integers(4, size=(2, 3))
    w = _weights(rng, (2, 3))
    return (lambda a: _contract(ad.pick(a, idx), w)), [x]


def _case_reshape(rng):
    x = rng.normal(size=(2, 6))
    w = _weights(rng, (3, 4))
    return (lambda a: _contract(ad.reshape(a, (3, 4)), w)), [x]


def _case_sum_last(rng):
    x = rng.normal(size=(3, 4))
    w = _weights(rng, (3, 1))
    return (lambda a: _contract(ad.sum_last(a), w)), [x]


def _case_bce(rng):
    p = rng.uniform(0.05, 0.95, size=(3, 4))
    y = rng.integers(2, size=(3, 4))
    mask = (rng.random((3, 4)) < 0.8).astype(float)
    mask[0, 0] = 1.0
    return (lambda a: ad.bce_loss(a, y, mask)), [p]


def _model_case(kind, cell="lstm", placement="attention_and_trace"):
    def make(rng):
        from .ktmodels import networks as nw
        from .ktmodels.config import ModelConfig
        cfg = ModelConfig(hidden_size=3, code_embedding_size=3, code_vector_size=2, R=4, cell=cell,
                          correctness_placement=placement)
        M, B, T = 3, 2, 3
        q = rng.integers(M, size=(B, T))
        a = rng.integers(2, size=(B, T))
        x = np.zeros((B, T, 2 * M))
        for i in range(B):
            for t in range(T):
                x[i, t, q[i, t] if a[i, t] else q[i, t] + M] = 1.0
        params = nw.init_params(kind, cfg, M, 2 * M, n_nodes=6, n_paths=7, seed=int(rng.integers(2**31)))
        # perturb so no parameter sits at an exact zero
        params = {k: v + rng.normal(scale=0.3, size=v.shape) for k, v in params.items()}
        batch = {"x": x}
        if kind == "codedkt":
            mask = (rng.random((B, T, cfg.R)) < 0.7).astype(np.int8)
            mask[0, 0] = 0
            batch["mask"] = mask
            for key, hi in (("starts", 6), ("paths", 7), ("ends", 6)):
                batch[key] = rng.integers(1, hi, size=(B, T, cfg.R)) * mask
        names = list(params)
        lengths = np.array([T, T - 1])

        def fn(*values):
            P = dict(zip(names, values))
            Y, _ = nw.forward(kind, P, batch, cfg)
            pred = ad.pick(ad.slice_axis(Y, 0, T - 1, axis=1), q[:, 1:])
            m = (np.arange(1, T)[None, :] < lengths[:, None]).astype(float)
            return ad.bce_loss(pred, a[:, 1:], m)

        return fn, [params[k] for k in names]

    return make


OP_CASES = {
    "add": _case_add, "mul": _case_mul, "matmul": _case_matmul, "tanh": _case_tanh,
    "sigmoid": _case_sigmoid, "concat": _case_concat, "slice_axis": _case_slice,
    "take_step": _case_take_step, "stack": _case_stack, "reshape": _case_reshape,
    "sum_last": _case_sum_last, "embedding_lookup": _case_embedding, "gather_scalars": _case_gather,
    "masked_softmax": _case_masked_softmax, "weighted_sum": _case_weighted_sum,
    "pooled_lookup": _case_pooled_lookup, "pick": _case_pick, "bce_loss": _case_bce,
}

MODEL_CASES = {
    "dkt_rnn": _model_case("dkt", cell="rnn"),
    "dkt_lstm": _model_case("dkt"),
    "codedkt": _model_case("codedkt"),
    "codedkt_attention_only": _model_case("codedkt", placement="attention_only"),
    "codedkt_trace_only": _model_case("codedkt", placement="trace_only"),
}


def run(cases=None, instances=50, seed=0, n_coords=None):
    """Rows of (case, instance, max relative error)."""
    cases = cases or {**OP_CASES, **MODEL_CASES}
    rows = []
    for name in cases:
        rng = np.random.default_rng([seed, sorted(cases).index(name)])
        for i in range(instances):
            fn, inputs = cases[name](rng)
            err = ad.finite_difference_check(fn, inputs, rng=rng, n_coords=n_coords)
            rows.append((name, i, err))
    return rows


def write_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["case", "instance", "max_relative_error"])
        for name, i, err in rows:
            w.writerow([name, i, repr(err)])
