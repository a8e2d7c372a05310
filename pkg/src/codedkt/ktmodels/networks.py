"""Parameter layouts and forward passes for DKT and Code-DKT.

Row-vector convention throughout: a layer computes ``x @ W + b``.
"""
import numpy as np

from .. import autodiff as ad
from ..codepaths import PAD
from ..dataset import N_SKILLS

ENCODER_PARAMS = ("W_enode", "W_epath", "W_a", "W_0")
HEAD_PARAMS = ("head_w", "head_b")


def attempt_dim(kind, M, has_skills):
    """Width of the per-attempt correctness encoding x_t."""
    if kind in ("dkt_tfidf", "dkt_expert") and has_skills:
        return 2 * N_SKILLS
    return 2 * M


def feature_dim(kind, config):
    if kind == "dkt_tfidf":
        return config.tfidf_k
    if kind == "dkt_expert":
        return len(config.expert_rules)
    return 0


def lstm_input_dim(kind, config, x_dim):
    if kind == "codedkt":
        return config.z_size + (x_dim if config.trace_in_lstm else 0)
    return x_dim + feature_dim(kind, config)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(kind, config, M, x_dim, n_nodes=2, n_paths=2, seed=None):
    rng = np.random.default_rng(config.seed if seed is None else seed)
    H = config.hidden_size
    params = {}
    if kind == "codedkt":
        D = config.code_embedding_size
        de = 3 * D + (x_dim if config.code_in_attention else 0)
        params["W_enode"] = rng.normal(0.0, config.embed_init_std, size=(n_nodes, D))
        params["W_epath"] = rng.normal(0.0, config.embed_init_std, size=(n_paths, D))
        params["W_enode"][PAD] = 0.0
        params["W_epath"][PAD] = 0.0
        params["W_a"] = _uniform(rng, (de, 1), de)
        params["W_0"] = _uniform(rng, (de, config.z_size), de)
    n_in = lstm_input_dim(kind, config, x_dim)
    if config.cell == "lstm":
        params["W_ih"] = _uniform(rng, (n_in, 4 * H), H)
        params["W_hh"] = _uniform(rng, (H, 4 * H), H)
        params["b"] = np.zeros(4 * H)
    else:
        params["W_xh"] = _uniform(rng, (n_in, H), H)
        params["W_hh"] = _uniform(rng, (H, H), H)
        params["b_h"] = np.zeros(H)
    params["W_hy"] = _uniform(rng, (H, M), H)
    params["b_y"] = np.zeros(M)
    return params


def init_head(config, seed):
    rng = np.random.default_rng(seed)
    return {"head_w": _uniform(rng, (config.z_size, 1), config.z_size), "head_b": np.zeros(1)}


def recurrent(P, inputs, cell, hidden_size):
    """Hidden states (B, T, H) from inputs (B, T, n_in), h_0 = 0."""
    T = inputs.shape[1]
    H = hidden_size
    hs = []
    if cell == "lstm":
        pre = ad.add(ad.matmul(inputs, P["W_ih"]), P["b"])
        h = c = None
        for t in range(T):
            g = ad.take_step(pre, t)
            if h is not None:
                g = ad.add(g, ad.matmul(h, P["W_hh"]))
            i = ad.sigmoid(ad.slice_axis(g, 0, H))
            f = ad.sigmoid(ad.slice_axis(g, H, 2 * H))
            u = ad.tanh(ad.slice_axis(g, 2 * H, 3 * H))
            o = ad.sigmoid(ad.slice_axis(g, 3 * H, 4 * H))
            c = ad.mul(i, u) if c is None else ad.add(ad.mul(f, c), ad.mul(i, u))
            h = ad.mul(o, ad.tanh(c))
            hs.append(h)
    else:
        pre = ad.add(ad.matmul(inputs, P["W_xh"]), P["b_h"])
        h = None
        for t in range(T):
            a = ad.take_step(pre, t)
            if h is not None:
                a = ad.add(a, ad.matmul(h, P["W_hh"]))
            h = ad.tanh(a)
            hs.append(h)
    return ad.stack(hs, axis=1)


def readout(P, hidden):
    return ad.sigmoid(ad.add(ad.matmul(hidden, P["W_hy"]), P["b_y"]))


def _pool(weights, indices, table, block):
    """``(sum_r w_r table[idx_r]) @ block`` choosing the cheaper contraction order."""
    n, r = indices.shape
    v, d = table.shape
    dz = block.shape[1]
    if v * dz <= n * (r + dz):
        return ad.pooled_lookup(weights, indices, ad.matmul(table, block))
    return ad.matmul(ad.pooled_lookup(weights, indices, table), block)


def encode_code(P, x, starts, paths, ends, mask, D, include_x):
    """Batched code vectors z (N, dz) and attention weights (N, R).

    Equivalent to building e_r = [e_s; e_o; e_q; x] per path, scoring with
    ``W_a`` and projecting the attention-weighted sum with ``W_0``; the
    linear maps are applied to the embedding tables before the lookup.
    """
    W_a, W_0 = P["W_a"], P["W_0"]
    a_s, a_o, a_q = (ad.slice_axis(W_a, k * D, (k + 1) * D, axis=0) for k in range(3))
    logits = ad.add(ad.add(ad.gather_scalars(ad.matmul(P["W_enode"], a_s), starts),
                           ad.gather_scalars(ad.matmul(P["W_epath"], a_o), paths)),
                    ad.gather_scalars(ad.matmul(P["W_enode"], a_q), ends))
    if include_x:
        # constant across paths of one attempt
        logits = ad.add(logits, ad.matmul(x, ad.slice_axis(W_a, 3 * D, None, axis=0)))
    alpha = ad.masked_softmax(logits, mask)
    w_s, w_o, w_q = (ad.slice_axis(W_0, k * D, (k + 1) * D, axis=0) for k in range(3))
    z = ad.add(ad.add(_pool(alpha, starts, P["W_enode"], w_s),
                      _pool(alpha, paths, P["W_epath"], w_o)),
               _pool(alpha, ends, P["W_enode"], w_q))
    if include_x:
        # sum of weights is 1, or 0 for a submission without paths
        z = ad.add(z, ad.mul(ad.sum_last(alpha), ad.matmul(x, ad.slice_axis(W_0, 3 * D, None, axis=0))))
    return z, alpha


def codedkt_attempt_vector(enc, x, params, placement, D):
    """Code vector for one attempt, computed path by path as written.

    ``enc`` is an EncodedSubmission; returns (z, alpha) tensors. Kept as the
    direct reference for the batched :func:`encode_code`.
    """
    P = {k: ad.as_tensor(v) for k, v in params.items()}
    e_s = ad.embedding_lookup(P["W_enode"], enc.starts)
    e_o = ad.embedding_lookup(P["W_epath"], enc.paths)
    e_q = ad.embedding_lookup(P["W_enode"], enc.ends)
    parts = [e_s, e_o, e_q]
    if placement in ("attention_and_trace", "attention_only"):
        R = enc.starts.shape[0]
        parts.append(ad.as_tensor(np.tile(np.asarray(x, dtype=np.float64), (R, 1))))
    E = ad.concat(parts, axis=-1)
    scores = ad.matmul(E, P["W_a"])
    logits = ad.reshape(scores, scores.shape[:1])
    alpha = ad.masked_softmax(logits, enc.mask)
    pooled = ad.weighted_sum(E, alpha)
    return ad.matmul(pooled, P["W_0"]), alpha


def forward(kind, P, batch, config):
    """Predictions y (B, T, M) for a prepared batch dict."""
    x = batch["x"]
    B, T = x.shape[:2]
    alpha = None
    if kind == "codedkt":
        N = B * T
        R = batch["starts"].shape[-1]
        x_flat = x.reshape(N, -1)
        z, alpha = encode_code(P, x_flat, batch["starts"].reshape(N, R), batch["paths"].reshape(N, R),
                               batch["ends"].reshape(N, R), batch["mask"].reshape(N, R),
                               config.code_embedding_size, config.code_in_attention)
        z = ad.reshape(z, (B, T, -1))
        inputs = ad.concat([z, x], axis=-1) if config.trace_in_lstm else z
    else:
        inputs = ad.as_tensor(x)
    hidden = recurrent(P, inputs, config.cell, config.hidden_size)
    return readout(P, hidden), alpha


def dkt_forward(xs, params, cell, hidden_size):
    """Predictions (T, M) for one input sequence ``xs`` of shape (T, n_in)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.shape[0] == 0:
        return np.zeros((0, params["W_hy"].shape[1]))
    P = {k: ad.as_tensor(v) for k, v in params.items()}
    return readout(P, recurrent(P, ad.Tensor(xs[None]), cell, hidden_size)).value[0]
