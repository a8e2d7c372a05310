"""Small reverse-mode autodiff over float64 numpy arrays.

Only the operations the knowledge-tracing models use are provided. Every op
records a node with a monotone id; ``backward`` walks the reachable nodes in
reverse construction order, so each node's rule runs exactly once.
"""
import itertools

import numpy as np
import scipy.sparse as sp

_ids = itertools.count()

PROB_EPS = 1e-7


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "parents", "backward_fn", "id", "op")

    def __init__(self, value, requires_grad=False, parents=(), backward_fn=None, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.id = next(_ids)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(value):
    return Tensor(value, requires_grad=True)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, backward_fn, op):
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite value produced by {op}")
    requires = any(p.requires_grad for p in parents)
    return Tensor(value, requires_grad=requires, parents=parents if requires else (),
                  backward_fn=backward_fn if requires else None, op=op)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _shape_error(op, a, b):
    return ValueError(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.value + b.value
    except ValueError:
        raise _shape_error("add", a.shape, b.shape) from None

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(out, (a, b), backward, "add")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.value * b.value
    except ValueError:
        raise _shape_error("mul", a.shape, b.shape) from None

    def backward(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _node(out, (a, b), backward, "mul")


def matmul(a, b):
    """``a @ b`` where ``a`` may carry leading batch axes and ``b`` is 2-D."""
    a, b = as_tensor(a), as_tensor(b)
    if b.value.ndim != 2 or a.value.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)
    out = a.value @ b.value

    def backward(g):
        ga = g @ b.value.T
        a2 = a.value.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return _node(out, (a, b), backward, "matmul")


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.value)
    return _node(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(x):
    x = as_tensor(x)
    v = x.value
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def concat(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.concatenate([x.value for x in xs], axis=axis)
    except ValueError:
        raise ValueError("concat: incompatible shapes " + ", ".join(str(x.shape) for x in xs)) from None
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(out, tuple(xs), backward, "concat")


class _IndexedGrad:
    """Gradient that only touches ``parent[index]``; accumulated in place."""
    __slots__ = ("index", "value")

    def __init__(self, index, value):
        self.index = index
        self.value = value


def slice_axis(x, start, stop, axis=-1):
    x = as_tensor(x)
    index = [slice(None)] * x.value.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = x.value[index]
    return _node(out.copy(), (x,), lambda g: (_IndexedGrad(index, g),), "slice")


def take_step(x, t):
    """``x[:, t]`` (one time step of a batch-major sequence tensor)."""
    x = as_tensor(x)
    index = (slice(None), t)
    return _node(x.value[index].copy(), (x,), lambda g: (_IndexedGrad(index, g),), "take_step")


def stack(xs, axis=1):
    xs = [as_tensor(x) for x in xs]
    out = np.stack([x.value for x in xs], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _node(out, tuple(xs), backward, "stack")


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return _node(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def sum_last(x, keepdims=True):
    x = as_tensor(x)
    out = x.value.sum(axis=-1, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = g[..., None]
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(out, (x,), backward, "sum_last")


def _scatter_rows(indices, grad, n_rows):
    """Sum rows of ``grad`` into an ``n_rows`` table by index (deterministic)."""
    flat = indices.reshape(-1)
    g2 = grad.reshape(flat.size, -1)
    scatter = sp.csr_matrix((np.ones(flat.size), (flat, np.arange(flat.size))),
                            shape=(n_rows, flat.size))
    return np.asarray(scatter @ g2)


def embedding_lookup(table, indices):
    """Rows of ``table`` picked by integer ``indices`` (any shape)."""
    table = as_tensor(table)
    indices = np.asarray(indices, dtype=np.int64)
    if table.value.ndim != 2:
        raise ValueError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise IndexError(f"embedding_lookup: index out of range for table {table.shape}")
    out = table.value[indices]

    def backward(g):
        return (_scatter_rows(indices, g, table.shape[0]),)

    return _node(out, (table,), backward, "embedding_lookup")


def gather_scalars(vec, indices):
    """``vec[indices]`` for a 1-D (or (V, 1)) score vector."""
    vec = as_tensor(vec)
    flat_shape = vec.shape
    v = vec.value.reshape(-1)
    indices = np.asarray(indices, dtype=np.int64)
    out = v[indices]

    def backward(g):
        acc = np.bincount(indices.reshape(-1), weights=g.reshape(-1), minlength=v.size)
        return (acc.reshape(flat_shape),)

    return _node(out, (vec,), backward, "gather_scalars")


def masked_softmax(logits, mask):
    """Softmax over the last axis restricted to ``mask == 1`` slots.

    Masked slots get exactly zero weight; a row with no unmasked slot is all
    zeros.
    """
    logits = as_tensor(logits)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise _shape_error("masked_softmax", logits.shape, mask.shape)
    v = np.where(mask, logits.value, -np.inf)
    row_max = v.max(axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    e = np.where(mask, np.exp(np.where(mask, logits.value, 0.0) - row_max), 0.0)
    denom = e.sum(axis=-1, keepdims=True)
    out = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return _node(out, (logits,), backward, "masked_softmax")


def weighted_sum(vectors, weights):
    """``sum_r weights[..., r] * vectors[..., r, :]``."""
    vectors, weights = as_tensor(vectors), as_tensor(weights)
    if vectors.shape[:-1] != weights.shape:
        raise _shape_error("weighted_sum", vectors.shape, weights.shape)
    out = np.einsum("...r,...rd->...d", weights.value, vectors.value)

    def backward(g):
        gv = weights.value[..., None] * g[..., None, :]
        gw = np.einsum("...d,...rd->...r", g, vectors.value)
        return gv, gw

    return _node(out, (vectors, weights), backward, "weighted_sum")


def pooled_lookup(weights, indices, table):
    """``weighted_sum(embedding_lookup(table, indices), weights)`` without
    materialising the gathered rows.

    ``weights`` and ``indices`` have shape (N, R); ``table`` is (V, D).
    """
    weights, table = as_tensor(weights), as_tensor(table)
    indices = np.asarray(indices, dtype=np.int64)
    if weights.shape != indices.shape or weights.value.ndim != 2:
        raise _shape_error("pooled_lookup", weights.shape, indices.shape)
    n, r = indices.shape
    v = table.shape[0]
    rows = np.repeat(np.arange(n), r)
    pool = sp.csr_matrix((weights.value.reshape(-1), (rows, indices.reshape(-1))), shape=(n, v))
    out = np.asarray(pool @ table.value)

    def backward(g):
        g_table = np.asarray(pool.T @ g)
        scores = g @ table.value.T
        g_weights = np.take_along_axis(scores, indices, axis=1)
        return g_weights, g_table

    return _node(out, (weights, table), backward, "pooled_lookup")


def pick(x, indices):
    """``x[..., indices[...]]``: one component per leading position."""
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.shape != x.shape[:-1]:
        raise _shape_error("pick", x.shape, indices.shape)
    out = np.take_along_axis(x.value, indices[..., None], axis=-1)[..., 0]

    def backward(g):
        full = np.zeros_like(x.value)
        np.put_along_axis(full, indices[..., None], g[..., None], axis=-1)
        return (full,)

    return _node(out, (x,), backward, "pick")


def bce_loss(pred, labels, mask):
    """Masked mean binary cross-entropy; zero (with zero gradient) on an empty mask."""
    pred = as_tensor(pred)
    labels = np.asarray(labels, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if pred.shape != labels.shape or pred.shape != mask.shape:
        raise ValueError(f"bce_loss: shapes {pred.shape}, {labels.shape}, {mask.shape} differ")
    p = np.clip(pred.value, PROB_EPS, 1.0 - PROB_EPS)
    total = mask.sum()
    if total == 0:
        return _node(np.array(0.0), (pred,), lambda g: (np.zeros_like(pred.value),), "bce_loss")
    per = -(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))
    out = np.array((mask * per).sum() / total)
    inside = (pred.value >= PROB_EPS) & (pred.value <= 1.0 - PROB_EPS)

    def backward(g):
        d = (-labels / p + (1.0 - labels) / (1.0 - p)) * mask / total
        return (g * d * inside,)

    return _node(out, (pred,), backward, "bce_loss")


def backward(root):
    """Fill ``.grad`` on every tensor reachable from scalar ``root``.

    Tensors that require grad but are not on the path to ``root`` keep
    ``grad=None``; use :func:`grads_for` to read zeros for them.
    """
    if root.value.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    nodes = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node.id in nodes:
            continue
        nodes[node.id] = node
        node.grad = None
        stack.extend(node.parents)
    root.grad = np.ones_like(root.value)
    for node_id in sorted(nodes, reverse=True):
        node = nodes[node_id]
        if node.backward_fn is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            if not parent.requires_grad:
                continue
            if isinstance(g, _IndexedGrad):
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.value)
                parent.grad[g.index] += g.value
                continue
            g = np.asarray(g, dtype=np.float64).reshape(parent.shape)
            parent.grad = g.copy() if parent.grad is None else parent.grad + g
    return root


def grads_for(params):
    return [p.grad if p.grad is not None else np.zeros_like(p.value) for p in params]


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, shapes, lr=0.0005, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, values, grads):
        """Return updated copies of ``values`` (a list of arrays)."""
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient passed to Adam")
        self.t += 1
        out = []
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, (w, g) in enumerate(zip(values, grads)):
            if w.shape != g.shape:
                raise ValueError(f"adam: parameter {w.shape} vs gradient {g.shape}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            out.append(w - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def clip_global_norm(grads, max_norm):
    if not max_norm:
        return grads
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return [g * scale for g in grads]


def finite_difference_check(fn, inputs, h=1e-5, rng=None, n_coords=None):
    """Compare autodiff gradients of scalar ``fn(*inputs)`` to central differences.

    ``inputs`` are arrays; each becomes a parameter. Returns the max relative
    error over checked coordinates, using ``|a-n| / max(1e-6, |a|, |n|)``.
    """
    params = [parameter(np.array(x, dtype=np.float64)) for x in inputs]
    out = fn(*params)
    backward(out)
    analytic = grads_for(params)
    worst = 0.0
    for k, x in enumerate(inputs):
        x = np.array(x, dtype=np.float64)
        coords = list(np.ndindex(x.shape))
        if n_coords is not None and len(coords) > n_coords:
            rng = rng or np.random.default_rng(0)
            pick_idx = rng.choice(len(coords), size=n_coords, replace=False)
            coords = [coords[i] for i in pick_idx]
        for c in coords:
            xp, xm = x.copy(), x.copy()
            xp[c] += h
            xm[c] -= h
            args_p = [Tensor(a) for a in inputs[:k]] + [Tensor(xp)] + [Tensor(a) for a in inputs[k + 1:]]
            args_m = [Tensor(a) for a in inputs[:k]] + [Tensor(xm)] + [Tensor(a) for a in inputs[k + 1:]]
            num = (fn(*args_p).value.item() - fn(*args_m).value.item()) / (2 * h)
            a = float(analytic[k][c])
            err = abs(a - num) / max(1e-6, abs(a), abs(num))
            worst = max(worst, err)
    return worst
