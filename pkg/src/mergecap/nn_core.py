"""Layer kernels with hand-written backward passes.

Each ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
takes the upstream gradient plus that cache. Arrays are plain numpy; the
working precision follows the parameter dtype (float32 for training,
float64 for gradient checks).
"""

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, ShapeMismatch

LSTM_GATES = ("f", "i", "o", "c")
PROB_FLOOR = 1e-12


def sigmoid(x):
    # tanh form avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def relu(x):
    return np.maximum(x, 0)


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def glorot_uniform(rng, shape, dtype=np.float32):
    fan_out, fan_in = shape[0], shape[1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# ---------------------------------------------------------------- dense


def dense_forward(x, W, b, activation="linear"):
    """y = act(x @ W.T + b) with W of shape (out, in)."""
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ShapeMismatch(f"dense: x{x.shape} W{W.shape} b{b.shape}")
    z = x @ W.T + b
    if activation == "linear":
        y = z
    elif activation == "relu":
        y = relu(z)
    elif activation == "softmax":
        y = softmax(z)
    else:
        raise ValueError(f"unknown activation {activation!r}")
    return y, (x, W, z, y, activation)


def dense_backward(dy, cache):
    """Returns (dx, dW, db)."""
    x, W, z, y, activation = cache
    if activation == "linear":
        dz = dy
    elif activation == "relu":
        dz = dy * (z > 0)
    else:
        # softmax Jacobian-vector product
        dz = y * (dy - (dy * y).sum(axis=-1, keepdims=True))
    return dz @ W, dz.T @ x, dz.sum(axis=0)


# ---------------------------------------------------------------- embedding


def embedding_forward(indices, E):
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= E.shape[0]):
        raise IndexOutOfRange(f"embedding index outside [0, {E.shape[0]})")
    return E[indices], (indices, E.shape)


def embedding_backward(dout, cache, pad_index=0):
    """Scatter-add upstream gradient into rows of E; the pad row stays zero."""
    indices, shape = cache
    dE = np.zeros(shape, dtype=dout.dtype)
    np.add.at(dE, indices.reshape(-1), dout.reshape(-1, shape[1]))
    if pad_index is not None:
        dE[pad_index] = 0
    return dE


# ---------------------------------------------------------------- dropout


def dropout_rng(seed):
    """Counter-based generator; ``seed`` is an int or a tuple of ints
    such as (run_seed, epoch, batch, layer)."""
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    ss = np.random.SeedSequence([int(v) for v in entropy])
    return np.random.Generator(np.random.Philox(ss))


def dropout(x, rate, mode="train", rng_seed=0):
    """Inverted dropout. Returns (out, mask); mask holds the 0 or 1/(1-rate) scale."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "infer":
        return x, None
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    keep = dropout_rng(rng_seed).random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


# ---------------------------------------------------------------- add merge


def add_merge(a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")
    return a + b


def add_merge_backward(dout):
    return dout, dout


# ---------------------------------------------------------------- LSTM


@dataclass
class LstmCell:
    """Gate weights act on the concatenation [h_prev; x_t]."""

    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        shape = self.W_f.shape
        if len(shape) != 2 or shape[1] <= shape[0]:
            raise ShapeMismatch(f"LSTM weight shape {shape} must be (hidden, hidden + input)")
        for g in LSTM_GATES:
            if getattr(self, f"W_{g}").shape != shape:
                raise ShapeMismatch(f"W_{g} shape differs from W_f {shape}")
            if getattr(self, f"b_{g}").shape != (shape[0],):
                raise ShapeMismatch(f"b_{g} must have length {shape[0]}")

    @property
    def hidden(self):
        return self.W_f.shape[0]

    @property
    def input(self):
        return self.W_f.shape[1] - self.W_f.shape[0]

    @classmethod
    def init(cls, rng, hidden, input, dtype=np.float32, forget_bias=1.0):
        shape = (hidden, hidden + input)
        W = {g: glorot_uniform(rng, shape, dtype) for g in LSTM_GATES}
        b = {g: np.zeros(hidden, dtype=dtype) for g in LSTM_GATES}
        b["f"][:] = forget_bias
        return cls(*(W[g] for g in LSTM_GATES), *(b[g] for g in LSTM_GATES))

    def weights(self):
        return {g: getattr(self, f"W_{g}") for g in LSTM_GATES}

    def biases(self):
        return {g: getattr(self, f"b_{g}") for g in LSTM_GATES}


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray


def _lstm_step(cell, x_t, h_prev, c_prev):
    z = np.concatenate([h_prev, x_t], axis=-1)
    f = sigmoid(z @ cell.W_f.T + cell.b_f)
    i = sigmoid(z @ cell.W_i.T + cell.b_i)
    o = sigmoid(z @ cell.W_o.T + cell.b_o)
    g = np.tanh(z @ cell.W_c.T + cell.b_c)
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (z, f, i, o, g, c_prev, tc)


def lstm_step(cell, x_t, prev):
    """One step on a single vector or a (batch, input) block."""
    x_t = np.asarray(x_t)
    if x_t.shape[-1] != cell.input or prev.h.shape[-1] != cell.hidden or prev.c.shape != prev.h.shape:
        raise ShapeMismatch(
            f"lstm_step: x_t{x_t.shape} h{prev.h.shape} c{prev.c.shape} "
            f"for cell (hidden={cell.hidden}, input={cell.input})"
        )
    h, c, _ = _lstm_step(cell, x_t, prev.h, prev.c)
    return LstmState(h, c)


def lstm_sequence_forward(cell, X):
    """Run from the zero state over X of shape (batch, T, input); return h_T."""
    if X.ndim != 3 or X.shape[2] != cell.input or X.shape[1] < 1:
        raise ShapeMismatch(f"lstm sequence input {X.shape} for input size {cell.input}")
    batch, T, _ = X.shape
    h = np.zeros((batch, cell.hidden), dtype=cell.W_f.dtype)
    c = np.zeros_like(h)
    steps = []
    for t in range(T):
        h, c, step_cache = _lstm_step(cell, X[:, t, :], h, c)
        steps.append(step_cache)
    return h, (cell, steps)


def lstm_sequence_backward(dh_T, cache):
    """Backpropagation through time.

    Returns (dX, grads) where grads maps "W_f", ..., "b_c" to arrays shaped
    like the cell parameters.
    """
    cell, steps = cache
    H = cell.hidden
    W = cell.weights()
    dW = {g: np.zeros_like(W[g]) for g in LSTM_GATES}
    db = {g: np.zeros(H, dtype=dh_T.dtype) for g in LSTM_GATES}
    dX = np.empty((dh_T.shape[0], len(steps), cell.input), dtype=dh_T.dtype)
    dh = dh_T
    dc = np.zeros_like(dh_T)
    for t in range(len(steps) - 1, -1, -1):
        z, f, i, o, g, c_prev, tc = steps[t]
        dc = dc + dh * o * (1.0 - tc * tc)
        da = {
            "o": dh * tc * o * (1.0 - o),
            "f": dc * c_prev * f * (1.0 - f),
            "i": dc * g * i * (1.0 - i),
            "c": dc * i * (1.0 - g * g),
        }
        dz = np.zeros_like(z)
        for k in LSTM_GATES:
            dW[k] += da[k].T @ z
            db[k] += da[k].sum(axis=0)
            dz += da[k] @ W[k]
        dh = dz[:, :H]
        dX[:, t, :] = dz[:, H:]
        dc = dc * f
    grads = {f"W_{k}": dW[k] for k in LSTM_GATES}
    grads.update({f"b_{k}": db[k] for k in LSTM_GATES})
    return dX, grads


# ---------------------------------------------------------------- loss


def cross_entropy(probs, targets):
    """Mean of -log p[row, target], with p floored at 1e-12."""
    targets = np.asarray(targets)
    if probs.ndim != 2 or targets.shape != (probs.shape[0],):
        raise ShapeMismatch(f"cross_entropy: probs{probs.shape} targets{targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= probs.shape[1]):
        raise IndexOutOfRange(f"target index outside [0, {probs.shape[1]})")
    picked = probs[np.arange(len(targets)), targets]
    return probs.dtype.type(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def softmax_cross_entropy_backward(probs, targets):
    """Gradient of the batch-mean loss w.r.t. the pre-softmax logits."""
    d = probs.copy()
    d[np.arange(len(targets)), targets] -= 1
    return d / len(targets)


def one_hot(index, size):
    if not 0 <= index < size:
        raise IndexOutOfRange(f"index {index} outside [0, {size})")
    v = np.zeros(size)
    v[index] = 1.0
    return v


# ---------------------------------------------------------------- gradient check


@dataclass
class GradCheckReport:
    max_rel_error: dict
    tolerance: float
    kinks: int = 0  # components skipped because the perturbation crossed a ReLU kink

    @property
    def worst(self):
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self):
        return self.worst < self.tolerance

    def __str__(self):
        rows = [f"{name:>12s}  {err:.3e}" for name, err in self.max_rel_error.items()]
        status = "PASS" if self.passed else "FAIL"
        return "\n".join(rows + [f"{status} worst={self.worst:.3e} tol={self.tolerance:g} kinks={self.kinks}"])


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)


def numeric_gradient(f, x, h=1e-5):
    """Central differences of scalar f() w.r.t. array x, perturbed in place.

    If f returns (value, pattern), components whose +h and -h patterns
    differ are flagged; the second return value is then a boolean mask.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    kinked = np.zeros(x.shape, dtype=bool)
    it = np.nditer(x, flags=["multi_index"], op_flags=["readwrite"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        if isinstance(fp, tuple):
            (fp, pp), (fm, pm) = fp, fm
            kinked[idx] = pp != pm
        grad[idx] = (fp - fm) / (2 * h)
    return grad, kinked


def gradient_check(loss_fn, params, grads, tolerance=1e-4, h=1e-5, skip=None):
    """Compare analytic ``grads`` with central differences of ``loss_fn()``.

    ``params`` and ``grads`` are dicts of arrays keyed alike; params are
    perturbed in place, so they must be float64 (or wider) and ``loss_fn``
    must read them. ``loss_fn`` may return (loss, pattern) to enable kink
    detection. ``skip`` optionally maps a name to a boolean mask of
    components to ignore.
    """
    skip = skip or {}
    errors = {}
    kinks = 0
    for name, p in params.items():
        if p.dtype not in (np.float64, np.longdouble):
            raise TypeError(f"gradient check needs float64 parameters, {name} is {p.dtype}")
        num, kinked = numeric_gradient(loss_fn, p, h)
        err = relative_error(np.asarray(grads[name], dtype=np.float64), num)
        mask = kinked | skip.get(name, False)
        kinks += int(kinked.sum())
        err = np.where(mask, 0.0, err)
        errors[name] = float(err.max()) if err.size else 0.0
    return GradCheckReport(errors, tolerance, kinks)
