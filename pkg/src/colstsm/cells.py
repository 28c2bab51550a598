"""Forward dynamics for the recurrent families and the pooled baseline.

Families
--------
``colstsm``   two per-person sub-memory cells fused by a gated co-memory cell
``one-lstm``  a single LSTM reading the concatenated streams ``[a; b]``
``two-lstm``  one LSTM per stream, softmax scores averaged (late fusion)
``rnn``       a vanilla tanh RNN reading ``[a; b]``
``pooled``    softmax regression on the time-averaged ``[a; b]``

All step functions accept single vectors or row-stacked batches.  Sequence
functions take arrays shaped ``(T, n)`` or ``(B, T, n)`` and always keep the
batch axis internally.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .numkernel import Prng, affine, as_real, sigmoid, tanh_act

FAMILIES = ("colstsm", "one-lstm", "two-lstm", "pooled", "rnn")

LSTM_GATES = ("i", "f", "o", "g")
SUB_GATES = ("i", "f", "g")

DEFAULT_HIDDEN = 32
PAPER_HIDDEN = 2048


@dataclass
class SequencePair:
    a: np.ndarray
    b: np.ndarray
    label: int

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.a.ndim != 2 or self.a.shape != self.b.shape:
            raise ValueError(f"streams must share a (T, n) shape, got {self.a.shape} and {self.b.shape}")
        if self.a.shape[0] < 1:
            raise ValueError("empty sequence")
        self.label = int(self.label)

    @property
    def T(self):
        return self.a.shape[0]

    @property
    def n(self):
        return self.a.shape[1]


def stack_pairs(pairs):
    """Stack pairs into ``(B, T, n)`` arrays and a label vector."""
    a = np.stack([p.a for p in pairs])
    b = np.stack([p.b for p in pairs])
    labels = np.array([p.label for p in pairs], dtype=np.int64)
    return a, b, labels


# ---------------------------------------------------------------------------
# parameters

def _lstm_shapes(d, m, k, prefix=""):
    shapes = {}
    for q in LSTM_GATES:
        shapes[f"{prefix}W_{q}x"] = (m, d)
        shapes[f"{prefix}W_{q}h"] = (m, m)
        shapes[f"{prefix}b_{q}"] = (m,)
    shapes[f"{prefix}W_zh"] = (k, m)
    shapes[f"{prefix}b_z"] = (k,)
    return shapes


def param_shapes(family, dims):
    """Canonical ordered mapping of tensor name to shape."""
    n, k = dims["n"], dims["k"]
    m = dims.get("m")
    if family == "colstsm":
        shapes = {}
        for s in ("a", "b"):
            for q in SUB_GATES:
                shapes[f"W_{q}x_{s}"] = (m, n)
                shapes[f"W_{q}h_{s}"] = (m, m)
                shapes[f"b_{q}_{s}"] = (m,)
            shapes[f"W_pix_{s}"] = (m, n)
        shapes["W_pi_h"] = (m, m)
        shapes["b_pi"] = (m,)
        shapes["W_ox"] = (m, 2 * n)
        shapes["W_oh"] = (m, m)
        shapes["b_o"] = (m,)
        shapes["W_zh"] = (k, m)
        shapes["b_z"] = (k,)
        return shapes
    if family == "one-lstm":
        return _lstm_shapes(2 * n, m, k)
    if family == "two-lstm":
        return {**_lstm_shapes(n, m, k, "a."), **_lstm_shapes(n, m, k, "b.")}
    if family == "rnn":
        return {"W_hx": (m, 2 * n), "W_hh": (m, m), "b_h": (m,), "W_zh": (k, m), "b_z": (k,)}
    if family == "pooled":
        return {"W_p": (k, 2 * n), "b_p": (k,)}
    raise ValueError(f"unknown model family {family!r}")


_RECURRENT = re.compile(r"^W_(pi_h|[ifogh]h(_[ab])?)$")


def _is_forget_bias(name):
    base = name.split(".")[-1]
    return base == "b_f" or base.startswith("b_f_")


@dataclass
class Model:
    family: str
    dims: dict
    params: dict
    compat_tanh: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        shapes = param_shapes(self.family, self.dims)
        if list(self.params) != list(shapes):
            missing = [n for n in shapes if n not in self.params]
            extra = [n for n in self.params if n not in shapes]
            if missing or extra:
                raise ValueError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
            self.params = {name: self.params[name] for name in shapes}
        for name, shape in shapes.items():
            arr = np.ascontiguousarray(as_real(self.params[name]))
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
            self.params[name] = arr

    @property
    def recurrent(self):
        return self.family != "pooled"

    def copy(self):
        return Model(self.family, dict(self.dims),
                     {k: v.copy() for k, v in self.params.items()}, self.compat_tanh)

    def recurrent_weight_names(self):
        """Hidden-to-hidden matrices (every ``W_*h`` except the classifier)."""
        return [n for n in self.params if _RECURRENT.match(n.split(".")[-1])]


def init_params(family, dims, prng, compat_tanh=False):
    """Uniform weights on ``[-1/sqrt(m), 1/sqrt(m)]``; forget biases 1, other biases 0.

    The pooled model has no hidden layer, so its bound uses the fan-in ``2n``.
    Tensors are drawn in canonical order from ``prng``.
    """
    if isinstance(prng, int):
        prng = Prng(prng)
    shapes = param_shapes(family, dims)
    fan = dims["m"] if family != "pooled" else 2 * dims["n"]
    bound = 1.0 / np.sqrt(fan)
    params = {}
    for name, shape in shapes.items():
        if len(shape) == 1:
            params[name] = np.full(shape, 1.0 if _is_forget_bias(name) else 0.0)
        else:
            params[name] = prng.uniform(shape, -bound, bound)
    return Model(family, dict(dims), params, compat_tanh)


# ---------------------------------------------------------------------------
# single steps

def rnn_step(p, x_t, h_prev):
    return tanh_act(affine(p["W_hx"], x_t, p["W_hh"], h_prev, p["b_h"]))


def rnn_output(p, h_t, compat_tanh=False, prefix=""):
    """Classifier logits ``W_zh.h + b_z``, optionally squashed by tanh."""
    W, b = p[prefix + "W_zh"], p[prefix + "b_z"]
    if h_t.shape[-1] != W.shape[1]:
        raise ValueError(f"W_zh: expects hidden size {W.shape[1]}, got {h_t.shape[-1]}")
    z = h_t @ W.T + b
    return np.tanh(z) if compat_tanh else z


def lstm_step(p, x_t, h_prev, c_prev, prefix=""):
    def gate(q):
        return affine(p[f"{prefix}W_{q}x"], x_t, p[f"{prefix}W_{q}h"], h_prev, p[f"{prefix}b_{q}"])

    i = sigmoid(gate("i"))
    f = sigmoid(gate("f"))
    o = sigmoid(gate("o"))
    g = tanh_act(gate("g"))
    c = f * c_prev + i * g
    tc = tanh_act(c)
    h = o * tc
    cache = dict(x=x_t, h_prev=h_prev, c_prev=c_prev, i=i, f=f, o=o, g=g, c=c, tc=tc, h=h)
    return h, c, cache


def colstsm_step(p, x_a, x_b, h_prev, ca_prev, cb_prev):
    """One concurrent unit update.

    Order: sub-memory gates, sub-memory cells, cell gates, co-memory cell,
    shared output gate, hidden state.
    """
    n = x_a.shape[-1]
    x = {"a": x_a, "b": x_b}
    c_prev = {"a": ca_prev, "b": cb_prev}
    i, f, g, c, pi = {}, {}, {}, {}, {}
    for s in ("a", "b"):
        i[s] = sigmoid(affine(p[f"W_ix_{s}"], x[s], p[f"W_ih_{s}"], h_prev, p[f"b_i_{s}"]))
        f[s] = sigmoid(affine(p[f"W_fx_{s}"], x[s], p[f"W_fh_{s}"], h_prev, p[f"b_f_{s}"]))
    for s in ("a", "b"):
        g[s] = tanh_act(affine(p[f"W_gx_{s}"], x[s], p[f"W_gh_{s}"], h_prev, p[f"b_g_{s}"]))
        c[s] = f[s] * c_prev[s] + i[s] * g[s]
    for s in ("a", "b"):
        pi[s] = sigmoid(affine(p[f"W_pix_{s}"], x[s], p["W_pi_h"], h_prev, p["b_pi"]))
    c_co = pi["a"] * c["a"] + pi["b"] * c["b"]
    W_ox = p["W_ox"]
    if W_ox.shape[1] != 2 * n or x_b.shape[-1] != n:
        raise ValueError(f"W_ox: expects [x_a; x_b] of length {W_ox.shape[1]}, got {n} + {x_b.shape[-1]}")
    # Two column-block products keep the a/b relabeling exact in floating point.
    o = sigmoid(x_a @ W_ox[:, :n].T + x_b @ W_ox[:, n:].T + h_prev @ p["W_oh"].T + p["b_o"])
    tc = tanh_act(c_co)
    h = o * tc
    cache = dict(
        x_a=x_a, x_b=x_b, h_prev=h_prev, ca_prev=ca_prev, cb_prev=cb_prev,
        i_a=i["a"], i_b=i["b"], f_a=f["a"], f_b=f["b"], g_a=g["a"], g_b=g["b"],
        c_a=c["a"], c_b=c["b"], pi_a=pi["a"], pi_b=pi["b"], o=o, c=c_co, tc=tc, h=h,
    )
    return h, c["a"], c["b"], cache


def pooled_baseline(W_p, b_p, a, b):
    """Logits of a softmax classifier on the time-mean of ``[a_t; b_t]``."""
    a, b = as_real(a), as_real(b)
    if a.shape[-2] < 1:
        raise ValueError("empty sequence")
    pooled = np.concatenate([a.mean(axis=-2), b.mean(axis=-2)], axis=-1)
    if pooled.shape[-1] != W_p.shape[1]:
        raise ValueError(f"W_p: expects {W_p.shape[1]} pooled features, got {pooled.shape[-1]}")
    return pooled @ W_p.T + b_p


def softmax(z):
    z = as_real(z)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def nll_loss(y, label):
    """``-log y[label]`` for a distribution (or a batch of them)."""
    y = as_real(y)
    label = np.asarray(label)
    k = y.shape[-1]
    if np.any(label < 0) or np.any(label >= k):
        raise ValueError(f"label {label} out of range for {k} classes")
    if y.ndim == 1:
        return float(-np.log(y[int(label)]))
    return -np.log(np.take_along_axis(y, label.reshape(-1, 1), axis=-1)[:, 0])


# ---------------------------------------------------------------------------
# sequences

@dataclass
class Trace:
    """Everything a forward pass produced.

    ``logits`` holds one ``(B, k)`` array per step (``two-lstm``: one list per
    stream, pooled: a single entry).  ``caches`` mirrors it.
    """
    family: str
    logits: list
    hidden: list = field(default_factory=list)
    caches: list = field(default_factory=list)
    pooled: np.ndarray = None

    @property
    def T(self):
        if self.family == "two-lstm":
            return len(self.logits[0])
        return len(self.logits)


def _as_batch(a, b):
    a, b = as_real(a), as_real(b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3 or a.shape != b.shape:
        raise ValueError(f"streams must share a (B, T, n) shape, got {a.shape} and {b.shape}")
    if a.shape[1] < 1:
        raise ValueError("empty sequence")
    return a, b


def _check_dims(model, a):
    if a.shape[-1] != model.dims["n"]:
        raise ValueError(
            f"input dimension {a.shape[-1]} does not match the model's n={model.dims['n']}")


def _lstm_sequence(model, x, prefix=""):
    p = model.params
    B, T, _ = x.shape
    m = model.dims["m"]
    h = np.zeros((B, m), dtype=x.dtype)
    c = np.zeros((B, m), dtype=x.dtype)
    hidden, logits, caches = [], [], []
    for t in range(T):
        h, c, cache = lstm_step(p, x[:, t], h, c, prefix)
        hidden.append(h)
        logits.append(rnn_output(p, h, model.compat_tanh, prefix))
        caches.append(cache)
    return hidden, logits, caches


def forward_sequence(model, a, b=None):
    """Run ``model`` over a pair (or a batch of pairs) from zero initial states."""
    if isinstance(a, SequencePair):
        a, b = a.a, a.b
    a, b = _as_batch(a, b)
    _check_dims(model, a)
    p = model.params
    B, T, _ = a.shape
    fam = model.family
    if fam == "pooled":
        feats = np.concatenate([a.mean(axis=1), b.mean(axis=1)], axis=-1)
        z = pooled_baseline(p["W_p"], p["b_p"], a, b)
        return Trace(fam, [z], pooled=feats)
    if fam == "two-lstm":
        ha, za, ca = _lstm_sequence(model, a, "a.")
        hb, zb, cb = _lstm_sequence(model, b, "b.")
        return Trace(fam, [za, zb], [ha, hb], [ca, cb])
    if fam == "one-lstm":
        hidden, logits, caches = _lstm_sequence(model, np.concatenate([a, b], axis=-1))
        return Trace(fam, logits, hidden, caches)
    m = model.dims["m"]
    h = np.zeros((B, m), dtype=a.dtype)
    hidden, logits, caches = [], [], []
    if fam == "rnn":
        x = np.concatenate([a, b], axis=-1)
        for t in range(T):
            h_prev = h
            h = rnn_step(p, x[:, t], h_prev)
            hidden.append(h)
            logits.append(rnn_output(p, h, model.compat_tanh))
            caches.append(dict(x=x[:, t], h_prev=h_prev, h=h))
        return Trace(fam, logits, hidden, caches)
    ca = np.zeros((B, m), dtype=a.dtype)
    cb = np.zeros((B, m), dtype=a.dtype)
    for t in range(T):
        h, ca, cb, cache = colstsm_step(p, a[:, t], b[:, t], h, ca, cb)
        hidden.append(h)
        logits.append(rnn_output(p, h, model.compat_tanh))
        caches.append(cache)
    return Trace(fam, logits, hidden, caches)


def step_probs(trace):
    """Class probabilities per step, shape ``(T, B, k)``; late fusion for ``two-lstm``."""
    if trace.family == "two-lstm":
        pa = softmax(np.stack(trace.logits[0]))
        pb = softmax(np.stack(trace.logits[1]))
        return 0.5 * (pa + pb)
    return softmax(np.stack(trace.logits))


def per_pair_loss(trace, labels):
    """Mean over steps of the per-step NLL, for every pair in the batch.

    ``two-lstm`` sums the two streams' losses: each sub-network receives
    exactly the gradient of its own objective.
    """
    labels = np.atleast_1d(np.asarray(labels))
    if trace.family == "two-lstm":
        streams = trace.logits
    else:
        streams = [trace.logits]
    total = 0.0
    for logits in streams:
        probs = softmax(np.stack(logits))
        total = total + np.mean([nll_loss(p_t, labels) for p_t in probs], axis=0)
    return total


def sequence_loss(model, a, b=None, labels=None, exact_type=False):
    """Batch-mean sequence loss.

    With ``exact_type`` the result keeps the working dtype (e.g. long double)
    instead of being rounded to a Python float.
    """
    if isinstance(a, SequencePair):
        a, b, labels = a.a, a.b, a.label
    trace = forward_sequence(model, a, b)
    loss = np.mean(per_pair_loss(trace, labels))
    return loss if exact_type else float(loss)
