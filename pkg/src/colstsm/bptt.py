"""Backpropagation through time for every model family.

Gradients are plain dicts keyed like ``Model.params``.  They are gradients of
the batch-mean of the per-pair sequence loss, so a batch gradient equals the
mean of the per-pair gradients.

Truncated mode keeps the cell-state chains (the constant-error carousel)
intact but drops every error term that flows back through ``h_{t-1}`` into
the gate pre-activations of earlier steps.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from .cells import Model, SequencePair, forward_sequence, per_pair_loss, sequence_loss, softmax

MODES = ("full", "truncated")
REL_FLOOR = 1e-8


def _onehot(labels, k):
    out = np.zeros((labels.shape[0], k))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _head_grads(model, logits, hidden, labels, grads, prefix=""):
    """Classifier-head gradients; returns the per-step error on ``h_t``."""
    W = model.params[prefix + "W_zh"]
    k = W.shape[0]
    T = len(logits)
    B = labels.shape[0]
    target = _onehot(labels, k)
    dhs = []
    for z, h in zip(logits, hidden):
        dz = (softmax(z) - target) / (T * B)
        if model.compat_tanh:
            dz = dz * (1.0 - z * z)
        grads[prefix + "W_zh"] += dz.T @ h
        grads[prefix + "b_z"] += dz.sum(axis=0)
        dhs.append(dz @ W)
    return dhs


def _sig_grad(d, s):
    return d * s * (1.0 - s)


def _tanh_grad(d, y):
    return d * (1.0 - y * y)


def _lstm_backward(model, caches, dhs, grads, truncated, prefix=""):
    p = model.params
    dh_next = np.zeros_like(dhs[0])
    dc_next = np.zeros_like(dhs[0])
    for t in reversed(range(len(caches))):
        cc = caches[t]
        dh = dhs[t] + dh_next
        do = dh * cc["tc"]
        dc = dc_next + _tanh_grad(dh * cc["o"], cc["tc"])
        pre = {
            "i": _sig_grad(dc * cc["g"], cc["i"]),
            "f": _sig_grad(dc * cc["c_prev"], cc["f"]),
            "o": _sig_grad(do, cc["o"]),
            "g": _tanh_grad(dc * cc["i"], cc["g"]),
        }
        dc_next = dc * cc["f"]
        dh_next = np.zeros_like(dh)
        for q, da in pre.items():
            grads[f"{prefix}W_{q}x"] += da.T @ cc["x"]
            grads[f"{prefix}W_{q}h"] += da.T @ cc["h_prev"]
            grads[f"{prefix}b_{q}"] += da.sum(axis=0)
            if not truncated:
                dh_next += da @ p[f"{prefix}W_{q}h"]


def _rnn_backward(model, caches, dhs, grads, truncated):
    W_hh = model.params["W_hh"]
    dh_next = np.zeros_like(dhs[0])
    for t in reversed(range(len(caches))):
        cc = caches[t]
        da = _tanh_grad(dhs[t] + dh_next, cc["h"])
        grads["W_hx"] += da.T @ cc["x"]
        grads["W_hh"] += da.T @ cc["h_prev"]
        grads["b_h"] += da.sum(axis=0)
        dh_next = np.zeros_like(da) if truncated else da @ W_hh


def _colstsm_backward(model, caches, dhs, grads, truncated):
    p = model.params
    n = model.dims["n"]
    dh_next = np.zeros_like(dhs[0])
    dc_next = {"a": np.zeros_like(dh_next), "b": np.zeros_like(dh_next)}
    for t in reversed(range(len(caches))):
        cc = caches[t]
        dh = dhs[t] + dh_next
        da_o = _sig_grad(dh * cc["tc"], cc["o"])
        dco = _tanh_grad(dh * cc["o"], cc["tc"])
        dh_next = np.zeros_like(dh)
        for s in ("a", "b"):
            x = cc[f"x_{s}"]
            h_prev = cc["h_prev"]
            da_pi = _sig_grad(dco * cc[f"c_{s}"], cc[f"pi_{s}"])
            dc = dc_next[s] + dco * cc[f"pi_{s}"]
            g, i, f = cc[f"g_{s}"], cc[f"i_{s}"], cc[f"f_{s}"]
            pre = {
                "i": _sig_grad(dc * g, i),
                "f": _sig_grad(dc * cc[f"c{s}_prev"], f),
                "g": _tanh_grad(dc * i, g),
            }
            dc_next[s] = dc * f
            for q, da in pre.items():
                grads[f"W_{q}x_{s}"] += da.T @ x
                grads[f"W_{q}h_{s}"] += da.T @ h_prev
                grads[f"b_{q}_{s}"] += da.sum(axis=0)
                if not truncated:
                    dh_next += da @ p[f"W_{q}h_{s}"]
            grads[f"W_pix_{s}"] += da_pi.T @ x
            grads["W_pi_h"] += da_pi.T @ h_prev
            grads["b_pi"] += da_pi.sum(axis=0)
            if not truncated:
                dh_next += da_pi @ p["W_pi_h"]
        grads["W_ox"][:, :n] += da_o.T @ cc["x_a"]
        grads["W_ox"][:, n:] += da_o.T @ cc["x_b"]
        grads["W_oh"] += da_o.T @ cc["h_prev"]
        grads["b_o"] += da_o.sum(axis=0)
        if not truncated:
            dh_next += da_o @ p["W_oh"]


def zero_grads(model):
    return {name: np.zeros_like(v) for name, v in model.params.items()}


def _backward(model, trace, labels, truncated):
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    fam = model.family
    if trace.family != fam:
        raise ValueError(f"trace from a {trace.family!r} model passed with a {fam!r} model")
    B = labels.shape[0]
    first = trace.logits[0][0] if fam == "two-lstm" else trace.logits[0]
    if first.shape[0] != B:
        raise ValueError(f"trace batch size {first.shape[0]} does not match {B} labels")
    grads = zero_grads(model)
    if fam == "pooled":
        z = trace.logits[0]
        dz = (softmax(z) - _onehot(labels, z.shape[-1])) / B
        grads["W_p"] += dz.T @ trace.pooled
        grads["b_p"] += dz.sum(axis=0)
        return grads
    if fam == "two-lstm":
        for idx, prefix in enumerate(("a.", "b.")):
            dhs = _head_grads(model, trace.logits[idx], trace.hidden[idx], labels, grads, prefix)
            _lstm_backward(model, trace.caches[idx], dhs, grads, truncated, prefix)
        return grads
    dhs = _head_grads(model, trace.logits, trace.hidden, labels, grads)
    if fam == "one-lstm":
        _lstm_backward(model, trace.caches, dhs, grads, truncated)
    elif fam == "rnn":
        _rnn_backward(model, trace.caches, dhs, grads, truncated)
    else:
        _colstsm_backward(model, trace.caches, dhs, grads, truncated)
    return grads


def backward_full(model, trace, labels):
    """Exact gradient of the mean per-step NLL."""
    return _backward(model, trace, labels, truncated=False)


def backward_truncated(model, trace, labels):
    return _backward(model, trace, labels, truncated=True)


def loss_and_grads(model, a, b, labels, mode="full", return_trace=False):
    if mode not in MODES:
        raise ValueError(f"unknown BPTT mode {mode!r}")
    trace = forward_sequence(model, a, b)
    loss = float(np.mean(per_pair_loss(trace, labels)))
    grads = _backward(model, trace, labels, truncated=(mode == "truncated"))
    if return_trace:
        return loss, grads, trace
    return loss, grads


def finite_diff_grad(model, pair, eps=1e-5, dtype=np.longdouble):
    """Central differences, one fresh forward pass per probe.

    Probes run in ``dtype``; the extended-precision default keeps round-off
    in ``(L+ - L-)`` far below the truncation error, so even gradient entries
    near 1e-8 are resolved.  Pass ``np.float64`` for a plain 64-bit oracle.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    probe = Model(model.family, dict(model.dims),
                  {k: v.astype(dtype) for k, v in model.params.items()}, model.compat_tanh)
    a, b = pair.a.astype(dtype), pair.b.astype(dtype)
    step = dtype(eps)
    grads = zero_grads(model)
    for name, arr in probe.params.items():
        flat = arr.reshape(-1)
        out = grads[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = sequence_loss(probe, a, b, pair.label, exact_type=True)
            flat[j] = orig - step
            down = sequence_loss(probe, a, b, pair.label, exact_type=True)
            flat[j] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"non-finite loss while probing {name}[{j}]")
            # The perturbed value is the one actually representable in dtype.
            out[j] = (up - down) / ((orig + step) - (orig - step))
    return grads


def relative_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / denom


@dataclass
class GradCheckReport:
    errors: dict
    tol: float
    eps: float = None
    meta: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(err <= self.tol for err in self.errors.values())

    @property
    def max_error(self):
        return max(self.errors.values())

    def failures(self):
        return [name for name, err in self.errors.items() if err > self.tol]

    def to_text(self):
        width = max(len("tensor"), *(len(n) for n in self.errors))
        lines = [f"{'tensor':<{width}}  max_rel_err  status"]
        for name, err in self.errors.items():
            lines.append(f"{name:<{width}}  {err:11.3e}  {'ok' if err <= self.tol else 'FAIL'}")
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"overall: {verdict} (max {self.max_error:.3e}, tol {self.tol:g})")
        return "\n".join(lines)

    def to_dict(self):
        return {
            "passed": self.passed,
            "tol": self.tol,
            "eps": self.eps,
            "max_rel_err": self.max_error,
            "tensors": [{"name": n, "max_rel_err": e, "passed": e <= self.tol}
                        for n, e in self.errors.items()],
            **self.meta,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def compare_gradients(analytic, numeric, tol, eps=None):
    errors = {name: float(relative_error(analytic[name], numeric[name]).max(initial=0.0))
              for name in analytic}
    return GradCheckReport(errors, tol, eps)


def grad_check(model, pair, eps=1e-5, tol=1e-5):
    if eps <= 0 or tol <= 0:
        raise ValueError("eps and tol must be positive")
    if not isinstance(pair, SequencePair):
        raise TypeError("grad_check expects a SequencePair")
    trace = forward_sequence(model, pair)
    analytic = backward_full(model, trace, pair.label)
    numeric = finite_diff_grad(model, pair, eps)
    return compare_gradients(analytic, numeric, tol, eps)


def random_tiny_case(family, n, m, k, T, seed, compat_tanh=False):
    """A small random model and pair for gradient checks.

    Biases are randomised too so that no gradient entry is trivially zero.
    """
    from .cells import init_params
    from .numkernel import Prng

    prng = Prng(seed)
    model = init_params(family, {"n": n, "m": m, "k": k}, prng, compat_tanh)
    for name, value in model.params.items():
        if value.ndim == 1:
            model.params[name] = prng.uniform(value.shape, -0.5, 0.5)
    pair = SequencePair(prng.gaussian((T, n)), prng.gaussian((T, n)), prng.randbelow(k))
    return model, pair
