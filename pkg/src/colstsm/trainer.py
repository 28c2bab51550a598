"""Mini-batch SGD with momentum and per-epoch exponential learning-rate decay."""

from dataclasses import asdict, dataclass, field
import csv
import logging
import time

import numpy as np

from .bptt import MODES, loss_and_grads
from .cells import DEFAULT_HIDDEN, FAMILIES, init_params, stack_pairs, step_probs
from .numkernel import Prng

log = logging.getLogger(__name__)

PAPER_LEARNING_RATE = 1e-5
PAPER_MOMENTUM = 0.9
PAPER_DECAY = 0.95


@dataclass
class TrainConfig:
    model: str = "colstsm"
    hidden: int = DEFAULT_HIDDEN
    epochs: int = 60
    learning_rate: float = 1e-2
    momentum: float = PAPER_MOMENTUM
    decay: float = PAPER_DECAY
    batch_size: int = 16
    bptt: str = "full"
    seed: int = 0
    clip_norm: float = None
    compat_tanh: bool = False

    def validate(self):
        if self.model not in FAMILIES:
            raise ValueError(f"unknown model {self.model!r}; choose from {', '.join(FAMILIES)}")
        if self.bptt not in MODES:
            raise ValueError(f"unknown BPTT mode {self.bptt!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.batch_size < 1 or self.epochs < 0 or self.hidden < 1:
            raise ValueError("batch_size and hidden must be positive, epochs non-negative")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive when given")

    def to_dict(self):
        return asdict(self)


@dataclass
class OptState:
    velocity: dict

    @classmethod
    def zeros_like(cls, params):
        return cls({name: np.zeros_like(v) for name, v in params.items()})


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_accuracy: float
    lr: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def losses(self):
        return [r.loss for r in self.records]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "train_accuracy", "lr", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.loss), repr(r.train_accuracy), repr(r.lr),
                            f"{r.seconds:.3f}"])


def lr_schedule(epoch, lr0, decay):
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return lr0 * decay ** epoch


def sgd_step(params, grads, state, lr, momentum):
    """``v <- momentum*v - lr*g``; ``theta <- theta + v``. Updates in place."""
    for name, theta in params.items():
        g = grads[name]
        v = state.velocity[name]
        if g.shape != theta.shape or v.shape != theta.shape:
            raise ValueError(f"{name}: shape mismatch between parameter, gradient and velocity")
        v *= momentum
        v -= lr * g
        theta += v
    return params, state


def clip_grads(grads, max_norm):
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return grads


def model_dims(ds_n, ds_k, hidden):
    return {"n": ds_n, "m": hidden, "k": ds_k}


def train(ds, cfg, model=None, return_state=False):
    """Fit a fresh model (or continue ``model``) on ``ds.train``.

    One PRNG seeded by ``cfg.seed`` first initialises the weights, then
    draws one Fisher-Yates permutation per epoch.
    """
    cfg.validate()
    prng = Prng(cfg.seed)
    if model is None:
        model = init_params(cfg.model, model_dims(ds.n, ds.k, cfg.hidden), prng, cfg.compat_tanh)
    else:
        model = model.copy()
    if model.dims["n"] != ds.n or model.dims["k"] != ds.k:
        raise ValueError(
            f"dataset has n={ds.n}, k={ds.k} but the model expects n={model.dims['n']}, k={model.dims['k']}")
    A, B, labels = stack_pairs(ds.train)
    if A.shape[-1] != model.dims["n"]:
        raise ValueError(f"dataset input dimension {A.shape[-1]} does not match n={model.dims['n']}")
    N = labels.shape[0]
    state = OptState.zeros_like(model.params)
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        lr = lr_schedule(epoch, cfg.learning_rate, cfg.decay)
        order = np.array(prng.permutation(N))
        loss_sum = 0.0
        correct = 0
        for lo in range(0, N, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads, trace = loss_and_grads(model, A[idx], B[idx], labels[idx], cfg.bptt,
                                                return_trace=True)
            loss_sum += loss * idx.size
            correct += int(np.sum(np.argmax(step_probs(trace)[-1], axis=-1) == labels[idx]))
            if cfg.clip_norm is not None:
                clip_grads(grads, cfg.clip_norm)
            sgd_step(model.params, grads, state, lr, cfg.momentum)
        rec = EpochRecord(epoch, loss_sum / N, correct / N, lr, time.perf_counter() - start)
        history.records.append(rec)
        log.info("epoch %d loss %.4f acc %.3f lr %.3g", epoch, rec.loss, rec.train_accuracy, lr)
    if return_state:
        return model, history, state
    return model, history
