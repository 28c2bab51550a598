"""Accuracy, confusion matrices and the observation-ratio prediction curve."""

from dataclasses import dataclass
import csv

import numpy as np

from .cells import SequencePair, forward_sequence, step_probs, stack_pairs

RATIO_TENTHS = tuple(range(1, 11))


def prefix_length(tenths, T):
    """``max(1, round_half_up(tenths/10 * T))`` in exact integer arithmetic."""
    return max(1, (tenths * T + 5) // 10)


def _scores(model, a, b, prefix_len, average_steps):
    T = a.shape[-2]
    if not 1 <= prefix_len <= T:
        raise ValueError(f"prefix_len must lie in [1, {T}], got {prefix_len}")
    probs = step_probs(forward_sequence(model, a[..., :prefix_len, :], b[..., :prefix_len, :]))
    return probs.mean(axis=0) if average_steps else probs[-1]


def predict(model, pair, prefix_len=None, average_steps=False):
    """Class with the highest softmax score after ``prefix_len`` observed steps.

    ``np.argmax`` returns the first maximum, so ties go to the lowest index.
    """
    prefix_len = pair.T if prefix_len is None else prefix_len
    return int(np.argmax(_scores(model, pair.a, pair.b, prefix_len, average_steps)[0]))


def predict_batch(model, pairs, prefix_len=None, tenths=None, average_steps=False):
    """Predictions for many pairs; pairs of equal length share one forward pass."""
    out = np.empty(len(pairs), dtype=np.int64)
    groups = {}
    for idx, pair in enumerate(pairs):
        groups.setdefault(pair.a.shape, []).append(idx)
    for (T, _), idxs in groups.items():
        a, b, _ = stack_pairs([pairs[i] for i in idxs])
        if tenths is not None:
            p = prefix_length(tenths, T)
        else:
            p = T if prefix_len is None else prefix_len
        out[idxs] = np.argmax(_scores(model, a, b, p, average_steps), axis=-1)
    return out


@dataclass
class Metrics:
    confusion: np.ndarray

    @property
    def total(self):
        return int(self.confusion.sum())

    @property
    def accuracy(self):
        return float(np.trace(self.confusion)) / self.total

    @property
    def per_class(self):
        rows = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.diag(self.confusion) / rows

    def to_text(self, class_names=None):
        k = self.confusion.shape[0]
        names = class_names or [str(i) for i in range(k)]
        width = max(6, *(len(n) for n in names))
        lines = [f"accuracy: {self.accuracy:.4f} ({np.trace(self.confusion)}/{self.total})", "",
                 f"{'class':<{width}}  {'acc':>6}  " + " ".join(f"{n:>{width}}" for n in names)]
        for i in range(k):
            counts = " ".join(f"{c:>{width}d}" for c in self.confusion[i])
            lines.append(f"{names[i]:<{width}}  {self.per_class[i]:6.3f}  {counts}")
        return "\n".join(lines)

    def write_csv(self, path):
        k = self.confusion.shape[0]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true_class", "accuracy"] + [f"pred_{j}" for j in range(k)])
            for i in range(k):
                w.writerow([i, repr(float(self.per_class[i]))] + list(map(int, self.confusion[i])))
            w.writerow(["overall", repr(self.accuracy)] + [""] * k)


def confusion_matrix(labels, predictions, k):
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(predictions)), 1)
    return cm


def evaluate(model, pairs, average_steps=False):
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot evaluate an empty set")
    preds = predict_batch(model, pairs, average_steps=average_steps)
    labels = [p.label for p in pairs]
    return Metrics(confusion_matrix(labels, preds, model.dims["k"]))


@dataclass
class PredictionCurve:
    ratios: tuple
    accuracy: tuple

    def rows(self):
        return list(zip(self.ratios, self.accuracy))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ratio", "accuracy"])
            for r, acc in self.rows():
                w.writerow([f"{r:.1f}", repr(acc)])

    def to_text(self):
        return "\n".join(f"r={r:.1f}  accuracy={acc:.4f}" for r, acc in self.rows())


def observation_curve(model, pairs, average_steps=False):
    """Accuracy when only the first ``round(r*T)`` frames are seen, r = 0.1 .. 1.0."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot evaluate an empty set")
    labels = np.array([p.label for p in pairs])
    accs = []
    for tenths in RATIO_TENTHS:
        preds = predict_batch(model, pairs, tenths=tenths, average_steps=average_steps)
        accs.append(float(np.mean(preds == labels)))
    return PredictionCurve(tuple(t / 10 for t in RATIO_TENTHS), tuple(accs))
