"""Synthetic paired-stream interaction data.

Each sample has a motif (per channel, a sum of three sinusoids); stream ``a``
is the motif plus noise and stream ``b`` relates to it according to the class:

0  mirror       b_t = motif_t
1  lagged       b_t = motif_{t-L}
2  anti-phase   b_t = -motif_t
3  independent  b_t = other_t, a second motif

plus independent gaussian noise on both streams.

By default every sample draws a fresh motif and the lagged stream continues
the same sinusoids back in time for t < L. Negation and time shift only move
the random phases, so stream ``b`` has the same distribution in every class
and neither stream alone says anything about the label. Setting
``motif_pool_size`` draws motifs from a fixed pool instead, and
``lag_fill="zero"`` zero-pads the lagged stream; both reintroduce per-stream
cues (see ``GenConfig``).
"""

from dataclasses import asdict, dataclass
import json
import math
from pathlib import Path

import numpy as np

from .cells import SequencePair
from .numkernel import Prng

FORMAT_VERSION = "colstsm-ds-v1"
RELATIONS = ("mirror", "lagged", "anti-phase", "independent")
LAG_FILLS = ("continue", "zero")


class DatasetFormatError(ValueError):
    pass


@dataclass
class GenConfig:
    """Generator settings.

    ``motif_pool_size`` 0 draws a fresh motif per sample; M > 0 samples
    uniformly (with replacement) from M motifs drawn up front. With a pool,
    negated and zero-padded streams fall outside it, which a single-stream
    model can pick up.
    """
    classes: int = 4
    train_per_class: int = 200
    test_per_class: int = 50
    seq_len: int = 30
    input_dim: int = 4
    motif_pool_size: int = 0
    lag: int = 3
    noise_sigma: float = 0.1
    seed: int = 42
    lag_fill: str = "continue"

    def validate(self):
        if self.classes != len(RELATIONS):
            raise ValueError(f"the relation scheme defines exactly {len(RELATIONS)} classes, got {self.classes}")
        for name in ("train_per_class", "test_per_class", "seq_len", "input_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.motif_pool_size < 0:
            raise ValueError("motif_pool_size must be non-negative (0 = fresh motif per sample)")
        if self.lag < 1:
            raise ValueError("lag must be at least 1")
        if self.seq_len <= self.lag:
            raise ValueError(f"seq_len ({self.seq_len}) must exceed lag ({self.lag})")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.lag_fill not in LAG_FILLS:
            raise ValueError(f"lag_fill must be one of {LAG_FILLS}, got {self.lag_fill!r}")


@dataclass
class Dataset:
    train: list
    test: list
    config: GenConfig

    @property
    def k(self):
        return self.config.classes

    @property
    def T(self):
        return self.config.seq_len

    @property
    def n(self):
        return self.config.input_dim


@dataclass(frozen=True)
class Motif:
    """Frequencies (cycles per sequence) and phases, both shaped (n, 3)."""
    freqs: np.ndarray
    phases: np.ndarray

    def render(self, T, shift=0):
        t = np.arange(T, dtype=np.float64) - shift
        waves = np.sin(2.0 * math.pi * self.freqs[None] * t[:, None, None] / T
                       + self.phases[None])
        return waves.sum(axis=-1)


def draw_motif(prng, n):
    freqs = prng.uniform((n, 3), 0.5, 3.0)
    phases = prng.uniform((n, 3), 0.0, 2.0 * math.pi)
    return Motif(freqs, phases)


def make_motif(prng, T, n):
    """Per channel: three unit-amplitude sinusoids, 0.5-3 cycles per sequence."""
    return draw_motif(prng, n).render(T)


def relate(motif, other, label, T, lag, lag_fill="continue"):
    """Noise-free stream ``b`` for a class label, given ``Motif`` objects."""
    if label == 0:
        return motif.render(T)
    if label == 1:
        if lag_fill == "continue":
            return motif.render(T, shift=lag)
        out = np.zeros((T, motif.freqs.shape[0]))
        out[lag:] = motif.render(T)[:-lag]
        return out
    if label == 2:
        return -motif.render(T)
    if label == 3:
        return other.render(T)
    raise ValueError(f"label {label} out of range")


def _split(prng, pool, cfg, per_class):
    pairs = []
    T, n = cfg.seq_len, cfg.input_dim
    for j in range(per_class * cfg.classes):
        label = j % cfg.classes
        if pool:
            motif = pool[prng.randbelow(len(pool))]
            other = pool[prng.randbelow(len(pool))] if label == 3 else None
        else:
            motif = draw_motif(prng, n)
            other = draw_motif(prng, n) if label == 3 else None
        b_clean = relate(motif, other, label, T, cfg.lag, cfg.lag_fill)
        a = motif.render(T) + cfg.noise_sigma * prng.gaussian((T, n))
        b = b_clean + cfg.noise_sigma * prng.gaussian((T, n))
        pairs.append(SequencePair(a, b, label))
    return pairs


def generate_dataset(cfg=None):
    """Deterministic in ``cfg``: pool (if any), then train, then test draws."""
    cfg = cfg or GenConfig()
    cfg.validate()
    prng = Prng(cfg.seed)
    pool = [draw_motif(prng, cfg.input_dim) for _ in range(cfg.motif_pool_size)]
    train = _split(prng, pool, cfg, cfg.train_per_class)
    test = _split(prng, pool, cfg, cfg.test_per_class)
    return Dataset(train, test, cfg)


# ---------------------------------------------------------------------------
# line-delimited interchange format

def format_real(v):
    """17 significant digits: enough to round-trip any float64."""
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {v}")
    return format(v, ".17g")


def format_matrix(arr):
    arr = np.asarray(arr)
    if arr.ndim == 1:
        return "[" + ",".join(format_real(v) for v in arr) + "]"
    return "[" + ",".join(format_matrix(row) for row in arr) + "]"


def _record_line(pair):
    return (f'{{"label":{pair.label},"a":{format_matrix(pair.a)},'
            f'"b":{format_matrix(pair.b)}}}')


def write_split(pairs, path, k, split, config=None):
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot write an empty split")
    T, n = pairs[0].a.shape
    header = {"format": FORMAT_VERSION, "k": k, "T": T, "n": n, "split": split,
              "count": len(pairs)}
    if config is not None:
        header["config"] = asdict(config)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for pair in pairs:
            fh.write(_record_line(pair) + "\n")


def read_split(path):
    """Returns ``(header, pairs)``; every structural problem names its line."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}:1: malformed header ({exc.msg})") from None
    if header.get("format") != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}:1: unsupported format {header.get('format')!r}")
    k, T, n = header["k"], header["T"], header["n"]
    pairs = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            label = rec["label"]
            a = np.asarray(rec["a"], dtype=np.float64)
            b = np.asarray(rec["b"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{path}:{lineno}: malformed record ({exc})") from None
        if not isinstance(label, int) or isinstance(label, bool):
            raise DatasetFormatError(f"{path}:{lineno}: label must be an integer")
        if not 0 <= label < k:
            raise DatasetFormatError(f"{path}:{lineno}: label {label} out of range [0, {k})")
        for name, arr in (("a", a), ("b", b)):
            if arr.shape != (T, n):
                raise DatasetFormatError(
                    f"{path}:{lineno}: record {lineno - 1} stream {name!r} has shape "
                    f"{arr.shape}, header declares ({T}, {n})")
        pairs.append(SequencePair(a, b, label))
    return header, pairs


def write_dataset(ds, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_split(ds.train, out / "train.jsonl", ds.k, "train", ds.config)
    write_split(ds.test, out / "test.jsonl", ds.k, "test", ds.config)
    return out / "train.jsonl", out / "test.jsonl"


def read_dataset(in_dir):
    src = Path(in_dir)
    h_train, train = read_split(src / "train.jsonl")
    h_test, test = read_split(src / "test.jsonl")
    for key in ("k", "T", "n"):
        if h_train[key] != h_test[key]:
            raise DatasetFormatError(f"train/test headers disagree on {key}")
    cfg = GenConfig(**h_train["config"]) if "config" in h_train else GenConfig(
        classes=h_train["k"], seq_len=h_train["T"], input_dim=h_train["n"])
    return Dataset(train, test, cfg)
