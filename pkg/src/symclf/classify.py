"""Sigmoid/threshold classification head, confusion metrics and rewards.

An expression value f(x) becomes a fraud probability via the sigmoid; the
predicted label is 1 exactly when sigmoid(f(x)) >= t (the boundary counts
as fraud).  Two rewards are provided: normalized inverse cross-entropy
1/(1+CE) over the raw probabilities, and the F1 score of the thresholded
labels.  Expressions that produce any non-finite value on the batch are
invalid and score 0.
"""

import numpy as np

from .errors import EmptyDataset, LengthMismatch
from .expr import ExprTree, evaluate_batch

PROB_CLIP = 1e-12  # keeps cross-entropy finite at saturated sigmoids


def sigmoid(v):
    """Numerically stable logistic function, elementwise."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out if out.ndim else float(out)


def predict(tree: ExprTree, X: np.ndarray, t: float) -> np.ndarray:
    """Binary labels: 1 iff sigmoid(f(x)) >= t. Non-finite rows label 0.

    Candidates producing non-finite rows are marked invalid upstream and
    never reach deployment; the 0 here only keeps the output total.
    """
    vals = evaluate_batch(tree, X)
    finite = np.isfinite(vals)
    labels = np.zeros(len(vals), dtype=np.int64)
    labels[finite] = (sigmoid(vals[finite]) >= t).astype(np.int64)
    return labels


class Confusion:
    """tp/fp/tn/fn counts for one prediction vector."""

    __slots__ = ("tp", "fp", "tn", "fn")

    def __init__(self, tp: int, fp: int, tn: int, fn: int):
        self.tp, self.fp, self.tn, self.fn = int(tp), int(fp), int(tn), int(fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __eq__(self, other):
        return (self.tp, self.fp, self.tn, self.fn) == (other.tp, other.fp, other.tn, other.fn)

    def __repr__(self):
        return f"Confusion(tp={self.tp}, fp={self.fp}, tn={self.tn}, fn={self.fn})"


class Metrics:
    """accuracy / precision / recall / f1, all in [0, 1]."""

    __slots__ = ("accuracy", "precision", "recall", "f1")

    def __init__(self, accuracy, precision, recall, f1):
        self.accuracy, self.precision, self.recall, self.f1 = accuracy, precision, recall, f1

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }

    def __repr__(self):
        return (f"Metrics(accuracy={self.accuracy:.4f}, precision={self.precision:.4f}, "
                f"recall={self.recall:.4f}, f1={self.f1:.4f})")


def confusion(pred, truth) -> Confusion:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"pred has {pred.shape}, truth has {truth.shape}")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    tn = int(np.sum((pred == 0) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    return Confusion(tp, fp, tn, fn)


def metrics(c: Confusion) -> Metrics:
    """Derive the four scores; degenerate denominators give 0, not NaN."""
    if c.total == 0:
        raise EmptyDataset("confusion over zero rows")
    accuracy = (c.tp + c.tn) / c.total
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else 0.0
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return Metrics(accuracy, precision, recall, f1)


def f1_score(pred, truth) -> float:
    return metrics(confusion(pred, truth)).f1


def reward_ce(probs, truth) -> float:
    """Normalized inverse cross-entropy 1/(1+CE), in (0, 1].

    Probabilities are clamped away from {0, 1} so the reward stays total.
    """
    probs = np.asarray(probs, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if probs.shape != truth.shape:
        raise LengthMismatch(f"probs has {probs.shape}, truth has {truth.shape}")
    p = np.clip(probs, PROB_CLIP, 1.0 - PROB_CLIP)
    ce = -float(np.mean(truth * np.log(p) + (1.0 - truth) * np.log(1.0 - p)))
    return 1.0 / (1.0 + ce)


def reward_ce_tree(tree: ExprTree, X, y, t: float = 0.5) -> float:
    """Cross-entropy reward of a tree; invalid (non-finite) trees score 0.

    The threshold does not enter the CE itself; it is accepted so both
    rewards share a call signature.
    """
    vals = evaluate_batch(tree, X)
    if not np.isfinite(vals).all():
        return 0.0
    return reward_ce(sigmoid(vals), y)


def reward_f1(tree: ExprTree, X, y, t: float) -> float:
    """F1 of the thresholded prediction; invalid trees score 0."""
    vals = evaluate_batch(tree, X)
    if not np.isfinite(vals).all():
        return 0.0
    pred = (sigmoid(vals) >= t).astype(np.int64)
    return f1_score(pred, np.asarray(y, dtype=np.int64))


REWARDS = {"f1": reward_f1, "ce": reward_ce_tree}
