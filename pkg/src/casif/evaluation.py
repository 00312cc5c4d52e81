"""Ranking metrics: recall@k and mean reciprocal rank, plus a popularity baseline.

Ranks are 1-based positions under descending score with ties broken by
ascending item index.  recall@k counts examples whose label lands in the
top k; mrr@k averages 1/rank, with the term zeroed whenever the rank
exceeds k.  Reports carry every metric per cutoff, overall and split into
short (prefix length <= 5) and long (> 5) buckets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .model import HyperParams, ModelParams, forward

DEFAULT_KS = (5, 10, 20)
SHORT_MAX_LEN = 5
BUCKETS = ("all", "short", "long")


def rank_topk(scores, k: int) -> np.ndarray:
    """Indices of the k highest scores, ties to the smaller index."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 1 <= k <= scores.shape[0]:
        raise ConfigError(f"k must be in [1, {scores.shape[0]}], got {k}")
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    return order[:k]


def label_rank(scores, label: int) -> int:
    """1-based rank of the label under the rank_topk ordering."""
    scores = np.asarray(scores, dtype=np.float64)
    s = scores[label]
    better = int((scores > s).sum())
    tied_before = int((scores[:label] == s).sum())
    return 1 + better + tied_before


def recall_at_k(ranked_lists, labels, k: int) -> float:
    """Fraction of examples whose label appears in their top-k list."""
    if len(ranked_lists) != len(labels):
        raise DataError("ranked_lists and labels must have equal length")
    if not labels:
        raise DataError("recall over zero examples is undefined")
    hits = sum(1 for ranked, label in zip(ranked_lists, labels) if label in set(ranked[:k]))
    return hits / len(labels)


def mrr_at_k(ranked_lists, labels, k: int) -> float:
    """Mean reciprocal rank, zero for labels ranked below k."""
    if len(ranked_lists) != len(labels):
        raise DataError("ranked_lists and labels must have equal length")
    if not labels:
        raise DataError("mrr over zero examples is undefined")
    total = 0.0
    for ranked, label in zip(ranked_lists, labels):
        top = list(ranked[:k])
        if label in top:
            total += 1.0 / (top.index(label) + 1)
    return total / len(labels)


@dataclass
class MetricsReport:
    """recall/mrr per cutoff and bucket, with example counts."""
    ks: tuple
    entries: dict = field(default_factory=dict)   # (k, bucket) -> {"recall", "mrr", "n"}

    def recall(self, k: int, bucket: str = "all") -> float:
        return self.entries[(k, bucket)]["recall"]

    def mrr(self, k: int, bucket: str = "all") -> float:
        return self.entries[(k, bucket)]["mrr"]

    def n(self, bucket: str = "all") -> int:
        k = self.ks[0]
        return self.entries[(k, bucket)]["n"]

    def records(self) -> list:
        out = []
        for k in self.ks:
            for bucket in BUCKETS:
                e = self.entries[(k, bucket)]
                out.append({"k": k, "bucket": bucket, "recall": e["recall"], "mrr": e["mrr"], "n": e["n"]})
        return out

    def table(self) -> str:
        lines = [f"{'bucket':<8}{'n':>8}" + "".join(f"{f'Recall@{k}':>12}{f'MRR@{k}':>12}" for k in self.ks)]
        for bucket in BUCKETS:
            e0 = self.entries[(self.ks[0], bucket)]
            row = f"{bucket:<8}{e0['n']:>8}"
            for k in self.ks:
                e = self.entries[(k, bucket)]
                row += f"{e['recall'] * 100:>12.2f}{e['mrr'] * 100:>12.2f}"
            lines.append(row)
        return "\n".join(lines)


def _report_from_ranks(ranks, lengths, ks) -> MetricsReport:
    ranks = np.asarray(ranks, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    masks = {
        "all": np.ones(ranks.shape[0], dtype=bool),
        "short": lengths <= SHORT_MAX_LEN,
        "long": lengths > SHORT_MAX_LEN,
    }
    report = MetricsReport(ks=tuple(ks))
    for k in ks:
        for bucket, mask in masks.items():
            r = ranks[mask]
            if r.size == 0:
                report.entries[(k, bucket)] = {"recall": 0.0, "mrr": 0.0, "n": 0}
                continue
            hit = r <= k
            report.entries[(k, bucket)] = {
                "recall": float(hit.mean()),
                "mrr": float(np.where(hit, 1.0 / r, 0.0).mean()),
                "n": int(r.size),
            }
    return report


def evaluate_model(params: ModelParams, hp: HyperParams, examples, ks=DEFAULT_KS) -> MetricsReport:
    """Score every example with the model and aggregate rank metrics."""
    if not examples:
        raise DataError("cannot evaluate on zero examples")
    for k in ks:
        if not 1 <= k <= params.num_items:
            raise ConfigError(f"cutoff k={k} out of range for {params.num_items} items")
    ranks, lengths = [], []
    for ex in examples:
        trace = forward(ex, params, hp)
        ranks.append(label_rank(trace.logits, ex.label))
        lengths.append(len(ex.prefix))
    return _report_from_ranks(ranks, lengths, ks)


def popularity_scores(train_examples, num_items: int) -> np.ndarray:
    """Occurrence count of each item over training prefixes and labels."""
    counts = np.zeros(num_items, dtype=np.float64)
    for ex in train_examples:
        for item in ex.prefix:
            counts[item] += 1.0
        counts[ex.label] += 1.0
    return counts


def pop_baseline(train_examples, test_examples, num_items: int, ks=DEFAULT_KS) -> MetricsReport:
    """Rank items by training popularity and evaluate like any model."""
    if not train_examples:
        raise DataError("popularity baseline needs training examples")
    if not test_examples:
        raise DataError("cannot evaluate on zero examples")
    scores = popularity_scores(train_examples, num_items)
    ranks = [label_rank(scores, ex.label) for ex in test_examples]
    lengths = [len(ex.prefix) for ex in test_examples]
    return _report_from_ranks(ranks, lengths, ks)
