"""Unsupervised term typing by nearest type embedding, plus the metric and
transition-matrix computations used to compare runs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TypingResult:
    """Per-target type assignment with the top-1 minus top-2 cosine margin."""

    assignments: dict[int, int]
    margins: dict[int, float]


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: dict[int, ClassMetrics] = field(default_factory=dict)
    n_targets: int = 0


def _safe_rows(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / np.where(norms > 0, norms, 1.0), norms[:, 0]


def assign_types(H: np.ndarray, target_nodes, type_nodes) -> TypingResult:
    """Assign each target the type whose embedding has the highest cosine.

    Ties break toward the lowest type handle; a zero-norm target embedding
    falls back to the lowest type handle with a warning.
    """
    targets = sorted(int(v) for v in target_nodes)
    types = sorted(int(v) for v in type_nodes)
    if not types:
        raise ValueError("type node set is empty")
    if not targets:
        raise ValueError("target node set is empty")
    H = np.asarray(H, dtype=np.float64)
    target_rows, target_norms = _safe_rows(H[targets])
    type_rows, type_norms = _safe_rows(H[types])
    if (type_norms == 0).any():
        warnings.warn("zero-norm type embedding: its cosines collapse to 0")
    cos = target_rows @ type_rows.T

    assignments: dict[int, int] = {}
    margins: dict[int, float] = {}
    zero_targets = target_norms == 0
    if zero_targets.any():
        warnings.warn(f"{int(zero_targets.sum())} zero-norm target embeddings "
                      "assigned to the lowest type handle")
    for row, target in enumerate(targets):
        if zero_targets[row]:
            best = 0
        else:
            best = int(np.argmax(cos[row]))
        assignments[target] = types[best]
        if len(types) == 1:
            margins[target] = 0.0
        else:
            others = np.delete(cos[row], best)
            margins[target] = float(cos[row][best] - others.max())
    return TypingResult(assignments=assignments, margins=margins)


def compute_metrics(result: TypingResult, gold: dict[int, int]) -> MetricsReport:
    """Accuracy plus unweighted class means over the gold type set.

    A class predicted zero times takes precision 0; predictions landing on
    types outside the gold set only count against their true class.
    """
    missing = set(result.assignments) - set(gold)
    if missing:
        raise ValueError(f"{len(missing)} assigned targets missing from gold")
    if set(gold) - set(result.assignments):
        raise ValueError("gold covers targets that were never assigned")
    classes = sorted(set(gold.values()))
    n = len(gold)
    correct = 0
    per_class: dict[int, ClassMetrics] = {}
    for c in classes:
        tp = sum(1 for t, g in gold.items() if g == c and result.assignments[t] == c)
        support = sum(1 for g in gold.values() if g == c)
        predicted = sum(1 for t in gold if result.assignments[t] == c)
        correct += tp
        precision = tp / predicted if predicted else 0.0
        recall = tp / support
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[c] = ClassMetrics(precision, recall, f1, support)
    return MetricsReport(
        accuracy=correct / n,
        macro_precision=float(np.mean([m.precision for m in per_class.values()])),
        macro_recall=float(np.mean([m.recall for m in per_class.values()])),
        macro_f1=float(np.mean([m.f1 for m in per_class.values()])),
        per_class=per_class,
        n_targets=n,
    )


def baseline_typing(X: np.ndarray, target_nodes, type_nodes,
                    gold: dict[int, int]) -> tuple[TypingResult, MetricsReport]:
    """Typing straight from the raw feature matrix, no learned encoder."""
    result = assign_types(X, target_nodes, type_nodes)
    return result, compute_metrics(result, gold)


def transition_matrix(initial: TypingResult, final: TypingResult,
                      gold: dict[int, int]) -> np.ndarray:
    """Row-normalized 2x2 percentages of correctness flips.

    Rows are initial correct/incorrect, columns final correct/incorrect.
    A row with no members stays all-zero.
    """
    if set(initial.assignments) != set(final.assignments):
        raise ValueError("initial and final results cover different targets")
    counts = np.zeros((2, 2), dtype=np.float64)
    for target, true_type in gold.items():
        i = 0 if initial.assignments[target] == true_type else 1
        j = 0 if final.assignments[target] == true_type else 1
        counts[i, j] += 1
    out = np.zeros((2, 2), dtype=np.float64)
    for i in range(2):
        row_sum = counts[i].sum()
        if row_sum > 0:
            out[i] = counts[i] / row_sum * 100.0
    return out
