"""Chunk-level precision/recall/F1, Concept Error Rate and token accuracy.

All metrics are computed over label strings, micro-averaged corpus-wide. A
predicted chunk counts as correct only when concept, start and end all match
a reference chunk.
"""

from collections import defaultdict
from dataclasses import dataclass, field

from .corpus import chunks_from_labels
from .errors import DataError


@dataclass
class EvalReport:
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    cer: float = 0.0
    token_accuracy: float = 0.0
    per_label: dict = field(default_factory=dict)  # label -> (correct, hyp, ref)

    def to_text(self) -> str:
        lines = [
            f"precision: {self.precision:6.2f}%",
            f"recall:    {self.recall:6.2f}%",
            f"F1:        {self.f1:6.2f}%",
            f"CER:       {self.cer:6.2f}%",
            f"token acc: {self.token_accuracy:6.2f}%",
        ]
        for label in sorted(self.per_label):
            c, h, r = self.per_label[label]
            lines.append(f"  {label}: correct={c} hypothesized={h} reference={r}")
        return "\n".join(lines)

    def to_kv(self) -> str:
        return (
            f"precision={self.precision:.4f}\nrecall={self.recall:.4f}\n"
            f"f1={self.f1:.4f}\ncer={self.cer:.4f}\n"
            f"token_accuracy={self.token_accuracy:.4f}\n"
        )


def _check_lengths(gold_seqs, pred_seqs):
    if len(gold_seqs) != len(pred_seqs):
        raise DataError(
            f"sequence count mismatch: {len(gold_seqs)} gold vs {len(pred_seqs)} predicted"
        )
    for i, (g, p) in enumerate(zip(gold_seqs, pred_seqs)):
        if len(g) != len(p):
            raise DataError(f"sentence {i}: length mismatch {len(g)} vs {len(p)}")


def f1_chunks(gold_seqs, pred_seqs, mode: str = "bio-suffix") -> EvalReport:
    """Micro-averaged chunk-exact precision/recall/F1 with per-label counts."""
    _check_lengths(gold_seqs, pred_seqs)
    correct = defaultdict(int)
    hypothesized = defaultdict(int)
    reference = defaultdict(int)
    for gold, pred in zip(gold_seqs, pred_seqs):
        gold_chunks = set(chunks_from_labels(gold, mode))
        pred_chunks = set(chunks_from_labels(pred, mode))
        for chunk in gold_chunks:
            reference[chunk.label] += 1
        for chunk in pred_chunks:
            hypothesized[chunk.label] += 1
            if chunk in gold_chunks:
                correct[chunk.label] += 1
    n_correct = sum(correct.values())
    n_hyp = sum(hypothesized.values())
    n_ref = sum(reference.values())
    precision = 100.0 * n_correct / n_hyp if n_hyp else 0.0
    recall = 100.0 * n_correct / n_ref if n_ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    per_label = {
        label: (correct[label], hypothesized[label], reference[label])
        for label in set(hypothesized) | set(reference)
    }
    return EvalReport(precision=precision, recall=recall, f1=f1, per_label=per_label)


def edit_distance(ref, hyp) -> int:
    """Minimum substitutions+insertions+deletions, unit costs."""
    n, m = len(ref), len(hyp)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ref[i - 1] != hyp[j - 1])
            cur[j] = min(sub, prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return prev[m]


def concept_sequence(labels, mode: str = "bio-suffix") -> list:
    """In-order concept names of the chunks in a label sequence (O excluded)."""
    return [chunk.label for chunk in chunks_from_labels(labels, mode)]


def concept_error_rate(gold_seqs, pred_seqs, mode: str = "bio-suffix") -> float:
    """WER-style error rate over aligned per-sentence concept sequences:
    100 * (S + I + D) / total reference concepts."""
    _check_lengths(gold_seqs, pred_seqs)
    errors = 0
    total_ref = 0
    for gold, pred in zip(gold_seqs, pred_seqs):
        ref = concept_sequence(gold, mode)
        hyp = concept_sequence(pred, mode)
        errors += edit_distance(ref, hyp)
        total_ref += len(ref)
    return 100.0 * errors / max(1, total_ref)


def token_accuracy(gold_seqs, pred_seqs) -> float:
    _check_lengths(gold_seqs, pred_seqs)
    total = sum(len(g) for g in gold_seqs)
    if total == 0:
        return 0.0
    hits = sum(
        int(g == p) for gold, pred in zip(gold_seqs, pred_seqs) for g, p in zip(gold, pred)
    )
    return 100.0 * hits / total


def evaluate(gold_seqs, pred_seqs, mode: str = "bio-suffix") -> EvalReport:
    """Full report: chunk F1, CER and token accuracy in one pass."""
    report = f1_chunks(gold_seqs, pred_seqs, mode)
    report.cer = concept_error_rate(gold_seqs, pred_seqs, mode)
    report.token_accuracy = token_accuracy(gold_seqs, pred_seqs)
    return report
