"""Scoring cluster assignments against expert gold labels.

Unsupervised cluster ids carry no label semantics, so the evaluator first
chooses the one-to-one cluster-to-label mapping that maximizes accuracy
(both permutations for K=2, optimal assignment on the count matrix for
larger K), then computes accuracy / precision / recall / F1 against a
designated positive label.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import permutations
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EvaluationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BinaryCells:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class ConfusionMatrix:
    """Cluster-by-label count matrix, plus binary cells once aligned."""

    counts: np.ndarray  # shape (K, L), integer
    labels: list[str]
    binary: BinaryCells | None = None

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "counts": [[int(c) for c in row] for row in self.counts],
            "labels": list(self.labels),
        }
        if self.binary is not None:
            rec["binary"] = {
                "tp": self.binary.tp,
                "fp": self.binary.fp,
                "fn": self.binary.fn,
                "tn": self.binary.tn,
            }
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "ConfusionMatrix":
        binary = None
        if rec.get("binary"):
            binary = BinaryCells(**rec["binary"])
        return cls(
            counts=np.asarray(rec["counts"], dtype=np.int64),
            labels=list(rec["labels"]),
            binary=binary,
        )


def count_matrix(
    assignments: Mapping[str, int], gold: Mapping[str, str], k: int
) -> tuple[np.ndarray, list[str]]:
    if set(assignments) != set(gold):
        missing = sorted(set(assignments) ^ set(gold))[:5]
        raise EvaluationError(
            f"assignments and gold labels cover different instances (e.g. {missing})"
        )
    labels = sorted(set(gold.values()))
    if len(labels) != k:
        raise EvaluationError(
            f"found {len(labels)} distinct gold labels {labels} but K={k}"
        )
    counts = np.zeros((k, len(labels)), dtype=np.int64)
    label_index = {lab: j for j, lab in enumerate(labels)}
    for instance_id, cluster in assignments.items():
        if not 0 <= cluster < k:
            raise EvaluationError(f"cluster id {cluster} of {instance_id} outside [0, {k})")
        counts[cluster, label_index[gold[instance_id]]] += 1
    return counts, labels


def align_clusters(
    assignments: Mapping[str, int], gold: Mapping[str, str], k: int
) -> dict[int, str]:
    """Accuracy-maximizing one-to-one mapping from cluster ids to labels.

    K=2 tries both permutations directly; larger K solves the assignment
    problem on the count matrix.  Ties go to the first permutation in
    lexicographic label order, so the result is deterministic.
    """
    counts, labels = count_matrix(assignments, gold, k)
    if k == 2:
        best_perm, best_hits = None, -1
        for perm in permutations(range(2)):
            hits = int(counts[0, perm[0]] + counts[1, perm[1]])
            if hits > best_hits:
                best_perm, best_hits = perm, hits
        return {c: labels[best_perm[c]] for c in range(2)}
    rows, cols = linear_sum_assignment(counts, maximize=True)
    return {int(r): labels[int(c)] for r, c in zip(rows, cols)}


def binary_cells(
    assignments: Mapping[str, int],
    gold: Mapping[str, str],
    mapping: Mapping[int, str],
    positive_label: str,
) -> BinaryCells:
    if positive_label not in set(gold.values()):
        raise EvaluationError(
            f"positive label {positive_label!r} does not occur among the gold labels"
        )
    tp = fp = fn = tn = 0
    for instance_id, cluster in assignments.items():
        predicted = mapping[cluster]
        actual = gold[instance_id]
        if predicted == positive_label and actual == positive_label:
            tp += 1
        elif predicted == positive_label:
            fp += 1
        elif actual == positive_label:
            fn += 1
        else:
            tn += 1
    return BinaryCells(tp=tp, fp=fp, fn=fn, tn=tn)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def to_record(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def compute_metrics(cells: BinaryCells) -> Metrics:
    """Standard binary metrics; zero-denominator ratios are defined as 0."""
    n = cells.total
    if n == 0:
        raise EvaluationError("cannot compute metrics over zero instances")
    accuracy = (cells.tp + cells.tn) / n
    precision = _ratio(cells.tp, cells.tp + cells.fp, "precision")
    recall = _ratio(cells.tp, cells.tp + cells.fn, "recall")
    if precision + recall == 0.0:
        if cells.tp == 0 and (cells.fp or cells.fn):
            logger.warning("P + R == 0; defining f1 := 0")
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return Metrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1)


def _ratio(num: int, denom: int, name: str) -> float:
    if denom == 0:
        logger.warning("%s denominator is 0; defining %s := 0", name, name)
        return 0.0
    return num / denom


# ---------------------------------------------------------------------------
# Reports and comparisons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InstanceOutcome:
    instance_id: str
    cluster: int
    mapped_label: str
    gold_label: str

    @property
    def correct(self) -> bool:
        return self.mapped_label == self.gold_label


@dataclass
class EvalReport:
    run_id: str
    model_id: str
    template_set: list[str]
    positive_label: str
    mapping: dict[int, str]
    metrics: Metrics
    confusion: ConfusionMatrix
    records: list[InstanceOutcome]

    def to_record(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "model_id": self.model_id,
            "template_set": list(self.template_set),
            "positive_label": self.positive_label,
            "mapping": {str(c): lab for c, lab in sorted(self.mapping.items())},
            "metrics": self.metrics.to_record(),
            "confusion": self.confusion.to_record(),
            "records": [
                {
                    "instance_id": r.instance_id,
                    "cluster": r.cluster,
                    "mapped_label": r.mapped_label,
                    "gold_label": r.gold_label,
                }
                for r in sorted(self.records, key=lambda r: r.instance_id)
            ],
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "EvalReport":
        return cls(
            run_id=rec["run_id"],
            model_id=rec["model_id"],
            template_set=list(rec["template_set"]),
            positive_label=rec["positive_label"],
            mapping={int(c): lab for c, lab in rec["mapping"].items()},
            metrics=Metrics(**rec["metrics"]),
            confusion=ConfusionMatrix.from_record(rec["confusion"]),
            records=[
                InstanceOutcome(
                    instance_id=r["instance_id"],
                    cluster=r["cluster"],
                    mapped_label=r["mapped_label"],
                    gold_label=r["gold_label"],
                )
                for r in rec["records"]
            ],
        )

    def recompute_metrics(self) -> Metrics:
        """Re-derive the metrics from the instance-level records."""
        cells = BinaryCells(
            tp=sum(
                1
                for r in self.records
                if r.mapped_label == self.positive_label and r.gold_label == self.positive_label
            ),
            fp=sum(
                1
                for r in self.records
                if r.mapped_label == self.positive_label and r.gold_label != self.positive_label
            ),
            fn=sum(
                1
                for r in self.records
                if r.mapped_label != self.positive_label and r.gold_label == self.positive_label
            ),
            tn=sum(
                1
                for r in self.records
                if r.mapped_label != self.positive_label and r.gold_label != self.positive_label
            ),
        )
        return compute_metrics(cells)


def build_report(
    *,
    run_id: str,
    model_id: str,
    template_set: Sequence[str],
    assignments: Mapping[str, int],
    gold: Mapping[str, str],
    k: int,
    positive_label: str,
) -> EvalReport:
    mapping = align_clusters(assignments, gold, k)
    counts, labels = count_matrix(assignments, gold, k)
    cells = binary_cells(assignments, gold, mapping, positive_label)
    metrics = compute_metrics(cells)
    records = [
        InstanceOutcome(
            instance_id=instance_id,
            cluster=cluster,
            mapped_label=mapping[cluster],
            gold_label=gold[instance_id],
        )
        for instance_id, cluster in sorted(assignments.items())
    ]
    return EvalReport(
        run_id=run_id,
        model_id=model_id,
        template_set=list(template_set),
        positive_label=positive_label,
        mapping=dict(mapping),
        metrics=metrics,
        confusion=ConfusionMatrix(counts=counts, labels=labels, binary=cells),
        records=records,
    )


@dataclass
class RunComparison:
    model_a: str
    model_b: str
    deltas: dict[str, float]
    # Per-instance agreement: counts of (a correct, b correct) combinations.
    both_correct: int
    only_a: int
    only_b: int
    neither: int

    def to_record(self) -> dict[str, Any]:
        return {
            "model_a": self.model_a,
            "model_b": self.model_b,
            "deltas": dict(self.deltas),
            "agreement": {
                "both_correct": self.both_correct,
                "only_a": self.only_a,
                "only_b": self.only_b,
                "neither": self.neither,
            },
        }


def compare_runs(report_a: EvalReport, report_b: EvalReport) -> RunComparison:
    """Per-metric deltas (b minus a) plus an instance-level agreement split."""
    ids_a = {r.instance_id for r in report_a.records}
    ids_b = {r.instance_id for r in report_b.records}
    if ids_a != ids_b:
        raise EvaluationError(
            "reports cover different instance sets; comparison would be confounded"
        )
    a_metrics = report_a.metrics.to_record()
    b_metrics = report_b.metrics.to_record()
    deltas = {name: b_metrics[name] - a_metrics[name] for name in a_metrics}
    correct_a = {r.instance_id: r.correct for r in report_a.records}
    both = only_a = only_b = neither = 0
    for r in report_b.records:
        a_ok = correct_a[r.instance_id]
        if a_ok and r.correct:
            both += 1
        elif a_ok:
            only_a += 1
        elif r.correct:
            only_b += 1
        else:
            neither += 1
    return RunComparison(
        model_a=report_a.model_id,
        model_b=report_b.model_id,
        deltas=deltas,
        both_correct=both,
        only_a=only_a,
        only_b=only_b,
        neither=neither,
    )
