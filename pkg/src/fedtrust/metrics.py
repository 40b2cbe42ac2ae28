"""Experiment metrics: per-round logs and ROC analysis of bootstrapping."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

CSV_HEADER = ("round", "server", "method", "accuracy", "untrusted_selected", "selected_ids")


@dataclass(frozen=True)
class MetricsRow:
    round: int
    server_id: str
    method: str
    accuracy: float
    untrusted_selected: int
    selected_ids: Tuple[str, ...]


@dataclass
class MetricsLog:
    rows: List[MetricsRow] = field(default_factory=list)

    def append(self, row: MetricsRow) -> None:
        self.rows.append(row)

    def mean_untrusted(self, method: str) -> float:
        """Mean untrustworthy selections per (round, server) row of a method."""
        counts = [r.untrusted_selected for r in self.rows if r.method == method]
        if not counts:
            raise ValueError(f"no rows for method {method!r}")
        return sum(counts) / len(counts)

    def final_accuracy(self, method: str) -> float:
        """Accuracy of the last round, averaged over servers."""
        last = max(r.round for r in self.rows if r.method == method)
        finals = [r.accuracy for r in self.rows if r.method == method and r.round == last]
        return sum(finals) / len(finals)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow(
                [
                    r.round,
                    r.server_id,
                    r.method,
                    f"{r.accuracy:.6f}",
                    r.untrusted_selected,
                    ";".join(r.selected_ids),
                ]
            )
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())


def roc_curve(scores: Sequence[float], labels: Sequence[bool]) -> dict:
    """Threshold sweep over scores against boolean labels.

    Returns {"points": [(fpr, tpr), ...], "auc": float} with one point
    per distinct threshold, endpoints included, in ascending-fpr order.
    Raises if only one class is present (the AUC is undefined then).
    """
    if len(scores) != len(labels):
        raise ValueError("scores and labels must have equal length")
    positives = sum(1 for flag in labels if flag)
    negatives = len(labels) - positives
    if positives == 0 or negatives == 0:
        raise ValueError("AUC undefined: both classes must be present")

    paired = sorted(zip(scores, labels), key=lambda sl: -sl[0])
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(paired):
        threshold = paired[i][0]
        while i < len(paired) and paired[i][0] == threshold:
            if paired[i][1]:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / negatives, tp / positives))

    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return {"points": points, "auc": auc}


def write_roc_csv(path, roc: dict) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("fpr", "tpr"))
        for fpr, tpr in roc["points"]:
            writer.writerow((f"{fpr:.6f}", f"{tpr:.6f}"))
