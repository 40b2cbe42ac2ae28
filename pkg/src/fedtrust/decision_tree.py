"""Per-device decision trees over historical server interactions.

Every device keeps a record of the federated servers it has worked with
(id, region, optional payment, observed trust) and fits an ID3 tree on
the categorical attributes to answer bootstrapping queries about servers
it has not seen directly. Splits maximize information gain; the recorded
trust score is reporting-only and never used as a split attribute.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence, Union


class TrustStatus(Enum):
    TRUSTWORTHY = "trustworthy"
    UNTRUSTWORTHY = "untrustworthy"


@dataclass(frozen=True)
class InteractionRecord:
    """One historical interaction with a federated server.

    ``trust_status`` is the class label and is absent on query rows;
    ``trust_score`` is an observed percentage kept for reporting only.
    """

    server_id: str
    location: str
    payment: Optional[str] = None
    trust_score: Optional[float] = None
    trust_status: Optional[TrustStatus] = None


DEFAULT_ATTRIBUTES = ("server_id", "location")


@dataclass(frozen=True)
class HistoryDataset:
    """Training rows plus the ordered categorical attributes to split on."""

    records: tuple[InteractionRecord, ...]
    attributes: tuple[str, ...] = DEFAULT_ATTRIBUTES

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if "trust_score" in self.attributes:
            raise ValueError("trust_score is reporting-only and cannot be a split attribute")


@dataclass(frozen=True)
class Leaf:
    label: TrustStatus
    confidence: float
    support: int


@dataclass(frozen=True)
class Branch:
    attribute: str
    children: Mapping[str, "DecisionTree"]
    fallback: Leaf

    def __post_init__(self):
        object.__setattr__(self, "children", dict(self.children))


DecisionTree = Union[Leaf, Branch]


@dataclass(frozen=True)
class Prediction:
    label: TrustStatus
    confidence: float


def entropy(class_counts: Mapping[TrustStatus, int]) -> float:
    """Shannon entropy in bits of a label-count distribution."""
    total = sum(class_counts.values())
    if not class_counts or total <= 0:
        raise ValueError("entropy requires at least one counted example")
    h = 0.0
    for count in class_counts.values():
        if count < 0:
            raise ValueError("class counts must be non-negative")
        if count > 0:
            p = count / total
            h -= p * math.log2(p)
    return h


def _label_counts(records: Sequence[InteractionRecord]) -> dict[TrustStatus, int]:
    counts: dict[TrustStatus, int] = {}
    for r in records:
        if r.trust_status is None:
            raise ValueError(f"record for server {r.server_id} is unlabeled")
        counts[r.trust_status] = counts.get(r.trust_status, 0) + 1
    return counts


def _majority_leaf(records: Sequence[InteractionRecord]) -> Leaf:
    counts = _label_counts(records)
    # exact ties resolve to the conservative label
    trustworthy = counts.get(TrustStatus.TRUSTWORTHY, 0)
    untrustworthy = counts.get(TrustStatus.UNTRUSTWORTHY, 0)
    if trustworthy > untrustworthy:
        label, top = TrustStatus.TRUSTWORTHY, trustworthy
    else:
        label, top = TrustStatus.UNTRUSTWORTHY, untrustworthy
    return Leaf(label=label, confidence=top / len(records), support=len(records))


def _partition(records, attribute):
    groups: dict[str, list[InteractionRecord]] = {}
    for r in records:
        groups.setdefault(getattr(r, attribute), []).append(r)
    return groups


def _gain(records: Sequence[InteractionRecord], attribute: str) -> float:
    parent = entropy(_label_counts(records))
    total = len(records)
    weighted = 0.0
    for subset in _partition(records, attribute).values():
        weighted += (len(subset) / total) * entropy(_label_counts(subset))
    return parent - weighted


def information_gain(data: HistoryDataset, attribute: str) -> float:
    """Information gain of splitting the dataset on one attribute."""
    if attribute not in data.attributes:
        raise ValueError(f"unknown split attribute: {attribute!r}")
    return _gain(data.records, attribute)


def build_tree(data: HistoryDataset) -> DecisionTree:
    """Fit an ID3 tree: greedy max-gain splits, no backtracking, no pruning.

    Gain ties go to the earliest attribute in ``data.attributes``. Every
    branch node carries a fallback leaf (its own majority) so queries
    with unseen attribute values still get an answer.
    """
    if not data.records:
        raise ValueError("cannot build a tree from an empty dataset")
    return _build(list(data.records), list(data.attributes))


def _build(records, attributes) -> DecisionTree:
    counts = _label_counts(records)
    if len(counts) == 1 or not attributes:
        return _majority_leaf(records)

    best_attr = None
    best_gain = -1.0
    for attr in attributes:
        g = _gain(records, attr)
        if g > best_gain:
            best_attr, best_gain = attr, g

    remaining = [a for a in attributes if a != best_attr]
    children = {
        value: _build(subset, remaining)
        for value, subset in sorted(_partition(records, best_attr).items(), key=lambda kv: str(kv[0]))
    }
    return Branch(attribute=best_attr, children=children, fallback=_majority_leaf(records))


def predict(tree: DecisionTree, query: InteractionRecord) -> Prediction:
    """Classify a (possibly unlabeled) record by walking the tree."""
    node = tree
    while isinstance(node, Branch):
        value = getattr(query, node.attribute)
        child = node.children.get(value)
        if child is None:
            node = node.fallback
            break
        node = child
    return Prediction(label=node.label, confidence=node.confidence)


_STATUS_ALIASES = {
    "yes": TrustStatus.TRUSTWORTHY,
    "trustworthy": TrustStatus.TRUSTWORTHY,
    "no": TrustStatus.UNTRUSTWORTHY,
    "untrustworthy": TrustStatus.UNTRUSTWORTHY,
}

HISTORY_HEADER = ("server_id", "location", "payment", "trust_score", "trust_status")


def parse_status(text: str) -> Optional[TrustStatus]:
    text = text.strip().lower()
    if text in ("", "-", "?"):
        return None
    try:
        return _STATUS_ALIASES[text]
    except KeyError:
        raise ValueError(f"unrecognized trust status: {text!r}") from None


def load_history_csv(path) -> HistoryDataset:
    """Load interaction records from a header-row CSV file.

    Expected columns: server_id, location, payment, trust_score,
    trust_status. Empty payment/trust_score cells become None; rows with
    an empty or '?' status are queries and are skipped here.
    """
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(HISTORY_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"history file {path} is missing columns: {sorted(missing)}")
        for row in reader:
            status = parse_status(row["trust_status"])
            if status is None:
                continue
            score_text = (row["trust_score"] or "").strip()
            records.append(
                InteractionRecord(
                    server_id=row["server_id"].strip(),
                    location=row["location"].strip(),
                    payment=(row["payment"].strip() or None) if row["payment"] else None,
                    trust_score=float(score_text) if score_text not in ("", "-") else None,
                    trust_status=status,
                )
            )
    return HistoryDataset(records=tuple(records))
