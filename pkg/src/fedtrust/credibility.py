"""Per-recommender credibility scores.

After each bootstrapping round the asking device compares every
recommender's endorsement with the fused belief: endorsements that agree
with the outcome raise the recommender's credibility by the winning
belief (capped at 1), endorsements that disagree are penalized by the
losing belief. Unknown recommenders start at the maximally uncertain 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

from .decision_tree import TrustStatus
from .dempster_shafer import Belief

INITIAL_CREDIBILITY = 0.5


@dataclass(frozen=True)
class Endorsement:
    """A recommender's verdict about one server."""

    recommender_id: str
    verdict: TrustStatus


class CredibilityLedger:
    """Mutable map of recommender id to credibility score in [0, 1]."""

    def __init__(self, initial_score: float = INITIAL_CREDIBILITY):
        if not 0.0 <= initial_score <= 1.0:
            raise ValueError(f"initial credibility {initial_score} outside [0, 1]")
        self.initial_score = initial_score
        self._scores: Dict[str, float] = {}

    def get(self, recommender_id: str) -> float:
        return self._scores.get(recommender_id, self.initial_score)

    def update(self, endorsement: Endorsement, belief: Belief) -> float:
        """Adjust one recommender's score against the fused belief.

        Agreement adds the stronger of the two beliefs, clamped to 1;
        disagreement moves the score by the weaker belief through an
        absolute difference. A tied belief carries no information and
        leaves the score untouched. Returns the new score.
        """
        score = self.get(endorsement.recommender_id)
        says_trustworthy = endorsement.verdict is TrustStatus.TRUSTWORTHY
        if belief.t == belief.n:
            new = score
        elif says_trustworthy == (belief.t > belief.n):
            new = min(1.0, score + max(belief.t, belief.n))
        else:
            new = abs(score - min(belief.t, belief.n))
        self._scores[endorsement.recommender_id] = new
        return new

    def known_recommenders(self) -> list[str]:
        return sorted(self._scores)

    def to_dict(self) -> dict:
        return {
            "initial_score": self.initial_score,
            "scores": {k: self._scores[k] for k in sorted(self._scores)},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CredibilityLedger":
        ledger = cls(initial_score=payload.get("initial_score", INITIAL_CREDIBILITY))
        for recommender_id, score in payload.get("scores", {}).items():
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"stored credibility {score} for {recommender_id} outside [0, 1]")
            ledger._scores[recommender_id] = float(score)
        return ledger
