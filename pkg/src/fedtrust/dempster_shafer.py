"""Dempster-Shafer combination of recommender endorsements.

Predictions about a newcomer server are turned into basic probability
assignments over three hypotheses (trustworthy, untrustworthy,
uncertain), weighted by each recommender's credibility, and fused with
Dempster's rule. The fused belief decides the server's trust status and
supplies its numeric trust score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .decision_tree import Prediction, TrustStatus

MASS_TOLERANCE = 1e-9


class EvidenceConflictError(ValueError):
    """Raised when two fully certain, opposed masses are combined."""


@dataclass(frozen=True)
class BeliefMass:
    """Mass assignment over (trustworthy, untrustworthy, uncertain)."""

    m1: float
    m2: float
    m3: float

    def __post_init__(self):
        for name, value in (("m1", self.m1), ("m2", self.m2), ("m3", self.m3)):
            if not 0.0 <= value <= 1.0 + MASS_TOLERANCE:
                raise ValueError(f"{name}={value} outside [0, 1]")
        total = self.m1 + self.m2 + self.m3
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"mass must sum to 1, got {total}")


VACUOUS = BeliefMass(m1=0.0, m2=0.0, m3=1.0)


@dataclass(frozen=True)
class Belief:
    """Fused belief: t + n + u = 1."""

    t: float
    n: float
    u: float


@dataclass(frozen=True)
class TrustDecision:
    trustworthy: bool
    server_trust: float


def make_bpa(prediction: Prediction, credibility: float) -> BeliefMass:
    """Convert one recommender's prediction into a mass assignment.

    The committed mass is credibility * confidence; the remainder goes
    to uncertainty, so an incredible or unsure recommender contributes
    (nearly) vacuous evidence.
    """
    if not 0.0 <= credibility <= 1.0:
        raise ValueError(f"credibility {credibility} outside [0, 1]")
    weight = credibility * prediction.confidence
    if prediction.label is TrustStatus.TRUSTWORTHY:
        return BeliefMass(m1=weight, m2=0.0, m3=1.0 - weight)
    return BeliefMass(m1=0.0, m2=weight, m3=1.0 - weight)


def combine(a: BeliefMass, b: BeliefMass) -> BeliefMass:
    """Fuse two masses with Dempster's rule.

    Conflicting mass (one source committing to trustworthy, the other to
    untrustworthy) is discarded and the rest renormalized by 1/(1-K).
    """
    conflict = a.m1 * b.m2 + a.m2 * b.m1
    if conflict >= 1.0:
        raise EvidenceConflictError(
            "total conflict: both sources are fully certain and opposed"
        )
    scale = 1.0 - conflict
    m1 = (a.m1 * b.m1 + a.m1 * b.m3 + a.m3 * b.m1) / scale
    m2 = (a.m2 * b.m2 + a.m2 * b.m3 + a.m3 * b.m2) / scale
    m3 = (a.m3 * b.m3) / scale
    return BeliefMass(m1=m1, m2=m2, m3=m3)


def aggregate(masses: Sequence[BeliefMass] | Iterable[BeliefMass]) -> Belief:
    """Left-fold ``combine`` over the masses and expose the result as a belief."""
    result = None
    for mass in masses:
        result = mass if result is None else combine(result, mass)
    if result is None:
        raise ValueError("aggregate requires at least one mass")
    return Belief(t=result.m1, n=result.m2, u=result.m3)


def decide(belief: Belief) -> TrustDecision:
    """Classify from the fused belief; exact ties reject conservatively."""
    return TrustDecision(trustworthy=belief.t > belief.n, server_trust=belief.t)
