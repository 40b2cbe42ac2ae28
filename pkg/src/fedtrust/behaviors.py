"""Adversarial client behavior descriptors.

A client carries zero or more behaviors: accuracy attacks (label
flipping, random weight updates) poison training, resource attacks
(over/under-utilization) leave the statistical fingerprint that the
trust pipeline is meant to catch. An honest client has none.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Tuple


class BehaviorKind(Enum):
    HONEST = "honest"
    LABEL_FLIP = "label_flip"
    RANDOM_WEIGHTS = "random_weights"
    RESOURCE_OVERUSE = "resource_overuse"
    RESOURCE_UNDERUSE = "resource_underuse"


@dataclass(frozen=True)
class AdversaryBehavior:
    kind: BehaviorKind
    intensity: float = 1.0

    def __post_init__(self):
        if self.intensity <= 0:
            raise ValueError(f"{self.kind.value} intensity must be positive")
        if self.kind is BehaviorKind.HONEST and self.intensity != 1.0:
            raise ValueError("honest behavior has intensity 1")


HONEST = AdversaryBehavior(kind=BehaviorKind.HONEST, intensity=1.0)


def normalize(behavior) -> Tuple[AdversaryBehavior, ...]:
    """Coerce a single behavior or an iterable of them to a tuple."""
    if behavior is None:
        return ()
    if isinstance(behavior, AdversaryBehavior):
        return (behavior,)
    return tuple(behavior)


def is_untrustworthy(behaviors: Iterable[AdversaryBehavior]) -> bool:
    return any(b.kind is not BehaviorKind.HONEST for b in normalize(behaviors))
