"""Quota-constrained stable matching between devices and servers.

Devices propose down their trust-ordered preference lists; servers
accept while they have spare quota and otherwise evict their worst
tenant when a better proposer arrives (deferred acceptance). The round
is simulated synchronously in sorted device order, so identical inputs
always produce the identical matching: the device-optimal stable
assignment.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple


@dataclass
class PreferenceList:
    """A strict best-first ranking of counterpart ids for one participant."""

    owner_id: str
    ranked: tuple[str, ...]
    visited: set[str] = field(default_factory=set)

    def __post_init__(self):
        self.ranked = tuple(self.ranked)
        if len(set(self.ranked)) != len(self.ranked):
            raise ValueError(f"preference list of {self.owner_id} contains duplicates")


@dataclass
class ServerQuota:
    """Capacity state of one server during matching."""

    server_id: str
    desired: int
    accepted: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.desired < 1:
            raise ValueError(f"server {self.server_id} quota must be >= 1")

    @property
    def current(self) -> int:
        return len(self.accepted)

    @property
    def full(self) -> bool:
        return self.current >= self.desired


@dataclass(frozen=True)
class Matching:
    """Bidirectionally consistent assignment of devices to servers."""

    device_to_server: Mapping[str, Optional[str]]
    server_to_devices: Mapping[str, frozenset[str]]

    def __post_init__(self):
        object.__setattr__(self, "device_to_server", dict(self.device_to_server))
        object.__setattr__(
            self,
            "server_to_devices",
            {a: frozenset(ds) for a, ds in self.server_to_devices.items()},
        )
        for d, a in self.device_to_server.items():
            if a is not None and d not in self.server_to_devices.get(a, frozenset()):
                raise ValueError(f"inconsistent matching: {d} -> {a} not mirrored")
        for a, devices in self.server_to_devices.items():
            for d in devices:
                if self.device_to_server.get(d) != a:
                    raise ValueError(f"inconsistent matching: {a} holds unassigned {d}")


class MessageKind(Enum):
    PROPOSE = "propose"
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class PairMessage:
    kind: MessageKind
    device_id: str
    server_id: str


def _ranked_by_trust(scores: Mapping[str, Optional[float]]) -> tuple[str, ...]:
    decided = {k: v for k, v in scores.items() if v is not None}
    return tuple(sorted(decided, key=lambda k: (-decided[k], k)))


def build_device_preferences(
    device_id: str, server_trusts: Mapping[str, Optional[float]]
) -> PreferenceList:
    """Rank servers by trust score, descending; ties by ascending id.

    Servers whose trust is None (never bootstrapped) are left out, so an
    empty map leaves the device unmatchable.
    """
    return PreferenceList(owner_id=device_id, ranked=_ranked_by_trust(server_trusts))


def build_server_preferences(
    server_id: str, device_trusts: Mapping[str, Optional[float]]
) -> PreferenceList:
    """Rank devices by trust score, descending; ties by ascending id."""
    return PreferenceList(owner_id=server_id, ranked=_ranked_by_trust(device_trusts))


def _rank_key(rank_map: Mapping[str, int], device_id: str) -> tuple[float, str]:
    # unranked devices sort after every ranked one; id keeps it strict
    return (rank_map.get(device_id, math.inf), device_id)


def run_matching(
    device_prefs: Sequence[PreferenceList],
    server_prefs: Sequence[PreferenceList],
    quotas: Mapping[str, int],
    trace: Optional[List[PairMessage]] = None,
) -> Matching:
    """Run one deferred-acceptance round and return the stable matching.

    Unmatched devices propose to their best unvisited server; a server
    under quota accepts outright, a full server evicts its worst tenant
    when the proposer outranks it and rejects otherwise. Evicted devices
    resume proposing. Inputs are not mutated; pass ``trace`` to capture
    the propose/accept/reject message flow.
    """
    device_order = sorted(p.owner_id for p in device_prefs)
    prefs_by_device = {p.owner_id: p for p in device_prefs}
    if len(prefs_by_device) != len(device_prefs):
        raise ValueError("duplicate device preference lists")

    rank_by_server: Dict[str, Dict[str, int]] = {
        p.owner_id: {d: i for i, d in enumerate(p.ranked)} for p in server_prefs
    }
    servers = {a: ServerQuota(server_id=a, desired=k) for a, k in quotas.items()}
    for p in device_prefs:
        for a in p.ranked:
            if a not in servers:
                raise ValueError(f"device {p.owner_id} ranks unknown server {a}")

    visited: Dict[str, Set[str]] = {d: set() for d in device_order}
    matched: Dict[str, Optional[str]] = {d: None for d in device_order}
    pending = deque(device_order)

    def emit(kind: MessageKind, d: str, a: str) -> None:
        if trace is not None:
            trace.append(PairMessage(kind=kind, device_id=d, server_id=a))

    while pending:
        d = pending.popleft()
        for a in prefs_by_device[d].ranked:
            if a in visited[d]:
                continue
            visited[d].add(a)
            emit(MessageKind.PROPOSE, d, a)
            server = servers[a]
            ranks = rank_by_server.get(a, {})
            if not server.full:
                server.accepted.append(d)
                matched[d] = a
                emit(MessageKind.ACCEPT, d, a)
                break
            worst = max(server.accepted, key=lambda held: _rank_key(ranks, held))
            if _rank_key(ranks, d) < _rank_key(ranks, worst):
                server.accepted.remove(worst)
                matched[worst] = None
                emit(MessageKind.REJECT, worst, a)
                pending.append(worst)
                server.accepted.append(d)
                matched[d] = a
                emit(MessageKind.ACCEPT, d, a)
                break
            emit(MessageKind.REJECT, d, a)

    return Matching(
        device_to_server=matched,
        server_to_devices={a: frozenset(s.accepted) for a, s in servers.items()},
    )


def find_blocking_pairs(
    matching: Matching,
    device_prefs: Sequence[PreferenceList],
    server_prefs: Sequence[PreferenceList],
    quotas: Mapping[str, int],
) -> list[Tuple[str, str]]:
    """List every (device, server) pair that would defect together.

    A pair blocks when the device strictly prefers the server to its
    assignment (or is unmatched) and the server either has spare quota
    or strictly prefers the device to one of its tenants. An empty
    result certifies stability.
    """
    rank_by_server = {
        p.owner_id: {d: i for i, d in enumerate(p.ranked)} for p in server_prefs
    }
    blocking = []
    for pref in sorted(device_prefs, key=lambda p: p.owner_id):
        d = pref.owner_id
        current = matching.device_to_server.get(d)
        for a in pref.ranked:
            if a == current:
                break  # everything after is worse than the assignment
            tenants = matching.server_to_devices.get(a, frozenset())
            ranks = rank_by_server.get(a, {})
            if len(tenants) < quotas[a]:
                blocking.append((d, a))
            elif any(
                _rank_key(ranks, d) < _rank_key(ranks, held) for held in tenants
            ):
                blocking.append((d, a))
    return blocking
