import itertools
import math
import random

import pytest

from fedtrust.matching import (
    Matching,
    MessageKind,
    PairMessage,
    PreferenceList,
    ServerQuota,
    build_device_preferences,
    build_server_preferences,
    find_blocking_pairs,
    run_matching,
)


def prefs(owner, ranked):
    return PreferenceList(owner_id=owner, ranked=tuple(ranked))


class TestPreferenceBuilders:
    def test_descending_trust(self):
        p = build_device_preferences("d1", {"s1": 0.9, "s2": 0.4})
        assert p.ranked == ("s1", "s2")

    def test_ties_break_by_ascending_id(self):
        assert build_device_preferences("d", {"s2": 0.5, "s1": 0.5}).ranked == ("s1", "s2")
        assert build_server_preferences("s", {"d9": 1.0, "d10": 1.0}).ranked == ("d10", "d9")

    def test_input_order_irrelevant(self):
        scores = {"s3": 0.7, "s1": 0.7, "s2": 0.9}
        orders = [dict(items) for items in itertools.permutations(scores.items())]
        rankings = {build_device_preferences("d", o).ranked for o in orders}
        assert rankings == {("s2", "s1", "s3")}

    def test_undecided_servers_excluded(self):
        p = build_device_preferences("d", {"s1": 0.8, "s2": None})
        assert p.ranked == ("s1",)

    def test_empty_map_gives_empty_list(self):
        assert build_device_preferences("d", {}).ranked == ()

    def test_server_side_mirrors(self):
        p = build_server_preferences("s1", {"d1": 1.0, "d2": 0.46})
        assert p.ranked == ("d1", "d2")
        assert build_server_preferences("s1", {"d1": 0.5}).ranked == ("d1",)

    def test_duplicate_ranking_rejected(self):
        with pytest.raises(ValueError):
            prefs("d", ["s1", "s1"])


class TestRunMatching:
    def test_contested_server_goes_to_best(self):
        device_prefs = [prefs(d, ["s1", "s2"]) for d in ("d1", "d2", "d3")]
        server_prefs = [prefs(s, ["d1", "d2", "d3"]) for s in ("s1", "s2")]
        m = run_matching(device_prefs, server_prefs, {"s1": 1, "s2": 1})
        assert m.device_to_server == {"d1": "s1", "d2": "s2", "d3": None}
        assert m.server_to_devices["s1"] == frozenset({"d1"})
        assert m.server_to_devices["s2"] == frozenset({"d2"})

    def test_single_mutual_pair(self):
        m = run_matching([prefs("d1", ["s1"])], [prefs("s1", ["d1"])], {"s1": 1})
        assert m.device_to_server == {"d1": "s1"}

    def test_quota_two_accepts_both_without_eviction(self):
        trace = []
        m = run_matching(
            [prefs("d1", ["s1"]), prefs("d2", ["s1"])],
            [prefs("s1", ["d1", "d2"])],
            {"s1": 2},
            trace=trace,
        )
        assert m.server_to_devices["s1"] == frozenset({"d1", "d2"})
        kinds = [msg.kind for msg in trace]
        assert MessageKind.REJECT not in kinds

    def test_eviction_resumes_proposing(self):
        # d2 is accepted first, then evicted by the better-ranked d3
        device_prefs = [prefs("d2", ["s1", "s2"]), prefs("d3", ["s1"])]
        server_prefs = [prefs("s1", ["d3", "d2"]), prefs("s2", ["d2", "d3"])]
        trace = []
        m = run_matching(device_prefs, server_prefs, {"s1": 1, "s2": 1}, trace=trace)
        assert m.device_to_server == {"d3": "s1", "d2": "s2"}
        assert PairMessage(MessageKind.REJECT, "d2", "s1") in trace

    def test_empty_preference_list_stays_unmatched(self):
        m = run_matching([prefs("d1", [])], [prefs("s1", ["d1"])], {"s1": 1})
        assert m.device_to_server == {"d1": None}

    def test_inputs_not_mutated_and_deterministic(self):
        device_prefs = [prefs(d, ["s1", "s2"]) for d in ("d1", "d2", "d3")]
        server_prefs = [prefs(s, ["d2", "d1", "d3"]) for s in ("s1", "s2")]
        first = run_matching(device_prefs, server_prefs, {"s1": 1, "s2": 1})
        assert all(p.visited == set() for p in device_prefs)
        second = run_matching(device_prefs, server_prefs, {"s1": 1, "s2": 1})
        assert first == second

    def test_unknown_server_in_prefs_rejected(self):
        with pytest.raises(ValueError, match="s9"):
            run_matching([prefs("d1", ["s9"])], [], {"s1": 1})

    def test_quota_validation(self):
        with pytest.raises(ValueError):
            ServerQuota(server_id="s1", desired=0)


class TestFindBlockingPairs:
    def test_engine_output_is_stable(self):
        device_prefs = [prefs(d, ["s1", "s2"]) for d in ("d1", "d2", "d3")]
        server_prefs = [prefs(s, ["d1", "d2", "d3"]) for s in ("s1", "s2")]
        quotas = {"s1": 1, "s2": 1}
        m = run_matching(device_prefs, server_prefs, quotas)
        assert find_blocking_pairs(m, device_prefs, server_prefs, quotas) == []

    def test_swapped_assignment_is_blocked(self):
        device_prefs = [prefs(d, ["s1", "s2"]) for d in ("d1", "d2", "d3")]
        server_prefs = [prefs(s, ["d1", "d2", "d3"]) for s in ("s1", "s2")]
        quotas = {"s1": 1, "s2": 1}
        swapped = Matching(
            device_to_server={"d1": "s2", "d2": "s1", "d3": None},
            server_to_devices={"s1": frozenset({"d2"}), "s2": frozenset({"d1"})},
        )
        blocked = find_blocking_pairs(swapped, device_prefs, server_prefs, quotas)
        assert ("d1", "s1") in blocked

    def test_empty_matching_blocks_everywhere(self):
        device_prefs = [prefs("d1", ["s1"]), prefs("d2", ["s1"])]
        server_prefs = [prefs("s1", ["d1", "d2"])]
        empty = Matching(
            device_to_server={"d1": None, "d2": None},
            server_to_devices={"s1": frozenset()},
        )
        blocked = find_blocking_pairs(empty, device_prefs, server_prefs, {"s1": 2})
        assert set(blocked) == {("d1", "s1"), ("d2", "s1")}

    def test_inconsistent_matching_rejected(self):
        with pytest.raises(ValueError):
            Matching(device_to_server={"d1": "s1"}, server_to_devices={"s1": frozenset()})


# -- randomized stability against a brute-force oracle ---------------------


def random_instance(rng, max_devices=8, max_servers=3, max_quota=3):
    n_devices = rng.randint(1, max_devices)
    n_servers = rng.randint(1, max_servers)
    devices = [f"d{i}" for i in range(n_devices)]
    servers = [f"s{i}" for i in range(n_servers)]
    device_prefs = []
    for d in devices:
        listed = rng.sample(servers, rng.randint(0, n_servers))
        device_prefs.append(prefs(d, listed))
    server_prefs = []
    for s in servers:
        ranking = devices[:]
        rng.shuffle(ranking)
        server_prefs.append(prefs(s, ranking))
    quotas = {s: rng.randint(1, max_quota) for s in servers}
    return device_prefs, server_prefs, quotas


def oracle_has_blocking_pair(assignment, device_prefs, server_prefs, quotas):
    """Naive restatement of the blocking condition, written independently."""
    server_rank = {p.owner_id: {d: i for i, d in enumerate(p.ranked)} for p in server_prefs}

    def skey(a, d):
        return (server_rank[a].get(d, math.inf), d)

    for pref in device_prefs:
        d = pref.owner_id
        ranked = list(pref.ranked)
        current = assignment[d]
        better = ranked if current is None else ranked[: ranked.index(current)]
        for a in better:
            tenants = [x for x, held in assignment.items() if held == a]
            if len(tenants) < quotas[a]:
                return True
            if any(skey(a, d) < skey(a, t) for t in tenants):
                return True
    return False


def oracle_stable_set(device_prefs, server_prefs, quotas):
    """Enumerate every feasible assignment and keep the stable ones."""
    devices = [p.owner_id for p in device_prefs]
    options = [[None] + list(p.ranked) for p in device_prefs]
    stable = []
    for combo in itertools.product(*options):
        assignment = dict(zip(devices, combo))
        load = {}
        for a in combo:
            if a is not None:
                load[a] = load.get(a, 0) + 1
        if any(count > quotas[a] for a, count in load.items()):
            continue
        if not oracle_has_blocking_pair(assignment, device_prefs, server_prefs, quotas):
            stable.append(assignment)
    return stable


def test_randomized_stability_and_optimality():
    rng = random.Random(1337)
    enumerated = 0
    for _ in range(60):
        device_prefs, server_prefs, quotas = random_instance(rng)
        matching = run_matching(device_prefs, server_prefs, quotas)
        assert find_blocking_pairs(matching, device_prefs, server_prefs, quotas) == []
        assert not oracle_has_blocking_pair(
            dict(matching.device_to_server), device_prefs, server_prefs, quotas
        )

        search_space = 1
        for p in device_prefs:
            search_space *= len(p.ranked) + 1
        if search_space > 4096:
            continue
        enumerated += 1
        stable = oracle_stable_set(device_prefs, server_prefs, quotas)
        assert dict(matching.device_to_server) in stable
        # device-optimality: nobody does better in any stable assignment
        for pref in device_prefs:
            d = pref.owner_id
            position = {a: i for i, a in enumerate(pref.ranked)}

            def rank_of(a):
                return math.inf if a is None else position[a]

            best_anywhere = min(rank_of(s[d]) for s in stable)
            assert rank_of(matching.device_to_server[d]) <= best_anywhere
    assert enumerated >= 20
