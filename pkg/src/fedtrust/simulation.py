"""Deterministic federated-learning simulation with mutual trust selection.

Each round the harness (1) scores device trust from resource traces,
(2) lets every device bootstrap a trust score for every server through
its neighbors' decision trees fused with Dempster-Shafer, updating
recommender credibility, (3) matches devices to servers by mutual
preference under quota, alongside a uniform-random baseline selection,
(4) trains the selected clients and aggregates with FedAvg, and (5)
logs accuracy and untrustworthy-selection metrics for both methods.
Everything is seeded: the same config always yields the same log.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .behaviors import AdversaryBehavior, BehaviorKind, is_untrustworthy
from .config import ConfigurationError, ExperimentConfig
from .credibility import CredibilityLedger, Endorsement
from .datasets import Dataset, load_idx, synth_dataset
from .decision_tree import (
    HistoryDataset,
    InteractionRecord,
    Prediction,
    TrustStatus,
    build_tree,
    predict,
)
from .dempster_shafer import Belief, EvidenceConflictError, aggregate, decide, make_bpa
from .matching import (
    build_device_preferences,
    build_server_preferences,
    find_blocking_pairs,
    run_matching,
)
from .metrics import MetricsLog, MetricsRow, roc_curve
from .model import ModelWeights, evaluate, fedavg, local_train, zeros
from .resource_trust import (
    Fences,
    ReferenceSample,
    ResourceFeature,
    ResourceTrace,
    compute_fences,
    score_device,
)

METHOD_TRUST = "trust"
METHOD_VANILLA = "vanilla"
REGIONS = ("Asia", "America", "Africa", "Europe")


@dataclass
class Partition:
    """Index set into the training pool plus the labels it may contain."""

    indices: np.ndarray
    labels: Tuple[int, ...]


@dataclass
class ClientProfile:
    device_id: str
    partition: Partition
    capacities: Dict[ResourceFeature, float]
    behaviors: Tuple[AdversaryBehavior, ...]
    joined_round: int = 1

    @property
    def labels_held(self) -> Tuple[int, ...]:
        return self.partition.labels

    @property
    def untrustworthy(self) -> bool:
        return is_untrustworthy(self.behaviors)


@dataclass(frozen=True)
class ServerProfile:
    server_id: str
    location: str
    trustworthy: bool = True


def partition_dataset(
    dataset: Dataset,
    n_clients: int,
    labels_per_client: Tuple[int, int] = (3, 4),
    size_range: Tuple[int, int] = (30, 60),
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> List[Partition]:
    """Split a dataset non-IID: each client holds a few labels only.

    Every client is assigned a random label subset (size drawn from
    ``labels_per_client``) and a sample count drawn from ``size_range``;
    its examples come exclusively from its labels and no example is
    handed out twice. Raises ConfigurationError when the request cannot
    be satisfied.
    """
    rng = rng or np.random.default_rng(seed)
    lo_labels, hi_labels = labels_per_client
    lo_size, hi_size = size_range
    n_classes = dataset.n_classes
    if hi_labels > n_classes:
        raise ConfigurationError(
            f"clients need up to {hi_labels} labels but the dataset has {n_classes}"
        )

    pools = {
        label: list(rng.permutation(np.flatnonzero(dataset.y == label)))
        for label in range(n_classes)
    }
    if n_clients * lo_size > len(dataset):
        raise ConfigurationError(
            f"{n_clients} clients need at least {n_clients * lo_size} examples, "
            f"dataset has {len(dataset)}"
        )

    # label subsets are dealt as consecutive windows of a shuffled label
    # cycle, so every label lands on roughly the same number of clients
    label_cycle = rng.permutation(n_classes)
    cursor = 0
    partitions = []
    for i in range(n_clients):
        k = int(rng.integers(lo_labels, hi_labels + 1))
        labels = tuple(
            sorted(int(label_cycle[(cursor + j) % n_classes]) for j in range(k))
        )
        cursor += k
        size = int(rng.integers(lo_size, hi_size + 1))
        available = sum(len(pools[l]) for l in labels)
        if available < size:
            raise ConfigurationError(
                f"client {i} needs {size} examples of labels {labels}, "
                f"only {available} remain"
            )
        union = np.concatenate([pools[l] for l in labels]).astype(np.int64)
        take = rng.permutation(union)[:size]
        taken = set(int(t) for t in take)
        for l in labels:
            pools[l] = [idx for idx in pools[l] if int(idx) not in taken]
        partitions.append(Partition(indices=np.sort(take), labels=labels))
    return partitions


def make_reference_fences(
    centers: Mapping[ResourceFeature, float],
    rel_width: float,
    n_samples: int,
    rng: np.random.Generator,
) -> Dict[ResourceFeature, Fences]:
    """Fences from a synthetic population of previously seen honest clients."""
    fences = {}
    for feature in ResourceFeature:
        center = centers[feature]
        half = rel_width / 2.0
        values = rng.uniform(center * (1 - half), center * (1 + half), size=n_samples)
        fences[feature] = compute_fences(ReferenceSample(feature=feature, values=tuple(values)))
    return fences


def generate_resource_trace(
    profile: ClientProfile,
    fences_reference: Mapping[ResourceFeature, Fences],
    rounds: int,
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> Dict[ResourceFeature, ResourceTrace]:
    """Per-feature utilization traces for one device over many rounds.

    Honest utilization is drawn uniformly inside the reference quartile
    band; resource attackers multiply (overuse) or divide (underuse)
    every sample by their intensity.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    rng = rng or np.random.default_rng(seed)
    factor = 1.0
    for b in profile.behaviors:
        if b.kind is BehaviorKind.RESOURCE_OVERUSE:
            factor *= b.intensity
        elif b.kind is BehaviorKind.RESOURCE_UNDERUSE:
            factor /= b.intensity
    traces = {}
    for feature in ResourceFeature:
        fences = fences_reference[feature]
        samples = rng.uniform(fences.q1, fences.q3, size=rounds) * factor
        traces[feature] = ResourceTrace(
            device_id=profile.device_id, feature=feature, samples=tuple(samples)
        )
    return traces


# -- bootstrapping ----------------------------------------------------------


@dataclass(frozen=True)
class BootstrapCorpus:
    """Labeled recommender histories and ground-truth query servers."""

    histories: Mapping[str, HistoryDataset]
    queries: Tuple[InteractionRecord, ...]


def generate_bootstrap_corpus(
    n_servers: int = 50,
    n_recommenders: int = 5,
    seen_prob: float = 0.6,
    label_noise: float = 0.1,
    untrustworthy_fraction: float = 0.5,
    records_per_server: Tuple[int, int] = (1, 3),
    rng: Optional[np.random.Generator] = None,
    seed: Optional[int] = None,
) -> BootstrapCorpus:
    """Synthesize a server population with behavior-consistent histories.

    Each recommender has seen a random subset of the servers and records
    their true status, corrupted independently with ``label_noise``.
    """
    rng = rng or np.random.default_rng(seed)
    n_bad = int(round(untrustworthy_fraction * n_servers))
    flags = np.array([False] * n_bad + [True] * (n_servers - n_bad))
    rng.shuffle(flags)
    servers = [
        ServerProfile(
            server_id=f"b{i:03d}",
            location=REGIONS[int(rng.integers(len(REGIONS)))],
            trustworthy=bool(flags[i]),
        )
        for i in range(n_servers)
    ]

    histories = {}
    for j in range(n_recommenders):
        rows = []
        for server in servers:
            if rng.random() >= seen_prob:
                continue
            count = int(rng.integers(records_per_server[0], records_per_server[1] + 1))
            for _ in range(count):
                rows.append(_observed_record(server, label_noise, rng))
        histories[f"r{j:02d}"] = HistoryDataset(records=tuple(rows))

    queries = tuple(
        InteractionRecord(
            server_id=s.server_id,
            location=s.location,
            trust_status=TrustStatus.TRUSTWORTHY if s.trustworthy else TrustStatus.UNTRUSTWORTHY,
        )
        for s in servers
    )
    return BootstrapCorpus(histories=histories, queries=queries)


def _observed_record(server: ServerProfile, label_noise: float, rng) -> InteractionRecord:
    truthful = rng.random() >= label_noise
    observed_good = server.trustworthy if truthful else not server.trustworthy
    score = float(rng.uniform(85, 100)) if observed_good else float(rng.uniform(40, 85))
    return InteractionRecord(
        server_id=server.server_id,
        location=server.location,
        trust_score=round(score, 2),
        trust_status=TrustStatus.TRUSTWORTHY if observed_good else TrustStatus.UNTRUSTWORTHY,
    )


def fuse_recommendations(
    predictions: Sequence[Tuple[str, Prediction]],
    ledger: CredibilityLedger,
    credibility_cap: float = 0.99,
    update: bool = True,
) -> Optional[Belief]:
    """Weight predictions by recommender credibility and fuse them.

    Returns None when there are no recommenders. Total conflict (only
    possible with an uncapped credibility of 1) yields the vacuous
    belief and skips credibility updates, since there is no outcome to
    compare endorsements against.
    """
    if not predictions:
        return None
    masses = [
        make_bpa(pred, min(ledger.get(recommender_id), credibility_cap))
        for recommender_id, pred in predictions
    ]
    try:
        belief = aggregate(masses)
    except EvidenceConflictError:
        return Belief(t=0.0, n=0.0, u=1.0)
    if update:
        for recommender_id, pred in predictions:
            ledger.update(Endorsement(recommender_id=recommender_id, verdict=pred.label), belief)
    return belief


def evaluate_bootstrap(
    corpus: BootstrapCorpus,
    initial_credibility: float = 0.5,
    credibility_cap: float = 0.99,
) -> dict:
    """Score every query server through the full recommender pipeline.

    Returns scores (fused trustworthiness beliefs), boolean ground-truth
    labels, decisions, and the ROC curve with its AUC.
    """
    trees = {
        rid: build_tree(history)
        for rid, history in sorted(corpus.histories.items())
        if history.records
    }
    if not trees:
        raise ValueError("corpus has no recommender with any history")
    ledger = CredibilityLedger(initial_score=initial_credibility)
    scores: List[float] = []
    labels: List[bool] = []
    decisions = []
    for query in corpus.queries:
        predictions = [(rid, predict(tree, query)) for rid, tree in sorted(trees.items())]
        belief = fuse_recommendations(predictions, ledger, credibility_cap)
        decision = decide(belief)
        scores.append(decision.server_trust)
        labels.append(query.trust_status is TrustStatus.TRUSTWORTHY)
        decisions.append(decision)
    roc = roc_curve(scores, labels)
    return {
        "scores": scores,
        "labels": labels,
        "decisions": decisions,
        "roc": roc,
        "ledger": ledger,
    }


# -- experiment harness -----------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: MetricsLog
    ledgers: Dict[str, CredibilityLedger]
    profiles: Dict[str, ClientProfile]
    bootstrap_eval: Optional[dict] = None


def _resolve_dataset(config: ExperimentConfig) -> Dataset:
    ds = config.dataset
    if ds.source == "idx":
        return load_idx(ds.images_path, ds.labels_path)
    return synth_dataset(
        n_samples=ds.n_samples,
        n_classes=ds.n_classes,
        noise=ds.noise,
        image_side=ds.image_side,
        rng=np.random.default_rng([config.seed, 10]),
    )


class _Simulation:
    """Mutable state of one experiment run."""

    def __init__(self, config: ExperimentConfig, dataset: Optional[Dataset] = None):
        self.config = config
        self.dataset = dataset if dataset is not None else _resolve_dataset(config)
        self.rng_setup = np.random.default_rng([config.seed, 0])
        self.profiles: Dict[str, ClientProfile] = {}
        self.traces: Dict[str, Dict[ResourceFeature, ResourceTrace]] = {}
        self.histories: Dict[str, List[InteractionRecord]] = {}
        self.ledgers: Dict[str, CredibilityLedger] = {}
        self.device_index: Dict[str, int] = {}
        self._setup()

    # setup ------------------------------------------------------------

    def _setup(self) -> None:
        config = self.config
        total_devices = config.n_devices + config.new_devices_per_round * max(
            config.rounds - 1, 0
        )
        self._id_width = max(2, len(str(total_devices - 1)))

        pool_size = len(self.dataset)
        n_test = max(1, int(round(config.partition.test_fraction * pool_size)))
        order = self.rng_setup.permutation(pool_size)
        test_idx, train_idx = order[:n_test], order[n_test:]
        self.test_X = self.dataset.X[test_idx]
        self.test_y = self.dataset.y[test_idx]
        self.train_X = self.dataset.X[train_idx]
        self.train_y = self.dataset.y[train_idx]
        train_view = Dataset(X=self.train_X, y=self.train_y, image_shape=self.dataset.image_shape)

        self.partitions = partition_dataset(
            train_view,
            n_clients=total_devices,
            labels_per_client=config.partition.labels_per_client,
            size_range=config.partition.size_range,
            rng=self.rng_setup,
        )
        self._next_partition = 0

        self.servers = [
            ServerProfile(server_id=f"s{i}", location=REGIONS[i % len(REGIONS)])
            for i in range(config.n_servers)
        ]
        self.past_servers = self._make_past_servers()

        centers = {
            ResourceFeature.RAM: sum(config.resources.ram_range) / 2.0,
            ResourceFeature.CPU: sum(config.resources.cpu_range) / 2.0,
            ResourceFeature.BANDWIDTH: sum(config.resources.bandwidth_range) / 2.0,
        }
        self.fences = make_reference_fences(
            centers,
            config.resources.band_rel_width,
            config.resources.reference_size,
            self.rng_setup,
        )

        n_bad = int(round(config.untrustworthy_fraction * config.n_devices))
        bad_slots = set(
            int(i) for i in self.rng_setup.choice(config.n_devices, size=n_bad, replace=False)
        )
        for i in range(config.n_devices):
            self._spawn_device(untrustworthy=i in bad_slots, joined_round=1)

        self.global_weights = {
            method: {
                s.server_id: zeros(self.dataset.n_features, self.dataset.n_classes)
                for s in self.servers
            }
            for method in (METHOD_TRUST, METHOD_VANILLA)
        }

    def _make_past_servers(self) -> List[ServerProfile]:
        count = self.config.bootstrap.past_servers
        flags = [i % 2 == 0 for i in range(count)]  # alternating good/bad
        return [
            ServerProfile(
                server_id=f"p{i:02d}",
                location=REGIONS[int(self.rng_setup.integers(len(REGIONS)))],
                trustworthy=flags[i],
            )
            for i in range(count)
        ]

    def _spawn_device(self, untrustworthy: bool, joined_round: int) -> str:
        config = self.config
        index = len(self.profiles)
        device_id = f"d{index:0{self._id_width}d}"
        behaviors = tuple(config.adversaries) if untrustworthy else ()
        capacities = {
            ResourceFeature.RAM: float(self.rng_setup.uniform(*config.resources.ram_range)),
            ResourceFeature.CPU: float(self.rng_setup.uniform(*config.resources.cpu_range)),
            ResourceFeature.BANDWIDTH: float(
                self.rng_setup.uniform(*config.resources.bandwidth_range)
            ),
        }
        profile = ClientProfile(
            device_id=device_id,
            partition=self.partitions[self._next_partition],
            capacities=capacities,
            behaviors=behaviors,
            joined_round=joined_round,
        )
        self._next_partition += 1
        self.profiles[device_id] = profile
        self.device_index[device_id] = index
        remaining = config.rounds - joined_round + 1
        self.traces[device_id] = generate_resource_trace(
            profile,
            self.fences,
            rounds=remaining,
            rng=np.random.default_rng([config.seed, 1, index]),
        )
        self.ledgers[device_id] = CredibilityLedger(
            initial_score=config.bootstrap.initial_credibility
        )
        self.histories[device_id] = (
            self._seed_history() if joined_round == 1 else []
        )
        return device_id

    def _seed_history(self) -> List[InteractionRecord]:
        boot = self.config.bootstrap
        if not boot.enabled:
            return []
        rows: List[InteractionRecord] = []
        for server in list(self.servers) + self.past_servers:
            if self.rng_setup.random() >= boot.seen_prob:
                continue
            count = int(
                self.rng_setup.integers(
                    boot.records_per_server[0], boot.records_per_server[1] + 1
                )
            )
            for _ in range(count):
                rows.append(_observed_record(server, boot.label_noise, self.rng_setup))
        return rows

    # per-round phases ---------------------------------------------------

    def _active_devices(self, round_no: int) -> List[str]:
        return sorted(
            d for d, p in self.profiles.items() if p.joined_round <= round_no
        )

    def _device_trusts(self, round_no: int, active: Sequence[str]) -> Dict[str, float]:
        scores = {}
        for device_id in active:
            profile = self.profiles[device_id]
            seen = round_no - profile.joined_round + 1
            sliced = {
                feature: ResourceTrace(
                    device_id=device_id,
                    feature=feature,
                    samples=trace.samples[:seen],
                )
                for feature, trace in self.traces[device_id].items()
            }
            scores[device_id] = score_device(device_id, sliced, self.fences).score
        return scores

    def _bootstrap_servers(self, active: Sequence[str]) -> Dict[str, Dict[str, Optional[float]]]:
        """Every device fuses its neighbors' predictions about every server."""
        boot = self.config.bootstrap
        trees = {}
        for device_id in active:
            rows = self.histories[device_id]
            if rows:
                trees[device_id] = build_tree(HistoryDataset(records=tuple(rows)))

        predictions: Dict[str, Dict[str, Prediction]] = {}
        for recommender_id, tree in sorted(trees.items()):
            predictions[recommender_id] = {
                s.server_id: predict(
                    tree, InteractionRecord(server_id=s.server_id, location=s.location)
                )
                for s in self.servers
            }

        trust_maps: Dict[str, Dict[str, Optional[float]]] = {}
        for device_id in active:
            ledger = self.ledgers[device_id]
            trust_map: Dict[str, Optional[float]] = {}
            for server in self.servers:
                neighbor_preds = [
                    (rid, predictions[rid][server.server_id])
                    for rid in sorted(trees)
                    if rid != device_id
                ]
                belief = fuse_recommendations(
                    neighbor_preds, ledger, boot.credibility_cap
                )
                trust_map[server.server_id] = (
                    decide(belief).server_trust if belief is not None else None
                )
            trust_maps[device_id] = trust_map
        return trust_maps

    def _select_trust(
        self,
        active: Sequence[str],
        trust_maps: Mapping[str, Mapping[str, Optional[float]]],
        device_trusts: Mapping[str, float],
    ) -> Dict[str, List[str]]:
        device_prefs = [
            build_device_preferences(d, trust_maps[d]) for d in active
        ]
        server_prefs = [
            build_server_preferences(s.server_id, dict(device_trusts)) for s in self.servers
        ]
        quotas = {s.server_id: self.config.quota for s in self.servers}
        matching = run_matching(device_prefs, server_prefs, quotas)
        assert find_blocking_pairs(matching, device_prefs, server_prefs, quotas) == []
        return {
            server_id: sorted(devices)
            for server_id, devices in matching.server_to_devices.items()
        }

    def _select_vanilla(self, active: Sequence[str], round_no: int) -> Dict[str, List[str]]:
        selections = {}
        size = min(self.config.quota, len(active))
        for server_index, server in enumerate(self.servers):
            rng = np.random.default_rng(
                [self.config.seed, 3, round_no, server_index]
            )
            picked = rng.choice(len(active), size=size, replace=False)
            selections[server.server_id] = sorted(active[int(i)] for i in picked)
        return selections

    def _train_round(
        self, method: str, round_no: int, selections: Mapping[str, List[str]]
    ) -> Dict[str, float]:
        config = self.config
        method_code = 0 if method == METHOD_TRUST else 1
        accuracies = {}
        for server_index, server in enumerate(self.servers):
            selected = selections.get(server.server_id, [])
            weights = self.global_weights[method][server.server_id]
            updates = []
            for device_id in selected:
                profile = self.profiles[device_id]
                part = profile.partition
                rng = np.random.default_rng(
                    [
                        config.seed,
                        2,
                        round_no,
                        server_index,
                        method_code,
                        self.device_index[device_id],
                    ]
                )
                trained = local_train(
                    weights,
                    self.train_X[part.indices],
                    self.train_y[part.indices],
                    epochs=config.model.epochs,
                    learning_rate=config.model.learning_rate,
                    behavior=profile.behaviors,
                    rng=rng,
                    batch_size=config.model.batch_size,
                    device_id=device_id,
                )
                updates.append((trained, len(part.indices)))
            if updates:
                weights = fedavg(updates)
                self.global_weights[method][server.server_id] = weights
            accuracies[server.server_id] = evaluate(weights, self.test_X, self.test_y)
        return accuracies

    def _record_interactions(
        self, selections: Mapping[str, List[str]], accuracies: Mapping[str, float]
    ) -> None:
        by_id = {s.server_id: s for s in self.servers}
        for server_id in sorted(selections):
            server = by_id[server_id]
            status = (
                TrustStatus.TRUSTWORTHY if server.trustworthy else TrustStatus.UNTRUSTWORTHY
            )
            for device_id in selections[server_id]:
                self.histories[device_id].append(
                    InteractionRecord(
                        server_id=server_id,
                        location=server.location,
                        trust_score=round(accuracies[server_id] * 100.0, 2),
                        trust_status=status,
                    )
                )

    # main loop -----------------------------------------------------------

    def run(self) -> ExperimentResult:
        config = self.config
        log = MetricsLog()
        for round_no in range(1, config.rounds + 1):
            if round_no > 1 and config.new_devices_per_round > 0:
                influx_rng = np.random.default_rng([config.seed, 4, round_no])
                for _ in range(config.new_devices_per_round):
                    untrustworthy = bool(
                        influx_rng.random() < config.untrustworthy_fraction
                    )
                    self._spawn_device(untrustworthy=untrustworthy, joined_round=round_no)

            active = self._active_devices(round_no)
            device_trusts = self._device_trusts(round_no, active)
            if config.bootstrap.enabled:
                trust_maps = self._bootstrap_servers(active)
            else:
                # every server is equally acceptable when bootstrapping is off
                trust_maps = {
                    d: {s.server_id: 1.0 for s in self.servers} for d in active
                }

            selections = {
                METHOD_TRUST: self._select_trust(active, trust_maps, device_trusts),
                METHOD_VANILLA: self._select_vanilla(active, round_no),
            }
            for method in (METHOD_TRUST, METHOD_VANILLA):
                accuracies = self._train_round(method, round_no, selections[method])
                for server in self.servers:
                    selected = selections[method].get(server.server_id, [])
                    untrusted = sum(
                        1 for d in selected if self.profiles[d].untrustworthy
                    )
                    log.append(
                        MetricsRow(
                            round=round_no,
                            server_id=server.server_id,
                            method=method,
                            accuracy=accuracies[server.server_id],
                            untrusted_selected=untrusted,
                            selected_ids=tuple(selected),
                        )
                    )
                if method == METHOD_TRUST:
                    self._record_interactions(selections[METHOD_TRUST], accuracies)

        bootstrap_eval = None
        if config.bootstrap.enabled and config.bootstrap.eval_servers > 0:
            corpus = generate_bootstrap_corpus(
                n_servers=config.bootstrap.eval_servers,
                n_recommenders=config.bootstrap.eval_recommenders,
                seen_prob=config.bootstrap.seen_prob,
                label_noise=config.bootstrap.label_noise,
                records_per_server=config.bootstrap.records_per_server,
                rng=np.random.default_rng([config.seed, 5]),
            )
            bootstrap_eval = evaluate_bootstrap(
                corpus,
                initial_credibility=config.bootstrap.initial_credibility,
                credibility_cap=config.bootstrap.credibility_cap,
            )
        return ExperimentResult(
            config=config,
            metrics=log,
            ledgers=self.ledgers,
            profiles=self.profiles,
            bootstrap_eval=bootstrap_eval,
        )


def run_experiment(
    config: ExperimentConfig, dataset: Optional[Dataset] = None
) -> ExperimentResult:
    """Run the paired trust/baseline experiment described by the config."""
    return _Simulation(config, dataset=dataset).run()
