"""IQR-based trust scoring for client devices.

A federated server watches each client's per-round resource utilization
(RAM, CPU, bandwidth) and compares it against a reference sample drawn
from previously observed clients. Samples falling outside the Tukey
fences of the reference are accumulated into over/under-utilization
statistics, which collapse into a single trust score in [0, 1]. Devices
that never stray outside the fences score 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

FENCE_MULTIPLIER = 1.5


class ResourceFeature(Enum):
    """The monitored resource kinds (units: MB, MIPS, Mbps)."""

    RAM = "ram"
    CPU = "cpu"
    BANDWIDTH = "bandwidth"


@dataclass(frozen=True)
class ReferenceSample:
    """Utilization values of previously observed clients for one feature."""

    feature: ResourceFeature
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class ResourceTrace:
    """One device's utilization samples for one feature, indexed by round."""

    device_id: str
    feature: ResourceFeature
    samples: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(float(v) for v in self.samples))


@dataclass(frozen=True)
class Fences:
    """Quartiles and Tukey fences of a reference sample."""

    q1: float
    q2: float
    q3: float
    iqr: float
    lower: float
    upper: float


@dataclass(frozen=True)
class FeatureAnomaly:
    """Over/under-utilization statistics of one device on one feature.

    ``over_ratio`` compares the upper fence to the average overshoot
    (upper/avg, approaching 1 as behavior nears the fence) and is None
    when no sample exceeded the fence; ``under_ratio`` mirrors it for
    the lower fence.
    """

    feature: ResourceFeature
    over_total: float = 0.0
    under_total: float = 0.0
    over_count: int = 0
    under_count: int = 0
    over_avg: Optional[float] = None
    under_avg: Optional[float] = None
    over_ratio: Optional[float] = None
    under_ratio: Optional[float] = None

    @property
    def clean(self) -> bool:
        return self.over_count == 0 and self.under_count == 0


@dataclass(frozen=True)
class DeviceTrust:
    """Trust score of one device, in [0, 1]."""

    device_id: str
    score: float


def _interpolated_quantile(sorted_values: Sequence[float], p: float) -> float:
    """Linear interpolation at fractional rank (n-1)*p over a sorted sample."""
    rank = (len(sorted_values) - 1) * p
    lo = math.floor(rank)
    hi = math.ceil(rank)
    if lo == hi:
        return sorted_values[lo]
    frac = rank - lo
    return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo])


def compute_fences(sample: ReferenceSample) -> Fences:
    """Compute quartiles and Tukey fences for a reference sample.

    The lower fence is q1 - 1.5*IQR and the upper fence q3 + 1.5*IQR.
    Requires at least 4 values so the quartiles are meaningful.
    """
    if len(sample.values) < 4:
        raise ValueError(
            f"reference sample for {sample.feature.value} has "
            f"{len(sample.values)} values; need at least 4"
        )
    if not all(math.isfinite(v) for v in sample.values):
        raise ValueError(f"reference sample for {sample.feature.value} has non-finite values")
    ordered = sorted(sample.values)
    q1 = _interpolated_quantile(ordered, 0.25)
    q2 = _interpolated_quantile(ordered, 0.50)
    q3 = _interpolated_quantile(ordered, 0.75)
    iqr = q3 - q1
    return Fences(
        q1=q1,
        q2=q2,
        q3=q3,
        iqr=iqr,
        lower=q1 - FENCE_MULTIPLIER * iqr,
        upper=q3 + FENCE_MULTIPLIER * iqr,
    )


def score_feature(trace: ResourceTrace, fences: Fences) -> FeatureAnomaly:
    """Accumulate fence violations of one trace into anomaly statistics.

    Samples above the upper fence add to the over-utilization totals,
    samples below the lower fence to the under-utilization totals.
    A trace that stays inside the fences yields zero counts.
    """
    over_total = under_total = 0.0
    over_count = under_count = 0
    for x in trace.samples:
        if x > fences.upper:
            over_total += x
            over_count += 1
        elif x < fences.lower:
            under_total += x
            under_count += 1

    over_avg = over_ratio = None
    if over_count > 0:
        over_avg = over_total / over_count
        over_ratio = fences.upper / over_avg
    under_avg = under_ratio = None
    if under_count > 0:
        under_avg = under_total / under_count
        # A non-positive lower fence cannot be undershot by non-negative
        # utilization, so the ratio is only defined for a positive fence.
        if fences.lower > 0:
            under_ratio = under_avg / fences.lower
    return FeatureAnomaly(
        feature=trace.feature,
        over_total=over_total,
        under_total=under_total,
        over_count=over_count,
        under_count=under_count,
        over_avg=over_avg,
        under_avg=under_avg,
        over_ratio=over_ratio,
        under_ratio=under_ratio,
    )


def device_trust(device_id: str, anomalies: Iterable[FeatureAnomaly]) -> DeviceTrust:
    """Collapse per-feature anomaly statistics into one trust score.

    The score averages the defined over/under ratios across features;
    each defined ratio lies in (0, 1], so the average does too. A device
    with no anomalies on any feature scores 1.0.
    """
    ratio_sum = 0.0
    ratio_count = 0
    for anomaly in anomalies:
        if anomaly.over_ratio is not None:
            ratio_sum += anomaly.over_ratio
            ratio_count += 1
        if anomaly.under_ratio is not None:
            ratio_sum += anomaly.under_ratio
            ratio_count += 1
    if ratio_count == 0:
        return DeviceTrust(device_id=device_id, score=1.0)
    return DeviceTrust(device_id=device_id, score=ratio_sum / ratio_count)


def score_device(
    device_id: str,
    traces: Mapping[ResourceFeature, ResourceTrace],
    fences: Mapping[ResourceFeature, Fences],
) -> DeviceTrust:
    """Score a device from its traces against per-feature fences."""
    anomalies = [
        score_feature(trace, fences[feature]) for feature, trace in sorted(
            traces.items(), key=lambda item: item[0].value
        )
    ]
    return device_trust(device_id, anomalies)
