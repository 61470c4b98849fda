# src/libs/complexity.py

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from libs.core import ConsumptionMode, InstanceSpec, RewardKind, RewardModel
from libs.errors import InstanceError, NoUniqueBestArmError

logger = logging.getLogger(__name__)

# ================================
# Constants
# ================================

E2 = math.e**2
F_KNOT = math.exp(-2.0)
THM3_PREFACTOR = 1.0 / 6.0
THM3_RATE = 122.0

# ================================
# Gaps and Orderings
# ================================


def _reward_order(rewards: Sequence[float]) -> np.ndarray:
    """Arm positions sorted by reward, best first; equal rewards keep index order."""
    return np.argsort(-np.asarray(rewards, dtype=float), kind="stable")


def _check_inputs(rewards: Sequence[float], consumptions: Sequence[float]) -> None:
    if len(rewards) < 2:
        raise InstanceError("complexity measures need at least two arms")
    if len(consumptions) != len(rewards):
        raise InstanceError(
            f"got {len(consumptions)} consumptions for {len(rewards)} arms"
        )
    if any(not 0 < d <= 1 for d in consumptions):
        raise InstanceError("mean consumptions must lie in (0, 1]")


def gaps(rewards: Sequence[float]) -> List[float]:
    """
    Reward gaps in reward-sorted order, with Delta_1 defined as Delta_2.

    Args:
        rewards (Sequence[float]): Mean reward of every arm.

    Returns:
        List[float]: Delta_(1..K), non-decreasing from the second entry on.

    Raises:
        NoUniqueBestArmError: The maximum reward is tied.
    """
    if len(rewards) < 2:
        raise InstanceError("gaps need at least two arms")
    ordered = np.sort(np.asarray(rewards, dtype=float))[::-1]
    if ordered[0] == ordered[1]:
        raise NoUniqueBestArmError(f"no unique best arm: top reward {ordered[0]} is tied")
    deltas = ordered[0] - ordered
    deltas[0] = deltas[1]
    return deltas.tolist()


def sorted_consumptions(consumptions: Sequence[float]) -> List[float]:
    """d_(1) >= d_(2) >= ... >= d_(K)."""
    return sorted((float(d) for d in consumptions), reverse=True)


# ================================
# Effective Consumption
# ================================


def f_effective(d: float) -> float:
    """
    Effective consumption of a Bernoulli(d) resource draw.

    e^2 * d on [e^-2, 1] and 2 / ln(1/d) below the knot; the branches meet at 1.

    Raises:
        ValueError: d outside (0, 1].
    """
    if not 0 < d <= 1:
        raise ValueError(f"f is defined on (0, 1], got {d}")
    if d >= F_KNOT:
        return E2 * d
    return 2.0 / (-math.log(d))


# ================================
# Hardness Measures
# ================================


def _h2(deltas: Sequence[float], weights: Sequence[float]) -> float:
    prefix = np.cumsum(np.asarray(weights, dtype=float))
    delta = np.asarray(deltas, dtype=float)
    return float(np.max(prefix[1:] / delta[1:] ** 2))


def h2_det(rewards: Sequence[float], consumptions: Sequence[float]) -> float:
    """max_{k>=2} (sum_{j<=k} d_(j)) / Delta_k^2 for one resource."""
    _check_inputs(rewards, consumptions)
    return _h2(gaps(rewards), sorted_consumptions(consumptions))


def h2_sto(rewards: Sequence[float], consumptions: Sequence[float]) -> float:
    """As h2_det with f(d_(j)) in place of d_(j)."""
    _check_inputs(rewards, consumptions)
    effective = [f_effective(d) for d in sorted_consumptions(consumptions)]
    return _h2(gaps(rewards), effective)


def h1_det(rewards: Sequence[float], consumptions: Sequence[float]) -> float:
    """sum_k d_(k) / Delta_(k)^2 for one resource."""
    _check_inputs(rewards, consumptions)
    d = np.asarray(sorted_consumptions(consumptions))
    delta = np.asarray(gaps(rewards))
    return float(np.sum(d / delta**2))


def tilde_h_det(rewards: Sequence[float], consumptions: Sequence[float]) -> Tuple[float, float]:
    """
    Unsorted variants of H1 and H2: each arm keeps its own consumption,
    arms taken in reward order.

    Returns:
        Tuple[float, float]: (tilde_h1, tilde_h2).
    """
    _check_inputs(rewards, consumptions)
    order = _reward_order(rewards)
    d = np.asarray(consumptions, dtype=float)[order]
    delta = np.asarray(gaps(rewards))
    tilde_h1 = float(np.sum(d / delta**2))
    tilde_h2 = _h2(delta, d)
    return tilde_h1, tilde_h2


def gamma(capacities: Sequence[float], h_values: Sequence[float]) -> float:
    """Bottleneck rate min_l C_l / H_l."""
    if len(capacities) != len(h_values):
        raise ValueError(f"{len(capacities)} capacities but {len(h_values)} H values")
    if not capacities:
        raise ValueError("need at least one resource")
    return min(c / h for c, h in zip(capacities, h_values))


# ================================
# Bound Expressions
# ================================


def thm1_expression(arm_count: int, gamma_det: float) -> float:
    """ceil(log2 K) * K * exp(-gamma_det / (4 ceil(log2 K)))."""
    if arm_count <= 1:
        return 0.0
    q = math.ceil(math.log2(arm_count))
    return q * arm_count * math.exp(-gamma_det / (4 * q))


def thm2_expression(arm_count: int, resource_count: int, gamma_sto: float) -> float:
    """7 L K log2(K) * exp(-gamma_sto / (8 ceil(log2 K)))."""
    if arm_count <= 1:
        return 0.0
    q = math.ceil(math.log2(arm_count))
    return 7 * resource_count * arm_count * math.log2(arm_count) * math.exp(-gamma_sto / (8 * q))


def _per_resource(instance: InstanceSpec, measure) -> List[float]:
    means = instance.reward_means
    return [
        measure(means, instance.consumption_column(l))
        for l in range(1, instance.resource_count + 1)
    ]


def gamma_det(instance: InstanceSpec) -> float:
    return gamma(instance.capacities, _per_resource(instance, h2_det))


def gamma_sto(instance: InstanceSpec) -> float:
    return gamma(instance.capacities, _per_resource(instance, h2_sto))


def thm1_bound(instance: InstanceSpec) -> float:
    """
    Failure-probability upper bound of SH-RR under deterministic consumption.

    Raises:
        InstanceError: The instance does not use deterministic consumption.
    """
    if instance.arm_count == 1:
        return 0.0
    if instance.mode is not ConsumptionMode.DETERMINISTIC:
        raise InstanceError("the deterministic bound needs a deterministic-consumption instance")
    return thm1_expression(instance.arm_count, gamma_det(instance))


def thm2_bound(instance: InstanceSpec) -> float:
    """Failure-probability upper bound of SH-RR under stochastic consumption."""
    if instance.arm_count == 1:
        return 0.0
    return thm2_expression(instance.arm_count, instance.resource_count, gamma_sto(instance))


def thm3_lower_bound(instance: InstanceSpec) -> float:
    """(1/6) exp(-122 gamma_det): the deterministic lower-bound expression."""
    if instance.arm_count == 1:
        return 0.0
    return THM3_PREFACTOR * math.exp(-THM3_RATE * gamma_det(instance))


# ================================
# Report
# ================================


@dataclass
class ComplexityReport:
    arm_count: int
    resource_count: int
    mode: str
    gaps: List[float]
    sorted_consumptions: List[List[float]]
    h2_det: List[float]
    h2_sto: List[float]
    h1_det: List[float]
    tilde_h1_det: List[float]
    tilde_h2_det: List[float]
    gamma_det: Optional[float]
    gamma_sto: Optional[float]
    thm1_bound: Optional[float]
    thm2_bound: float
    thm3_lower_bound: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def complexity_report(instance: InstanceSpec) -> ComplexityReport:
    """
    Every complexity measure and bound of an instance.

    thm1_bound is None for stochastic-consumption instances. A single-arm
    instance has empty per-resource measures and zero bounds.
    """
    K, L = instance.arm_count, instance.resource_count
    columns = [instance.consumption_column(l) for l in range(1, L + 1)]
    report = ComplexityReport(
        arm_count=K,
        resource_count=L,
        mode=instance.mode.value,
        gaps=[],
        sorted_consumptions=[sorted_consumptions(c) for c in columns],
        h2_det=[],
        h2_sto=[],
        h1_det=[],
        tilde_h1_det=[],
        tilde_h2_det=[],
        gamma_det=None,
        gamma_sto=None,
        thm1_bound=0.0,
        thm2_bound=0.0,
        thm3_lower_bound=0.0,
    )
    if K == 1:
        return report

    means = instance.reward_means
    report.gaps = gaps(means)
    report.h2_det = [h2_det(means, c) for c in columns]
    report.h2_sto = [h2_sto(means, c) for c in columns]
    report.h1_det = [h1_det(means, c) for c in columns]
    tildes = [tilde_h_det(means, c) for c in columns]
    report.tilde_h1_det = [t[0] for t in tildes]
    report.tilde_h2_det = [t[1] for t in tildes]
    report.gamma_det = gamma(instance.capacities, report.h2_det)
    report.gamma_sto = gamma(instance.capacities, report.h2_sto)
    report.thm2_bound = thm2_expression(K, L, report.gamma_sto)
    report.thm3_lower_bound = thm3_lower_bound(instance)

    if instance.mode is ConsumptionMode.DETERMINISTIC:
        report.thm1_bound = thm1_expression(K, report.gamma_det)
        if report.thm1_bound > 1:
            logger.warning(f"Deterministic bound {report.thm1_bound:.4g} exceeds 1 (vacuous).")
    else:
        report.thm1_bound = None
    if report.thm2_bound > 1:
        logger.warning(f"Stochastic bound {report.thm2_bound:.4g} exceeds 1 (vacuous).")
    return report


# ================================
# Lower-Bound Instance Families
# ================================


def _check_lb_parameters(
    rewards: Sequence[float], sorted_consumption: Sequence[Sequence[float]], flip: int
) -> None:
    K = len(rewards)
    if K < 2:
        raise InstanceError("lower-bound construction needs at least two arms")
    if not math.isclose(rewards[0], 0.5, abs_tol=1e-12):
        raise InstanceError(f"r_1 must equal 1/2, got {rewards[0]}")
    if any(a < b for a, b in zip(rewards, rewards[1:])):
        raise InstanceError("rewards must be non-increasing")
    if rewards[-1] < 0.25:
        raise InstanceError(f"r_K must be at least 1/4, got {rewards[-1]}")
    if not sorted_consumption:
        raise InstanceError("need consumptions for at least one resource")
    for l, row in enumerate(sorted_consumption, start=1):
        if len(row) != K:
            raise InstanceError(f"resource {l} lists {len(row)} consumptions, expected {K}")
        if any(not 0 < d <= 1 for d in row):
            raise InstanceError(f"resource {l} consumptions must lie in (0, 1]")
        if any(a < b for a, b in zip(row, row[1:])):
            raise InstanceError(f"resource {l} consumptions must be non-increasing")
    if not 1 <= flip <= K:
        raise InstanceError(f"flip index {flip} out of range 1..{K}")


def _flipped_means(rewards: Sequence[float], flip: int) -> List[float]:
    return [1.0 - r if k == flip else float(r) for k, r in enumerate(rewards, start=1)]


def _swapped_consumptions(sorted_consumption: Sequence[Sequence[float]]) -> List[List[float]]:
    """Per-arm K x L matrix with arms 1 and 2 swapped relative to the sorted lists."""
    K = len(sorted_consumption[0])
    rows = []
    for k in range(K):
        source = {0: 1, 1: 0}.get(k, k)
        rows.append([float(column[source]) for column in sorted_consumption])
    return rows


def build_det_lb_instance(
    rewards: Sequence[float],
    sorted_consumption: Sequence[Sequence[float]],
    flip: int,
    capacities: Sequence[float],
) -> InstanceSpec:
    """
    Instance Q^(i) of the deterministic lower-bound family.

    Args:
        rewards (Sequence[float]): 1/2 = r_1 >= ... >= r_K >= 1/4.
        sorted_consumption (Sequence[Sequence[float]]): One non-increasing list of K
            consumptions per resource.
        flip (int): Arm i whose mean becomes 1 - r_i.
        capacities (Sequence[float]): C_l per resource.

    Returns:
        InstanceSpec: Bernoulli rewards, deterministic consumption.
    """
    _check_lb_parameters(rewards, sorted_consumption, flip)
    return InstanceSpec(
        capacities=tuple(capacities),
        rewards=tuple(RewardModel(RewardKind.BERNOULLI, r) for r in _flipped_means(rewards, flip)),
        consumptions=tuple(tuple(row) for row in _swapped_consumptions(sorted_consumption)),
        mode=ConsumptionMode.DETERMINISTIC,
    )


def build_sto_lb_instance(
    rewards: Sequence[float],
    sorted_consumption: Sequence[Sequence[float]],
    flip: int,
    capacities: Sequence[float],
) -> InstanceSpec:
    """Stochastic counterpart: unit-variance Gaussian rewards, Bern(d) consumption."""
    _check_lb_parameters(rewards, sorted_consumption, flip)
    return InstanceSpec(
        capacities=tuple(capacities),
        rewards=tuple(RewardModel(RewardKind.GAUSSIAN, r) for r in _flipped_means(rewards, flip)),
        consumptions=tuple(tuple(row) for row in _swapped_consumptions(sorted_consumption)),
        mode=ConsumptionMode.BERNOULLI,
    )


def build_lb_family(
    kind: str,
    rewards: Sequence[float],
    sorted_consumption: Sequence[Sequence[float]],
    capacities: Sequence[float],
) -> List[InstanceSpec]:
    """All K instances Q^(1), ..., Q^(K) of one construction ("det" or "sto")."""
    builders = {"det": build_det_lb_instance, "sto": build_sto_lb_instance}
    if kind not in builders:
        raise InstanceError(f"unknown lower-bound family {kind!r}")
    builder = builders[kind]
    return [
        builder(rewards, sorted_consumption, i, capacities)
        for i in range(1, len(rewards) + 1)
    ]


def build_counterexample(arm_count: int, capacity: float) -> InstanceSpec:
    """
    Single-resource instance on which the unsorted H2 refinement cannot hold.

    d_1 = 2^-(K-2), d_k = 2^-(K-k) for k >= 2; r_1 = 1/2, r_k = 1/2 - 2^((k-K-4)/2).
    Its unsorted measures are exactly tilde_h2 = 32 and tilde_h1 = 16K.
    """
    K = arm_count
    if K < 2:
        raise InstanceError("the counterexample needs at least two arms")

    consumptions = [2.0 ** -(K - 2)] + [2.0 ** -(K - k) for k in range(2, K + 1)]
    means = [0.5] + [0.5 - 2.0 ** ((k - K - 4) / 2) for k in range(2, K + 1)]
    return InstanceSpec(
        capacities=(float(capacity),),
        rewards=tuple(RewardModel(RewardKind.BERNOULLI, r) for r in means),
        consumptions=tuple((d,) for d in consumptions),
        mode=ConsumptionMode.DETERMINISTIC,
    )
