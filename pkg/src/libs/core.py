# src/libs/core.py

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence, Set, Tuple, Union

import numpy as np

from libs.errors import InstanceError, NonTerminatingStrategyError, StrategyError

logger = logging.getLogger(__name__)

# ================================
# Constants
# ================================

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
PULL_CAP_FACTOR = 10
# relative slack for float accumulation in capacity checks
CAPACITY_RTOL = 1e-9

# ================================
# Instance Model
# ================================


class RewardKind(str, Enum):
    BERNOULLI = "bernoulli"
    GAUSSIAN = "gaussian"


class ConsumptionMode(str, Enum):
    """How a pull's resource consumption is realized."""

    DETERMINISTIC = "deterministic"
    BERNOULLI = "bernoulli"  # independent Bern(d) per resource
    COUPLED = "coupled"  # one uniform draw drives reward and all consumptions


@dataclass(frozen=True)
class RewardModel:
    kind: RewardKind
    mean: float


@dataclass(frozen=True)
class InstanceSpec:
    """
    Latent description of a resource-constrained best arm identification problem.

    Arms are numbered 1..K in every public interface. `consumptions[k - 1][l - 1]`
    is the mean consumption of resource l when arm k is pulled.
    """

    capacities: Tuple[float, ...]
    rewards: Tuple[RewardModel, ...]
    consumptions: Tuple[Tuple[float, ...], ...]
    mode: ConsumptionMode = ConsumptionMode.DETERMINISTIC

    def __post_init__(self) -> None:
        object.__setattr__(self, "capacities", tuple(float(c) for c in self.capacities))
        object.__setattr__(self, "rewards", tuple(self.rewards))
        object.__setattr__(
            self, "consumptions", tuple(tuple(float(d) for d in row) for row in self.consumptions)
        )
        object.__setattr__(self, "mode", ConsumptionMode(self.mode))
        self._validate()

    def _validate(self) -> None:
        K, L = len(self.rewards), len(self.capacities)
        if K < 1:
            raise InstanceError("instance needs at least one arm")
        if L < 1:
            raise InstanceError("instance needs at least one resource")
        if any(not c > 0 for c in self.capacities):
            raise InstanceError(f"capacities must be positive, got {list(self.capacities)}")
        if len(self.consumptions) != K:
            raise InstanceError(f"consumptions has {len(self.consumptions)} rows, expected {K}")

        for k, row in enumerate(self.consumptions, start=1):
            if len(row) != L:
                raise InstanceError(f"consumptions row {k} has {len(row)} entries, expected {L}")
            for d in row:
                if not 0 < d <= 1:
                    raise InstanceError(f"mean consumption of arm {k} must lie in (0, 1], got {d}")

        for k, model in enumerate(self.rewards, start=1):
            if not isinstance(model, RewardModel):
                raise InstanceError(f"reward model of arm {k} is not a RewardModel")
            if model.kind is RewardKind.BERNOULLI and not 0 <= model.mean <= 1:
                raise InstanceError(f"Bernoulli mean of arm {k} must lie in [0, 1], got {model.mean}")
            if not np.isfinite(model.mean):
                raise InstanceError(f"reward mean of arm {k} is not finite")

        if self.mode is ConsumptionMode.COUPLED and any(
            m.kind is not RewardKind.BERNOULLI for m in self.rewards
        ):
            raise InstanceError("coupled consumption requires Bernoulli rewards for every arm")

    @property
    def arm_count(self) -> int:
        return len(self.rewards)

    @property
    def resource_count(self) -> int:
        return len(self.capacities)

    @property
    def reward_means(self) -> Tuple[float, ...]:
        return tuple(m.mean for m in self.rewards)

    def consumption_column(self, resource: int) -> Tuple[float, ...]:
        """Per-arm mean consumptions of one resource (1-based)."""
        return tuple(row[resource - 1] for row in self.consumptions)

    def best_arms(self) -> Set[int]:
        means = self.reward_means
        top = max(means)
        return {k for k, r in enumerate(means, start=1) if r == top}

    def min_consumption(self) -> float:
        return min(min(row) for row in self.consumptions)


@dataclass(frozen=True)
class Outcome:
    reward: float
    consumptions: Tuple[float, ...]


@dataclass(frozen=True)
class Finished:
    """Returned by select() once a strategy stops on its own."""

    recommendation: int


@dataclass(frozen=True)
class TrialRecord:
    recommended_arm: int
    pulls: int
    total_consumption: Tuple[float, ...]
    correct: bool
    breached: bool


class StrategyContract(Protocol):
    """
    Interaction contract between a strategy and the simulator.

    A strategy is built from the public data (K, L, capacities) only. select()
    returns the next arm (1-based) or Finished; observe() feeds back the outcome
    of that pull; current_recommendation() is the arm it would name right now.
    """

    def select(self) -> Union[int, Finished]: ...

    def observe(self, arm: int, outcome: Outcome) -> None: ...

    def current_recommendation(self) -> int: ...


# ================================
# Sampling
# ================================


def sample_outcome(instance: InstanceSpec, arm: int, rng: np.random.Generator) -> Outcome:
    """
    Draw one pull's outcome from the latent model.

    Args:
        instance (InstanceSpec): Problem instance.
        arm (int): Arm index in 1..K.
        rng (np.random.Generator): Random stream.

    Returns:
        Outcome: Reward and the L-vector of consumptions.

    Raises:
        InstanceError: The arm index is out of range.
    """
    if not 1 <= arm <= instance.arm_count:
        raise InstanceError(f"arm {arm} out of range 1..{instance.arm_count}")

    model = instance.rewards[arm - 1]
    means = instance.consumptions[arm - 1]

    if instance.mode is ConsumptionMode.COUPLED:
        u = rng.random()
        reward = 1.0 if u <= model.mean else 0.0
        return Outcome(reward, tuple(1.0 if u <= d else 0.0 for d in means))

    if model.kind is RewardKind.BERNOULLI:
        reward = 1.0 if rng.random() < model.mean else 0.0
    else:
        reward = float(rng.normal(model.mean, 1.0))

    if instance.mode is ConsumptionMode.DETERMINISTIC:
        return Outcome(reward, means)
    return Outcome(reward, tuple(1.0 if rng.random() < d else 0.0 for d in means))


# ================================
# Seeding
# ================================


def child_seed(master_seed: int, trial_index: int) -> int:
    """Counter-mixed 64-bit seed of one trial (splitmix64 finalizer)."""
    z = (master_seed + trial_index * GOLDEN_GAMMA) & MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK64
    z ^= z >> 31
    return z


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


# ================================
# Simulation Loop
# ================================


def exceeds(total: float, capacity: float) -> bool:
    """Strict breach test: the total is above the capacity beyond rounding error."""
    return total > capacity * (1 + CAPACITY_RTOL)


def pull_cap(instance: InstanceSpec) -> int:
    """
    Safety cap on the number of pulls of one simulated run.

    Random consumption can sit at zero for many pulls before the breaching
    unit arrives, so those modes get one extra unit of headroom per resource.
    """
    budget = sum(instance.capacities)
    if instance.mode is not ConsumptionMode.DETERMINISTIC:
        budget += instance.resource_count
    return int(PULL_CAP_FACTOR * budget / instance.min_consumption())


def simulate(
    instance: InstanceSpec,
    strategy: StrategyContract,
    rng: np.random.Generator,
    max_pulls: Optional[int] = None,
) -> TrialRecord:
    """
    Run one strategy against an instance until it finishes or breaches a capacity.

    A pull that pushes any cumulative consumption strictly above its capacity is
    voided: its outcome is never delivered, its consumption is not counted, and
    the recommendation held before it is returned.

    Args:
        instance (InstanceSpec): Problem instance.
        strategy (StrategyContract): Freshly initialized strategy.
        rng (np.random.Generator): Random stream owned by this run.
        max_pulls (Optional[int], optional): Override of the safety pull cap.

    Returns:
        TrialRecord: The run's recommendation, pull count and consumption.

    Raises:
        NonTerminatingStrategyError: The pull cap was reached.
        StrategyError: The strategy returned an invalid arm.
    """
    K = instance.arm_count
    capacities = instance.capacities
    best = instance.best_arms()
    cap = pull_cap(instance) if max_pulls is None else max_pulls

    totals = [0.0] * instance.resource_count
    pulls = 0

    while True:
        choice = strategy.select()
        if isinstance(choice, Finished):
            return TrialRecord(
                recommended_arm=choice.recommendation,
                pulls=pulls,
                total_consumption=tuple(totals),
                correct=choice.recommendation in best,
                breached=False,
            )

        if not 1 <= choice <= K:
            raise StrategyError(f"strategy selected arm {choice} outside 1..{K}")
        if pulls >= cap:
            raise NonTerminatingStrategyError(f"non-terminating strategy: {pulls} pulls reached the cap")

        held = strategy.current_recommendation()
        outcome = sample_outcome(instance, choice, rng)
        candidate = [t + d for t, d in zip(totals, outcome.consumptions)]

        if any(exceeds(t, c) for t, c in zip(candidate, capacities)):
            logger.debug(f"Pull {pulls + 1} of arm {choice} breaches a capacity; returning arm {held}.")
            return TrialRecord(
                recommended_arm=held,
                pulls=pulls,
                total_consumption=tuple(totals),
                correct=held in best,
                breached=True,
            )

        totals = candidate
        pulls += 1
        strategy.observe(choice, outcome)


# ================================
# Instance Files
# ================================


def instance_to_dict(instance: InstanceSpec) -> Dict[str, Any]:
    return {
        "arm_count": instance.arm_count,
        "resource_count": instance.resource_count,
        "capacities": list(instance.capacities),
        "rewards": [{"kind": m.kind.value, "mean": m.mean} for m in instance.rewards],
        "consumptions": [list(row) for row in instance.consumptions],
        "mode": instance.mode.value,
    }


def instance_from_dict(data: Dict[str, Any]) -> InstanceSpec:
    """
    Build an InstanceSpec from its JSON document form.

    Raises:
        InstanceError: A key is missing or holds an invalid value.
    """
    if not isinstance(data, dict):
        raise InstanceError("instance document must be a JSON object")

    missing = [key for key in ("capacities", "rewards", "consumptions") if key not in data]
    if missing:
        raise InstanceError(f"instance is missing field(s): {', '.join(missing)}")

    try:
        rewards = [
            RewardModel(RewardKind(str(entry["kind"]).lower()), float(entry["mean"]))
            for entry in data["rewards"]
        ]
    except (KeyError, TypeError, ValueError) as e:
        raise InstanceError(f"invalid 'rewards' entry: {e}") from e

    try:
        mode = ConsumptionMode(str(data.get("mode", "deterministic")).lower())
    except ValueError as e:
        raise InstanceError(f"invalid 'mode': {data.get('mode')!r}") from e

    try:
        instance = InstanceSpec(
            capacities=tuple(data["capacities"]),
            rewards=tuple(rewards),
            consumptions=tuple(tuple(row) for row in data["consumptions"]),
            mode=mode,
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, InstanceError):
            raise
        raise InstanceError(f"invalid instance values: {e}") from e

    for key, actual in (("arm_count", instance.arm_count), ("resource_count", instance.resource_count)):
        if key in data and int(data[key]) != actual:
            raise InstanceError(f"'{key}' is {data[key]} but the arrays describe {actual}")
    return instance


def load_instance(path: Union[str, Path]) -> InstanceSpec:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as file:
            data = json.load(file)
    except FileNotFoundError as e:
        raise InstanceError(f"instance file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise InstanceError(f"{path}: line {e.lineno}: {e.msg}") from e

    logger.info(f"Loaded instance from '{path}'.")
    return instance_from_dict(data)


def save_instance(instance: InstanceSpec, path: Union[str, Path]) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(instance_to_dict(instance), file, indent=2)
        file.write("\n")
    logger.info(f"Instance written to '{path}'.")


def bernoulli_instance(
    means: Sequence[float],
    consumptions: Sequence[Sequence[float]],
    capacities: Sequence[float],
    mode: ConsumptionMode = ConsumptionMode.DETERMINISTIC,
) -> InstanceSpec:
    """Shorthand for an instance whose arms all have Bernoulli rewards."""
    return InstanceSpec(
        capacities=tuple(capacities),
        rewards=tuple(RewardModel(RewardKind.BERNOULLI, float(r)) for r in means),
        consumptions=tuple(tuple(row) for row in consumptions),
        mode=mode,
    )


@dataclass
class EmpiricalStats:
    """Running per-arm reward sums and pull counts (arms 1-based)."""

    arm_count: int
    sums: List[float] = field(init=False)
    counts: List[int] = field(init=False)

    def __post_init__(self) -> None:
        self.sums = [0.0] * self.arm_count
        self.counts = [0] * self.arm_count

    def add(self, arm: int, reward: float) -> None:
        self.sums[arm - 1] += reward
        self.counts[arm - 1] += 1

    def mean(self, arm: int) -> float:
        # max{n, 1} denominator: never-pulled arms have mean 0
        return self.sums[arm - 1] / max(self.counts[arm - 1], 1)

    def leader(self, arms: Optional[Sequence[int]] = None) -> int:
        """Arm with the highest empirical mean; ties go to the smaller index."""
        candidates = range(1, self.arm_count + 1) if arms is None else arms
        best_arm, best_mean = None, None
        for arm in sorted(candidates):
            m = self.mean(arm)
            if best_mean is None or m > best_mean:
                best_arm, best_mean = arm, m
        return best_arm
