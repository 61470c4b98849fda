# src/libs/baselines.py

import logging
import math
from collections import deque
from dataclasses import dataclass, fields
from typing import Any, Deque, List, Mapping, Optional, Sequence, Tuple

from libs.core import EmpiricalStats, Outcome
from libs.errors import ConfigError, StrategyError
from libs.shrr import halve, phase_count

logger = logging.getLogger(__name__)

# ================================
# Parameters
# ================================


@dataclass(frozen=True)
class BaselineParams:
    ucb_exploration: float = 2.0
    atlucb_delta1: float = 0.01
    atlucb_alpha: float = 0.99
    atlucb_epsilon: float = 0.0
    dsh_initial_budget: Optional[int] = None  # None means K * ceil(log2 K)

    def __post_init__(self) -> None:
        if not self.ucb_exploration > 0:
            raise ConfigError(f"ucb_exploration must be positive, got {self.ucb_exploration}")
        if not 0 < self.atlucb_delta1 < 1:
            raise ConfigError(f"atlucb_delta1 must lie in (0, 1), got {self.atlucb_delta1}")
        if not 0 < self.atlucb_alpha < 1:
            raise ConfigError(f"atlucb_alpha must lie in (0, 1), got {self.atlucb_alpha}")
        if not self.atlucb_epsilon >= 0:
            raise ConfigError(f"atlucb_epsilon must be nonnegative, got {self.atlucb_epsilon}")
        if self.dsh_initial_budget is not None and (
            isinstance(self.dsh_initial_budget, bool)
            or not isinstance(self.dsh_initial_budget, int)
            or self.dsh_initial_budget < 1
        ):
            raise ConfigError(
                f"dsh_initial_budget must be a positive integer, got {self.dsh_initial_budget!r}"
            )

    @classmethod
    def from_mapping(cls, values: Optional[Mapping[str, Any]]) -> "BaselineParams":
        """
        Build parameters from a config mapping, rejecting unknown keys.

        Raises:
            ConfigError: Unknown key or out-of-range value.
        """
        values = dict(values or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown baseline parameter(s): {', '.join(unknown)}")
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(str(e)) from e


# ================================
# Common Machinery
# ================================


class AnytimeStrategy:
    """
    Shared bookkeeping of the anytime baselines: empirical statistics and
    the pending-selection check. Subclasses implement _next_arm().
    """

    name = "anytime"

    def __init__(self, arm_count: int, resource_count: int, capacities: Sequence[float]) -> None:
        if arm_count < 1:
            raise StrategyError("a strategy needs at least one arm")
        self.arm_count = arm_count
        self.resource_count = resource_count
        self.capacities = tuple(capacities)
        self.stats = EmpiricalStats(arm_count)
        self.total_pulls = 0
        self._pending: Optional[int] = None

    def select(self) -> int:
        if self._pending is not None:
            raise StrategyError(f"arm {self._pending} was selected but never observed")
        self._pending = self._next_arm()
        return self._pending

    def observe(self, arm: int, outcome: Outcome) -> None:
        if arm != self._pending:
            raise StrategyError(f"observed arm {arm} but the pending selection is {self._pending}")
        self._pending = None
        self.stats.add(arm, outcome.reward)
        self.total_pulls += 1
        self._after_observe(arm, outcome)

    def current_recommendation(self) -> int:
        return self.stats.leader()

    def _next_arm(self) -> int:
        raise NotImplementedError

    def _after_observe(self, arm: int, outcome: Outcome) -> None:
        pass


# ================================
# Uniform Sampling
# ================================


class UniformStrategy(AnytimeStrategy):
    """Cyclic pulls 1, 2, ..., K, 1, ...; recommends the empirical leader."""

    name = "uniform"

    def _next_arm(self) -> int:
        return self.total_pulls % self.arm_count + 1


# ================================
# UCB
# ================================


class UcbStrategy(AnytimeStrategy):
    """UCB1-style index r_hat + sqrt(c ln t / n) after one initial pull per arm."""

    name = "ucb"

    def __init__(
        self,
        arm_count: int,
        resource_count: int,
        capacities: Sequence[float],
        params: Optional[BaselineParams] = None,
    ) -> None:
        super().__init__(arm_count, resource_count, capacities)
        self.exploration = (params or BaselineParams()).ucb_exploration

    def index(self, arm: int) -> float:
        n = self.stats.counts[arm - 1]
        if n == 0:
            return math.inf
        t = max(self.total_pulls, 1)
        return self.stats.mean(arm) + math.sqrt(self.exploration * math.log(t) / n)

    def _next_arm(self) -> int:
        if self.total_pulls < self.arm_count:
            return self.total_pulls + 1

        best_arm, best_index = 1, -math.inf
        for arm in range(1, self.arm_count + 1):
            value = self.index(arm)
            if value > best_index:
                best_arm, best_index = arm, value
        return best_arm


# ================================
# Anytime LUCB
# ================================


class AtLucbStrategy(AnytimeStrategy):
    """
    Anytime LUCB with stage-wise confidence delta_s = delta1 * alpha^(s-1).

    Every round pulls the empirical leader and the challenger with the highest
    upper confidence bound. At the start of a round the stage advances to the
    smallest s at which leader and challenger are no longer separated.
    """

    name = "atlucb"
    MAX_STAGE_STEPS = 64

    def __init__(
        self,
        arm_count: int,
        resource_count: int,
        capacities: Sequence[float],
        params: Optional[BaselineParams] = None,
    ) -> None:
        super().__init__(arm_count, resource_count, capacities)
        params = params or BaselineParams()
        self.log_delta1 = math.log(params.atlucb_delta1)
        self.log_alpha = math.log(params.atlucb_alpha)
        self.epsilon = params.atlucb_epsilon
        self.stage = 1
        self._round: Deque[int] = deque()

    def delta(self, stage: int) -> float:
        return math.exp(self.log_delta1 + (stage - 1) * self.log_alpha)

    def deviation(self, arm: int, stage: int, t: int) -> float:
        n = self.stats.counts[arm - 1]
        if n == 0:
            return math.inf
        # log(5 K t^4 / (4 delta_s)), expanded so tiny delta_s cannot underflow
        log_term = (
            math.log(5 * self.arm_count / 4)
            + 4 * math.log(t)
            - self.log_delta1
            - (stage - 1) * self.log_alpha
        )
        return math.sqrt(log_term / (2 * n))

    def pair(self, stage: int, t: int) -> Tuple[int, int]:
        """Empirical leader and its strongest challenger by upper bound."""
        leader = self.stats.leader()
        challenger, best_ucb = None, -math.inf
        for arm in range(1, self.arm_count + 1):
            if arm == leader:
                continue
            ucb = self.stats.mean(arm) + self.deviation(arm, stage, t)
            if challenger is None or ucb > best_ucb:
                challenger, best_ucb = arm, ucb
        return leader, challenger

    def separated(self, stage: int, t: int) -> bool:
        leader, challenger = self.pair(stage, t)
        lcb = self.stats.mean(leader) - self.deviation(leader, stage, t)
        ucb = self.stats.mean(challenger) + self.deviation(challenger, stage, t)
        return lcb > ucb - self.epsilon

    def _advance_stage(self, t: int) -> None:
        if not self.separated(self.stage, t):
            return

        # exponential then binary search for the first stage that is not separated
        low, step = self.stage, 1
        high = low + step
        for _ in range(self.MAX_STAGE_STEPS):
            if not self.separated(high, t):
                break
            low, step = high, step * 2
            high = low + step
        while high - low > 1:
            mid = (low + high) // 2
            if self.separated(mid, t):
                low = mid
            else:
                high = mid

        logger.debug(f"AT-LUCB stage {self.stage} -> {high} at t={t}.")
        self.stage = high

    def _next_arm(self) -> int:
        if self.arm_count == 1:
            return 1
        if not self._round:
            t = max(self.total_pulls, 1)
            self._advance_stage(t)
            self._round.extend(self.pair(self.stage, t))
        return self._round.popleft()


# ================================
# Sequential Halving with Doubling
# ================================


class DshStrategy(AnytimeStrategy):
    """
    Sequential Halving restarted with budgets B, 2B, 4B, ...

    Each run splits its pull budget evenly over ceil(log2 K) phases and halves the
    survivors by within-run means. The recommendation is the winner of the last
    completed run, or the overall empirical leader before any run completes.
    """

    name = "dsh"

    def __init__(
        self,
        arm_count: int,
        resource_count: int,
        capacities: Sequence[float],
        params: Optional[BaselineParams] = None,
    ) -> None:
        super().__init__(arm_count, resource_count, capacities)
        params = params or BaselineParams()
        self.phases = phase_count(arm_count)
        self.budget = params.dsh_initial_budget or max(arm_count * self.phases, 1)
        self.budgets: List[int] = []
        self.last_winner: Optional[int] = None
        self.run = -1
        if self.phases == 0:
            # a single arm needs no halving
            self.last_winner = 1
            return
        self._start_run()

    def _start_run(self) -> None:
        self.budgets.append(self.budget)
        self.run += 1
        self.run_stats = EmpiricalStats(self.arm_count)
        self.survivors = list(range(1, self.arm_count + 1))
        self.phase = 0
        self._queue: Deque[int] = deque()
        self._fill_phase()

    def pulls_per_arm(self) -> int:
        return self.budget // (len(self.survivors) * self.phases)

    def _fill_phase(self) -> None:
        for _ in range(self.pulls_per_arm()):
            self._queue.extend(self.survivors)

    def _finish_phase(self) -> None:
        means = {arm: self.run_stats.mean(arm) for arm in self.survivors}
        self.survivors = halve(self.survivors, means)
        self.phase += 1
        if self.phase < self.phases:
            self._fill_phase()
            return

        self.last_winner = self.survivors[0]
        logger.debug(f"DSH run with budget {self.budget} recommends arm {self.last_winner}.")
        self.budget *= 2
        self._start_run()

    def _next_arm(self) -> int:
        if self.arm_count == 1:
            return 1
        while not self._queue:
            self._finish_phase()
        return self._queue.popleft()

    def _after_observe(self, arm: int, outcome: Outcome) -> None:
        if self.phases:
            self.run_stats.add(arm, outcome.reward)

    def current_recommendation(self) -> int:
        if self.last_winner is not None:
            return self.last_winner
        return self.stats.leader()
