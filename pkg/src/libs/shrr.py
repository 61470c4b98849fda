# src/libs/shrr.py

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

from libs.core import Finished, Outcome
from libs.errors import StrategyError

logger = logging.getLogger(__name__)

# ================================
# Helpers
# ================================


def phase_count(arm_count: int) -> int:
    """Number of halving phases, ceil(log2 K)."""
    return math.ceil(math.log2(arm_count)) if arm_count > 1 else 0


def halve(survivors: Sequence[int], means: Mapping[int, float]) -> List[int]:
    """
    Keep the ceil(n/2) arms with the largest means.

    Ties are broken in favour of the smaller arm index; the result is in
    ascending index order.

    Args:
        survivors (Sequence[int]): Arms still in play.
        means (Mapping[int, float]): Empirical mean of every survivor.

    Returns:
        List[int]: The surviving half.
    """
    keep = math.ceil(len(survivors) / 2)
    ranked = sorted(survivors, key=lambda arm: (-means[arm], arm))
    return sorted(ranked[:keep])


# ================================
# State
# ================================


@dataclass
class PhaseSummary:
    phase: int
    survivors: List[int]
    ration: List[float]
    consumed: List[float]
    pulls: List[int]


@dataclass
class ShrrState:
    """
    Phase bookkeeping of Sequential Halving with Resource Rationing.

    `rations` and `phase_consumed` are per resource. `cum_reward` / `cum_pulls`
    aggregate every pull since phase 0 and feed the cumulative empirical means.
    """

    arm_count: int
    capacities: List[float]
    phase: int = 0
    surviving: List[int] = field(default_factory=list)
    rations: List[float] = field(default_factory=list)
    phase_consumed: List[float] = field(default_factory=list)
    step: int = 1
    cum_reward: List[float] = field(default_factory=list)
    cum_pulls: List[int] = field(default_factory=list)
    phase_pulls: List[int] = field(default_factory=list)
    finished: Optional[int] = None

    @property
    def phases(self) -> int:
        return phase_count(self.arm_count)

    def base_ration(self, resource: int) -> float:
        return self.capacities[resource] / self.phases

    def phase_open(self) -> bool:
        """While-condition: I_l <= Ration_l - 1 for every resource."""
        return all(i <= r - 1 for i, r in zip(self.phase_consumed, self.rations))

    def empirical_mean(self, arm: int) -> float:
        return self.cum_reward[arm - 1] / max(self.cum_pulls[arm - 1], 1)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def shrr_init(arm_count: int, resource_count: int, capacities: Sequence[float]) -> ShrrState:
    """
    Initial state: all arms survive and every resource gets C_l / ceil(log2 K).

    Raises:
        StrategyError: No arms, or capacities do not match the resource count.
    """
    if arm_count < 1:
        raise StrategyError("SH-RR needs at least one arm")
    if len(capacities) != resource_count:
        raise StrategyError(f"expected {resource_count} capacities, got {len(capacities)}")

    state = ShrrState(arm_count=arm_count, capacities=[float(c) for c in capacities])
    state.surviving = list(range(1, arm_count + 1))
    state.cum_reward = [0.0] * arm_count
    state.cum_pulls = [0] * arm_count
    state.phase_pulls = [0] * arm_count
    state.phase_consumed = [0.0] * resource_count

    if arm_count == 1:
        # zero phases: nothing to ration
        state.rations = [0.0] * resource_count
        state.finished = 1
        return state

    state.rations = [state.base_ration(l) for l in range(resource_count)]
    return state


# ================================
# Strategy
# ================================


class ShrrStrategy:
    """SH-RR under the strategy contract."""

    name = "shrr"

    def __init__(self, arm_count: int, resource_count: int, capacities: Sequence[float]) -> None:
        self.state = shrr_init(arm_count, resource_count, capacities)
        self.phase_log: List[PhaseSummary] = []
        self._pending: Optional[int] = None
        self._done = False

    # -- contract --------------------------------------------------------

    def select(self) -> Union[int, Finished]:
        state = self.state
        if self._done:
            raise StrategyError("select() called after SH-RR finished")
        if self._pending is not None:
            raise StrategyError(f"arm {self._pending} was selected but never observed")

        while state.finished is None and not state.phase_open():
            self._close_phase()
        if state.finished is not None:
            self._done = True
            return Finished(state.finished)

        arm = shrr_select(state)
        self._pending = arm
        return arm

    def observe(self, arm: int, outcome: Outcome) -> None:
        if self._pending is None:
            if self.state.finished is not None:
                raise StrategyError("observe() called after SH-RR finished")
            raise StrategyError("observe() called without a pending selection")
        if arm != self._pending:
            raise StrategyError(f"observed arm {arm} but arm {self._pending} was selected")

        self._pending = None
        shrr_observe(self.state, arm, outcome)
        if not self.state.phase_open():
            self._close_phase()

    def current_recommendation(self) -> int:
        state = self.state
        if state.finished is not None:
            return state.finished
        leader, best = state.surviving[0], None
        for arm in state.surviving:
            m = state.empirical_mean(arm)
            if best is None or m > best:
                leader, best = arm, m
        return leader

    # -- internals -------------------------------------------------------

    def _close_phase(self) -> None:
        summary = close_phase(self.state)
        self.phase_log.append(summary)

    def dump(self) -> str:
        """JSON dump of the full state and phase trace, for debugging."""
        payload = self.state.to_dict()
        payload["phase_log"] = [asdict(p) for p in self.phase_log]
        return json.dumps(payload, indent=2)


def shrr_select(state: ShrrState) -> int:
    """
    Round-robin arm for step t: a(t) = t mod |S| with residue 0 mapped to |S|.

    Raises:
        StrategyError: The state is finished or the phase must be closed first.
    """
    if state.finished is not None:
        raise StrategyError("select() called after SH-RR finished")
    if not state.phase_open():
        raise StrategyError("phase ration exhausted; close the phase before selecting")

    n = len(state.surviving)
    a = state.step % n or n
    return state.surviving[a - 1]


def shrr_observe(state: ShrrState, arm: int, outcome: Outcome) -> None:
    """Record one pull: consumption into I^(q), reward into the cumulative totals."""
    for l, d in enumerate(outcome.consumptions):
        state.phase_consumed[l] += d
    state.cum_reward[arm - 1] += outcome.reward
    state.cum_pulls[arm - 1] += 1
    state.phase_pulls[arm - 1] += 1
    state.step += 1


def close_phase(state: ShrrState) -> PhaseSummary:
    """
    End phase q: halve the survivors by cumulative means and roll leftovers into the next ration.

    Returns:
        PhaseSummary: Trace of the phase that just closed.
    """
    summary = PhaseSummary(
        phase=state.phase,
        survivors=list(state.surviving),
        ration=list(state.rations),
        consumed=list(state.phase_consumed),
        pulls=[state.phase_pulls[arm - 1] for arm in state.surviving],
    )

    means = {arm: state.empirical_mean(arm) for arm in state.surviving}
    state.surviving = halve(state.surviving, means)
    state.rations = [
        state.base_ration(l) + (ration - used)
        for l, (ration, used) in enumerate(zip(state.rations, state.phase_consumed))
    ]
    state.phase_consumed = [0.0] * len(state.rations)
    state.phase_pulls = [0] * state.arm_count
    state.phase += 1

    logger.debug(
        f"SH-RR phase {summary.phase} closed after {sum(summary.pulls)} pulls; "
        f"{len(state.surviving)} arm(s) survive."
    )

    if state.phase >= state.phases:
        state.finished = state.surviving[0]
    return summary
