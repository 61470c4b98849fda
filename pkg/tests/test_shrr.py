import json
import math

import pytest

from libs.core import ConsumptionMode, Finished, Outcome, bernoulli_instance, child_seed, make_rng, simulate
from libs.errors import StrategyError
from libs.shrr import ShrrStrategy, close_phase, halve, phase_count, shrr_init, shrr_observe, shrr_select

MODES = list(ConsumptionMode)


def test_phase_count():
    assert [phase_count(k) for k in (1, 2, 3, 4, 5, 8, 9, 256)] == [0, 1, 2, 2, 3, 3, 4, 8]


def test_halve_keeps_upper_half_with_small_index_ties():
    means = {1: 0.2, 2: 0.5, 3: 0.5, 4: 0.5, 5: 0.9}
    assert halve([1, 2, 3, 4, 5], means) == [2, 3, 5]
    assert halve([4, 2], {4: 0.1, 2: 0.1}) == [2]


def test_init_rations_split_capacity():
    state = shrr_init(8, 2, [9.0, 3.0])
    assert state.surviving == list(range(1, 9))
    assert state.rations == [3.0, 1.0]
    assert state.finished is None


def test_single_arm_finishes_immediately():
    strategy = ShrrStrategy(1, 1, [5.0])
    assert strategy.select() == Finished(1)
    assert strategy.current_recommendation() == 1
    with pytest.raises(StrategyError):
        strategy.select()


def test_init_rejects_capacity_mismatch():
    with pytest.raises(StrategyError):
        shrr_init(4, 2, [5.0])


def test_round_robin_and_halving_trace():
    instance = bernoulli_instance([1.0, 0.0, 0.0, 0.0], [[1.0]] * 4, [8.0])
    strategy = ShrrStrategy(4, 1, instance.capacities)

    arms = []
    while True:
        choice = strategy.select()
        if isinstance(choice, Finished):
            break
        arms.append(choice)
        strategy.observe(choice, Outcome(1.0 if choice == 1 else 0.0, (1.0,)))

    assert arms == [1, 2, 3, 4, 1, 2, 1, 2]
    assert choice.recommendation == 1
    first, second = strategy.phase_log
    assert (first.survivors, first.pulls, first.ration) == ([1, 2, 3, 4], [1, 1, 1, 1], [4.0])
    assert (second.survivors, second.pulls, second.ration) == ([1, 2], [2, 2], [4.0])


def test_leftover_rolls_into_next_phase():
    state = shrr_init(4, 1, [7.0])
    # ration 3.5: pulls continue while I <= 2.5, so three unit pulls leave 0.5 over
    for _ in range(3):
        arm = shrr_select(state)
        shrr_observe(state, arm, Outcome(0.0, (1.0,)))
    assert not state.phase_open()
    summary = close_phase(state)
    assert summary.consumed == [3.0]
    assert state.rations == [4.0]
    assert state.phase == 1
    assert len(state.surviving) == 2


def test_select_requires_observation():
    strategy = ShrrStrategy(2, 1, [4.0])
    arm = strategy.select()
    with pytest.raises(StrategyError, match="never observed"):
        strategy.select()
    with pytest.raises(StrategyError):
        strategy.observe(3 - arm, Outcome(0.0, (1.0,)))


def test_empirical_means_are_cumulative_over_phases():
    state = shrr_init(4, 1, [8.0])
    rewards = {1: 1.0, 2: 0.0, 3: 1.0, 4: 0.0}
    while state.phase_open():
        arm = shrr_select(state)
        shrr_observe(state, arm, Outcome(rewards[arm], (1.0,)))
    close_phase(state)
    shrr_observe(state, 3, Outcome(0.0, (1.0,)))
    assert state.cum_pulls[2] == 2
    assert state.empirical_mean(3) == pytest.approx(0.5)


def test_dump_is_json():
    strategy = ShrrStrategy(4, 1, [8.0])
    instance = bernoulli_instance([0.9, 0.1, 0.2, 0.3], [[1.0]] * 4, [8.0])
    simulate(instance, strategy, make_rng(0))
    payload = json.loads(strategy.dump())
    assert payload["finished"] in (1, 2, 3, 4)
    assert len(payload["phase_log"]) == 2


@pytest.mark.parametrize("mode", MODES)
def test_feasibility_and_phase_structure(mode, random_instance):
    rng = make_rng(child_seed(2024, MODES.index(mode)))
    for run in range(150):
        K = int(rng.integers(2, 17))
        L = int(rng.integers(1, 4))
        instance = random_instance(rng, K, L, mode)
        strategy = ShrrStrategy(K, L, instance.capacities)
        record = simulate(instance, strategy, make_rng(child_seed(7, run)))

        assert record.breached is False
        for total, capacity in zip(record.total_consumption, instance.capacities):
            assert total <= capacity * (1 + 1e-9)

        phases = phase_count(K)
        assert len(strategy.phase_log) == phases
        for q, summary in enumerate(strategy.phase_log):
            assert len(summary.survivors) == math.ceil(K / 2**q)
            for l, capacity in enumerate(instance.capacities):
                assert summary.ration[l] >= capacity / phases
                assert summary.consumed[l] <= summary.ration[l]
            # round-robin: pull counts within a phase differ by at most one
            assert max(summary.pulls) - min(summary.pulls) <= 1


def test_noiseless_instance_always_identified():
    instance = bernoulli_instance([1.0] + [0.0] * 7, [[0.5]] * 8, [60.0])
    for run in range(50):
        record = simulate(instance, ShrrStrategy(8, 1, instance.capacities), make_rng(run))
        assert record.recommended_arm == 1
