import json
import math

import numpy as np
import pytest

from libs.complexity import (
    build_counterexample,
    build_det_lb_instance,
    build_lb_family,
    build_sto_lb_instance,
    complexity_report,
    f_effective,
    gamma,
    gaps,
    h1_det,
    h2_det,
    h2_sto,
    thm1_bound,
    thm1_expression,
    thm2_bound,
    thm2_expression,
    thm3_lower_bound,
    tilde_h_det,
)
from libs.core import ConsumptionMode, RewardKind, bernoulli_instance, make_rng
from libs.errors import InstanceError, NoUniqueBestArmError

# ================================
# Gaps and H measures
# ================================


def test_gaps_duplicate_the_second_gap():
    assert gaps([0.9, 0.8, 0.8]) == pytest.approx([0.1, 0.1, 0.1])
    assert gaps([0.2, 0.5, 0.4]) == pytest.approx([0.1, 0.1, 0.3])


def test_gaps_reject_tied_best():
    with pytest.raises(NoUniqueBestArmError):
        gaps([0.5, 0.5, 0.1])


def test_h2_det_sorts_consumptions():
    # sorted d = (1.0, 0.5); Delta_2 = 0.5 so H2 = 1.5 / 0.25
    assert h2_det([0.9, 0.4], [0.5, 1.0]) == pytest.approx(6.0)


def test_h2_det_unit_consumption_is_classical_h2():
    rng = make_rng(17)
    for _ in range(100):
        K = int(rng.integers(2, 30))
        rewards = rng.uniform(0.0, 1.0, size=K)
        delta = gaps(rewards)
        expected = max(k / delta[k - 1] ** 2 for k in range(2, K + 1))
        assert h2_det(rewards, [1.0] * K) == pytest.approx(expected, rel=1e-12)


def test_h1_det():
    # Delta = (0.5, 0.5, 0.75), sorted d = (1, 0.5, 0.25)
    expected = 1 / 0.25 + 0.5 / 0.25 + 0.25 / 0.5625
    assert h1_det([0.9, 0.4, 0.15], [0.25, 1.0, 0.5]) == pytest.approx(expected)


def _random_arms(rng):
    K = int(rng.integers(2, 30))
    return rng.uniform(0.0, 1.0, size=K), rng.uniform(1e-3, 1.0, size=K)


def test_h2_det_never_exceeds_h1_det():
    rng = make_rng(41)
    for _ in range(10000):
        rewards, consumptions = _random_arms(rng)
        assert h2_det(rewards, consumptions) <= h1_det(rewards, consumptions) * (1 + 1e-12)


def test_unsorted_measures_below_sorted_ones():
    rng = make_rng(43)
    for _ in range(10000):
        rewards, consumptions = _random_arms(rng)
        tilde_h1, tilde_h2 = tilde_h_det(rewards, consumptions)
        assert tilde_h1 <= h1_det(rewards, consumptions) * (1 + 1e-12)
        assert tilde_h2 <= h2_det(rewards, consumptions) * (1 + 1e-12)


def test_sorted_measures_ignore_consumption_assignment():
    rng = make_rng(47)
    for _ in range(200):
        rewards, consumptions = _random_arms(rng)
        shuffled = rng.permutation(consumptions)
        assert h2_det(rewards, shuffled) == h2_det(rewards, consumptions)
        assert h1_det(rewards, shuffled) == h1_det(rewards, consumptions)


def test_unsorted_measures_depend_on_assignment():
    # Delta = (0.4, 0.4, 0.5); both assignments share the sorted measures
    rewards = [0.9, 0.5, 0.4]
    heavy_best, heavy_worst = [1.0, 0.1, 0.1], [0.1, 0.1, 1.0]
    assert h2_det(rewards, heavy_best) == h2_det(rewards, heavy_worst) == pytest.approx(1.1 / 0.16)
    assert tilde_h_det(rewards, heavy_best) == pytest.approx((7.275, 1.1 / 0.16))
    assert tilde_h_det(rewards, heavy_worst) == pytest.approx((5.25, 4.8))


def test_constant_consumption_unsorted_equals_sorted():
    rng = make_rng(53)
    for _ in range(200):
        rewards, _ = _random_arms(rng)
        consumptions = [float(rng.uniform(1e-3, 1.0))] * len(rewards)
        tilde_h1, tilde_h2 = tilde_h_det(rewards, consumptions)
        assert tilde_h1 == pytest.approx(h1_det(rewards, consumptions), rel=1e-12)
        assert tilde_h2 == pytest.approx(h2_det(rewards, consumptions), rel=1e-12)


def test_input_validation():
    with pytest.raises(InstanceError):
        h2_det([0.9], [1.0])
    with pytest.raises(InstanceError):
        h2_det([0.9, 0.1], [1.0])
    with pytest.raises(InstanceError):
        h2_sto([0.9, 0.1], [1.0, 0.0])


# ================================
# Effective consumption
# ================================


def test_f_branches():
    assert f_effective(0.5) == pytest.approx(math.e**2 * 0.5)
    assert f_effective(math.exp(-4)) == pytest.approx(0.5)
    assert f_effective(1.0) == pytest.approx(math.e**2)


def test_f_continuous_at_knot():
    knot = math.exp(-2)
    assert abs(f_effective(knot) - 1.0) < 1e-12
    assert abs(f_effective(np.nextafter(knot, 0)) - 1.0) < 1e-12


def test_f_monotone_and_above_identity():
    grid = np.linspace(1e-6, 1.0, 10000)
    values = np.array([f_effective(d) for d in grid])
    assert np.all(np.diff(values) > 0)
    assert np.all(values > grid)


@pytest.mark.parametrize("d", [0.0, -0.1, 1.5])
def test_f_domain(d):
    with pytest.raises(ValueError):
        f_effective(d)


def test_h2_sto_exceeds_h2_det():
    rng = make_rng(23)
    for _ in range(1000):
        K = int(rng.integers(2, 20))
        rewards = rng.uniform(0.0, 1.0, size=K)
        consumptions = rng.uniform(1e-4, 1.0, size=K)
        assert h2_sto(rewards, consumptions) > h2_det(rewards, consumptions)


# ================================
# Bounds
# ================================


def test_gamma_is_bottleneck():
    assert gamma([10.0, 4.0], [5.0, 4.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        gamma([1.0], [1.0, 2.0])


def test_bound_expressions():
    assert thm1_expression(4, 8.0) == pytest.approx(2 * 4 * math.exp(-1.0))
    assert thm2_expression(4, 2, 16.0) == pytest.approx(7 * 2 * 4 * 2 * math.exp(-1.0))
    assert thm1_expression(1, 3.0) == 0.0


def test_instance_bounds():
    instance = bernoulli_instance([0.9, 0.4], [[1.0], [0.5]], [60.0])
    # H2_det = 6 so gamma_det = 10; K = 2 gives a single phase
    assert thm1_bound(instance) == pytest.approx(2 * math.exp(-10 / 4))
    assert 0 < thm2_bound(instance)
    tight = bernoulli_instance([0.9, 0.4], [[1.0], [0.5]], [0.6])
    assert thm3_lower_bound(tight) == pytest.approx(math.exp(-12.2) / 6)


def test_deterministic_bound_needs_deterministic_instance():
    instance = bernoulli_instance([0.9, 0.4], [[1.0], [0.5]], [60.0], ConsumptionMode.BERNOULLI)
    with pytest.raises(InstanceError):
        thm1_bound(instance)


def test_report_for_single_arm():
    report = complexity_report(bernoulli_instance([0.3], [[0.5]], [5.0]))
    assert report.thm1_bound == 0.0
    assert report.thm2_bound == 0.0
    assert report.gaps == []
    json.dumps(report.to_dict())


def test_report_fields():
    instance = bernoulli_instance([0.9, 0.4, 0.15], [[0.25, 1.0], [1.0, 1.0], [0.5, 1.0]], [30.0, 90.0])
    report = complexity_report(instance)
    assert report.sorted_consumptions == [[1.0, 0.5, 0.25], [1.0, 1.0, 1.0]]
    assert report.gamma_det == pytest.approx(min(30.0 / report.h2_det[0], 90.0 / report.h2_det[1]))
    assert report.thm1_bound == pytest.approx(thm1_bound(instance))
    assert report.thm3_lower_bound == thm3_lower_bound(instance)
    stochastic = complexity_report(bernoulli_instance([0.9, 0.4], [[1.0], [0.5]], [60.0], ConsumptionMode.BERNOULLI))
    assert stochastic.thm1_bound is None


# ================================
# Lower-bound families
# ================================


def test_det_family_member():
    rewards = [0.5, 0.4, 0.3]
    instance = build_det_lb_instance(rewards, [[0.9, 0.6, 0.2]], 3, [100.0])
    assert instance.reward_means == pytest.approx((0.5, 0.4, 0.7))
    assert instance.consumption_column(1) == (0.6, 0.9, 0.2)
    assert instance.mode is ConsumptionMode.DETERMINISTIC
    assert instance.best_arms() == {3}


def test_sto_family_member():
    instance = build_sto_lb_instance([0.5, 0.3], [[1.0, 0.5]], 2, [10.0])
    assert all(m.kind is RewardKind.GAUSSIAN for m in instance.rewards)
    assert instance.mode is ConsumptionMode.BERNOULLI
    assert instance.best_arms() == {2}


@pytest.mark.parametrize(
    "rewards, consumption, flip",
    [
        ([0.4, 0.3], [[1.0, 0.5]], 1),
        ([0.5, 0.2], [[1.0, 0.5]], 1),
        ([0.5, 0.3, 0.4], [[1.0, 0.5, 0.2]], 1),
        ([0.5, 0.3], [[0.5, 1.0]], 1),
        ([0.5, 0.3], [[1.0, 0.5]], 3),
    ],
)
def test_family_preconditions(rewards, consumption, flip):
    with pytest.raises(InstanceError):
        build_det_lb_instance(rewards, consumption, flip, [10.0])


def test_family_has_every_flip():
    family = build_lb_family("det", [0.5, 0.4, 0.3, 0.25], [[1.0, 0.5, 0.5, 0.1]], [50.0])
    assert [inst.best_arms() for inst in family] == [{1}, {2}, {3}, {4}]
    with pytest.raises(InstanceError):
        build_lb_family("other", [0.5, 0.4], [[1.0, 0.5]], [50.0])


def test_first_member_is_hardest():
    rng = make_rng(31)
    grid = 2.0**-20
    for _ in range(100):
        K = int(rng.integers(2, 12))
        L = int(rng.integers(1, 4))
        # dyadic grid keeps every gap exact
        tail = np.sort(rng.integers(int(0.25 / grid), int(0.5 / grid), size=K - 1))[::-1] * grid
        rewards = [0.5] + tail.tolist()
        consumption = [
            (np.sort(rng.integers(1, int(1 / grid) + 1, size=K))[::-1] * grid).tolist() for _ in range(L)
        ]
        family = build_lb_family("det", rewards, consumption, [100.0] * L)
        first = [h2_det(family[0].reward_means, family[0].consumption_column(l)) for l in range(1, L + 1)]
        for member in family[1:]:
            for l in range(1, L + 1):
                assert first[l - 1] >= h2_det(member.reward_means, member.consumption_column(l))


# ================================
# Counterexample
# ================================


@pytest.mark.parametrize("K", [5, 8, 10])
def test_counterexample_identities(K):
    instance = build_counterexample(K, 100.0)
    tilde_h1, tilde_h2 = tilde_h_det(instance.reward_means, instance.consumption_column(1))
    assert abs(tilde_h2 - 32.0) < 1e-9
    assert abs(tilde_h1 - 16.0 * K) < 1e-9
    assert h1_det(instance.reward_means, instance.consumption_column(1)) >= tilde_h1


def test_counterexample_shape():
    instance = build_counterexample(5, 10.0)
    assert instance.consumption_column(1) == (0.125, 0.125, 0.25, 0.5, 1.0)
    assert instance.reward_means[-1] == pytest.approx(0.25)
    assert instance.best_arms() == {1}
