import logging

import numpy as np
import pytest

from libs.core import ConsumptionMode, RewardKind, RewardModel, InstanceSpec, bernoulli_instance

MODES = [ConsumptionMode.DETERMINISTIC, ConsumptionMode.BERNOULLI, ConsumptionMode.COUPLED]


class ScriptedRng:
    """Stand-in for np.random.Generator.random() returning preset uniforms."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


@pytest.fixture
def scripted_rng():
    return ScriptedRng


@pytest.fixture
def noiseless_pair():
    """Arm 1 always pays 1, arm 2 never; unit deterministic consumption, C=3."""
    return bernoulli_instance([1.0, 0.0], [[1.0], [1.0]], [3.0])


@pytest.fixture
def random_instance():
    """Factory for random Bernoulli instances with a unique best arm."""

    def build(rng: np.random.Generator, arm_count: int, resource_count: int, mode: ConsumptionMode,
              capacity_range=(5.0, 60.0)) -> InstanceSpec:
        means = rng.uniform(0.05, 0.95, size=arm_count)
        means[int(rng.integers(arm_count))] = 0.99
        consumptions = rng.uniform(0.05, 1.0, size=(arm_count, resource_count))
        capacities = rng.uniform(*capacity_range, size=resource_count)
        return InstanceSpec(
            capacities=tuple(capacities),
            rewards=tuple(RewardModel(RewardKind.BERNOULLI, float(m)) for m in means),
            consumptions=tuple(tuple(row) for row in consumptions),
            mode=mode,
        )

    return build


@pytest.fixture(autouse=True)
def quiet_logs(caplog):
    caplog.set_level(logging.WARNING)
