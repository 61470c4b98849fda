# src/libs/harness.py

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from scipy import stats

from libs.baselines import (
    AtLucbStrategy,
    BaselineParams,
    DshStrategy,
    UcbStrategy,
    UniformStrategy,
)
from libs.complexity import f_effective
from libs.core import (
    ConsumptionMode,
    InstanceSpec,
    StrategyContract,
    TrialRecord,
    bernoulli_instance,
    child_seed,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    make_rng,
    simulate,
)
from libs.errors import ConfigError, InstanceError, StrategyError
from libs.shrr import ShrrStrategy
from libs.utils import save_to_csv

logger = logging.getLogger(__name__)

# ================================
# Constants
# ================================

STRATEGY_NAMES = ("shrr", "uniform", "ucb", "atlucb", "dsh")
Z95 = float(stats.norm.ppf(0.975))
DEFAULT_CAPACITY = 1500.0

REWARD_PROFILES = {
    "onegroup": "onegroup",
    "trap": "trap",
    "polynomial": "polynomial",
    "poly": "polynomial",
    "geometric": "geometric",
    "geom": "geometric",
}
MATCH_PATTERNS = {"hmh": "HmH", "hml": "HmL", "m": "M"}
SYNTHETIC_MODES = {
    "deterministic": ConsumptionMode.DETERMINISTIC,
    "det": ConsumptionMode.DETERMINISTIC,
    "correlated": ConsumptionMode.COUPLED,
    "corr": ConsumptionMode.COUPLED,
    "uncorrelated": ConsumptionMode.BERNOULLI,
    "uncorr": ConsumptionMode.BERNOULLI,
}

# Two-arm instance of the deterministic vs. stochastic consumption comparison
FIGURE_REWARDS = (0.5, 0.4)
FIGURE_CAPACITY = 2.0
FIGURE_D_VALUES = (0.2, 0.1, 0.05, 0.02, 0.01)
FIGURE_COLUMNS = ["d", "setting", "trials", "failures", "log_failure_rate"]

# ================================
# Synthetic Instances
# ================================


def _synthetic_rewards(arm_count: int, profile: str) -> List[float]:
    K = arm_count
    if profile == "onegroup":
        return [0.9] + [0.8] * (K - 1)
    if profile == "trap":
        trap_end = math.ceil(K / 8)
        return [0.9] + [0.8 if i <= trap_end else 0.1 for i in range(2, K + 1)]
    if profile == "polynomial":
        return [0.9] + [0.9 * (1 - math.sqrt(i / K)) for i in range(2, K + 1)]
    # geometric
    return [0.9 * (1 / 9) ** ((i - 1) / (K - 1)) for i in range(1, K + 1)]


def gen_synthetic(
    arm_count: int,
    resource_count: int,
    reward_profile: str,
    match: str,
    mode: str,
    capacity: float = DEFAULT_CAPACITY,
) -> InstanceSpec:
    """
    Build one of the synthetic benchmark instances.

    Args:
        arm_count (int): K, even and at least 2.
        resource_count (int): L; the mixture pattern needs exactly 2.
        reward_profile (str): onegroup, trap, polynomial (poly) or geometric (geom).
        match (str): HmH (heavy consumption on the better half), HmL (reversed) or M.
        mode (str): deterministic, correlated or uncorrelated (or det/corr/uncorr).
        capacity (float, optional): C_l for every resource. Defaults to 1500.

    Returns:
        InstanceSpec: Bernoulli-reward instance.

    Raises:
        InstanceError: Unknown profile, pattern or mode, or unmet size requirements.
    """
    profile = REWARD_PROFILES.get(str(reward_profile).lower())
    pattern = MATCH_PATTERNS.get(str(match).lower())
    consumption_mode = SYNTHETIC_MODES.get(str(mode).lower())
    if profile is None:
        raise InstanceError(f"unknown reward profile {reward_profile!r}")
    if pattern is None:
        raise InstanceError(f"unknown match pattern {match!r}")
    if consumption_mode is None:
        raise InstanceError(f"unknown consumption mode {mode!r}")
    if arm_count < 2 or arm_count % 2:
        raise InstanceError(f"synthetic instances need an even K >= 2, got {arm_count}")
    if resource_count < 1:
        raise InstanceError("need at least one resource")
    if pattern == "M" and resource_count != 2:
        raise InstanceError(f"the mixture pattern needs L=2, got L={resource_count}")

    half = arm_count // 2
    heavy_first = [0.9] * half + [0.1] * half
    light_first = [0.1] * half + [0.9] * half
    if pattern == "HmH":
        columns = [heavy_first] * resource_count
    elif pattern == "HmL":
        columns = [light_first] * resource_count
    else:
        columns = [light_first, heavy_first]

    rewards = _synthetic_rewards(arm_count, profile)
    if profile == "polynomial":
        logger.warning(f"Polynomial profile gives r_K = {rewards[-1]:.3g} for K={arm_count}.")

    consumptions = [[column[k] for column in columns] for k in range(arm_count)]
    instance = bernoulli_instance(
        rewards, consumptions, [float(capacity)] * resource_count, consumption_mode
    )
    logger.info(
        f"Generated {profile}/{pattern}/{consumption_mode.value} instance "
        f"with K={arm_count}, L={resource_count}."
    )
    return instance


# ================================
# Strategy Registry
# ================================


def build_strategy(
    name: str,
    arm_count: int,
    resource_count: int,
    capacities: Sequence[float],
    params: Optional[Mapping[str, Any]] = None,
) -> StrategyContract:
    """
    Fresh strategy by registry name, given only the public instance data.

    Raises:
        ConfigError: Unknown name or parameter.
    """
    if name == "shrr":
        if params:
            raise ConfigError(f"shrr takes no parameters, got {', '.join(sorted(params))}")
        return ShrrStrategy(arm_count, resource_count, capacities)

    registry = {
        "uniform": lambda p: UniformStrategy(arm_count, resource_count, capacities),
        "ucb": lambda p: UcbStrategy(arm_count, resource_count, capacities, p),
        "atlucb": lambda p: AtLucbStrategy(arm_count, resource_count, capacities, p),
        "dsh": lambda p: DshStrategy(arm_count, resource_count, capacities, p),
    }
    if name not in registry:
        raise ConfigError(f"unknown strategy {name!r}; expected one of {', '.join(STRATEGY_NAMES)}")
    return registry[name](BaselineParams.from_mapping(params))


# ================================
# Experiment Config
# ================================


@dataclass(frozen=True)
class StrategySpec:
    name: str
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One Monte Carlo experiment.

    `instance` is always resolved; `instance_path` keeps the path as written
    when the instance came from a file, so the config can be written back.
    """

    instance: InstanceSpec
    strategies: Tuple[StrategySpec, ...]
    trials: int
    master_seed: int
    output_path: str
    instance_path: Optional[str] = None


CONFIG_KEYS = {"instance", "instance_path", "strategies", "trials", "master_seed", "output_path"}


def _config_error(source: str, message: str) -> ConfigError:
    return ConfigError(f"{source}: {message}")


def _parse_strategies(raw: Any, source: str) -> Tuple[StrategySpec, ...]:
    if not isinstance(raw, list):
        raise _config_error(source, "field 'strategies' must be a list")
    if not raw:
        raise _config_error(source, "field 'strategies' must not be empty")

    specs = []
    for position, entry in enumerate(raw):
        where = f"strategies[{position}]"
        if not isinstance(entry, dict) or "name" not in entry:
            raise _config_error(source, f"field '{where}' needs a 'name'")
        unknown = sorted(set(entry) - {"name", "params"})
        if unknown:
            raise _config_error(source, f"field '{where}' has unknown key(s): {', '.join(unknown)}")
        name = entry["name"]
        if name not in STRATEGY_NAMES:
            raise _config_error(
                source, f"field '{where}.name': unknown strategy {name!r}"
            )
        params = entry.get("params") or {}
        if not isinstance(params, dict):
            raise _config_error(source, f"field '{where}.params' must be an object")
        specs.append(StrategySpec(name=name, params=dict(params)))
    return tuple(specs)


def config_from_dict(
    data: Any, base_dir: Union[str, Path] = ".", source: str = "config"
) -> ExperimentConfig:
    """
    Validate a config document into an ExperimentConfig.

    Args:
        data (Any): Parsed document.
        base_dir (Union[str, Path], optional): Directory `instance_path` is relative to.
        source (str, optional): Name used in error messages.

    Raises:
        ConfigError: A field is missing or invalid; the message names it.
    """
    if not isinstance(data, dict):
        raise _config_error(source, "config must be an object")

    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise _config_error(source, f"unknown field(s): {', '.join(unknown)}")
    for key in ("strategies", "trials", "master_seed", "output_path"):
        if key not in data:
            raise _config_error(source, f"missing required field '{key}'")

    trials = data["trials"]
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise _config_error(source, f"field 'trials' must be a positive integer, got {trials!r}")
    seed = data["master_seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise _config_error(source, f"field 'master_seed' must be a 64-bit unsigned integer, got {seed!r}")
    output_path = data["output_path"]
    if not isinstance(output_path, str) or not output_path:
        raise _config_error(source, "field 'output_path' must be a non-empty string")

    strategies = _parse_strategies(data["strategies"], source)

    has_inline, has_path = "instance" in data, "instance_path" in data
    if has_inline == has_path:
        raise _config_error(source, "exactly one of 'instance' and 'instance_path' is required")
    instance_path = None
    try:
        if has_inline:
            instance = instance_from_dict(data["instance"])
        else:
            instance_path = str(data["instance_path"])
            instance = load_instance(Path(base_dir) / instance_path)
    except InstanceError as e:
        field_name = "instance" if has_inline else "instance_path"
        raise _config_error(source, f"field '{field_name}': {e}") from e

    return ExperimentConfig(
        instance=instance,
        strategies=strategies,
        trials=trials,
        master_seed=seed,
        output_path=output_path,
        instance_path=instance_path,
    )


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    data: Dict[str, Any] = {}
    if config.instance_path is not None:
        data["instance_path"] = config.instance_path
    else:
        data["instance"] = instance_to_dict(config.instance)
    data["strategies"] = [{"name": s.name, "params": dict(s.params)} for s in config.strategies]
    data["trials"] = config.trials
    data["master_seed"] = config.master_seed
    data["output_path"] = config.output_path
    return data


def read_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load and validate an experiment config (JSON, or any YAML superset of it).

    Raises:
        ConfigError: Missing file, parse error (with line) or schema violation.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as file:
            data = yaml.safe_load(file)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{path}: {where}could not parse config: {getattr(e, 'problem', e)}") from e

    config = config_from_dict(data, base_dir=path.parent, source=str(path))
    logger.info(f"Loaded experiment config from '{path}'.")
    return config


def write_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(config_to_dict(config), file, indent=2)
        file.write("\n")
    logger.info(f"Experiment config written to '{path}'.")


# ================================
# Statistics
# ================================


def wilson_interval(failures: int, trials: int, z: float = Z95) -> Tuple[float, float]:
    """
    Wilson score interval of a binomial proportion, clamped to [0, 1].

    Raises:
        ValueError: trials < 1 or failures outside 0..trials.
    """
    if trials < 1:
        raise ValueError(f"trials must be positive, got {trials}")
    if not 0 <= failures <= trials:
        raise ValueError(f"failures must lie in 0..{trials}, got {failures}")

    p = failures / trials
    z2 = z * z
    denom = 1 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    lo = 0.0 if failures == 0 else max(0.0, center - half)
    hi = 1.0 if failures == trials else min(1.0, center + half)
    return lo, hi


@dataclass
class AggregateResult:
    strategy: str
    trials: int
    failures: int
    failure_rate: float
    wilson_lo: float
    wilson_hi: float
    mean_pulls: float
    mean_consumption: Tuple[float, ...]
    master_seed: int
    breached: int = 0

    def to_row(self) -> Dict[str, Any]:
        row = {
            "strategy": self.strategy,
            "trials": self.trials,
            "failures": self.failures,
            "failure_rate": self.failure_rate,
            "wilson_lo": self.wilson_lo,
            "wilson_hi": self.wilson_hi,
            "mean_pulls": self.mean_pulls,
        }
        for l, value in enumerate(self.mean_consumption, start=1):
            row[f"mean_consumption_{l}"] = value
        row["master_seed"] = self.master_seed
        return row


def aggregate(name: str, records: Sequence[TrialRecord], master_seed: int) -> AggregateResult:
    """Fold TrialRecords, in trial-index order, into one AggregateResult."""
    trials = len(records)
    failures = sum(1 for r in records if not r.correct)
    lo, hi = wilson_interval(failures, trials)
    consumption = np.array([r.total_consumption for r in records], dtype=float)
    return AggregateResult(
        strategy=name,
        trials=trials,
        failures=failures,
        failure_rate=failures / trials,
        wilson_lo=lo,
        wilson_hi=hi,
        mean_pulls=float(np.mean([r.pulls for r in records])),
        mean_consumption=tuple(float(v) for v in consumption.mean(axis=0)),
        master_seed=master_seed,
        breached=sum(1 for r in records if r.breached),
    )


# ================================
# Trial Execution
# ================================


def _run_chunk(
    instance: InstanceSpec,
    name: str,
    params: Mapping[str, Any],
    master_seed: int,
    start: int,
    stop: int,
) -> List[TrialRecord]:
    """Trials start..stop-1; each owns a fresh strategy and its child RNG stream."""
    records = []
    for index in range(start, stop):
        strategy = build_strategy(
            name, instance.arm_count, instance.resource_count, instance.capacities, params
        )
        rng = make_rng(child_seed(master_seed, index))
        records.append(simulate(instance, strategy, rng))
    return records


def default_workers() -> int:
    return os.cpu_count() or 1


def run_trials(
    instance: InstanceSpec,
    spec: StrategySpec,
    trials: int,
    master_seed: int,
    workers: int = 1,
    chunk_size: Optional[int] = None,
) -> List[TrialRecord]:
    """
    Run `trials` independent simulations of one strategy.

    Trial i is seeded with child_seed(master_seed, i); records come back in index
    order whatever the worker count.
    """
    # validate the name and params before spawning anything
    build_strategy(spec.name, instance.arm_count, instance.resource_count, instance.capacities, spec.params)

    workers = max(1, int(workers))
    if chunk_size is None:
        chunk_size = max(1, math.ceil(trials / (workers * 4)))
    bounds = [(s, min(s + chunk_size, trials)) for s in range(0, trials, chunk_size)]

    if workers == 1 or len(bounds) == 1:
        return _run_chunk(instance, spec.name, spec.params, master_seed, 0, trials)

    records: List[TrialRecord] = []
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = [
            executor.submit(_run_chunk, instance, spec.name, spec.params, master_seed, start, stop)
            for start, stop in bounds
        ]
        for future in futures:
            records.extend(future.result())
    return records


def run_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    chunk_size: Optional[int] = None,
    defaults: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> List[AggregateResult]:
    """
    Run every strategy of a config and aggregate its trials.

    Args:
        config (ExperimentConfig): Validated experiment.
        workers (int, optional): Worker processes. Results do not depend on it.
        chunk_size (Optional[int], optional): Trials per submitted task.
        defaults (Optional[Mapping], optional): Per-strategy parameter defaults,
            overridden by the params in the config.

    Returns:
        List[AggregateResult]: One result per strategy, in config order.

    Raises:
        ConfigError: Unknown strategy or parameter.
        StrategyError: SH-RR breached a capacity.
    """
    instance = config.instance
    logger.info(
        f"Running {config.trials} trial(s) of {len(config.strategies)} strateg(ies) "
        f"on K={instance.arm_count}, L={instance.resource_count} with {workers} worker(s)."
    )

    results = []
    for spec in config.strategies:
        params = dict(spec.params)
        if spec.name != "shrr":
            params = {**dict((defaults or {}).get(spec.name) or {}), **params}
        merged = StrategySpec(spec.name, params)
        records = run_trials(instance, merged, config.trials, config.master_seed, workers, chunk_size)
        result = aggregate(spec.name, records, config.master_seed)

        if spec.name == "shrr" and result.breached:
            raise StrategyError(f"SH-RR breached a capacity in {result.breached} trial(s)")
        logger.info(
            f"{spec.name}: {result.failures}/{result.trials} failures "
            f"(rate {result.failure_rate:.4g}, {result.breached} breached)."
        )
        results.append(result)
    return results


def write_results(results: Sequence[AggregateResult], path: Union[str, Path]) -> None:
    """Results CSV: one row per strategy, columns in AggregateResult order."""
    if not results:
        raise ValueError("no results to write")
    resource_count = len(results[0].mean_consumption)
    columns = (
        ["strategy", "trials", "failures", "failure_rate", "wilson_lo", "wilson_hi", "mean_pulls"]
        + [f"mean_consumption_{l}" for l in range(1, resource_count + 1)]
        + ["master_seed"]
    )
    df = pd.DataFrame([r.to_row() for r in results], columns=columns)
    save_to_csv(df, path)


# ================================
# Consumption Concentration
# ================================


@dataclass(frozen=True)
class LemmaCheck:
    d: float
    n: int
    repetitions: int
    empirical_prob: float
    bound: float
    exact: float

    @property
    def tolerance(self) -> float:
        return self.bound + 3 * math.sqrt(self.bound / self.repetitions)

    @property
    def passed(self) -> bool:
        return self.empirical_prob <= self.tolerance


def consumption_lemma_exact(d: float, n: int) -> float:
    """Exact P(Bin(n, d) / n > f(d)) from the binomial survival function."""
    if not 0 < d < 1:
        raise ValueError(f"d must lie in (0, 1), got {d}")
    if n < 1:
        raise ValueError(f"N must be positive, got {n}")
    threshold = math.floor(n * f_effective(d))
    return float(stats.binom.sf(threshold, n, d))


def mc_check_consumption_lemma(
    d: float, n: int, repetitions: int, rng: np.random.Generator
) -> LemmaCheck:
    """
    Monte Carlo estimate of P(mean of n Bern(d) draws > f(d)) against exp(-n/3).

    Raises:
        ValueError: d outside (0, 1), n < 1 or repetitions < 1.
    """
    if repetitions < 1:
        raise ValueError(f"repetitions must be positive, got {repetitions}")
    exact = consumption_lemma_exact(d, n)

    means = rng.binomial(n, d, size=repetitions) / n
    empirical = float(np.mean(means > f_effective(d)))
    check = LemmaCheck(
        d=d, n=n, repetitions=repetitions, empirical_prob=empirical, bound=math.exp(-n / 3), exact=exact
    )
    logger.debug(f"Lemma cell d={d:.4g}, N={n}: {empirical:.4g} vs bound {check.bound:.4g}.")
    return check


def check_lemma_grid(
    d_values: Sequence[float], n_values: Sequence[int], repetitions: int, master_seed: int
) -> List[LemmaCheck]:
    """Every (d, N) cell, each on its own child stream of master_seed."""
    checks = []
    for index, (d, n) in enumerate((d, n) for d in d_values for n in n_values):
        rng = make_rng(child_seed(master_seed, index))
        checks.append(mc_check_consumption_lemma(d, n, repetitions, rng))
    return checks


def lemma_frame(checks: Sequence[LemmaCheck]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "d": c.d,
                "N": c.n,
                "repetitions": c.repetitions,
                "empirical_prob": c.empirical_prob,
                "exact_prob": c.exact,
                "bound": c.bound,
                "passed": c.passed,
            }
            for c in checks
        ]
    )


# ================================
# Deterministic vs. Stochastic Consumption
# ================================


@dataclass
class FigurePoint:
    d: float
    setting: str
    trials: int
    failures: int
    wilson_lo: float
    wilson_hi: float

    @property
    def log_failure_rate(self) -> float:
        """Natural log of the failure rate; NaN when no trial failed."""
        if self.failures == 0:
            return math.nan
        return math.log(self.failures / self.trials)

    def to_row(self) -> Dict[str, Any]:
        return {
            "d": self.d,
            "setting": self.setting,
            "trials": self.trials,
            "failures": self.failures,
            "log_failure_rate": self.log_failure_rate,
        }


def figure_instance(d: float, setting: str) -> InstanceSpec:
    """Two Bernoulli arms (0.5, 0.4), C=2, consumption d on both arms."""
    modes = {"det": ConsumptionMode.DETERMINISTIC, "sto": ConsumptionMode.BERNOULLI}
    if setting not in modes:
        raise ValueError(f"setting must be 'det' or 'sto', got {setting!r}")
    return bernoulli_instance(FIGURE_REWARDS, [[d], [d]], [FIGURE_CAPACITY], modes[setting])


def figure_compare(
    d_values: Sequence[float] = FIGURE_D_VALUES,
    trials: int = 10000,
    master_seed: int = 0,
    workers: int = 1,
    chunk_size: Optional[int] = None,
) -> List[FigurePoint]:
    """
    SH-RR failure rates with deterministic and Bernoulli consumption of equal mean.

    Both settings at one d share the stream seeded by child_seed(master_seed, index of d).
    """
    if trials < 1:
        raise ValueError(f"trials must be positive, got {trials}")

    points = []
    for index, d in enumerate(d_values):
        seed = child_seed(master_seed, index)
        for setting in ("det", "sto"):
            records = run_trials(figure_instance(d, setting), StrategySpec("shrr"), trials, seed, workers, chunk_size)
            failures = sum(1 for r in records if not r.correct)
            lo, hi = wilson_interval(failures, trials)
            points.append(FigurePoint(d, setting, trials, failures, lo, hi))
            logger.info(f"d={d:g} {setting}: {failures}/{trials} failures.")
    return points


def write_figure(points: Sequence[FigurePoint], path: Union[str, Path]) -> None:
    df = pd.DataFrame([p.to_row() for p in points], columns=FIGURE_COLUMNS)
    save_to_csv(df, path)
