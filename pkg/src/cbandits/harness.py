"""Seeded Monte Carlo experiments: replicate trajectories, estimate the
probability that the arm selected at each checkpoint is delta-best, and
compare the estimate against the theoretical lower bound.

Two execution paths produce bit-identical trajectories: a step-by-step
reference (:func:`run_trial`, built on the strategies module) and a
vectorized kernel (:func:`run_chunk`) that advances a block of
replications in lockstep.  Both consume the same per-trial uniform
stream in the same fixed order, so every float they compute is equal,
not merely close.  Replication r of an experiment draws from a
counter-based stream indexed by r, which makes results independent of
scheduling and worker count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from cbandits.analysis import (
    FeasibilityProfile,
    delta_best_arms,
    feasibility_profile,
    feasible_set,
    reward_separation,
)
from cbandits.bounds import selection_lower_bound
from cbandits.core import (
    DRAWS_PER_STEP,
    ProblemInstance,
    ValidationError,
    experiment_key,
    trial_stream,
)
from cbandits.strategies import (
    POLICIES,
    POLICY_CONSTRAINED,
    POLICY_UNIFORM,
    TIE_LOWEST_INDEX,
    TIE_RULES,
    EpsilonSchedule,
    SelectionEvent,
    simulate,
)

__all__ = [
    "WILSON_Z",
    "RESULTS_CSV_COLUMNS",
    "ExperimentConfig",
    "TrialRecord",
    "MonteCarloEstimate",
    "ChunkResult",
    "ExperimentResult",
    "wilson_interval",
    "run_trial",
    "run_chunk",
    "run_experiment",
    "regret_metric",
    "write_results_csv",
    "write_summary_json",
]

WILSON_Z = 3.0

RESULTS_CSV_COLUMNS = (
    "t",
    "delta",
    "successes",
    "R",
    "p_hat",
    "ci_low",
    "ci_high",
    "bound_raw",
    "bound_clamped",
    "dominated",
)

# Uniform matrix budget per lockstep chunk.  Chunk boundaries depend only
# on (replications, horizon), never on worker count, so merged floats are
# identical no matter how chunks are scheduled.
_CHUNK_BYTES_TARGET = 128 * 1024 * 1024


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully-resolved description of one Monte Carlo experiment."""

    instance: ProblemInstance
    schedule: EpsilonSchedule
    checkpoints: tuple[int, ...]
    deltas: tuple[float, ...]
    replications: int
    master_seed: int
    policy: str = POLICY_CONSTRAINED
    tie_rule: str = TIE_LOWEST_INDEX

    def __post_init__(self):
        if not isinstance(self.instance, ProblemInstance):
            raise ValidationError("bad_config", "instance must be a ProblemInstance")
        if not isinstance(self.schedule, EpsilonSchedule):
            raise ValidationError("bad_config", "schedule must be an EpsilonSchedule")
        checkpoints = tuple(self.checkpoints)
        if not checkpoints:
            raise ValidationError("bad_config", "checkpoints must be non-empty")
        for t in checkpoints:
            if not isinstance(t, int) or isinstance(t, bool) or t < 1:
                raise ValidationError(
                    "bad_config", f"checkpoints must be integers >= 1, got {t!r}"
                )
        if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
            raise ValidationError(
                "bad_config", f"checkpoints must be strictly increasing, got {checkpoints}"
            )
        deltas = tuple(float(d) for d in self.deltas)
        if not deltas:
            raise ValidationError("bad_config", "deltas must be non-empty")
        for d in deltas:
            if not math.isfinite(d) or d < 0.0:
                raise ValidationError(
                    "bad_config", f"deltas must be finite and >= 0, got {d}"
                )
        if (
            not isinstance(self.replications, int)
            or isinstance(self.replications, bool)
            or self.replications < 1
        ):
            raise ValidationError(
                "bad_config", f"replications must be an integer >= 1, got {self.replications!r}"
            )
        experiment_key(self.master_seed)
        if self.policy not in POLICIES:
            raise ValidationError(
                "bad_config", f"strategy kind must be one of {POLICIES}, got {self.policy!r}"
            )
        if self.tie_rule not in TIE_RULES:
            raise ValidationError(
                "bad_config", f"tie_rule must be one of {TIE_RULES}, got {self.tie_rule!r}"
            )
        object.__setattr__(self, "checkpoints", checkpoints)
        object.__setattr__(self, "deltas", deltas)

    @property
    def horizon(self) -> int:
        return self.checkpoints[-1]

    def to_config(self) -> dict:
        """Resolved config echo; re-parsing it reproduces this object."""
        return {
            "instance": self.instance.to_config(),
            "strategy": {"kind": self.policy, "tie_rule": self.tie_rule},
            "schedule": self.schedule.to_config(),
            "experiment": {
                "checkpoints": list(self.checkpoints),
                "deltas": list(self.deltas),
                "replications": self.replications,
                "master_seed": self.master_seed,
            },
        }


@dataclass(frozen=True)
class TrialRecord:
    """One trajectory's snapshot at a checkpoint: the arm selected AT
    step t, the per-delta event indicators for that arm, and running
    reward/cost totals through t."""

    t: int
    arm: int
    events: tuple[bool, ...]
    cumulative_reward: float
    cumulative_cost: float


@dataclass(frozen=True)
class MonteCarloEstimate:
    """Estimated probability of the delta-best event at one checkpoint."""

    t: int
    delta: float
    successes: int
    replications: int
    p_hat: float
    ci_low: float
    ci_high: float
    bound_raw: float
    bound_clamped: float
    dominated: bool

    def __post_init__(self):
        assert 0 <= self.successes <= self.replications
        assert 0.0 <= self.ci_low <= self.p_hat <= self.ci_high <= 1.0

    def to_json_dict(self) -> dict:
        return {
            "t": self.t,
            "delta": self.delta,
            "successes": self.successes,
            "R": self.replications,
            "p_hat": self.p_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "bound_raw": self.bound_raw,
            "bound_clamped": self.bound_clamped,
            "dominated": self.dominated,
        }


def wilson_interval(successes: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion, clipped to [0, 1]."""
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ValidationError("bad_parameter", f"n must be an integer >= 1, got {n!r}")
    if not isinstance(successes, int) or isinstance(successes, bool):
        raise ValidationError("bad_parameter", "successes must be an integer")
    if not 0 <= successes <= n:
        raise ValidationError(
            "bad_parameter", f"successes must lie in [0, {n}], got {successes}"
        )
    if not isinstance(z, (int, float)) or isinstance(z, bool) or not z > 0:
        raise ValidationError("bad_parameter", f"z must be > 0, got {z!r}")
    z = float(z)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))
    # At the boundaries the exact endpoint coincides with p, but the
    # closed form reaches it only up to rounding; pin it so the interval
    # always contains the point estimate.
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == n else min(1.0, center + half)
    return low, high


def run_trial(config: ExperimentConfig, replication_index: int) -> tuple[TrialRecord, ...]:
    """Reference path: one full trajectory, reported at each checkpoint.

    Deterministic in (master_seed, replication_index); independent of
    any other replication.
    """
    if (
        not isinstance(replication_index, int)
        or isinstance(replication_index, bool)
        or replication_index < 0
    ):
        raise ValidationError(
            "bad_parameter",
            f"replication_index must be an integer >= 0, got {replication_index!r}",
        )
    horizon = config.horizon
    source = trial_stream(config.master_seed, replication_index, horizon)
    events = simulate(
        config.instance,
        config.schedule,
        horizon,
        source,
        policy=config.policy,
        tie_rule=config.tie_rule,
    )
    best_sets = [delta_best_arms(config.instance, d) for d in config.deltas]
    wanted = set(config.checkpoints)
    records = []
    acc_reward = 0.0
    acc_cost = 0.0
    for event in events:
        acc_reward += event.reward
        acc_cost += event.cost
        if event.t in wanted:
            records.append(
                TrialRecord(
                    t=event.t,
                    arm=event.arm,
                    events=tuple(event.arm in s for s in best_sets),
                    cumulative_reward=acc_reward,
                    cumulative_cost=acc_cost,
                )
            )
    return tuple(records)


@dataclass
class ChunkResult:
    """Aggregates from one lockstep block of replications."""

    rep_lo: int
    rep_hi: int
    successes: np.ndarray
    arm_hits: np.ndarray
    cum_reward_total: np.ndarray
    cum_cost_total: np.ndarray
    trajectory_arms: np.ndarray | None = None
    trajectory_rewards: np.ndarray | None = None
    trajectory_costs: np.ndarray | None = None


def run_chunk(
    config: ExperimentConfig,
    rep_lo: int,
    rep_hi: int,
    keep_trajectories: bool = False,
) -> ChunkResult:
    """Advance replications [rep_lo, rep_hi) in lockstep.

    Trajectories are bit-identical to :func:`run_trial` because each row
    of the bulk uniform matrix is exactly the stream trial r would have
    drawn, and every arithmetic step mirrors the scalar path operation
    for operation.  ``keep_trajectories`` additionally records the
    per-replication checkpoint snapshots for equivalence tests.
    """
    if not 0 <= rep_lo < rep_hi <= config.replications:
        raise ValidationError(
            "bad_parameter", f"bad replication range [{rep_lo}, {rep_hi})"
        )
    instance = config.instance
    n_arms = instance.num_arms
    horizon = config.horizon
    n_reps = rep_hi - rep_lo
    n_checkpoints = len(config.checkpoints)
    n_deltas = len(config.deltas)

    key = experiment_key(config.master_seed)
    generator = np.random.Generator(
        np.random.Philox(key=key, counter=rep_lo * horizon)
    )
    uniforms = generator.random((n_reps, DRAWS_PER_STEP * horizon))

    eps = config.schedule.epsilons(horizon)
    cp_index = {t: i for i, t in enumerate(config.checkpoints)}
    membership = np.zeros((n_deltas, n_arms), dtype=bool)
    for i, delta in enumerate(config.deltas):
        membership[i, sorted(delta_best_arms(instance, delta))] = True

    counts = np.zeros((n_reps, n_arms), dtype=np.int64)
    reward_sums = np.zeros((n_reps, n_arms))
    cost_sums = np.zeros((n_reps, n_arms))
    cum_reward = np.zeros(n_reps)
    cum_cost = np.zeros(n_reps)

    successes = np.zeros((n_checkpoints, n_deltas), dtype=np.int64)
    arm_hits = np.zeros((n_checkpoints, n_arms), dtype=np.int64)
    cum_reward_total = np.zeros(n_checkpoints)
    cum_cost_total = np.zeros(n_checkpoints)
    trajectory_arms = trajectory_rewards = trajectory_costs = None
    if keep_trajectories:
        trajectory_arms = np.zeros((n_checkpoints, n_reps), dtype=np.int64)
        trajectory_rewards = np.zeros((n_checkpoints, n_reps))
        trajectory_costs = np.zeros((n_checkpoints, n_reps))

    rows = np.arange(n_reps)
    level = instance.constraint_level
    policy = config.policy
    uniform_ties = config.tie_rule != TIE_LOWEST_INDEX
    reward_quantiles = [arm.reward.quantile for arm in instance.arms]
    cost_quantiles = [arm.cost.quantile for arm in instance.arms]
    rewards = np.empty(n_reps)
    costs = np.empty(n_reps)

    for t in range(1, horizon + 1):
        base = DRAWS_PER_STEP * (t - 1)
        u_branch = uniforms[:, base]
        u_arm = uniforms[:, base + 1]
        u_reward = uniforms[:, base + 2]
        u_cost = uniforms[:, base + 3]

        random_pick = np.minimum((u_arm * n_arms).astype(np.int64), n_arms - 1)
        if policy == POLICY_UNIFORM:
            arm = random_pick
        else:
            if policy == POLICY_CONSTRAINED:
                feasible = (counts > 0) & (cost_sums <= level * counts)
            else:
                feasible = counts > 0
            means = np.where(feasible, reward_sums / np.maximum(counts, 1), -np.inf)
            if uniform_ties:
                best = means.max(axis=1)
                is_tie = means == best[:, None]
                n_ties = is_tie.sum(axis=1)
                pick = np.minimum((u_arm * n_ties).astype(np.int64), n_ties - 1)
                greedy = np.argmax(
                    is_tie.cumsum(axis=1) == (pick + 1)[:, None], axis=1
                )
            else:
                greedy = np.argmax(means, axis=1)
            take_random = (u_branch < eps[t - 1]) | ~feasible.any(axis=1)
            arm = np.where(take_random, random_pick, greedy)

        for a in range(n_arms):
            mask = arm == a
            if mask.any():
                rewards[mask] = reward_quantiles[a](u_reward[mask])
                costs[mask] = cost_quantiles[a](u_cost[mask])

        counts[rows, arm] += 1
        reward_sums[rows, arm] += rewards
        cost_sums[rows, arm] += costs
        cum_reward += rewards
        cum_cost += costs

        cp = cp_index.get(t)
        if cp is not None:
            successes[cp] += membership[:, arm].sum(axis=1)
            arm_hits[cp] += np.bincount(arm, minlength=n_arms)
            cum_reward_total[cp] = cum_reward.sum()
            cum_cost_total[cp] = cum_cost.sum()
            if keep_trajectories:
                trajectory_arms[cp] = arm
                trajectory_rewards[cp] = cum_reward
                trajectory_costs[cp] = cum_cost

    return ChunkResult(
        rep_lo=rep_lo,
        rep_hi=rep_hi,
        successes=successes,
        arm_hits=arm_hits,
        cum_reward_total=cum_reward_total,
        cum_cost_total=cum_cost_total,
        trajectory_arms=trajectory_arms,
        trajectory_rewards=trajectory_rewards,
        trajectory_costs=trajectory_costs,
    )


def _chunk_bounds(replications: int, horizon: int) -> list[tuple[int, int]]:
    per_rep = DRAWS_PER_STEP * horizon * 8
    chunk = max(1, min(replications, _CHUNK_BYTES_TARGET // per_rep))
    return [
        (lo, min(lo + chunk, replications)) for lo in range(0, replications, chunk)
    ]


def _chunk_worker(args: tuple[ExperimentConfig, int, int]) -> ChunkResult:
    config, rep_lo, rep_hi = args
    return run_chunk(config, rep_lo, rep_hi)


@dataclass(frozen=True)
class ExperimentResult:
    """All estimates from one experiment plus instance diagnostics."""

    config: ExperimentConfig
    profile: FeasibilityProfile
    estimates: tuple[MonteCarloEstimate, ...]
    diagnostics: dict

    def summary_dict(self, metadata: dict | None = None) -> dict:
        out = {
            "config": self.config.to_config(),
            "profile": self.profile.to_json_dict(),
            "estimates": [e.to_json_dict() for e in self.estimates],
            "diagnostics": self.diagnostics,
            "metadata": metadata or {},
        }
        return out


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Estimate the delta-best selection probability at every checkpoint.

    Success counts merge associatively across chunks and the chunk
    layout is a pure function of (replications, horizon), so the result
    is identical for any worker count, including 1.
    """
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        raise ValidationError(
            "bad_parameter", f"workers must be an integer >= 1, got {workers!r}"
        )
    bounds = _chunk_bounds(config.replications, config.horizon)
    if workers == 1 or len(bounds) == 1:
        chunks = [run_chunk(config, lo, hi) for lo, hi in bounds]
    else:
        tasks = [(config, lo, hi) for lo, hi in bounds]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_chunk_worker, tasks))

    n_checkpoints = len(config.checkpoints)
    n_deltas = len(config.deltas)
    successes = np.zeros((n_checkpoints, n_deltas), dtype=np.int64)
    arm_hits = np.zeros((n_checkpoints, config.instance.num_arms), dtype=np.int64)
    cum_reward_total = np.zeros(n_checkpoints)
    cum_cost_total = np.zeros(n_checkpoints)
    for chunk in chunks:
        successes += chunk.successes
        arm_hits += chunk.arm_hits
        cum_reward_total += chunk.cum_reward_total
        cum_cost_total += chunk.cum_cost_total

    replications = config.replications
    rho = reward_separation(config.instance)
    num_arms = config.instance.num_arms
    estimates = []
    for i, t in enumerate(config.checkpoints):
        for j, delta in enumerate(config.deltas):
            report = selection_lower_bound(config.schedule, t, num_arms, delta, rho)
            s = int(successes[i, j])
            ci_low, ci_high = wilson_interval(s, replications, WILSON_Z)
            p_hat = s / replications
            dominated = ci_low >= report.clamped or p_hat >= report.clamped
            estimates.append(
                MonteCarloEstimate(
                    t=t,
                    delta=delta,
                    successes=s,
                    replications=replications,
                    p_hat=p_hat,
                    ci_low=ci_low,
                    ci_high=ci_high,
                    bound_raw=report.raw_product,
                    bound_clamped=report.clamped,
                    dominated=dominated,
                )
            )

    diagnostics = {
        "checkpoints": list(config.checkpoints),
        "arm_selections": arm_hits.tolist(),
        "mean_cumulative_reward": (cum_reward_total / replications).tolist(),
        "mean_cumulative_cost": (cum_cost_total / replications).tolist(),
    }
    return ExperimentResult(
        config=config,
        profile=feasibility_profile(config.instance),
        estimates=tuple(estimates),
        diagnostics=diagnostics,
    )


def regret_metric(events: Sequence[SelectionEvent], instance: ProblemInstance) -> float:
    """Expected-mean shortfall against always playing an optimal feasible
    arm: mu_star * T minus the sum of the chosen arms' true mean rewards.

    Diagnostic only; the strategy does not try to minimize it.
    """
    rewards = instance.reward_means()
    mu_star = max(rewards[a] for a in feasible_set(instance, 0.0))
    total = 0.0
    for event in events:
        total += rewards[event.arm]
    return mu_star * len(events) - total


def _format_csv_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(path, estimates: Sequence[MonteCarloEstimate]) -> None:
    """Plot-ready estimates table; one row per (checkpoint, delta)."""
    lines = [",".join(RESULTS_CSV_COLUMNS)]
    for e in estimates:
        row = (
            e.t,
            e.delta,
            e.successes,
            e.replications,
            e.p_hat,
            e.ci_low,
            e.ci_high,
            e.bound_raw,
            e.bound_clamped,
            e.dominated,
        )
        lines.append(",".join(_format_csv_value(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_json(path, result: ExperimentResult, metadata: dict | None = None) -> None:
    """Experiment summary; everything except ``metadata`` is deterministic."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.summary_dict(metadata), fh, indent=2, sort_keys=True)
        fh.write("\n")
