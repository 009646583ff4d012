"""Exploration schedules and the constrained epsilon-greedy selection rule.

The selection protocol consumes exactly :data:`~cbandits.core.DRAWS_PER_STEP`
uniforms per step in a fixed order (branch, arm, reward, cost), whether or
not a draw's value ends up used.  Everything downstream relies on that:
trajectories replay exactly, and the vectorized harness kernel walks the
same uniform stream as this reference implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from cbandits.core import (
    Distribution,
    ProblemInstance,
    UniformSource,
    ValidationError,
    _as_float,
    _check_keys,
    _require_mapping,
)

__all__ = [
    "EpsilonSchedule",
    "ConstantSchedule",
    "InverseTimeSchedule",
    "ExplicitSchedule",
    "schedule_from_config",
    "StrategyState",
    "SelectionEvent",
    "current_feasible_estimate",
    "select_arm",
    "step",
    "baseline_select",
    "simulate",
    "replay_events",
    "BRANCH_GREEDY",
    "BRANCH_FALLBACK",
    "BRANCH_RANDOM",
    "TIE_LOWEST_INDEX",
    "TIE_UNIFORM",
    "TIE_RULES",
    "POLICY_CONSTRAINED",
    "POLICY_UNIFORM",
    "POLICY_UNCONSTRAINED",
    "POLICIES",
]

BRANCH_GREEDY = "greedy"
BRANCH_FALLBACK = "greedy_fallback_uniform"
BRANCH_RANDOM = "random"

TIE_LOWEST_INDEX = "lowest_index"
TIE_UNIFORM = "uniform"
TIE_RULES = (TIE_LOWEST_INDEX, TIE_UNIFORM)

POLICY_CONSTRAINED = "constrained_eps_greedy"
POLICY_UNIFORM = "uniform"
POLICY_UNCONSTRAINED = "unconstrained_eps_greedy"
POLICIES = (POLICY_CONSTRAINED, POLICY_UNIFORM, POLICY_UNCONSTRAINED)


# ---------------------------------------------------------------------------
# exploration schedules
# ---------------------------------------------------------------------------


class EpsilonSchedule:
    """Exploration probability as a function of the 1-based step index.

    Every schedule value lies in (0, 1].  ``cumulative`` returns the exact
    partial sum of schedule values, never a logarithmic surrogate.
    """

    kind: str = "abstract"

    def epsilon(self, t: int) -> float:
        raise NotImplementedError

    def epsilons(self, horizon: int) -> np.ndarray:
        """Vector of schedule values for steps 1..horizon."""
        raise NotImplementedError

    def cumulative(self, t: int) -> float:
        """Exact partial sum of schedule values over steps 1..t."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


def _check_step(t: int) -> int:
    if isinstance(t, bool) or not isinstance(t, (int, np.integer)):
        raise ValidationError("bad_parameter", f"step index must be an integer, got {t!r}")
    if t < 1:
        raise ValidationError("bad_parameter", f"step index must be >= 1, got {t}")
    return int(t)


def _reciprocal_sum(lo: int, hi: int) -> float:
    """Sum of 1/n for integer n in [lo, hi], by direct chunked summation."""
    if lo > hi:
        return 0.0
    parts = []
    n = lo
    chunk = 1 << 22
    while n <= hi:
        stop = min(hi, n + chunk - 1)
        block = np.arange(n, stop + 1, dtype=np.float64)
        parts.append(float((1.0 / block).sum()))
        n = stop + 1
    return math.fsum(parts)


@dataclass(frozen=True)
class ConstantSchedule(EpsilonSchedule):
    """Constant exploration probability in (0, 1]."""

    value: float
    kind = "constant"

    def __post_init__(self):
        v = _as_float(self.value, "bad_schedule", "constant schedule epsilon")
        if not 0.0 < v <= 1.0:
            raise ValidationError(
                "bad_schedule",
                f"schedule epsilon must lie in (0, 1], got {v}",
            )
        object.__setattr__(self, "value", v)

    def epsilon(self, t: int) -> float:
        _check_step(t)
        return self.value

    def epsilons(self, horizon: int) -> np.ndarray:
        _check_step(horizon)
        return np.full(horizon, self.value, dtype=np.float64)

    def cumulative(self, t: int) -> float:
        _check_step(t)
        return self.value * t

    def to_config(self) -> dict:
        return {"kind": "constant", "epsilon": self.value}


@dataclass(frozen=True)
class InverseTimeSchedule(EpsilonSchedule):
    """Schedule min(1, k/t) with k > 1.

    Stays at 1 through step floor(k), then decays like k/t; the partial
    sums diverge, so exploration never starves.
    """

    k: float
    kind = "inverse_time"

    def __post_init__(self):
        k = _as_float(self.k, "bad_schedule", "inverse_time schedule k")
        if not k > 1.0:
            raise ValidationError(
                "bad_schedule",
                f"inverse_time schedule requires k > 1, got {k}",
            )
        object.__setattr__(self, "k", k)

    def epsilon(self, t: int) -> float:
        t = _check_step(t)
        return min(1.0, self.k / t)

    def epsilons(self, horizon: int) -> np.ndarray:
        horizon = _check_step(horizon)
        steps = np.arange(1, horizon + 1, dtype=np.float64)
        return np.minimum(1.0, self.k / steps)

    def cumulative(self, t: int) -> float:
        t = _check_step(t)
        flat = min(t, math.floor(self.k))
        return flat + self.k * _reciprocal_sum(flat + 1, t)

    def to_config(self) -> dict:
        return {"kind": "inverse_time", "k": self.k}


@dataclass(frozen=True)
class ExplicitSchedule(EpsilonSchedule):
    """Schedule given by an explicit list of per-step values in (0, 1]."""

    values: tuple[float, ...]
    kind = "explicit"

    def __post_init__(self):
        values = tuple(
            _as_float(v, "bad_schedule", "explicit schedule value") for v in self.values
        )
        if not values:
            raise ValidationError("bad_schedule", "explicit schedule needs values")
        for i, v in enumerate(values):
            if not 0.0 < v <= 1.0:
                raise ValidationError(
                    "bad_schedule",
                    f"schedule epsilon must lie in (0, 1], got {v} at step {i + 1}",
                )
        object.__setattr__(self, "values", values)

    def _check_horizon(self, t: int) -> int:
        t = _check_step(t)
        if t > len(self.values):
            raise ValidationError(
                "bad_schedule",
                f"explicit schedule has {len(self.values)} values, step {t} requested",
            )
        return t

    def epsilon(self, t: int) -> float:
        return self.values[self._check_horizon(t) - 1]

    def epsilons(self, horizon: int) -> np.ndarray:
        self._check_horizon(horizon)
        return np.asarray(self.values[:horizon], dtype=np.float64)

    def cumulative(self, t: int) -> float:
        return math.fsum(self.values[: self._check_horizon(t)])

    def to_config(self) -> dict:
        return {"kind": "explicit", "values": list(self.values)}


_SCHEDULE_KINDS = {
    "constant": (ConstantSchedule, ("epsilon",), ("value",)),
    "inverse_time": (InverseTimeSchedule, ("k",), ("k",)),
    "explicit": (ExplicitSchedule, ("values",), ("values",)),
}


def schedule_from_config(config: Mapping, path: str = "schedule") -> EpsilonSchedule:
    """Build a schedule from ``{"kind": ..., <params>}``."""
    config = _require_mapping(config, path)
    kind = config.get("kind")
    if kind not in _SCHEDULE_KINDS:
        raise ValidationError(
            "unknown_kind",
            f"{path}.kind must be one of {sorted(_SCHEDULE_KINDS)}, got {kind!r}",
        )
    cls, keys, fields = _SCHEDULE_KINDS[kind]
    _check_keys(config, ("kind",) + keys, path)
    kwargs = {}
    for key, field_name in zip(keys, fields):
        if key not in config:
            raise ValidationError("bad_config", f"{path} is missing key {key!r}")
        value = config[key]
        if isinstance(value, Sequence) and not isinstance(value, (str, bytes)):
            value = tuple(value)
        kwargs[field_name] = value
    return cls(**kwargs)


# ---------------------------------------------------------------------------
# strategy state and events
# ---------------------------------------------------------------------------


class StrategyState:
    """Running per-arm statistics: play counts and reward/cost sums.

    Means are always derived as sum/count, so they equal the arithmetic
    mean of the observed values exactly (up to one float division) and
    can be recomputed from the event log.  Unplayed arms report zero
    means.
    """

    __slots__ = ("num_arms", "counts", "reward_sums", "cost_sums", "t")

    def __init__(self, num_arms: int):
        if num_arms < 2:
            raise ValidationError("too_few_arms", f"need >= 2 arms, got {num_arms}")
        self.num_arms = int(num_arms)
        self.counts = np.zeros(self.num_arms, dtype=np.int64)
        self.reward_sums = np.zeros(self.num_arms, dtype=np.float64)
        self.cost_sums = np.zeros(self.num_arms, dtype=np.float64)
        self.t = 0

    def update(self, arm: int, reward: float, cost: float) -> None:
        """Record one play of ``arm``; values must lie in [0, 1]."""
        if not 0 <= arm < self.num_arms:
            raise ValidationError("bad_parameter", f"arm {arm} out of range")
        if not 0.0 <= reward <= 1.0:
            raise ValidationError("out_of_support", f"reward {reward} outside [0, 1]")
        if not 0.0 <= cost <= 1.0:
            raise ValidationError("out_of_support", f"cost {cost} outside [0, 1]")
        self.counts[arm] += 1
        self.reward_sums[arm] += reward
        self.cost_sums[arm] += cost
        self.t += 1

    def mean_rewards(self) -> np.ndarray:
        return np.divide(
            self.reward_sums,
            self.counts,
            out=np.zeros(self.num_arms),
            where=self.counts > 0,
        )

    def mean_costs(self) -> np.ndarray:
        return np.divide(
            self.cost_sums,
            self.counts,
            out=np.zeros(self.num_arms),
            where=self.counts > 0,
        )

    def copy(self) -> "StrategyState":
        out = StrategyState(self.num_arms)
        out.counts = self.counts.copy()
        out.reward_sums = self.reward_sums.copy()
        out.cost_sums = self.cost_sums.copy()
        out.t = self.t
        return out

    def __eq__(self, other):
        return (
            isinstance(other, StrategyState)
            and self.num_arms == other.num_arms
            and self.t == other.t
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.reward_sums, other.reward_sums)
            and np.array_equal(self.cost_sums, other.cost_sums)
        )

    def __repr__(self):
        return (
            f"StrategyState(t={self.t}, counts={self.counts.tolist()}, "
            f"reward_sums={self.reward_sums.tolist()}, "
            f"cost_sums={self.cost_sums.tolist()})"
        )


@dataclass(frozen=True)
class SelectionEvent:
    """One step of a trajectory: what was picked, why, and what came back."""

    t: int
    arm: int
    branch: str
    reward: float
    cost: float


def current_feasible_estimate(state: StrategyState, constraint_level: float) -> list[int]:
    """Arms played at least once whose empirical mean cost is within budget.

    The comparison is ``cost_sum <= level * count``, the exact float
    realization used by every execution path.
    """
    return [
        a
        for a in range(state.num_arms)
        if state.counts[a] > 0
        and state.cost_sums[a] <= constraint_level * state.counts[a]
    ]


def _uniform_index(u: float, n: int) -> int:
    return min(int(u * n), n - 1)


def _check_tie_rule(tie_rule: str) -> None:
    if tie_rule not in TIE_RULES:
        raise ValidationError(
            "bad_config", f"tie_rule must be one of {TIE_RULES}, got {tie_rule!r}"
        )


def _greedy_choice(state: StrategyState, candidates: list[int], u_arm: float, tie_rule: str) -> int:
    best_value = -math.inf
    best_arm = -1
    for a in candidates:
        value = state.reward_sums[a] / state.counts[a]
        if value > best_value:
            best_value = value
            best_arm = a
    if tie_rule == TIE_LOWEST_INDEX:
        return best_arm
    ties = [
        a
        for a in candidates
        if state.reward_sums[a] / state.counts[a] == best_value
    ]
    return ties[_uniform_index(u_arm, len(ties))]


def _select(
    state: StrategyState,
    eps_t: float,
    constraint_level: float,
    policy: str,
    source: UniformSource,
    tie_rule: str,
) -> tuple[int, str]:
    # Fixed draw order: branch uniform first, arm uniform second.  The
    # arm uniform is consumed even when the greedy branch decides without
    # it, which pins each step to a constant draw budget.
    u_branch = source.uniform()
    u_arm = source.uniform()
    n = state.num_arms
    if policy == POLICY_UNIFORM:
        return _uniform_index(u_arm, n), BRANCH_RANDOM
    if u_branch < eps_t:
        return _uniform_index(u_arm, n), BRANCH_RANDOM
    if policy == POLICY_CONSTRAINED:
        candidates = current_feasible_estimate(state, constraint_level)
    else:
        candidates = [a for a in range(n) if state.counts[a] > 0]
    if not candidates:
        return _uniform_index(u_arm, n), BRANCH_FALLBACK
    return _greedy_choice(state, candidates, u_arm, tie_rule), BRANCH_GREEDY


def select_arm(
    state: StrategyState,
    schedule: EpsilonSchedule,
    t: int,
    constraint_level: float,
    source: UniformSource,
    tie_rule: str = TIE_LOWEST_INDEX,
) -> tuple[int, str]:
    """Constrained epsilon-greedy selection for step ``t``.

    With probability ``epsilon(t)`` the arm is uniform over all arms;
    otherwise the arm maximizes the empirical mean reward over the
    currently-feasible estimate, falling back to a uniform draw when
    that estimate is empty.  Returns ``(arm, branch)`` where branch is
    one of ``"greedy"``, ``"greedy_fallback_uniform"``, ``"random"``.
    Consumes exactly two uniforms.
    """
    _check_tie_rule(tie_rule)
    return _select(
        state, schedule.epsilon(t), constraint_level, POLICY_CONSTRAINED, source, tie_rule
    )


def baseline_select(
    state: StrategyState,
    schedule: EpsilonSchedule,
    t: int,
    policy_kind: str,
    source: UniformSource,
    tie_rule: str = TIE_LOWEST_INDEX,
) -> tuple[int, str]:
    """Reference policies: ``uniform`` or ``unconstrained_eps_greedy``.

    The unconstrained variant greedily maximizes empirical mean reward
    over all played arms, ignoring costs.  Both consume the same two
    uniforms per step as the constrained strategy.
    """
    _check_tie_rule(tie_rule)
    if policy_kind not in (POLICY_UNIFORM, POLICY_UNCONSTRAINED):
        raise ValidationError(
            "bad_config",
            f"policy_kind must be '{POLICY_UNIFORM}' or '{POLICY_UNCONSTRAINED}', "
            f"got {policy_kind!r}",
        )
    eps_t = 0.0 if policy_kind == POLICY_UNIFORM else schedule.epsilon(t)
    return _select(state, eps_t, math.inf, policy_kind, source, tie_rule)


def step(
    instance: ProblemInstance,
    state: StrategyState,
    schedule: EpsilonSchedule,
    t: int,
    source: UniformSource,
    tie_rule: str = TIE_LOWEST_INDEX,
    policy: str = POLICY_CONSTRAINED,
) -> SelectionEvent:
    """Select, sample the chosen arm's reward and cost, update the state.

    Consumes exactly four uniforms: branch, arm, reward, cost.
    """
    _check_tie_rule(tie_rule)
    if policy not in POLICIES:
        raise ValidationError("bad_config", f"unknown policy {policy!r}")
    eps_t = schedule.epsilon(t)
    arm, branch = _select(
        state, eps_t, instance.constraint_level, policy, source, tie_rule
    )
    reward = instance.arms[arm].reward.quantile(source.uniform())
    cost = instance.arms[arm].cost.quantile(source.uniform())
    state.update(arm, reward, cost)
    return SelectionEvent(t=t, arm=arm, branch=branch, reward=reward, cost=cost)


def simulate(
    instance: ProblemInstance,
    schedule: EpsilonSchedule,
    horizon: int,
    source: UniformSource,
    policy: str = POLICY_CONSTRAINED,
    tie_rule: str = TIE_LOWEST_INDEX,
) -> list[SelectionEvent]:
    """Run one trajectory of ``horizon`` steps and return its event log."""
    _check_tie_rule(tie_rule)
    if policy not in POLICIES:
        raise ValidationError("bad_config", f"unknown policy {policy!r}")
    eps = schedule.epsilons(horizon)
    state = StrategyState(instance.num_arms)
    arms = instance.arms
    level = instance.constraint_level
    events = []
    for t in range(1, horizon + 1):
        arm, branch = _select(state, eps[t - 1], level, policy, source, tie_rule)
        reward = arms[arm].reward.quantile(source.uniform())
        cost = arms[arm].cost.quantile(source.uniform())
        state.update(arm, reward, cost)
        events.append(SelectionEvent(t=t, arm=arm, branch=branch, reward=reward, cost=cost))
    return events


def replay_events(num_arms: int, events: Sequence[SelectionEvent]) -> StrategyState:
    """Rebuild the strategy state implied by an event log."""
    state = StrategyState(num_arms)
    for event in events:
        state.update(event.arm, event.reward, event.cost)
    return state
