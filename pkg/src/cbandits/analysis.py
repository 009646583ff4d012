"""Exact instance analysis: feasibility structure and small-horizon
selection probabilities by full enumeration.

The enumeration oracle walks every branch/outcome combination of the
selection protocol and accumulates path probabilities, in exact rational
arithmetic by default.  It exists to pin down ground truth for short
horizons; the Monte Carlo harness is validated against it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from cbandits.core import ProblemInstance, ValidationError
from cbandits.strategies import (
    TIE_LOWEST_INDEX,
    TIE_UNIFORM,
    EpsilonSchedule,
    _check_tie_rule,
)

__all__ = [
    "feasible_set",
    "optimal_feasible_arms",
    "reward_separation",
    "constraint_margin",
    "delta_best_arms",
    "delta_best_arms_bruteforce",
    "FeasibilityProfile",
    "feasibility_profile",
    "OracleResult",
    "exact_selection_probability",
    "ORACLE_MAX_STEPS",
    "BRUTEFORCE_MAX_ARMS",
]

ORACLE_MAX_STEPS = 6
BRUTEFORCE_MAX_ARMS = 20


def _check_offset(value: float, what: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValidationError("bad_parameter", f"{what} must be a real number")
    return float(value)


def feasible_set(instance: ProblemInstance, kappa: float = 0.0) -> set[int]:
    """Arms whose exact mean cost is at most the budget plus ``kappa``.

    The comparison is non-strict, so an arm sitting exactly on the
    boundary is included.  ``kappa`` may be negative (a tightened
    budget); the result is nondecreasing in ``kappa``.
    """
    kappa = _check_offset(kappa, "kappa")
    level = instance.constraint_level + kappa
    costs = instance.cost_means()
    return {a for a in range(instance.num_arms) if costs[a] <= level}


def optimal_feasible_arms(instance: ProblemInstance) -> set[int]:
    """Feasible arms with maximal exact mean reward."""
    feasible = feasible_set(instance, 0.0)
    rewards = instance.reward_means()
    best = max(rewards[a] for a in feasible)
    return {a for a in feasible if rewards[a] == best}


def reward_separation(instance: ProblemInstance) -> float:
    """Minimum |mean reward difference| over distinct arm pairs.

    Zero when two arms share a mean reward; the selection bound's reward
    factor is vacuous in that case, though the strategy itself still
    converges.
    """
    means = instance.reward_means()
    return min(
        abs(means[a] - means[b])
        for a, b in itertools.combinations(range(instance.num_arms), 2)
    )


def constraint_margin(instance: ProblemInstance) -> float:
    """Minimum distance from any arm's mean cost to the budget."""
    costs = instance.cost_means()
    level = instance.constraint_level
    return min(abs(c - level) for c in costs)


def delta_best_arms(instance: ProblemInstance, delta: float) -> set[int]:
    """Arms optimal for at least one feasibility set sandwiched by ``delta``.

    An arm qualifies iff it lies in the ``+delta``-relaxed feasible set
    and its mean reward is at least the best reward among the
    ``-delta``-tightened set (an empty tightened set imposes no floor).
    This closed form is checked against subset enumeration by
    :func:`delta_best_arms_bruteforce`.
    """
    delta = _check_offset(delta, "delta")
    if delta < 0.0:
        raise ValidationError("bad_parameter", f"delta must be >= 0, got {delta}")
    upper = feasible_set(instance, delta)
    lower = feasible_set(instance, -delta)
    rewards = instance.reward_means()
    if lower:
        floor = max(rewards[a] for a in lower)
        return {a for a in upper if rewards[a] >= floor}
    return set(upper)


def delta_best_arms_bruteforce(instance: ProblemInstance, delta: float) -> set[int]:
    """Union of argmax sets over every sandwiched feasibility set.

    Enumerates all sets S with tightened subset of S subset of relaxed
    set and collects each S's reward-argmax arms.  Exponential in the
    gap between the two sets; limited to ``BRUTEFORCE_MAX_ARMS`` arms.
    """
    delta = _check_offset(delta, "delta")
    if delta < 0.0:
        raise ValidationError("bad_parameter", f"delta must be >= 0, got {delta}")
    if instance.num_arms > BRUTEFORCE_MAX_ARMS:
        raise ValidationError(
            "bad_parameter",
            f"brute force capped at {BRUTEFORCE_MAX_ARMS} arms, "
            f"got {instance.num_arms}",
        )
    upper = feasible_set(instance, delta)
    lower = feasible_set(instance, -delta)
    gap = sorted(upper - lower)
    rewards = instance.reward_means()
    out: set[int] = set()
    for size in range(len(gap) + 1):
        for extra in itertools.combinations(gap, size):
            candidate = lower | set(extra)
            if not candidate:
                continue
            best = max(rewards[a] for a in candidate)
            out.update(a for a in candidate if rewards[a] == best)
    return out


@dataclass(frozen=True)
class FeasibilityProfile:
    """Summary of an instance's feasibility structure."""

    constraint_level: float
    rho: float
    eta: float
    feasible: frozenset[int]
    optimal: frozenset[int]

    def to_json_dict(self) -> dict:
        return {
            "constraint_level": self.constraint_level,
            "rho": self.rho,
            "eta": self.eta,
            "feasible": sorted(self.feasible),
            "optimal": sorted(self.optimal),
        }


def feasibility_profile(instance: ProblemInstance) -> FeasibilityProfile:
    return FeasibilityProfile(
        constraint_level=instance.constraint_level,
        rho=reward_separation(instance),
        eta=constraint_margin(instance),
        feasible=frozenset(feasible_set(instance, 0.0)),
        optimal=frozenset(optimal_feasible_arms(instance)),
    )


# ---------------------------------------------------------------------------
# exact enumeration oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleResult:
    """Exact selection probabilities at one step.

    ``arm_probabilities`` are floats; when ``method == "fraction"`` the
    exact rationals are kept in ``arm_probabilities_exact`` and the
    floats are their roundings.
    """

    t: int
    method: str
    nodes: int
    arm_probabilities: tuple[float, ...]
    arm_probabilities_exact: tuple[Fraction, ...] | None
    delta_events: tuple[tuple[float, float], ...]

    def event_probability(self, delta: float) -> float:
        for d, p in self.delta_events:
            if d == delta:
                return p
        raise KeyError(f"delta {delta} was not requested")

    def to_json_dict(self) -> dict:
        out = {
            "t": self.t,
            "method": self.method,
            "nodes": self.nodes,
            "arm_probabilities": list(self.arm_probabilities),
            "delta_events": [
                {"delta": d, "probability": p} for d, p in self.delta_events
            ],
        }
        if self.arm_probabilities_exact is not None:
            out["arm_probabilities_exact"] = [
                f"{p.numerator}/{p.denominator}" for p in self.arm_probabilities_exact
            ]
        return out


class _Enumerator:
    """DFS over the full outcome tree of the constrained strategy."""

    def __init__(self, instance, eps, level, tie_rule, target, exact, max_nodes):
        self.num_arms = instance.num_arms
        self.eps = eps
        self.level = level
        self.tie_rule = tie_rule
        self.target = target
        self.exact = exact
        self.max_nodes = max_nodes
        self.nodes = 0
        zero = Fraction(0) if exact else 0.0
        self.arm_mass = [zero] * self.num_arms
        one = Fraction(1) if exact else 1.0
        self.uniform = one / self.num_arms
        # Outcome tables: (value-for-sums, probability) per atom.
        self.rewards = []
        self.costs = []
        for arm in instance.arms:
            self.rewards.append(self._atoms(arm.reward))
            self.costs.append(self._atoms(arm.cost))

    def _atoms(self, dist):
        values = dist.support_values()
        probs = dist.support_probabilities()
        convert = Fraction if self.exact else float
        return [
            (convert(v), convert(p)) for v, p in zip(values, probs) if p > 0.0
        ]

    def _selection_law(self, counts, reward_sums, cost_sums, eps_t):
        """Probability of choosing each arm given the current statistics."""
        one = Fraction(1) if self.exact else 1.0
        law = [eps_t * self.uniform] * self.num_arms
        greedy_mass = one - eps_t
        candidates = [
            a
            for a in range(self.num_arms)
            if counts[a] > 0 and cost_sums[a] <= self.level * counts[a]
        ]
        if not candidates:
            for a in range(self.num_arms):
                law[a] = law[a] + greedy_mass * self.uniform
            return law
        best_value = None
        best_arm = -1
        for a in candidates:
            value = reward_sums[a] / counts[a]
            if best_value is None or value > best_value:
                best_value = value
                best_arm = a
        if self.tie_rule == TIE_LOWEST_INDEX:
            law[best_arm] = law[best_arm] + greedy_mass
        else:
            ties = [
                a
                for a in candidates
                if reward_sums[a] / counts[a] == best_value
            ]
            share = greedy_mass / len(ties)
            for a in ties:
                law[a] = law[a] + share
        return law

    def run(self):
        zero = Fraction(0) if self.exact else 0.0
        counts = (0,) * self.num_arms
        sums = (zero,) * self.num_arms
        one = Fraction(1) if self.exact else 1.0
        self._recurse(1, counts, sums, sums, one)
        return self.arm_mass, self.nodes

    def _recurse(self, depth, counts, reward_sums, cost_sums, prob):
        self.nodes += 1
        if self.nodes > self.max_nodes:
            raise ValidationError(
                "oracle_tree_too_large",
                f"enumeration exceeded {self.max_nodes} nodes",
            )
        law = self._selection_law(counts, reward_sums, cost_sums, self.eps[depth - 1])
        if depth == self.target:
            for a in range(self.num_arms):
                self.arm_mass[a] = self.arm_mass[a] + prob * law[a]
            return
        for a in range(self.num_arms):
            p_arm = prob * law[a]
            if p_arm == 0:
                continue
            next_counts = counts[:a] + (counts[a] + 1,) + counts[a + 1 :]
            for x, px in self.rewards[a]:
                next_rewards = (
                    reward_sums[:a] + (reward_sums[a] + x,) + reward_sums[a + 1 :]
                )
                for y, py in self.costs[a]:
                    next_costs = (
                        cost_sums[:a] + (cost_sums[a] + y,) + cost_sums[a + 1 :]
                    )
                    self._recurse(
                        depth + 1, next_counts, next_rewards, next_costs, p_arm * px * py
                    )


def exact_selection_probability(
    instance: ProblemInstance,
    schedule: EpsilonSchedule,
    t: int,
    deltas: Sequence[float] = (),
    tie_rule: str = TIE_LOWEST_INDEX,
    method: str = "auto",
    max_steps: int = ORACLE_MAX_STEPS,
    max_nodes: int = 2_000_000,
) -> OracleResult:
    """Exact law of the arm selected at step ``t``, by full enumeration.

    Requires every reward and cost distribution to have finite support
    and ``t`` at most ``max_steps`` (the tree grows exponentially).
    ``method`` is ``"fraction"`` for exact rational arithmetic (the
    default via ``"auto"``) or ``"float"`` for double precision mirroring
    the simulator's arithmetic exactly.

    Returns per-arm probabilities and, for each requested ``delta``, the
    probability that the selected arm is delta-best.
    """
    _check_tie_rule(tie_rule)
    if method not in ("auto", "fraction", "float"):
        raise ValidationError("bad_parameter", f"unknown oracle method {method!r}")
    if not isinstance(t, int) or isinstance(t, bool) or t < 1:
        raise ValidationError("bad_parameter", f"t must be a positive integer, got {t!r}")
    if t > max_steps:
        raise ValidationError(
            "oracle_horizon",
            f"enumeration is capped at {max_steps} steps, got t={t}",
        )
    for arm_index, arm in enumerate(instance.arms):
        for part_name, dist in (("reward", arm.reward), ("cost", arm.cost)):
            if not dist.has_finite_support:
                raise ValidationError(
                    "continuous_support",
                    f"arm {arm_index} {part_name} has continuous support; "
                    "the enumeration oracle needs finite-support distributions",
                )
    deltas = tuple(float(d) for d in deltas)
    for d in deltas:
        if d < 0.0:
            raise ValidationError("bad_parameter", f"delta must be >= 0, got {d}")

    exact = method in ("auto", "fraction")
    eps_values = [schedule.epsilon(n) for n in range(1, t + 1)]
    eps = [Fraction(e) for e in eps_values] if exact else [float(e) for e in eps_values]
    level = Fraction(instance.constraint_level) if exact else instance.constraint_level

    enumerator = _Enumerator(
        instance, eps, level, tie_rule, t, exact, max_nodes
    )
    mass, nodes = enumerator.run()

    events = []
    for d in deltas:
        best = delta_best_arms(instance, d)
        total = sum((mass[a] for a in sorted(best)), Fraction(0) if exact else 0.0)
        events.append((d, float(total)))

    return OracleResult(
        t=t,
        method="fraction" if exact else "float",
        nodes=nodes,
        arm_probabilities=tuple(float(p) for p in mass),
        arm_probabilities_exact=tuple(mass) if exact else None,
        delta_events=tuple(events),
    )
