"""Bounded-support outcome distributions, bandit problem instances, and
reproducible per-trial uniform streams.

Every distribution here has support inside the unit interval and a
closed-form mean and variance.  Sampling is inverse-transform only: each
draw consumes exactly one uniform from the caller's stream, which keeps
trajectories replayable and makes vectorized and scalar execution paths
produce bit-identical results.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import math

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.special import betaincinv

__all__ = [
    "ValidationError",
    "Distribution",
    "PointMass",
    "Bernoulli",
    "Discrete",
    "Beta",
    "Arm",
    "ProblemInstance",
    "validate_instance",
    "distribution_from_config",
    "instance_from_config",
    "UniformSource",
    "trial_stream",
    "experiment_key",
    "DRAWS_PER_STEP",
    "PROBABILITY_TOL",
]

# Tolerance for "probabilities sum to one" style checks.
PROBABILITY_TOL = 1e-12

# Fixed per-step draw budget of the selection protocol: branch uniform,
# arm uniform, reward uniform, cost uniform.  One Philox counter block
# yields exactly four doubles, so one counter increment == one step.
DRAWS_PER_STEP = 4

_MAX_SEED = 2**64

ArrayLike = Union[float, np.ndarray]


class ValidationError(ValueError):
    """Input rejected by a validity check.

    Parameters
    ----------
    code : str
        Stable machine-readable identifier of the failed check
        (e.g. ``"too_few_arms"``, ``"empty_feasible_set"``,
        ``"out_of_support"``).
    message : str
        Human-readable explanation.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _as_float(value, code: str, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(code, f"{what} must be a real number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ValidationError(code, f"{what} must be finite, got {out!r}")
    return out


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------


class Distribution(ABC):
    """A distribution supported on the unit interval.

    Subclasses expose exact first and second moments and an inverse CDF
    (``quantile``).  ``sample`` draws by inverse transform, consuming
    exactly one uniform per variate regardless of the distribution kind.
    """

    kind: str = "abstract"

    @property
    @abstractmethod
    def mean(self) -> float:
        """Exact mean, from the closed form for this kind."""

    @property
    @abstractmethod
    def variance(self) -> float:
        """Exact variance, from the closed form for this kind."""

    @abstractmethod
    def quantile(self, u: ArrayLike) -> ArrayLike:
        """Inverse CDF evaluated at ``u`` in [0, 1).

        Accepts a scalar or an ndarray and returns the same shape.  The
        pushforward of ``U[0, 1)`` under this map is the distribution
        itself.
        """

    @abstractmethod
    def to_config(self) -> dict:
        """Serializable ``{"kind": ..., <params>}`` mapping."""

    @property
    def has_finite_support(self) -> bool:
        return True

    def support_values(self) -> tuple[float, ...]:
        """Atoms of a finite-support distribution, ascending."""
        raise ValidationError(
            "continuous_support",
            f"{self.kind} distribution has continuous support",
        )

    def support_probabilities(self) -> tuple[float, ...]:
        """Probabilities matching ``support_values``."""
        raise ValidationError(
            "continuous_support",
            f"{self.kind} distribution has continuous support",
        )

    def sample(self, source: "UniformSource") -> float:
        value = float(self.quantile(source.uniform()))
        assert 0.0 <= value <= 1.0
        return value

    def sample_many(self, source: "UniformSource", n: int) -> np.ndarray:
        values = np.asarray(self.quantile(source.uniforms(n)), dtype=np.float64)
        assert values.min(initial=0.0) >= 0.0 and values.max(initial=0.0) <= 1.0
        return values


@dataclass(frozen=True)
class PointMass(Distribution):
    """Degenerate distribution putting all mass on ``value``."""

    value: float
    kind = "point_mass"

    def __post_init__(self):
        v = _as_float(self.value, "bad_parameter", "point_mass value")
        if not 0.0 <= v <= 1.0:
            raise ValidationError(
                "out_of_support", f"point_mass value {v} outside [0, 1]"
            )
        object.__setattr__(self, "value", v)

    @property
    def mean(self) -> float:
        return self.value

    @property
    def variance(self) -> float:
        return 0.0

    def quantile(self, u: ArrayLike) -> ArrayLike:
        if isinstance(u, float):
            return self.value
        return np.full_like(np.asarray(u, dtype=np.float64), self.value)

    def support_values(self) -> tuple[float, ...]:
        return (self.value,)

    def support_probabilities(self) -> tuple[float, ...]:
        return (1.0,)

    def to_config(self) -> dict:
        return {"kind": "point_mass", "value": self.value}


@dataclass(frozen=True)
class Bernoulli(Distribution):
    """Bernoulli distribution on {0, 1} with success probability ``p``."""

    p: float
    kind = "bernoulli"

    def __post_init__(self):
        p = _as_float(self.p, "bad_parameter", "bernoulli p")
        if not 0.0 <= p <= 1.0:
            raise ValidationError("bad_parameter", f"bernoulli p {p} outside [0, 1]")
        object.__setattr__(self, "p", p)

    @property
    def mean(self) -> float:
        return self.p

    @property
    def variance(self) -> float:
        return self.p * (1.0 - self.p)

    def quantile(self, u: ArrayLike) -> ArrayLike:
        # P{U < p} = p exactly for U uniform on [0, 1).
        if isinstance(u, float):
            return 1.0 if u < self.p else 0.0
        return (np.asarray(u) < self.p).astype(np.float64)

    def support_values(self) -> tuple[float, ...]:
        return (0.0, 1.0)

    def support_probabilities(self) -> tuple[float, ...]:
        return (1.0 - self.p, self.p)

    def to_config(self) -> dict:
        return {"kind": "bernoulli", "p": self.p}


@dataclass(frozen=True)
class Discrete(Distribution):
    """Finite distribution over ``values`` with matching ``probabilities``.

    Values must lie in [0, 1] and probabilities must be nonnegative and
    sum to one within ``PROBABILITY_TOL``.
    """

    values: tuple[float, ...]
    probabilities: tuple[float, ...]
    kind = "discrete"
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = tuple(
            _as_float(v, "bad_parameter", "discrete value") for v in self.values
        )
        probs = tuple(
            _as_float(p, "bad_parameter", "discrete probability")
            for p in self.probabilities
        )
        if len(values) == 0:
            raise ValidationError("bad_parameter", "discrete needs at least one value")
        if len(values) != len(probs):
            raise ValidationError(
                "bad_parameter",
                f"discrete has {len(values)} values but {len(probs)} probabilities",
            )
        for v in values:
            if not 0.0 <= v <= 1.0:
                raise ValidationError(
                    "out_of_support", f"discrete value {v} outside [0, 1]"
                )
        for p in probs:
            if p < 0.0:
                raise ValidationError(
                    "bad_probabilities", f"discrete probability {p} is negative"
                )
        total = math.fsum(probs)
        if abs(total - 1.0) > PROBABILITY_TOL:
            raise ValidationError(
                "bad_probabilities",
                f"discrete probabilities sum to {total!r}, not 1 within "
                f"{PROBABILITY_TOL}",
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "_cum", np.cumsum(np.asarray(probs, dtype=np.float64)))

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probabilities))

    @property
    def variance(self) -> float:
        m = self.mean
        return math.fsum(p * (v - m) ** 2 for v, p in zip(self.values, self.probabilities))

    def quantile(self, u: ArrayLike) -> ArrayLike:
        idx = np.searchsorted(self._cum, u, side="right")
        idx = np.minimum(idx, len(self.values) - 1)
        out = np.asarray(self.values, dtype=np.float64)[idx]
        if isinstance(u, float):
            return float(out)
        return out

    def support_values(self) -> tuple[float, ...]:
        return self.values

    def support_probabilities(self) -> tuple[float, ...]:
        return self.probabilities

    def to_config(self) -> dict:
        return {
            "kind": "discrete",
            "values": list(self.values),
            "probabilities": list(self.probabilities),
        }


@dataclass(frozen=True)
class Beta(Distribution):
    """Beta distribution on (0, 1) with positive shape parameters."""

    shape1: float
    shape2: float
    kind = "beta"

    def __post_init__(self):
        a = _as_float(self.shape1, "bad_parameter", "beta shape1")
        b = _as_float(self.shape2, "bad_parameter", "beta shape2")
        if a <= 0.0 or b <= 0.0:
            raise ValidationError(
                "bad_parameter", f"beta shapes must be positive, got ({a}, {b})"
            )
        object.__setattr__(self, "shape1", a)
        object.__setattr__(self, "shape2", b)

    @property
    def mean(self) -> float:
        return self.shape1 / (self.shape1 + self.shape2)

    @property
    def variance(self) -> float:
        a, b = self.shape1, self.shape2
        return a * b / ((a + b) ** 2 * (a + b + 1.0))

    @property
    def has_finite_support(self) -> bool:
        return False

    def quantile(self, u: ArrayLike) -> ArrayLike:
        out = betaincinv(self.shape1, self.shape2, u)
        if isinstance(u, float):
            return float(out)
        return out

    def to_config(self) -> dict:
        return {"kind": "beta", "shape1": self.shape1, "shape2": self.shape2}


_DISTRIBUTION_KINDS = {
    "point_mass": (PointMass, ("value",)),
    "bernoulli": (Bernoulli, ("p",)),
    "discrete": (Discrete, ("values", "probabilities")),
    "beta": (Beta, ("shape1", "shape2")),
}


def _require_mapping(obj, path: str) -> Mapping:
    if not isinstance(obj, Mapping):
        raise ValidationError("bad_config", f"{path} must be a mapping, got {type(obj).__name__}")
    return obj


def _check_keys(mapping: Mapping, allowed: Iterable[str], path: str) -> None:
    allowed = set(allowed)
    for key in mapping:
        if key not in allowed:
            raise ValidationError(
                "unknown_key",
                f"unknown key {key!r} under {path} (allowed: {sorted(allowed)})",
            )


def distribution_from_config(config: Mapping, path: str = "distribution") -> Distribution:
    """Build a :class:`Distribution` from ``{"kind": ..., <params>}``.

    Raises
    ------
    ValidationError
        If the kind is unknown, a key is unrecognized, or parameter
        validation fails.
    """
    config = _require_mapping(config, path)
    kind = config.get("kind")
    if kind not in _DISTRIBUTION_KINDS:
        raise ValidationError(
            "unknown_kind",
            f"{path}.kind must be one of {sorted(_DISTRIBUTION_KINDS)}, got {kind!r}",
        )
    cls, params = _DISTRIBUTION_KINDS[kind]
    _check_keys(config, ("kind",) + params, path)
    kwargs = {}
    for name in params:
        if name not in config:
            raise ValidationError("bad_config", f"{path} is missing key {name!r}")
        value = config[name]
        if isinstance(value, Sequence) and not isinstance(value, (str, bytes)):
            value = tuple(value)
        kwargs[name] = value
    return cls(**kwargs)


# ---------------------------------------------------------------------------
# problem instances
# ---------------------------------------------------------------------------


class Arm:
    """A bandit arm: a reward distribution paired with a cost distribution."""

    __slots__ = ("reward", "cost")

    def __init__(self, reward: Distribution, cost: Distribution):
        if not isinstance(reward, Distribution) or not isinstance(cost, Distribution):
            raise ValidationError("bad_config", "arm needs reward and cost distributions")
        self.reward = reward
        self.cost = cost

    def __eq__(self, other):
        return (
            isinstance(other, Arm)
            and self.reward == other.reward
            and self.cost == other.cost
        )

    def __repr__(self):
        return f"Arm(reward={self.reward!r}, cost={self.cost!r})"

    def to_config(self) -> dict:
        return {"reward": self.reward.to_config(), "cost": self.cost.to_config()}


@dataclass(frozen=True)
class ProblemInstance:
    """A constrained bandit instance.

    ``constraint_level`` is the cost budget: an arm is feasible when its
    exact mean cost is at most this level.  Instances are validated at
    construction, so downstream selection loops can stay branch-free.

    Raises
    ------
    ValidationError
        ``"too_few_arms"`` for fewer than two arms,
        ``"empty_feasible_set"`` when no arm's mean cost is within the
        budget.
    """

    arms: tuple[Arm, ...]
    constraint_level: float

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(
            self,
            "constraint_level",
            _as_float(self.constraint_level, "bad_parameter", "constraint_level"),
        )
        validate_instance(self)

    @property
    def num_arms(self) -> int:
        return len(self.arms)

    def reward_means(self) -> np.ndarray:
        return np.array([arm.reward.mean for arm in self.arms], dtype=np.float64)

    def cost_means(self) -> np.ndarray:
        return np.array([arm.cost.mean for arm in self.arms], dtype=np.float64)

    def to_config(self) -> dict:
        return {
            "constraint_level": self.constraint_level,
            "arms": [arm.to_config() for arm in self.arms],
        }


def validate_instance(instance: ProblemInstance) -> None:
    """Check instance-level invariants, raising :class:`ValidationError`."""
    if len(instance.arms) < 2:
        raise ValidationError(
            "too_few_arms",
            f"an instance needs at least 2 arms, got {len(instance.arms)}",
        )
    for i, arm in enumerate(instance.arms):
        if not isinstance(arm, Arm):
            raise ValidationError("bad_config", f"arms[{i}] is not an Arm")
    costs = instance.cost_means()
    if not np.any(costs <= instance.constraint_level):
        raise ValidationError(
            "empty_feasible_set",
            f"no arm has mean cost <= constraint level {instance.constraint_level} "
            f"(mean costs: {costs.tolist()})",
        )


def instance_from_config(config: Mapping, path: str = "instance") -> ProblemInstance:
    """Build a :class:`ProblemInstance` from its config mapping."""
    config = _require_mapping(config, path)
    _check_keys(config, ("arms", "constraint_level"), path)
    if "constraint_level" not in config:
        raise ValidationError("bad_config", f"{path} is missing key 'constraint_level'")
    if "arms" not in config:
        raise ValidationError("bad_config", f"{path} is missing key 'arms'")
    arms_config = config["arms"]
    if not isinstance(arms_config, Sequence) or isinstance(arms_config, (str, bytes)):
        raise ValidationError("bad_config", f"{path}.arms must be a list")
    arms = []
    for i, arm_config in enumerate(arms_config):
        arm_path = f"{path}.arms[{i}]"
        arm_config = _require_mapping(arm_config, arm_path)
        _check_keys(arm_config, ("reward", "cost"), arm_path)
        for part in ("reward", "cost"):
            if part not in arm_config:
                raise ValidationError("bad_config", f"{arm_path} is missing key {part!r}")
        arms.append(
            Arm(
                distribution_from_config(arm_config["reward"], f"{arm_path}.reward"),
                distribution_from_config(arm_config["cost"], f"{arm_path}.cost"),
            )
        )
    return ProblemInstance(arms=tuple(arms), constraint_level=config["constraint_level"])


# ---------------------------------------------------------------------------
# uniform streams
# ---------------------------------------------------------------------------


class UniformSource:
    """Buffered stream of i.i.d. uniform doubles on [0, 1).

    Wraps a numpy ``Generator`` and hands out its ``random()`` sequence in
    order, one value or one block at a time.  Buffering never changes the
    sequence, so scalar and bulk consumers see identical values.
    """

    __slots__ = ("_generator", "_block", "_buffer", "_pos")

    def __init__(self, generator: Generator, block: int = 512):
        if block < 1:
            raise ValidationError("bad_parameter", f"block must be >= 1, got {block}")
        self._generator = generator
        self._block = int(block)
        self._buffer = np.empty(0, dtype=np.float64)
        self._pos = 0

    def uniform(self) -> float:
        if self._pos >= self._buffer.shape[0]:
            self._buffer = self._generator.random(self._block)
            self._pos = 0
        value = self._buffer[self._pos]
        self._pos += 1
        return float(value)

    def uniforms(self, n: int) -> np.ndarray:
        n = int(n)
        if n < 0:
            raise ValidationError("bad_parameter", f"n must be >= 0, got {n}")
        remaining = self._buffer[self._pos :]
        if n <= remaining.shape[0]:
            out = remaining[:n].copy()
            self._pos += n
            return out
        tail = self._generator.random(n - remaining.shape[0])
        self._buffer = np.empty(0, dtype=np.float64)
        self._pos = 0
        return np.concatenate([remaining, tail])


def _check_seed(master_seed: int) -> int:
    if isinstance(master_seed, bool) or not isinstance(master_seed, (int, np.integer)):
        raise ValidationError(
            "bad_parameter", f"master_seed must be an integer, got {master_seed!r}"
        )
    seed = int(master_seed)
    if not 0 <= seed < _MAX_SEED:
        raise ValidationError(
            "bad_parameter", f"master_seed must be in [0, 2**64), got {seed}"
        )
    return seed


def experiment_key(master_seed: int) -> np.ndarray:
    """Derive the 128-bit counter-based stream key for an experiment."""
    return SeedSequence(_check_seed(master_seed)).generate_state(2, np.uint64)


def trial_stream(master_seed: int, replication: int, horizon: int) -> UniformSource:
    """Independent uniform stream for one replication of one experiment.

    The stream is a fixed window of a counter-based (Philox) sequence
    keyed by ``master_seed``: replication ``r`` starts at counter
    ``r * horizon`` and one counter block covers one step's
    ``DRAWS_PER_STEP`` draws.  Streams for different replications never
    overlap while at most ``DRAWS_PER_STEP * horizon`` values are drawn,
    and they can be regenerated in any order on any worker.
    """
    if replication < 0:
        raise ValidationError(
            "bad_parameter", f"replication must be >= 0, got {replication}"
        )
    if horizon < 1:
        raise ValidationError("bad_parameter", f"horizon must be >= 1, got {horizon}")
    key = experiment_key(master_seed)
    bitgen = Philox(key=key, counter=int(replication) * int(horizon))
    return UniformSource(Generator(bitgen))
