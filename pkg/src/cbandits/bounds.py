"""Finite-time lower bounds on the probability of picking a delta-best arm.

The exact bound is a product of four factors driven by the normalized
cumulative exploration mass x_t.  A closed-form relaxation is available
for inverse-time schedules, in two variants that differ in the exponent
attached to the reward-separation constant rho: ``rho_squared`` matches
the reward tail factor exp(-(rho^2/2) x) and is the default;
``rho_linear`` replaces rho^2 by rho in that exponent, which overstates
the decay whenever rho < 1 and can then exceed the exact bound.  Both
are computed, neither is silently corrected.

Raw products are reported alongside clamped values.  A bound is vacuous
when any factor is negative or the product is nonpositive; the clamped
value is 0 there and min(1, raw) otherwise, so it always lies in [0, 1].
Negative factors must force vacuity explicitly: two negative factors
multiply to a positive raw product that carries no guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from cbandits.core import ValidationError
from cbandits.strategies import EpsilonSchedule

__all__ = [
    "VARIANT_RHO_SQUARED",
    "VARIANT_RHO_LINEAR",
    "VARIANTS",
    "BoundReport",
    "ClosedFormReport",
    "exploration_mass",
    "bound_from_mass",
    "selection_lower_bound",
    "closed_form_exponents",
    "closed_form_lower_bound",
    "hoeffding_tail",
    "bernstein_tail",
]

VARIANT_RHO_SQUARED = "rho_squared"
VARIANT_RHO_LINEAR = "rho_linear"
VARIANTS = (VARIANT_RHO_SQUARED, VARIANT_RHO_LINEAR)

_EXP_OVERFLOW = 700.0


def _check_num_arms(num_arms: int) -> None:
    if not isinstance(num_arms, int) or isinstance(num_arms, bool) or num_arms < 2:
        raise ValidationError(
            "bad_parameter", f"num_arms must be an integer >= 2, got {num_arms!r}"
        )


def _check_nonnegative(value: float, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError("bad_parameter", f"{what} must be a real number")
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise ValidationError(
            "bad_parameter", f"{what} must be finite and >= 0, got {value}"
        )
    return value


def _safe_exp(exponent: float) -> float:
    if exponent > _EXP_OVERFLOW:
        return math.inf
    return math.exp(exponent)


def hoeffding_tail(h: float, j: int) -> float:
    """Upper tail exp(-2 h^2 / j) for a sum of j mean-zero [0,1] summands
    deviating by at least h."""
    h = _check_nonnegative(h, "h")
    if not isinstance(j, int) or isinstance(j, bool) or j < 1:
        raise ValidationError("bad_parameter", f"j must be an integer >= 1, got {j!r}")
    return math.exp(-2.0 * h * h / j)


def bernstein_tail(h: float, sigma_sq: float) -> float:
    """Upper tail exp(-(h^2/2) / (sigma_sq + h/2)) for a sum with variance
    proxy sigma_sq deviating by at least h.

    With sigma_sq = 2x and h = x this reduces to exp(-x/5), the count
    factor of the selection bound.
    """
    h = _check_nonnegative(h, "h")
    sigma_sq = _check_nonnegative(sigma_sq, "sigma_sq")
    if h == 0.0 and sigma_sq == 0.0:
        raise ValidationError(
            "bad_parameter", "h and sigma_sq cannot both be zero"
        )
    return math.exp(-(h * h / 2.0) / (sigma_sq + h / 2.0))


def exploration_mass(schedule: EpsilonSchedule, t: int, num_arms: int) -> float:
    """Normalized cumulative exploration mass x_t.

    Exact partial sum of the switching probabilities through step t,
    scaled by 1 / (2 * num_arms); never a logarithmic surrogate.
    Satisfies 0 < x_t <= t / (2 * num_arms).
    """
    _check_num_arms(num_arms)
    return schedule.cumulative(t) / (2.0 * num_arms)


@dataclass(frozen=True)
class BoundReport:
    """Factor-by-factor evaluation of the exact selection bound."""

    t: int | None
    x_t: float
    epsilon_t: float
    num_arms: int
    delta: float
    rho: float
    factor_eps: float
    factor_count: float
    factor_feas: float
    factor_reward: float
    raw_product: float
    clamped: float
    vacuous: bool

    def factors(self) -> tuple[float, float, float, float]:
        return (
            self.factor_eps,
            self.factor_count,
            self.factor_feas,
            self.factor_reward,
        )

    def to_json_dict(self) -> dict:
        return {
            "t": self.t,
            "x_t": self.x_t,
            "epsilon_t": self.epsilon_t,
            "num_arms": self.num_arms,
            "delta": self.delta,
            "rho": self.rho,
            "factor_eps": self.factor_eps,
            "factor_count": self.factor_count,
            "factor_feas": self.factor_feas,
            "factor_reward": self.factor_reward,
            "raw_product": self.raw_product,
            "clamped": self.clamped,
            "vacuous": self.vacuous,
        }


def _clamp(factors: tuple[float, ...], raw: float) -> tuple[float, bool]:
    vacuous = raw <= 0.0 or any(f < 0.0 for f in factors)
    clamped = 0.0 if vacuous else min(1.0, raw)
    return clamped, vacuous


def bound_from_mass(
    x: float,
    epsilon_t: float,
    num_arms: int,
    delta: float,
    rho: float,
    t: int | None = None,
) -> BoundReport:
    """Evaluate the four-factor bound at exploration mass ``x``.

    ``epsilon_t`` is the switching probability in force at the step being
    bounded.  ``delta`` widens the feasibility event; ``rho`` is the
    minimum reward-mean gap.  Either may be zero, which makes the
    corresponding factor negative and the bound vacuous.
    """
    _check_num_arms(num_arms)
    delta = _check_nonnegative(delta, "delta")
    rho = _check_nonnegative(rho, "rho")
    epsilon_t = _check_nonnegative(epsilon_t, "epsilon_t")
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValidationError("bad_parameter", "x must be a real number")
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise ValidationError("bad_parameter", f"x must be finite and > 0, got {x}")

    n = num_arms
    factor_eps = 1.0 - epsilon_t / n
    factor_count = 1.0 - n * math.exp(-x / 5.0)
    factor_feas = 1.0 - 2.0 * n * math.exp(-2.0 * delta * delta * x)
    factor_reward = 1.0 - 2.0 * n * math.exp(-(rho * rho / 2.0) * x)
    factors = (factor_eps, factor_count, factor_feas, factor_reward)
    assert all(f <= 1.0 for f in factors)
    raw = factor_eps * factor_count * factor_feas * factor_reward
    clamped, vacuous = _clamp(factors, raw)
    return BoundReport(
        t=t,
        x_t=x,
        epsilon_t=epsilon_t,
        num_arms=num_arms,
        delta=delta,
        rho=rho,
        factor_eps=factor_eps,
        factor_count=factor_count,
        factor_feas=factor_feas,
        factor_reward=factor_reward,
        raw_product=raw,
        clamped=clamped,
        vacuous=vacuous,
    )


def selection_lower_bound(
    schedule: EpsilonSchedule,
    t: int,
    num_arms: int,
    delta: float,
    rho: float,
) -> BoundReport:
    """Exact lower bound on the probability that the arm selected at step
    ``t`` is delta-best, as a function of the schedule's history."""
    if not isinstance(t, int) or isinstance(t, bool) or t < 1:
        raise ValidationError("bad_parameter", f"t must be an integer >= 1, got {t!r}")
    epsilon_t = schedule.epsilon(t)
    x = exploration_mass(schedule, t, num_arms)
    return bound_from_mass(x, epsilon_t, num_arms, delta, rho, t=t)


@dataclass(frozen=True)
class ClosedFormReport:
    """Closed-form bound (1 - k/(n t)) (1 - beta / t^alpha)^3 for the
    inverse-time schedule min(1, k/t), valid for t >= k."""

    t: float
    k: float
    num_arms: int
    delta: float
    rho: float
    variant: str
    alpha: float
    beta: float
    log_beta: float
    factor_eps: float
    factor_tail: float
    raw_product: float
    clamped: float
    vacuous: bool

    def to_json_dict(self) -> dict:
        return {
            "t": self.t,
            "k": self.k,
            "num_arms": self.num_arms,
            "delta": self.delta,
            "rho": self.rho,
            "variant": self.variant,
            "alpha": self.alpha,
            "beta": self.beta,
            "log_beta": self.log_beta,
            "factor_eps": self.factor_eps,
            "factor_tail": self.factor_tail,
            "raw_product": self.raw_product,
            "clamped": self.clamped,
            "vacuous": self.vacuous,
        }


def closed_form_exponents(
    k: float,
    num_arms: int,
    delta: float,
    rho: float,
    variant: str = VARIANT_RHO_SQUARED,
) -> tuple[float, float]:
    """(alpha, log beta) for the closed-form bound.

    alpha is the smallest of the three per-factor decay exponents; beta
    is the largest of the matching coefficients, returned in log space
    because it overflows doubles already for moderate k.
    """
    _check_num_arms(num_arms)
    delta = _check_nonnegative(delta, "delta")
    rho = _check_nonnegative(rho, "rho")
    k = _check_k(k)
    if variant not in VARIANTS:
        raise ValidationError(
            "bad_parameter",
            f"variant must be one of {VARIANTS}, got {variant!r}",
        )
    n = num_arms
    rho_term = rho * rho if variant == VARIANT_RHO_SQUARED else rho
    exps = (k / (10.0 * n), delta * delta * k / n, rho_term * k / (4.0 * n))
    coefs = (float(n), 2.0 * n, 2.0 * n)
    alpha = min(exps)
    log_k = math.log(k)
    log_beta = max(math.log(c) + a * log_k for c, a in zip(coefs, exps))
    return alpha, log_beta


def _check_k(k: float) -> float:
    if isinstance(k, bool) or not isinstance(k, (int, float)):
        raise ValidationError("bad_parameter", "k must be a real number")
    k = float(k)
    if not math.isfinite(k) or k <= 1.0:
        raise ValidationError("bad_parameter", f"k must be finite and > 1, got {k}")
    return k


def closed_form_lower_bound(
    k: float,
    num_arms: int,
    delta: float,
    rho: float,
    t: float,
    variant: str = VARIANT_RHO_SQUARED,
) -> ClosedFormReport:
    """Closed-form relaxation of the selection bound for the schedule
    min(1, k/t), requiring k > 1 and t >= k.

    The ``rho_squared`` variant never exceeds the exact bound; the
    ``rho_linear`` variant can when rho < 1.
    """
    k = _check_k(k)
    alpha, log_beta = closed_form_exponents(k, num_arms, delta, rho, variant)
    if isinstance(t, bool) or not isinstance(t, (int, float)):
        raise ValidationError("bad_parameter", "t must be a real number")
    t = float(t)
    if not math.isfinite(t) or t < k:
        raise ValidationError(
            "bad_parameter", f"the closed form needs t >= k, got t={t} < k={k}"
        )
    ratio = _safe_exp(log_beta - alpha * math.log(t))
    factor_eps = 1.0 - k / (num_arms * t)
    factor_tail = 1.0 - ratio
    raw = factor_eps * factor_tail**3
    clamped, vacuous = _clamp((factor_eps, factor_tail), raw)
    return ClosedFormReport(
        t=t,
        k=k,
        num_arms=num_arms,
        delta=delta,
        rho=rho,
        variant=variant,
        alpha=alpha,
        beta=_safe_exp(log_beta),
        log_beta=log_beta,
        factor_eps=factor_eps,
        factor_tail=factor_tail,
        raw_product=raw,
        clamped=clamped,
        vacuous=vacuous,
    )
