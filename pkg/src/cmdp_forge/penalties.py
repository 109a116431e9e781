"""Reward penalties charged when the running cost ledger crosses its budget.

Three interchangeable penalty shapes are supported.  Writing c for the cost
accumulated before the current state and d for the current state's cost, the
undiscounted amount subtracted at one assessment epoch t is

                   safe            crossing (c <= cmax < c+d)   violated (c > cmax)
  risk-neutral     0               lam * (c + d)                lam * d
  value-at-risk    0               lam * (t + 1)                lam
  cvar             0               lam * (c + d - cmax)         lam * d

Summed over the epochs of one trajectory these telescope to exactly
lam * D, lam * (T + 1) and lam * (D - cmax)^+ respectively for trajectories
whose total cost D exceeds the budget, and to zero otherwise.  A ledger at
exactly the budget is safe (the boundary is non-strict on the safe side).
"""

from __future__ import annotations

import math
from enum import Enum


class PenaltyScheme(str, Enum):
    RISK_NEUTRAL = "rn"
    VALUE_AT_RISK = "var"
    CONDITIONAL_VALUE_AT_RISK = "cvar"


class PenaltyOverflow(ArithmeticError):
    """gamma^t underflowed; callers should switch to undiscounted penalties.

    Solvers and the oracle in this package already charge penalties in
    trajectory-return space (no gamma^-t factor), which cannot overflow; this
    error only triggers for the literal per-step form at extreme depths.
    """


def penalty_amount(
    scheme: PenaltyScheme,
    lam: float,
    cost_before: float,
    step_cost: float,
    budget: float,
    epoch: int,
) -> float:
    """Undiscounted penalty for one assessment epoch (table above)."""
    if cost_before > budget:
        if scheme is PenaltyScheme.VALUE_AT_RISK:
            return lam
        return lam * step_cost
    if cost_before + step_cost > budget:
        if scheme is PenaltyScheme.RISK_NEUTRAL:
            return lam * (cost_before + step_cost)
        if scheme is PenaltyScheme.VALUE_AT_RISK:
            return lam * (epoch + 1)
        return lam * (cost_before + step_cost - budget)
    return 0.0


def penalized_reward(
    scheme: PenaltyScheme,
    lam: float,
    r: float,
    d: float,
    c: float,
    t: int,
    gamma: float,
    c_max: float,
) -> float:
    """Literal per-step penalized reward r - delta / gamma^t.

    c is the cost accumulated before the assessed state, d that state's cost.
    Raises PenaltyOverflow when gamma^t underflows to zero (the result would
    not be finite); use the trajectory-space undiscounted form instead.
    """
    delta = penalty_amount(scheme, lam, c, d, c_max, t)
    if delta == 0.0:
        return r
    scale = gamma**t
    out = r - delta / scale if scale > 0.0 else -math.inf
    if not math.isfinite(out):
        raise PenaltyOverflow(
            f"gamma^t = {gamma}^{t} underflowed; apply penalties undiscounted "
            "in trajectory-return space instead of dividing per step"
        )
    return out


def multi_penalty(
    r: float,
    terms: list[tuple[PenaltyScheme, float, float, float, float]],
    t: int,
    gamma: float,
) -> float:
    """Penalized reward with one (scheme, lam, c, d, c_max) term per constraint.

    With a single term this reduces bit-exactly to penalized_reward.
    """
    if not terms:
        raise ValueError("multi_penalty needs at least one constraint term")
    total = 0.0
    for scheme, lam, c, d, c_max in terms:
        total += penalty_amount(scheme, lam, c, d, c_max, t)
    if total == 0.0:
        return r
    scale = gamma**t
    out = r - total / scale if scale > 0.0 else -math.inf
    if not math.isfinite(out):
        raise PenaltyOverflow(
            f"gamma^t = {gamma}^{t} underflowed; apply penalties undiscounted "
            "in trajectory-return space instead of dividing per step"
        )
    return out
