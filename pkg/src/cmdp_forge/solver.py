"""Finite-horizon backward induction over the budget-augmented MDP.

Values are kept in absolute-time form: V(t, x) is the optimal expectation of
sum_{u>=t} gamma^u r_u minus all penalty assessments from epoch t+1 on.  The
epoch-0 assessment is a constant added at the end, so the reported objective
equals the expected penalized trajectory return exactly, for any discount,
with no gamma^-t factors anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .extended import VIOLATED, AugState, ExtendedMdp, build_extended
from .model import Cmdp, TabularPolicy, discount_powers
from .penalties import PenaltyScheme

# Action values within this distance of the row maximum count as ties;
# the lowest action index among them wins, for reproducible reports.
TIE_TOL = 1e-12


class WorstCaseInfeasible(RuntimeError):
    """No policy keeps every positive-probability trajectory within budget."""

    def __init__(self, state_desc: str):
        super().__init__(
            f"worst-case constrained problem is infeasible: no feasible action at {state_desc}"
        )
        self.state_desc = state_desc


@dataclass(frozen=True)
class ValueTable:
    """Optimal value-to-go and greedy action per (step, augmented state).

    values[t] maps augmented states to V(t, .) for t = 0..T; the logical
    layer T+1 is identically zero and not stored (the horizon-T layer already
    carries only arrival assessments folded in from step T-1).
    """

    values: list[dict[AugState, float]]
    greedy: list[dict[AugState, int]]
    initial_value: float

    def greedy_policy(self, n_actions: int) -> TabularPolicy:
        choices = {}
        for t, layer in enumerate(self.greedy):
            for x, a in layer.items():
                choices[(t, x[0], x[1])] = a
        return TabularPolicy(
            table={
                key: tuple(1.0 if b == a else 0.0 for b in range(n_actions))
                for key, a in choices.items()
            },
            kind="deterministic",
            time_dependent=True,
        )


def _pick(best_actions: list[tuple[int, float]]) -> tuple[int, float]:
    top = max(v for _, v in best_actions)
    for a, v in best_actions:
        if v >= top - TIE_TOL:
            return a, top
    raise AssertionError("unreachable: empty action list")


def backward_induction(e: ExtendedMdp) -> ValueTable:
    """Optimal values and greedy actions for the penalized objective."""
    m = e.base
    T = m.horizon
    pows = discount_powers(m.discount, T)
    values: list[dict[AugState, float]] = [dict() for _ in range(T + 1)]
    greedy: list[dict[AugState, int]] = [dict() for _ in range(T)]
    for x in e.layers[T]:
        values[T][x] = 0.0
    for t in range(T - 1, -1, -1):
        vnext = values[t + 1]
        gt = pows[t]
        layer = values[t]
        glayer = greedy[t]
        for x in e.layers[t]:
            s, ledger = x
            scored = []
            for a in m.actions_at(s):
                acc = gt * m.reward[s, a]
                for s2, p in m.successors(s, a):
                    x2 = (s2, e.advance(ledger, s2))
                    acc += p * (vnext[x2] - e.arrival_penalty(ledger, s2, t + 1))
                scored.append((a, acc))
            a, v = _pick(scored)
            layer[x] = v
            glayer[x] = a
    return ValueTable(
        values=values,
        greedy=greedy,
        initial_value=values[0][e.initial] - e.initial_penalty,
    )


def evaluate_policy(e: ExtendedMdp, policy: TabularPolicy) -> float:
    """Expected penalized return of an arbitrary policy (linear sweep, no max)."""
    m = e.base
    T = m.horizon
    pows = discount_powers(m.discount, T)
    vnext: dict[AugState, float] = {x: 0.0 for x in e.layers[T]}
    for t in range(T - 1, -1, -1):
        gt = pows[t]
        layer = {}
        for x in e.layers[t]:
            s, ledger = x
            row = policy.probabilities(t, s, ledger)
            acc = 0.0
            for a in m.actions_at(s):
                pa = row[a]
                if pa == 0.0:
                    continue
                q = gt * m.reward[s, a]
                for s2, p in m.successors(s, a):
                    x2 = (s2, e.advance(ledger, s2))
                    q += p * (vnext[x2] - e.arrival_penalty(ledger, s2, t + 1))
                acc += pa * q
            layer[x] = acc
        vnext = layer
    return vnext[e.initial] - e.initial_penalty


def unconstrained_value(m: Cmdp) -> tuple[float, list[dict[int, int]]]:
    """Plain finite-horizon DP on the base model, ignoring costs entirely.

    Kept independent of the augmented machinery so the zero-penalty
    equivalence check compares two separately coded routes.
    """
    T = m.horizon
    pows = discount_powers(m.discount, T)
    vnext = {s: 0.0 for s in range(m.n_states)}
    greedy: list[dict[int, int]] = [dict() for _ in range(T)]
    for t in range(T - 1, -1, -1):
        layer = {}
        for s in range(m.n_states):
            scored = []
            for a in m.actions_at(s):
                acc = pows[t] * m.reward[s, a]
                for s2, p in m.successors(s, a):
                    acc += p * vnext[s2]
                scored.append((a, acc))
            a, v = _pick(scored)
            layer[s] = v
            greedy[t][s] = a
        vnext = layer
    return vnext[m.s0], greedy


def worst_case_value(
    m: Cmdp, quantum: float = 0.25
) -> tuple[float, TabularPolicy]:
    """Best return over policies whose every trajectory stays within budget.

    Realized by masking, at each augmented state, every action that carries
    positive probability into a violated ledger; -inf propagates through
    states with empty feasible sets.  Masking is exact, unlike a huge-lambda
    limit, and is the definition used for the reported value.
    """
    e = build_extended(m, [0.0] * m.n_constraints,
                       [PenaltyScheme.RISK_NEUTRAL] * m.n_constraints, quantum)
    if any(entry == VIOLATED for entry in e.initial[1]):
        raise WorstCaseInfeasible(f"initial state {m.state_name(m.s0)}")
    T = m.horizon
    pows = discount_powers(m.discount, T)
    vnext = {x: (0.0 if VIOLATED not in x[1] else -math.inf) for x in e.layers[T]}
    greedy: list[dict[AugState, int]] = [dict() for _ in range(T)]
    for t in range(T - 1, -1, -1):
        layer = {}
        for x in e.layers[t]:
            s, ledger = x
            if VIOLATED in ledger:
                layer[x] = -math.inf
                continue
            scored = []
            for a in m.actions_at(s):
                acc = pows[t] * m.reward[s, a]
                for s2, p in m.successors(s, a):
                    x2 = (s2, e.advance(ledger, s2))
                    if VIOLATED in x2[1] or vnext[x2] == -math.inf:
                        acc = -math.inf
                        break
                    acc += p * vnext[x2]
                scored.append((a, acc))
            a, v = _pick(scored)
            layer[x] = v
            greedy[t][x] = a
        vnext = layer
    value = vnext[e.initial]
    if value == -math.inf:
        desc = _first_dead_end(m, e, greedy)
        raise WorstCaseInfeasible(desc)
    table = ValueTable(values=[], greedy=greedy, initial_value=value)
    return value, table.greedy_policy(m.n_actions)


def _first_dead_end(m: Cmdp, e: ExtendedMdp, greedy) -> str:
    """Name a reachable augmented state with no feasible action."""
    # Walk forward from the initial state through -inf territory.
    frontier = {e.initial}
    for t in range(m.horizon):
        nxt = set()
        for (s, ledger) in frontier:
            all_masked = True
            for a in m.actions_at(s):
                ok = True
                for s2, _p in m.successors(s, a):
                    if VIOLATED in e.advance(ledger, s2):
                        ok = False
                        break
                if ok:
                    all_masked = False
                    for s2, _p in m.successors(s, a):
                        nxt.add((s2, e.advance(ledger, s2)))
            if all_masked:
                return f"{m.state_name(s)} with ledger {ledger} at step {t}"
        frontier = nxt
    return f"initial state {m.state_name(m.s0)}"


def max_safe_cost(m: Cmdp, k: int = 0, quantum: float = 0.25) -> float:
    """max over policies of E[D_k * 1(D_k <= budget_k)].

    The truncated expectation is linear in trajectory probabilities, so it
    equals the value of a DP over the single-constraint augmented space with
    zero step rewards and terminal reward equal to the ledger total when the
    episode ends within budget (the arrival-inclusive ledger at the terminal
    step is exactly the trajectory's total cost) and zero once violated.
    """
    single = Cmdp(
        transition=m.transition,
        reward=m.reward,
        costs=m.costs[k : k + 1],
        budgets=(m.budgets[k],),
        horizon=m.horizon,
        discount=m.discount,
        s0=m.s0,
        available=m.available,
        state_names=m.state_names,
        action_names=m.action_names,
    )
    e = build_extended(single, [0.0], [PenaltyScheme.RISK_NEUTRAL], quantum)
    vnext = {
        x: (e.ledger_cost(x[1][0]) if x[1][0] != VIOLATED else 0.0)
        for x in e.layers[m.horizon]
    }
    for t in range(m.horizon - 1, -1, -1):
        layer = {}
        for x in e.layers[t]:
            s, ledger = x
            best = -math.inf
            for a in m.actions_at(s):
                acc = 0.0
                for s2, p in m.successors(s, a):
                    acc += p * vnext[(s2, e.advance(ledger, s2))]
                best = max(best, acc)
            layer[x] = best
        vnext = layer
    return vnext[e.initial]


def cost_slack(m: Cmdp, k: int = 0, quantum: float = 0.25) -> float:
    """Budget headroom: budget_k minus the largest within-budget expected cost."""
    return m.budgets[k] - max_safe_cost(m, k, quantum)


@dataclass(frozen=True)
class BoundsReport:
    """Key quantities behind the penalty-weight feasibility thresholds.

    lambda_expected_cost is the smallest penalty weight guaranteeing the
    expected-cost constraint (infinite when the slack is zero);
    lambda_chance(alpha) guarantees violation probability at most alpha.
    """

    best_return: float
    worst_case_return: float
    cost_slack: float
    lambda_expected_cost: float
    lambda_chance: float
    alpha: float
    feasible_worst_case: bool = True

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("best_return", self.best_return),
            ("worst_case_return", self.worst_case_return),
            ("cost_slack", self.cost_slack),
            ("lambda_expected_cost", self.lambda_expected_cost),
            ("lambda_chance", self.lambda_chance),
            ("alpha", self.alpha),
            ("feasible_worst_case", 1.0 if self.feasible_worst_case else 0.0),
        ]


def lambda_bounds(m: Cmdp, alpha: float, quantum: float = 0.25, k: int = 0) -> BoundsReport:
    """Compute the feasibility thresholds for constraint k.

    Raises WorstCaseInfeasible when no always-safe policy exists (the
    thresholds are undefined there).
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    best, _ = unconstrained_value(m)
    worst, _ = worst_case_value(m, quantum)
    slack = cost_slack(m, k, quantum)
    gap = best - worst
    lam_rn = math.inf if slack == 0.0 else gap / slack
    lam_var = gap / (alpha * m.budgets[k])
    return BoundsReport(
        best_return=best,
        worst_case_return=worst,
        cost_slack=slack,
        lambda_expected_cost=lam_rn,
        lambda_chance=lam_var,
        alpha=alpha,
    )


def solve(
    m: Cmdp,
    lambdas,
    schemes,
    quantum: float = 0.25,
) -> tuple[float, TabularPolicy, ExtendedMdp]:
    """Convenience wrapper: build the augmented view, solve, extract greedy."""
    e = build_extended(m, lambdas, schemes, quantum)
    vt = backward_induction(e)
    return vt.initial_value, vt.greedy_policy(m.n_actions), e
