"""Machine checks for every bound the penalized reformulation promises.

Each check solves the augmented problem, runs the enumeration oracle on the
greedy policy, and compares the measured quantity against the claimed bound
at a fixed tolerance.  Checks emit rows (kind, lambda, bound, measured,
pass) suitable for CSV so a failing bound is visible, not just a boolean.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .extended import build_extended
from .fixtures import Fixture
from .model import Cmdp, TabularPolicy
from .oracle import (
    chance_penalty_steps,
    enumerate_trajectories,
    stats,
)
from .penalties import PenaltyScheme
from .solver import (
    cost_slack,
    solve,
    unconstrained_value,
    worst_case_value,
)

TOL = 1e-9

DEFAULT_LAMBDA_GRID = (0.1, 0.5, 1.0, 5.0, 25.0)
EQUIVALENCE_LAMBDA_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_ALPHAS = (0.05, 0.25, 0.5)
HUGE_LAMBDA = 1e9

ALL_KINDS = (
    "zero_penalty_equivalence",
    "worst_case_masking",
    "violation_cost_bound",
    "expected_cost_feasibility",
    "violation_prob_bound",
    "chance_penalty_equivalence",
    "excess_penalty_equivalence",
    "multi_constraint_feasibility",
)


@dataclass(frozen=True)
class CheckRow:
    kind: str
    fixture: str
    lam: float
    bound: float
    measured: float
    passed: bool
    note: str = ""


@dataclass
class VerificationReport:
    kind: str
    rows: list[CheckRow] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def add(self, fixture, lam, bound, measured, passed, note=""):
        self.rows.append(CheckRow(self.kind, fixture, lam, bound, measured, bool(passed), note))


def _greedy_oracle(f: Fixture, lambdas, schemes, cap=1_000_000):
    value, policy, _e = solve(f.cmdp, lambdas, schemes, f.quantum)
    trajs = enumerate_trajectories(f.cmdp, policy, f.quantum, cap)
    return value, policy, stats(trajs, f.cmdp, lambdas, schemes), trajs


def _rn(f: Fixture):
    return [PenaltyScheme.RISK_NEUTRAL] * f.cmdp.n_constraints


def check_zero_penalty_equivalence(fixtures: list[Fixture]) -> VerificationReport:
    """Zero penalty weight collapses the augmented problem to the plain one."""
    rep = VerificationReport("zero_penalty_equivalence")
    for f in fixtures:
        plain, _ = unconstrained_value(f.cmdp)
        aug, _, _ = solve(f.cmdp, [0.0] * f.cmdp.n_constraints, _rn(f), f.quantum)
        rep.add(f.name, 0.0, plain, aug, abs(aug - plain) <= TOL)
    return rep


def check_worst_case_masking(fixtures: list[Fixture]) -> VerificationReport:
    """A huge penalty weight reproduces the masked always-safe optimum.

    Asserts the greedy policy's violation probability is exactly zero, its
    expected (unpenalized) return matches the masked value within 1e-9, and
    the huge-lambda objective matches it within 1e-6.
    """
    rep = VerificationReport("worst_case_masking")
    for f in fixtures:
        if not f.worst_case_feasible:
            continue
        K = f.cmdp.n_constraints
        masked, _ = worst_case_value(f.cmdp, f.quantum)
        value, _policy, st, _ = _greedy_oracle(f, [HUGE_LAMBDA] * K, _rn(f))
        viol = max(st.violation_prob)
        rep.add(f.name, HUGE_LAMBDA, 0.0, viol, viol == 0.0, "violation probability")
        rep.add(
            f.name, HUGE_LAMBDA, masked, st.expected_return,
            abs(st.expected_return - masked) <= TOL, "greedy expected return",
        )
        rep.add(
            f.name, HUGE_LAMBDA, masked, value,
            abs(value - masked) <= 1e-6, "huge-lambda objective",
        )
    return rep


def check_violation_cost_bound(
    fixtures: list[Fixture], lambda_grid=DEFAULT_LAMBDA_GRID
) -> VerificationReport:
    """Expected cost carried by violating trajectories is at most gap/lambda."""
    rep = VerificationReport("violation_cost_bound")
    for f in fixtures:
        if not f.worst_case_feasible:
            rep.notes.append(f"{f.name}: skipped, worst case infeasible so the gap is undefined")
            continue
        best, _ = unconstrained_value(f.cmdp)
        worst, _ = worst_case_value(f.cmdp, f.quantum)
        gap = best - worst
        K = f.cmdp.n_constraints
        for lam in lambda_grid:
            _, _, st, _ = _greedy_oracle(f, [lam] * K, _rn(f))
            bound = gap / lam
            measured = max(st.trunc_above)
            rep.add(f.name, lam, bound, measured, measured <= bound + TOL)
    return rep


def check_expected_cost_feasibility(
    fixtures: list[Fixture], multipliers=(1.0, 2.0, 10.0)
) -> VerificationReport:
    """At or above the threshold weight, the greedy policy meets E[D] <= budget."""
    rep = VerificationReport("expected_cost_feasibility")
    for f in fixtures:
        if not f.worst_case_feasible or f.cmdp.n_constraints != 1:
            continue
        best, _ = unconstrained_value(f.cmdp)
        worst, _ = worst_case_value(f.cmdp, f.quantum)
        slack = cost_slack(f.cmdp, 0, f.quantum)
        if slack == 0.0:
            rep.notes.append(f"{f.name}: skipped, zero slack makes the threshold infinite")
            continue
        threshold = (best - worst) / slack
        budget = f.cmdp.budgets[0]
        for mult in multipliers:
            lam = threshold * mult
            if lam == 0.0:
                rep.notes.append(f"{f.name}: zero threshold, bound not applicable")
                continue
            _, _, st, _ = _greedy_oracle(f, [lam], _rn(f))
            rep.add(f.name, lam, budget, st.expected_cost[0],
                    st.expected_cost[0] <= budget + TOL)
    return rep


def check_violation_prob_bound(
    fixtures: list[Fixture], alphas=DEFAULT_ALPHAS
) -> VerificationReport:
    """At weight gap/(alpha*budget), violation probability is at most alpha."""
    rep = VerificationReport("violation_prob_bound")
    for f in fixtures:
        if not f.worst_case_feasible or f.cmdp.n_constraints != 1:
            continue
        best, _ = unconstrained_value(f.cmdp)
        worst, _ = worst_case_value(f.cmdp, f.quantum)
        gap = best - worst
        budget = f.cmdp.budgets[0]
        for alpha in alphas:
            lam = gap / (alpha * budget)
            if lam == 0.0:
                rep.notes.append(f"{f.name}: zero gap, any policy qualifies")
                continue
            _, _, st, _ = _greedy_oracle(f, [lam], _rn(f))
            rep.add(f.name, lam, alpha, st.violation_prob[0],
                    st.violation_prob[0] <= alpha + TOL)
    return rep


def _decision_nodes(m: Cmdp, quantum: float):
    """Reachable (t, s, ledger) nodes under any policy, layered by epoch."""
    e = build_extended(m, [0.0] * m.n_constraints, [PenaltyScheme.RISK_NEUTRAL] * m.n_constraints, quantum)
    nodes = []
    for t in range(m.horizon):
        nodes.extend((t, s, ledger) for (s, ledger) in e.layers[t])
    return nodes


def count_deterministic_policies(m: Cmdp, quantum: float) -> int:
    count = 1
    for (_t, s, _ledger) in _decision_nodes(m, quantum):
        count *= len(m.actions_at(s))
        if count > 10**7:
            return count
    return count


def enumerate_deterministic_policies(m: Cmdp, quantum: float):
    """Yield every deterministic step-indexed policy over reachable nodes."""
    nodes = _decision_nodes(m, quantum)
    pools = [m.actions_at(s) for (_t, s, _l) in nodes]
    for assignment in itertools.product(*pools):
        table = {}
        for (key, a) in zip(nodes, assignment):
            row = [0.0] * m.n_actions
            row[a] = 1.0
            table[key] = tuple(row)
        yield TabularPolicy(table=table, kind="deterministic", time_dependent=True)


def _equivalence_check(
    fixtures: list[Fixture],
    scheme: PenaltyScheme,
    kind: str,
    lambda_grid,
    policy_cap: int,
) -> VerificationReport:
    """Shared body for the chance/excess penalty-equivalence suites.

    Measures the policy's violation level (probability, or expected excess),
    checks it against gap/(lam*steps) resp. gap/lam, asserts the level is
    non-increasing in lambda and hits zero at the top of the grid on fixtures
    flagged for it, and on small fixtures verifies the greedy policy is
    optimal among all deterministic policies at least as safe.
    """
    chance = scheme is PenaltyScheme.VALUE_AT_RISK
    rep = VerificationReport(kind)
    for f in fixtures:
        if f.cmdp.n_constraints != 1 or not f.worst_case_feasible:
            continue
        best, _ = unconstrained_value(f.cmdp)
        worst, _ = worst_case_value(f.cmdp, f.quantum)
        gap = best - worst
        levels = []
        for lam in lambda_grid:
            _value, policy, st, trajs = _greedy_oracle(f, [lam], [scheme])
            if chance:
                level = st.violation_prob[0]
                steps = chance_penalty_steps(trajs, f.cmdp, 0, lam)
                if steps is None:
                    # No violating trajectory under this policy; the constant
                    # is the horizon-determined count of assessment epochs.
                    steps = float(f.cmdp.horizon + 1)
                bound = gap / (lam * steps)
                note = f"measured penalty steps {steps:g}"
            else:
                level = st.cvar_excess[0]
                bound = gap / lam
                note = ""
            levels.append(level)
            rep.add(f.name, lam, bound, level, level <= bound + TOL, note)
            if f.enumerable_policies:
                n_pol = count_deterministic_policies(f.cmdp, f.quantum)
                if n_pol <= policy_cap:
                    ok = True
                    for rival in enumerate_deterministic_policies(f.cmdp, f.quantum):
                        rst = stats(
                            enumerate_trajectories(f.cmdp, rival, f.quantum),
                            f.cmdp,
                        )
                        rival_level = (
                            rst.violation_prob[0] if chance else rst.cvar_excess[0]
                        )
                        if rival_level <= level + TOL and (
                            rst.expected_return > st.expected_return + TOL
                        ):
                            ok = False
                            break
                    rep.add(
                        f.name, lam, st.expected_return,
                        st.expected_return if ok else rst.expected_return, ok,
                        f"optimal among {n_pol} deterministic policies at level <= {level:g}",
                    )
                else:
                    rep.notes.append(
                        f"{f.name}: optimality not exhaustively checked "
                        f"({n_pol} deterministic policies)"
                    )
        for a, b in zip(levels, levels[1:]):
            rep.add(f.name, math.nan, a, b, b <= a + TOL, "level non-increasing in lambda")
        if f.zero_tail:
            rep.add(f.name, lambda_grid[-1], 0.0, levels[-1], levels[-1] == 0.0,
                    "level reaches zero at the top of the grid")
    return rep


def check_chance_penalty_equivalence(
    fixtures: list[Fixture], lambda_grid=EQUIVALENCE_LAMBDA_GRID, policy_cap=10_000
) -> VerificationReport:
    return _equivalence_check(
        fixtures, PenaltyScheme.VALUE_AT_RISK, "chance_penalty_equivalence",
        lambda_grid, policy_cap,
    )


def check_excess_penalty_equivalence(
    fixtures: list[Fixture], lambda_grid=EQUIVALENCE_LAMBDA_GRID, policy_cap=10_000
) -> VerificationReport:
    return _equivalence_check(
        fixtures, PenaltyScheme.CONDITIONAL_VALUE_AT_RISK, "excess_penalty_equivalence",
        lambda_grid, policy_cap,
    )


def check_multi_constraint_feasibility(fixtures: list[Fixture]) -> VerificationReport:
    """Per-constraint threshold weights keep every expected cost within budget."""
    rep = VerificationReport("multi_constraint_feasibility")
    for f in fixtures:
        if f.cmdp.n_constraints < 2 or not f.worst_case_feasible:
            continue
        m = f.cmdp
        best, _ = unconstrained_value(m)
        worst, _ = worst_case_value(m, f.quantum)
        gap = best - worst
        lambdas = []
        skip = False
        for k in range(m.n_constraints):
            slack = cost_slack(m, k, f.quantum)
            if slack == 0.0:
                rep.notes.append(f"{f.name}: constraint {k} has zero slack; skipped")
                skip = True
                break
            lambdas.append(gap / slack)
        if skip:
            continue
        _, _, st, _ = _greedy_oracle(f, lambdas, _rn(f))
        for k in range(m.n_constraints):
            rep.add(f.name, lambdas[k], m.budgets[k], st.expected_cost[k],
                    st.expected_cost[k] <= m.budgets[k] + TOL,
                    f"constraint {k}")
    return rep


def verify(kind: str, fixtures: list[Fixture], **kwargs) -> VerificationReport:
    """Run one named check suite; ``kind`` must be one of ALL_KINDS."""
    dispatch = {
        "zero_penalty_equivalence": check_zero_penalty_equivalence,
        "worst_case_masking": check_worst_case_masking,
        "violation_cost_bound": check_violation_cost_bound,
        "expected_cost_feasibility": check_expected_cost_feasibility,
        "violation_prob_bound": check_violation_prob_bound,
        "chance_penalty_equivalence": check_chance_penalty_equivalence,
        "excess_penalty_equivalence": check_excess_penalty_equivalence,
        "multi_constraint_feasibility": check_multi_constraint_feasibility,
    }
    if kind not in dispatch:
        raise ValueError(f"unknown check kind {kind!r}; want one of {ALL_KINDS}")
    return dispatch[kind](fixtures, **kwargs)


def run_all(fixtures: list[Fixture], lambda_grid=None, alphas=None) -> list[VerificationReport]:
    """Run the whole battery; used by the CLI verify command and acceptance."""
    grid = tuple(lambda_grid) if lambda_grid else DEFAULT_LAMBDA_GRID
    eq_grid = tuple(lambda_grid) if lambda_grid else EQUIVALENCE_LAMBDA_GRID
    avals = tuple(alphas) if alphas else DEFAULT_ALPHAS
    return [
        check_zero_penalty_equivalence(fixtures),
        check_worst_case_masking(fixtures),
        check_violation_cost_bound(fixtures, grid),
        check_expected_cost_feasibility(fixtures),
        check_violation_prob_bound(fixtures, avals),
        check_chance_penalty_equivalence(fixtures, eq_grid),
        check_excess_penalty_equivalence(fixtures, eq_grid),
        check_multi_constraint_feasibility(fixtures),
    ]
