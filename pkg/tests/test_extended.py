import math

import numpy as np
import pytest

from cmdp_forge.extended import (
    VIOLATED,
    LedgerCapExceeded,
    QuantizationError,
    build_extended,
    ledger_key,
    quantize,
)
from cmdp_forge.fixtures import fixture, two_action_chain
from cmdp_forge.model import Cmdp
from cmdp_forge.penalties import PenaltyScheme, penalty_amount
from cmdp_forge.solver import backward_induction

RN = PenaltyScheme.RISK_NEUTRAL


def reachable_by_float_walk(m, budget_index=0):
    """Independent reachability oracle: walk exact float cost totals.

    Tracks (state, total including current state) pairs breadth-first for
    horizon steps, then collapses totals above the budget, mirroring what the
    builder is supposed to produce.
    """
    K = m.n_constraints
    start = (m.s0, tuple(float(m.costs[k, m.s0]) for k in range(K)))
    seen = {start}
    frontier = {start}
    for _ in range(m.horizon):
        nxt = set()
        for s, totals in frontier:
            for a in m.actions_at(s):
                for s2, _p in m.successors(s, a):
                    nxt.add(
                        (s2, tuple(t + float(m.costs[k, s2]) for k, t in enumerate(totals)))
                    )
        seen |= nxt
        frontier = nxt
    collapsed = set()
    for s, totals in seen:
        collapsed.add(
            (s, tuple("V" if t > m.budgets[k] else t for k, t in enumerate(totals)))
        )
    return collapsed


def test_quantize_accepts_multiples_and_rejects_others():
    assert quantize(1.25, 0.25, "x") == 5
    with pytest.raises(QuantizationError):
        quantize(1.3, 0.25, "x")


def test_chain_reachable_states_match_float_walk_oracle():
    m = two_action_chain()
    e = build_extended(m, [0.5], [RN], quantum=1.0)
    got = {
        (s, tuple("V" if v == VIOLATED else v * e.quantum for v in ledger))
        for (s, ledger) in e.states
    }
    assert got == reachable_by_float_walk(m)
    assert len(e.states) == 3
    name = {m.state_name(s): ledger for (s, ledger) in e.states}
    assert name["start"] == (0,)
    assert name["safe"] == (0,)
    assert name["risky"] == (VIOLATED,)


def test_gridworld_under_budget_ledgers_stay_in_the_cost_lattice():
    f = fixture("grid3_noisy")
    e = build_extended(f.cmdp, [0.5], [RN], quantum=f.quantum)
    under = {
        ledger[0] * e.quantum
        for (_s, ledger) in e.states
        if ledger[0] != VIOLATED
    }
    assert under <= {0.0, 1.0, 1.25, 1.5, 2.0}
    assert any(ledger[0] == VIOLATED for (_s, ledger) in e.states)
    got = {
        (s, tuple("V" if v == VIOLATED else v * e.quantum for v in ledger))
        for (s, ledger) in e.states
    }
    assert got == reachable_by_float_walk(f.cmdp)


def test_augmented_transitions_preserve_probability_mass():
    for name in ("two_action_chain", "stochastic_chain", "grid3_noisy", "two_cost_chain"):
        f = fixture(name)
        e = build_extended(
            f.cmdp,
            [0.3] * f.cmdp.n_constraints,
            [RN] * f.cmdp.n_constraints,
            f.quantum,
        )
        for (s, ledger) in e.states:
            for a in f.cmdp.actions_at(s):
                mass = 0.0
                for s2, p in f.cmdp.successors(s, a):
                    e.advance(ledger, s2)
                    mass += p
                assert abs(mass - 1.0) <= 1e-12


def test_arity_mismatch_rejected():
    m = two_action_chain()
    with pytest.raises(ValueError):
        build_extended(m, [0.5, 0.5], [RN], quantum=1.0)
    with pytest.raises(ValueError):
        build_extended(m, [-1.0], [RN], quantum=1.0)


def test_state_cap_is_enforced_by_name():
    f = fixture("grid3_noisy")
    with pytest.raises(LedgerCapExceeded, match="cap of 10"):
        build_extended(f.cmdp, [0.5], [RN], f.quantum, max_states=10)


def corridor(costs, budget, horizon):
    """Single-action corridor with costs on consecutive states."""
    n = len(costs)
    transition = np.zeros((n, 1, n))
    for s in range(n - 1):
        transition[s, 0, s + 1] = 1.0
    transition[n - 1, 0, n - 1] = 1.0
    reward = np.zeros((n, 1))
    return Cmdp(
        transition=transition,
        reward=reward,
        costs=np.array([costs]),
        budgets=(budget,),
        horizon=horizon,
    )


def full_resolution_value(m, lam, scheme):
    """Backward induction tracking the exact running total, no collapsing.

    Independent of the production solver: states are (base state, float total
    including the current state), and each arrival charges the literal
    penalty from the exact totals.
    """
    T = m.horizon
    start = (m.s0, float(m.costs[0, m.s0]))
    layers = [{start}]
    for _ in range(T):
        nxt = set()
        for s, tot in layers[-1]:
            for a in m.actions_at(s):
                for s2, _p in m.successors(s, a):
                    nxt.add((s2, tot + float(m.costs[0, s2])))
        layers.append(nxt)
    values = {x: 0.0 for x in layers[T]}
    for t in range(T - 1, -1, -1):
        layer = {}
        for (s, tot) in layers[t]:
            best = -math.inf
            for a in m.actions_at(s):
                acc = float(m.reward[s, a])
                for s2, p in m.successors(s, a):
                    d2 = float(m.costs[0, s2])
                    delta = penalty_amount(scheme, lam, tot, d2, m.budgets[0], t + 1)
                    acc += p * (values[(s2, tot + d2)] - delta)
                best = max(best, acc)
            layer[(s, tot)] = best
        values = layer
    init_charge = penalty_amount(scheme, lam, 0.0, float(m.costs[0, m.s0]), m.budgets[0], 0)
    return values[start] - init_charge


@pytest.mark.parametrize("scheme", list(PenaltyScheme))
@pytest.mark.parametrize("lam", [0.3, 1.0, 5.0])
def test_collapsed_values_match_full_resolution(scheme, lam):
    # Costs keep accruing after the budget is crossed, so the collapsed bucket
    # is exercised for several steps.
    m = corridor([0.0, 1.5, 1.5, 1.5, 0.5], budget=2.0, horizon=4)
    collapsed = backward_induction(build_extended(m, [lam], [scheme], 0.25)).initial_value
    full = full_resolution_value(m, lam, scheme)
    assert abs(collapsed - full) <= 1e-9


@pytest.mark.parametrize("scheme", list(PenaltyScheme))
def test_collapsed_values_match_full_resolution_with_branching(scheme):
    f = fixture("grid3_det")
    collapsed = backward_induction(
        build_extended(f.cmdp, [2.0], [scheme], f.quantum)
    ).initial_value
    full = full_resolution_value(f.cmdp, 2.0, scheme)
    assert abs(collapsed - full) <= 1e-9


def test_sampled_mode_keys_saturate_over_budget():
    assert ledger_key((1.73,), (2.0,), 0.1) == (17,)
    assert ledger_key((2.0,), (2.0,), 0.1) == (20,)
    assert ledger_key((2.05,), (2.0,), 0.1) == (VIOLATED,)
    assert ledger_key((0.31, 9.0), (2.0, 2.0), 0.1) == (3, VIOLATED)
