"""Finite constrained MDP: states, kernel, rewards, per-state costs, budgets.

Conventions used by every module in this package:

  * An episode visits states s_0..s_T (T = ``horizon``) and takes actions at
    steps 0..T-1.  There is no action or task reward at the final step.
  * Cost attaches to states: occupying state s at any step t = 0..T adds
    d(s) to the running total, terminal step included.  A trajectory's total
    cost for constraint k is the sum of d_k over all T+1 visited states.
  * "Violation" is strict: a trajectory violates constraint k when its total
    cost exceeds the budget; a total exactly equal to the budget is safe.
  * Instances are frozen after construction and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Transition rows must sum to one within this tolerance.
PROB_TOL = 1e-12


def discount_powers(gamma: float, n: int) -> list[float]:
    """Return [gamma^0, ..., gamma^(n-1)] via a running product.

    Every module computes discount factors through this helper so that the
    solver and the enumeration oracle agree bit-for-bit.
    """
    out = [1.0]
    for _ in range(n - 1):
        out.append(out[-1] * gamma)
    return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Cmdp:
    """A finite constrained MDP.

    transition: (S, A, S) array; row (s, a) is a distribution over successors
        for every available action.
    reward: (S, A) array of task rewards.
    costs: (K, S) array of non-negative per-state costs, one row per
        constraint.
    budgets: K positive cumulative-cost budgets.
    horizon: number of action steps T (episodes visit T+1 states).
    discount: per-step discount in (0, 1].
    available: optional (S, A) boolean mask; None means every action is
        available in every state.
    """

    transition: np.ndarray
    reward: np.ndarray
    costs: np.ndarray
    budgets: tuple[float, ...]
    horizon: int
    discount: float = 1.0
    s0: int = 0
    available: np.ndarray | None = None
    state_names: tuple[str, ...] | None = None
    action_names: tuple[str, ...] | None = None
    _succ: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(np.asarray(self.transition, dtype=float)))
        object.__setattr__(self, "reward", _frozen(np.asarray(self.reward, dtype=float)))
        costs = np.asarray(self.costs, dtype=float)
        if costs.ndim == 1:
            costs = costs[None, :]
        object.__setattr__(self, "costs", _frozen(costs))
        object.__setattr__(self, "budgets", tuple(float(b) for b in self.budgets))
        if self.available is not None:
            object.__setattr__(self, "available", _frozen(np.asarray(self.available, dtype=bool)))
        # Successor lists are consulted in every solver/oracle inner loop;
        # precompute them once.
        succ: dict[tuple[int, int], tuple[tuple[int, float], ...]] = {}
        for s in range(self.n_states):
            for a in self.actions_at(s):
                row = self.transition[s, a]
                succ[(s, a)] = tuple(
                    (int(j), float(row[j])) for j in np.nonzero(row)[0]
                )
        object.__setattr__(self, "_succ", succ)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.costs.shape[0]

    def actions_at(self, s: int) -> list[int]:
        if self.available is None:
            return list(range(self.n_actions))
        return [a for a in range(self.n_actions) if self.available[s, a]]

    def successors(self, s: int, a: int) -> tuple[tuple[int, float], ...]:
        """Positive-probability (state, probability) pairs for (s, a)."""
        return self._succ[(s, a)]

    def state_name(self, s: int) -> str:
        if self.state_names is not None:
            return self.state_names[s]
        return f"s{s}"


def validate_cmdp(m: Cmdp) -> list[str]:
    """Check every model invariant; return a description of each breach.

    Validation never raises: an empty list means the model is well formed,
    otherwise each entry names the offending field, index and measured value.
    """
    problems: list[str] = []
    S, A = m.n_states, m.n_actions
    if m.horizon < 1:
        problems.append(f"horizon: must be >= 1, got {m.horizon}")
    if not (0.0 < m.discount <= 1.0):
        problems.append(f"discount: must be in (0, 1], got {m.discount}")
    if not (0 <= m.s0 < S):
        problems.append(f"s0: index {m.s0} outside 0..{S - 1}")
    if m.reward.shape != (S, A):
        problems.append(f"reward: shape {m.reward.shape} != {(S, A)}")
    if m.costs.shape[1] != S:
        problems.append(f"costs: shape {m.costs.shape} inconsistent with {S} states")
    if len(m.budgets) != m.n_constraints:
        problems.append(
            f"budgets: {len(m.budgets)} entries for {m.n_constraints} cost functions"
        )
    for k, b in enumerate(m.budgets):
        if not b > 0.0:
            problems.append(f"budgets[{k}]: must be > 0, got {b}")
    for k in range(m.n_constraints):
        for s in range(S):
            d = m.costs[k, s]
            if not d >= 0.0:
                problems.append(f"costs[{k}][s={s}]: must be >= 0, got {d}")
    for s in range(S):
        acts = m.actions_at(s)
        if not acts:
            problems.append(f"available[s={s}]: no available action")
        for a in acts:
            row = m.transition[s, a]
            neg = np.nonzero(row < 0.0)[0]
            for j in neg:
                problems.append(
                    f"transition[s={s},a={a},s'={int(j)}]: negative probability {row[j]}"
                )
            total = float(row.sum())
            if abs(total - 1.0) > PROB_TOL:
                problems.append(f"transition[s={s},a={a}]: row sums to {total}")
    return problems


@dataclass(frozen=True)
class Trajectory:
    """One path s_0..s_T with the T actions taken along it.

    ``probability`` is the product of policy and transition probabilities in
    oracle (enumeration) mode, and None for sampled rollouts.
    """

    states: tuple[int, ...]
    actions: tuple[int, ...]
    probability: float | None = None

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise ValueError(
                f"trajectory has {len(self.states)} states and "
                f"{len(self.actions)} actions; want |states| = |actions| + 1"
            )


def trajectory_cost(traj: Trajectory, m: Cmdp, k: int = 0) -> float:
    """Total cost of constraint k over all visited states, terminal included."""
    if not (0 <= k < m.n_constraints):
        raise IndexError(f"constraint index {k} outside 0..{m.n_constraints - 1}")
    row = m.costs[k]
    return math.fsum(row[s] for s in traj.states)


def discounted_return(traj: Trajectory, m: Cmdp) -> float:
    """Discounted task return; the terminal step contributes no reward."""
    pows = discount_powers(m.discount, max(len(traj.actions), 1))
    return math.fsum(
        pows[t] * m.reward[traj.states[t], a] for t, a in enumerate(traj.actions)
    )


class PolicyUndefined(KeyError):
    """A policy was queried at an augmented state it has no row for."""


@dataclass(frozen=True)
class TabularPolicy:
    """Action distributions keyed by augmented state.

    Keys are (s, ledger) pairs, or (t, s, ledger) triples when
    ``time_dependent`` is set (finite-horizon greedy policies are
    time-dependent in general).  Rows are probability vectors over actions.
    """

    table: dict
    kind: str = "stochastic"  # "deterministic" | "stochastic"
    time_dependent: bool = False

    def probabilities(self, t: int, s: int, ledger) -> tuple[float, ...]:
        key = (t, s, ledger) if self.time_dependent else (s, ledger)
        try:
            return self.table[key]
        except KeyError:
            raise PolicyUndefined(f"policy has no row for augmented state {key}") from None


def validate_policy(pi: TabularPolicy) -> list[str]:
    problems = []
    for key, row in pi.table.items():
        total = math.fsum(row)
        if any(p < 0.0 for p in row):
            problems.append(f"policy[{key}]: negative probability")
        if abs(total - 1.0) > PROB_TOL:
            problems.append(f"policy[{key}]: row sums to {total}")
        if pi.kind == "deterministic" and sorted(row) != [0.0] * (len(row) - 1) + [1.0]:
            problems.append(f"policy[{key}]: deterministic row is not one-hot")
    return problems


def deterministic_policy(choices: dict, n_actions: int, time_dependent: bool = False) -> TabularPolicy:
    """Build a one-hot TabularPolicy from a key -> action map."""
    table = {}
    for key, a in choices.items():
        row = [0.0] * n_actions
        row[a] = 1.0
        table[key] = tuple(row)
    return TabularPolicy(table=table, kind="deterministic", time_dependent=time_dependent)
