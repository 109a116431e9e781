"""Named small models used by the verification suites and the test bench.

Every fixture is enumerable by the trajectory oracle.  Flags mark which
suites a fixture participates in:

  worst_case_feasible  an always-safe policy exists, so the worst-case value
                       and the penalty-weight thresholds are defined.  Noisy
                       grids fail this whenever a pit can be re-entered:
                       action noise gives every neighbouring cell positive
                       mass into the pit, so no policy has zero violation
                       probability.
  enumerable_policies  few enough deterministic augmented policies to verify
                       optimality claims by exhaustion.
  zero_tail            the measured violation level reaches exactly zero at
                       the top of the standard lambda grid.
  random_policy_suite  cheap enough to enumerate under hundreds of random
                       stochastic policies.
"""

from __future__ import annotations

from dataclasses import dataclass

from .envs import ChainBranch, ChainSpec, make_chain, make_gridworld, tiny_grid
from .model import Cmdp


@dataclass(frozen=True)
class Fixture:
    name: str
    cmdp: Cmdp
    quantum: float
    worst_case_feasible: bool = True
    enumerable_policies: bool = True
    zero_tail: bool = True
    random_policy_suite: bool = True


def two_action_chain() -> Cmdp:
    """One safe branch (reward 1, cost 0) vs one risky (reward 2, cost 3)."""
    return make_chain(
        ChainSpec(
            branches=(
                ChainBranch("safe", 1.0, ((1.0, (0.0,)),)),
                ChainBranch("risky", 2.0, ((1.0, (3.0,)),)),
            ),
            budgets=(2.0,),
        )
    )


def three_branch_chain() -> Cmdp:
    """Adds a branch whose cost lands exactly on the budget (safe boundary)."""
    return make_chain(
        ChainSpec(
            branches=(
                ChainBranch("safe", 1.0, ((1.0, (0.0,)),)),
                ChainBranch("edge", 1.5, ((1.0, (2.0,)),)),
                ChainBranch("risky", 2.0, ((1.0, (3.0,)),)),
            ),
            budgets=(2.0,),
        )
    )


def stochastic_chain() -> Cmdp:
    """The risky branch violates only half the time; its expected cost is safe."""
    return make_chain(
        ChainSpec(
            branches=(
                ChainBranch("safe", 1.0, ((1.0, (0.0,)),)),
                ChainBranch("risky", 2.0, ((0.5, (3.0,)), (0.5, (0.0,)))),
            ),
            budgets=(2.0,),
        )
    )


def two_cost_chain() -> Cmdp:
    """Two constraints; each risky branch violates exactly one of them."""
    return make_chain(
        ChainSpec(
            branches=(
                ChainBranch("safe", 1.0, ((1.0, (0.0, 0.0)),)),
                ChainBranch("risky_a", 2.0, ((1.0, (3.0, 0.0)),)),
                ChainBranch("risky_b", 1.8, ((1.0, (0.0, 3.0)),)),
            ),
            budgets=(2.0, 2.0),
        )
    )


def infeasible_chain() -> Cmdp:
    """Every branch busts the budget; the worst-case problem has no policy."""
    return make_chain(
        ChainSpec(
            branches=(
                ChainBranch("risky_a", 2.0, ((1.0, (3.0,)),)),
                ChainBranch("risky_b", 1.5, ((1.0, (2.5,)),)),
            ),
            budgets=(2.0,),
        )
    )


def fixture_pack() -> list[Fixture]:
    return [
        Fixture("two_action_chain", two_action_chain(), quantum=1.0),
        Fixture("three_branch_chain", three_branch_chain(), quantum=1.0),
        Fixture("stochastic_chain", stochastic_chain(), quantum=1.0),
        Fixture("two_cost_chain", two_cost_chain(), quantum=1.0),
        # Budget below every single pit draw: crossing the pit always
        # violates, so the safe detour is strictly worse and the gap between
        # the unconstrained and the always-safe optimum is positive.
        Fixture(
            "grid3_det",
            make_gridworld(tiny_grid(noise_p=0.0, horizon=4, c_max=0.75), "exact"),
            quantum=0.25,
            enumerable_policies=False,
        ),
        Fixture(
            "grid3_noisy",
            make_gridworld(tiny_grid(noise_p=0.05, horizon=6), "exact"),
            quantum=0.25,
            worst_case_feasible=False,
            enumerable_policies=False,
            zero_tail=False,
            random_policy_suite=False,
        ),
    ]


def fixture(name: str) -> Fixture:
    for f in fixture_pack():
        if f.name == name:
            return f
    raise KeyError(f"no fixture named {name!r}")
