"""Tabular safe learners on the augmented observation (state, running cost).

Two trainers share the penalty machinery and the dynamic penalty-weight
schedule:

  * safe_q_learning: off-policy one-step Q-learning with a replay ring, a
    periodically copied target table, epsilon-greedy exploration that ignores
    feasibility, and per-sample reward penalties.
  * safe_actor_critic: softmax policy over logits with double reward critics
    (min target) and double cost critics (max target), n-step backups,
    Polyak-averaged target tables, feasibility-constrained action selection,
    and a safe/unsafe actor branch.

Environments expose reset() -> (s, c, d) and step(a) -> ((s, c, d), r, done)
where c is the cost accumulated including the current state and d is the
current state's cost draw.  Table keys quantize c; penalty arithmetic always
uses the true float c.
"""

from __future__ import annotations

import math
import random
import time
from collections import defaultdict
from dataclasses import dataclass, field

from .extended import VIOLATED
from .penalties import PenaltyScheme


def ledger_bucket(c: float, budget: float, quantum: float) -> int:
    """Table-key bucket for an accumulated cost; one bucket once over budget."""
    return VIOLATED if c > budget else round(c / quantum)


def obs_key(s: int, c: float, budget: float, quantum: float) -> tuple[int, int]:
    return (s, ledger_bucket(c, budget, quantum))


def penalize_sample(
    r: float,
    c: float,
    d: float,
    c_next: float,
    lam: float,
    scheme: PenaltyScheme,
    budget: float,
    gamma: float = 1.0,
    t: int | None = None,
) -> float:
    """Per-sample penalized reward for one stored transition.

    c is the cost accumulated before the arrival being assessed, d the
    arriving state's cost and c_next = c + d the ledger afterwards.  The time
    index t is required when gamma < 1 (per-step discounting of the penalty)
    and for the chance scheme's crossing case.
    """
    if c > budget:
        amount = lam if scheme is PenaltyScheme.VALUE_AT_RISK else lam * d
    elif c_next > budget:
        if scheme is PenaltyScheme.RISK_NEUTRAL:
            amount = lam * (c + d)
        elif scheme is PenaltyScheme.VALUE_AT_RISK:
            if t is None:
                raise ValueError("chance-scheme crossing penalty needs the time index")
            amount = lam * (t + 1)
        else:
            amount = lam * (c + d - budget)
    else:
        return r
    if amount == 0.0:
        return r
    if gamma == 1.0:
        return r - amount
    if t is None:
        raise ValueError("time index required to discount penalties when gamma < 1")
    return r - amount / gamma**t


@dataclass
class LambdaSchedule:
    """Multiplicative decay of the penalty weight while recent episodes stay safe.

    Every ``window`` episodes: if the window's max final cost is under the
    budget and decaying would stay above the floor, multiply by ``decay``;
    the window is emptied either way.
    """

    value: float
    floor: float
    window: int
    decay: float = 0.95
    costs: list[float] = field(default_factory=list)

    def record(self, final_cost: float, budget: float) -> None:
        self.costs.append(final_cost)
        if len(self.costs) < self.window:
            return
        if max(self.costs) < budget and self.decay * self.value > self.floor:
            self.value *= self.decay
        self.costs.clear()


class ReplayBuffer:
    """Uniform-sampling ring of transitions."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: list = []
        self._next = 0

    def __len__(self):
        return len(self.items)

    def push(self, item) -> None:
        if len(self.items) < self.capacity:
            self.items.append(item)
        else:
            self.items[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def sample(self, rng: random.Random):
        return self.items[rng.randrange(len(self.items))]


@dataclass(frozen=True)
class TrainRow:
    episode: int
    ret: float
    final_cost: float
    lam: float
    explore: float  # epsilon (Q-learner) or policy entropy (actor-critic)
    wall_ms: float


def _argmax_low(scores) -> int:
    best = max(scores)
    for i, v in enumerate(scores):
        if v >= best - 1e-12:
            return i
    raise AssertionError("empty score list")


@dataclass
class QLearnerConfig:
    episodes: int = 2000
    lr: float = 0.1
    gamma: float = 1.0
    scheme: PenaltyScheme = PenaltyScheme.RISK_NEUTRAL
    lambda0: float = 2.0
    lambda_floor: float = 0.1
    buffer_capacity: int = 10_000
    window: int = 32
    target_period: int = 100
    update_every: int = 4
    batch_size: int = 8  # sampled TD updates per update period
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    key_quantum: float = 0.1
    seed: int = 0


def validate_qlearner_config(cfg: QLearnerConfig) -> list[str]:
    problems = []
    if cfg.episodes < 1:
        problems.append(f"episodes must be >= 1, got {cfg.episodes}")
    if not (0.0 < cfg.lr <= 1.0):
        problems.append(f"lr must be in (0, 1], got {cfg.lr}")
    if not (0.0 < cfg.gamma <= 1.0):
        problems.append(f"gamma must be in (0, 1], got {cfg.gamma}")
    if cfg.lambda0 < 0.0:
        problems.append(f"lambda0 must be >= 0, got {cfg.lambda0}")
    if cfg.lambda_floor <= 0.0:
        problems.append(f"lambda_floor must be > 0, got {cfg.lambda_floor}")
    for name in ("buffer_capacity", "window", "target_period", "update_every", "batch_size"):
        if getattr(cfg, name) < 1:
            problems.append(f"{name} must be >= 1, got {getattr(cfg, name)}")
    if cfg.key_quantum <= 0.0:
        problems.append(f"key_quantum must be > 0, got {cfg.key_quantum}")
    return problems


def _epsilon(cfg: QLearnerConfig, episode: int) -> float:
    half = max(1, cfg.episodes // 2)
    frac = min(1.0, episode / half)
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


def greedy_action(q: dict, key, n_actions: int) -> int:
    return _argmax_low([q.get((key, a), 0.0) for a in range(n_actions)])


def safe_q_learning(env, cfg: QLearnerConfig):
    """Train a penalized Q table; returns (q, log rows, schedule)."""
    problems = validate_qlearner_config(cfg)
    if problems:
        raise ValueError("invalid learner config: " + "; ".join(problems))
    rng = random.Random(cfg.seed)
    q: dict = defaultdict(float)
    target: dict = {}
    buffer = ReplayBuffer(cfg.buffer_capacity)
    sched = LambdaSchedule(cfg.lambda0, cfg.lambda_floor, cfg.window)
    budget = env.budget
    nA = env.n_actions
    log: list[TrainRow] = []
    steps = 0
    for episode in range(cfg.episodes):
        started = time.perf_counter()
        s, c, _d = env.reset()
        key = obs_key(s, c, budget, cfg.key_quantum)
        eps = _epsilon(cfg, episode)
        ep_return = 0.0
        done = False
        t = 0
        while not done and t < env.horizon:
            if rng.random() < eps:
                a = rng.randrange(nA)
            else:
                a = greedy_action(q, key, nA)
            (s2, c2, d2), r, done = env.step(a)
            key2 = obs_key(s2, c2, budget, cfg.key_quantum)
            ep_return += r
            buffer.push((key, a, r, key2, done, c, d2, c2, t + 1))
            steps += 1
            if steps % cfg.update_every == 0:
                for _ in range(cfg.batch_size):
                    bkey, ba, br, bkey2, bdone, bc, bd, bc2, bepoch = buffer.sample(rng)
                    rt = penalize_sample(
                        br, bc, bd, bc2, sched.value, cfg.scheme, budget,
                        gamma=cfg.gamma, t=bepoch,
                    )
                    boot = 0.0
                    if not bdone:
                        boot = max(target.get((bkey2, b), 0.0) for b in range(nA))
                    y = rt + cfg.gamma * boot
                    q[(bkey, ba)] += cfg.lr * (y - q[(bkey, ba)])
            if steps % cfg.target_period == 0:
                target = dict(q)
            key, c = key2, c2
            t += 1
        sched.record(c, budget)
        log.append(
            TrainRow(
                episode, ep_return, c, sched.value, eps,
                (time.perf_counter() - started) * 1000.0,
            )
        )
    return dict(q), log, sched


class SoftmaxPolicy:
    """Action distribution softmax(logits row); rows default to uniform."""

    def __init__(self, n_actions: int, alpha_ent: float):
        if alpha_ent <= 0.0:
            raise ValueError(f"entropy weight must be > 0, got {alpha_ent}")
        self.n_actions = n_actions
        self.alpha_ent = alpha_ent
        self.logits: dict = defaultdict(float)

    def probabilities(self, key) -> list[float]:
        row = [self.logits[(key, a)] for a in range(self.n_actions)]
        top = max(row)
        exps = [math.exp(z - top) for z in row]
        total = sum(exps)
        return [e / total for e in exps]

    def mode(self, key) -> int:
        return _argmax_low(self.probabilities(key))

    def sample(self, key, rng: random.Random) -> int:
        probs = self.probabilities(key)
        u = rng.random()
        acc = 0.0
        for a, p in enumerate(probs):
            acc += p
            if u <= acc:
                return a
        return self.n_actions - 1

    def entropy(self, key) -> float:
        return -sum(p * math.log(p) for p in self.probabilities(key) if p > 0.0)


def constrained_action_select(
    key,
    policy: SoftmaxPolicy,
    q1: dict,
    q2: dict,
    qd1: dict,
    qd2: dict,
    c: float,
    d: float,
    budget: float,
) -> int:
    """Soft-greedy action among those predicted to stay within budget.

    Feasibility adds the pessimistic future-cost estimate to the cost
    incurred so far, minus the current state's cost (counted in both).
    An empty feasible set falls back to the minimum predicted future cost.
    Ties break to the lowest action index.
    """
    probs = policy.probabilities(key)
    future = [max(qd1.get((key, a), 0.0), qd2.get((key, a), 0.0)) for a in range(policy.n_actions)]
    feasible = [a for a in range(policy.n_actions) if future[a] + c - d <= budget]
    if not feasible:
        return _argmax_low([-future[a] for a in range(policy.n_actions)])
    scores = [
        min(q1.get((key, a), 0.0), q2.get((key, a), 0.0))
        - policy.alpha_ent * math.log(probs[a])
        for a in feasible
    ]
    return feasible[_argmax_low(scores)]


@dataclass
class ActorCriticConfig:
    episodes: int = 4000
    n_step: int = 5
    rho: float = 0.95
    alpha_ent: float = 0.1
    lr_critic: float = 0.1
    lr_actor: float = 0.01
    safe_weight: float = 1.0  # w, scales the safe-branch actor step
    gamma: float = 1.0
    scheme: PenaltyScheme = PenaltyScheme.RISK_NEUTRAL
    lambda0: float = 2.0
    lambda_floor: float = 0.1
    window: int = 32
    key_quantum: float = 0.1
    seed: int = 0


def validate_actor_critic_config(cfg: ActorCriticConfig) -> list[str]:
    problems = []
    if cfg.episodes < 1:
        problems.append(f"episodes must be >= 1, got {cfg.episodes}")
    if cfg.n_step < 1:
        problems.append(f"n_step must be >= 1, got {cfg.n_step}")
    if not (0.0 <= cfg.rho < 1.0):
        problems.append(f"rho must be in [0, 1), got {cfg.rho}")
    if cfg.alpha_ent <= 0.0:
        problems.append(f"alpha_ent must be > 0, got {cfg.alpha_ent}")
    for name in ("lr_critic", "lr_actor"):
        if not (0.0 < getattr(cfg, name) <= 1.0):
            problems.append(f"{name} must be in (0, 1], got {getattr(cfg, name)}")
    if not (0.0 < cfg.gamma <= 1.0):
        problems.append(f"gamma must be in (0, 1], got {cfg.gamma}")
    if cfg.lambda0 < 0.0:
        problems.append(f"lambda0 must be >= 0, got {cfg.lambda0}")
    if cfg.lambda_floor <= 0.0:
        problems.append(f"lambda_floor must be > 0, got {cfg.lambda_floor}")
    if cfg.window < 1:
        problems.append(f"window must be >= 1, got {cfg.window}")
    if cfg.key_quantum <= 0.0:
        problems.append(f"key_quantum must be > 0, got {cfg.key_quantum}")
    return problems


class ActorCriticTables:
    """Policy logits plus double reward/cost critics and their targets."""

    def __init__(self, n_actions: int, alpha_ent: float):
        self.policy = SoftmaxPolicy(n_actions, alpha_ent)
        self.q1: dict = defaultdict(float)
        self.q2: dict = defaultdict(float)
        self.qd1: dict = defaultdict(float)
        self.qd2: dict = defaultdict(float)
        self.tq1: dict = defaultdict(float)
        self.tq2: dict = defaultdict(float)
        self.tqd1: dict = defaultdict(float)
        self.tqd2: dict = defaultdict(float)
        # Keys whose target entries still lag their main entries.
        self.dirty: set = set()

    def select(self, key, c: float, d: float, budget: float) -> int:
        return constrained_action_select(
            key, self.policy, self.q1, self.q2, self.qd1, self.qd2, c, d, budget
        )

    def polyak(self, rho: float) -> None:
        settled = []
        for entry in self.dirty:
            gap = 0.0
            for main, targ in (
                (self.q1, self.tq1),
                (self.q2, self.tq2),
                (self.qd1, self.tqd1),
                (self.qd2, self.tqd2),
            ):
                targ[entry] = rho * targ[entry] + (1.0 - rho) * main[entry]
                gap = max(gap, abs(targ[entry] - main[entry]))
            if gap < 1e-12:
                settled.append(entry)
        for entry in settled:
            self.dirty.discard(entry)


def safe_actor_critic(env, cfg: ActorCriticConfig):
    """Train the constrained softmax actor-critic; returns (tables, log, schedule)."""
    problems = validate_actor_critic_config(cfg)
    if problems:
        raise ValueError("invalid learner config: " + "; ".join(problems))
    rng = random.Random(cfg.seed)
    nA = env.n_actions
    budget = env.budget
    tables = ActorCriticTables(nA, cfg.alpha_ent)
    sched = LambdaSchedule(cfg.lambda0, cfg.lambda_floor, cfg.window)
    recent_costs: list[float] = []  # rolling window for the safety classifier
    log: list[TrainRow] = []

    for episode in range(cfg.episodes):
        started = time.perf_counter()
        s, c, d = env.reset()
        key = obs_key(s, c, budget, cfg.key_quantum)
        init_key = key
        ep_return = 0.0
        done = False
        t = 0
        # Same window signal as the schedule, kept rolling across episodes.
        safe = (max(recent_costs) < budget) if recent_costs else True
        while not done and t < env.horizon:
            seg = []
            while len(seg) < cfg.n_step and not done and t < env.horizon:
                a = tables.select(key, c, d, budget)
                (s2, c2, d2), r, done = env.step(a)
                key2 = obs_key(s2, c2, budget, cfg.key_quantum)
                rt = penalize_sample(
                    r, c, d2, c2, sched.value, cfg.scheme, budget,
                    gamma=cfg.gamma, t=t + 1,
                )
                seg.append((key, a, rt, d))
                ep_return += r
                key, c, d = key2, c2, d2
                t += 1
            if done:
                ret_boot = 0.0
                cost_boot = 0.0
            else:
                probs = tables.policy.probabilities(key)
                a_tilde = tables.policy.sample(key, rng)
                ret_boot = min(
                    tables.tq1.get((key, a_tilde), 0.0),
                    tables.tq2.get((key, a_tilde), 0.0),
                ) - cfg.alpha_ent * math.log(probs[a_tilde])
                a_next = tables.select(key, c, d, budget)
                cost_boot = max(
                    tables.tqd1.get((key, a_next), 0.0),
                    tables.tqd2.get((key, a_next), 0.0),
                )
            ret_target = ret_boot
            cost_target = cost_boot
            for (k_i, a_i, rt_i, d_i) in reversed(seg):
                ret_target = rt_i + cfg.gamma * ret_target
                cost_target = d_i + cfg.gamma * cost_target
                entry = (k_i, a_i)
                tables.q1[entry] += cfg.lr_critic * (ret_target - tables.q1[entry])
                tables.q2[entry] += cfg.lr_critic * (ret_target - tables.q2[entry])
                tables.qd1[entry] += cfg.lr_critic * (cost_target - tables.qd1[entry])
                tables.qd2[entry] += cfg.lr_critic * (cost_target - tables.qd2[entry])
                tables.dirty.add(entry)
                probs = tables.policy.probabilities(k_i)
                if safe:
                    weight = cfg.safe_weight * (
                        min(tables.tq1.get(entry, 0.0), tables.tq2.get(entry, 0.0))
                        - cfg.alpha_ent * math.log(probs[a_i])
                    )
                else:
                    weight = -cost_target
                step = cfg.lr_actor * weight
                for b in range(nA):
                    grad = (1.0 if b == a_i else 0.0) - probs[b]
                    tables.policy.logits[(k_i, b)] += step * grad
            tables.polyak(cfg.rho)
        sched.record(c, budget)
        recent_costs.append(c)
        if len(recent_costs) > cfg.window:
            recent_costs.pop(0)
        log.append(
            TrainRow(
                episode, ep_return, c, sched.value,
                tables.policy.entropy(init_key),
                (time.perf_counter() - started) * 1000.0,
            )
        )
    return tables, log, sched
