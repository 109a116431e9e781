import math

import pytest

from cmdp_forge.cli import main
from cmdp_forge.config import ConfigError, load_config
from cmdp_forge.fixtures import stochastic_chain, two_action_chain
from cmdp_forge.oracle import enumerate_trajectories, stats
from cmdp_forge.penalties import PenaltyScheme
from cmdp_forge.solver import solve
from cmdp_forge.textio import dump_checkpoint, dump_cmdp

CHAIN_TRAIN = """
env.kind = chain
env.chain = two_action_chain
learner = safe_q
scheme.1 = rn
lambda.1 = 1.0
Lambda_floor = 1.0
episodes = 60
seeds = 7,8
eval_episodes = 50
"""


def test_config_defaults_and_types():
    cfg = load_config(CHAIN_TRAIN)
    assert cfg.learner == "safe_q"
    assert cfg.schemes == (PenaltyScheme.RISK_NEUTRAL,)
    assert cfg.lambdas == (1.0,)
    assert cfg.seeds == (7, 8)
    assert cfg.window == 32  # default M


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError, match="unknown config keys: episods"):
        load_config(CHAIN_TRAIN + "episods = 10\n")


def test_bad_value_is_rejected():
    with pytest.raises(ConfigError, match="gamma"):
        load_config(CHAIN_TRAIN + "gamma = 1.5\n")
    with pytest.raises(ConfigError, match="scheme"):
        load_config("env.kind = chain\nscheme.1 = nope\n")
    with pytest.raises(ConfigError, match="duplicate"):
        load_config("episodes = 1\nepisodes = 2\n")


def test_grid_preset_with_overrides():
    cfg = load_config("env.kind = gridworld\nenv.preset = desk\nenv.noise_p = 0\n")
    assert cfg.grid.noise_p == 0.0
    assert cfg.grid.width == 5


def test_invalid_grid_override_fails_before_running():
    with pytest.raises(ConfigError, match="start"):
        load_config("env.kind = gridworld\nenv.preset = desk\nenv.start = 9,9\n")


def _strip_wall(text: str) -> str:
    lines = text.splitlines()
    return "\n".join(",".join(line.split(",")[:-1]) for line in lines)


def test_train_is_deterministic_and_writes_expected_files(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(CHAIN_TRAIN)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["--config", str(cfg_path), "--out", str(out1), "train"]) == 0
    assert main(["--config", str(cfg_path), "--out", str(out2), "train"]) == 0
    names = sorted(p.name for p in out1.iterdir())
    assert names == [
        "checkpoint_seed7.txt",
        "checkpoint_seed8.txt",
        "train_aggregate.csv",
        "train_seed7.csv",
        "train_seed8.csv",
    ]
    for name in names:
        a, b = (out1 / name).read_text(), (out2 / name).read_text()
        if name.startswith("train_seed"):
            assert _strip_wall(a) == _strip_wall(b)
        else:
            assert a == b


def test_lambda_grid_trains_each_pair(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(CHAIN_TRAIN + "lambda_grid = 0.5,1.0\n")
    out = tmp_path / "grid"
    assert main(["--config", str(cfg_path), "--out", str(out), "train"]) == 0
    logs = sorted(p.name for p in out.iterdir() if p.name.startswith("train_seed"))
    assert logs == [
        "train_seed7_lambda0.5.csv",
        "train_seed7_lambda1.csv",
        "train_seed8_lambda0.5.csv",
        "train_seed8_lambda1.csv",
    ]


def test_seed_override_flag(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(CHAIN_TRAIN)
    out = tmp_path / "o"
    assert main(["--config", str(cfg_path), "--out", str(out), "--seeds", "3", "train"]) == 0
    assert (out / "train_seed3.csv").exists()
    assert not (out / "train_seed7.csv").exists()


def test_aggregate_means_match_per_seed_logs(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(CHAIN_TRAIN)
    out = tmp_path / "agg"
    main(["--config", str(cfg_path), "--out", str(out), "train"])
    per_seed = []
    for seed in (7, 8):
        lines = (out / f"train_seed{seed}.csv").read_text().splitlines()[1:]
        per_seed.append([float(line.split(",")[1]) for line in lines])
    agg_lines = (out / "train_aggregate.csv").read_text().splitlines()[1:]
    for i, line in enumerate(agg_lines):
        want = (per_seed[0][i] + per_seed[1][i]) / 2.0
        assert float(line.split(",")[2]) == pytest.approx(want, abs=1e-12)


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("episodes = many\n")
    assert main(["--config", str(bad), "--out", str(tmp_path / "x"), "train"]) == 2
    assert main(["--config", str(tmp_path / "missing.cfg"), "train"]) == 2


def _exact_greedy_checkpoint(m, lam, quantum):
    """Greedy table of the exact solution, dressed as a Q checkpoint."""
    _, policy, e = solve(m, [lam], [PenaltyScheme.RISK_NEUTRAL], quantum)
    q = {}
    for (t, s, ledger), row in policy.table.items():
        if t != 0 and (s, ledger) in {(k[1], k[2]) for k in policy.table if k[0] == 0}:
            continue
        bucket = ledger[0]
        q[((s, bucket), row.index(1.0))] = 1.0
    return dump_checkpoint("safe_q", {"q": q}, {"quantum": quantum, "budget": m.budgets[0], "n_actions": m.n_actions})


def test_evaluate_matches_oracle_within_three_standard_errors(tmp_path):
    m = stochastic_chain()
    lam = 0.3  # keeps the risky branch optimal
    _, policy, _ = solve(m, [lam], [PenaltyScheme.RISK_NEUTRAL], 1.0)
    st = stats(enumerate_trajectories(m, policy, 1.0), m)
    checkpoint = _exact_greedy_checkpoint(m, lam, 1.0)
    ck = tmp_path / "ck.txt"
    ck.write_text(checkpoint)
    cfg = tmp_path / "eval.cfg"
    cfg.write_text(
        "env.kind = chain\nenv.chain = stochastic_chain\nlearner = safe_q\n"
        "eval_episodes = 20000\nseeds = 1\nkey_quantum = 1\n"
    )
    out = tmp_path / "ev"
    assert main(["--config", str(cfg), "--out", str(out), "evaluate", "--checkpoint", str(ck)]) == 0
    rows = (out / "eval_report.csv").read_text().splitlines()
    agg = rows[-1].split(",")
    mean_cost = float(agg[2])
    se = math.sqrt(1.5 * 1.5 / 20000) * 3  # generous bound on 3 standard errors
    assert abs(mean_cost - st.expected_cost[0]) <= se
    assert abs(float(agg[3]) - st.violation_prob[0]) <= 3 * math.sqrt(0.25 / 20000)


def test_evaluate_zero_cost_env_reports_no_violations(tmp_path):
    m = two_action_chain()
    checkpoint = _exact_greedy_checkpoint(m, 5.0, 1.0)  # safe branch forced
    ck = tmp_path / "ck.txt"
    ck.write_text(checkpoint)
    cfg = tmp_path / "eval.cfg"
    cfg.write_text(
        "env.kind = chain\nenv.chain = two_action_chain\nlearner = safe_q\n"
        "eval_episodes = 500\nseeds = 1,2\nkey_quantum = 1\n"
    )
    out = tmp_path / "ev0"
    assert main(["--config", str(cfg), "--out", str(out), "evaluate", "--checkpoint", str(ck)]) == 0
    agg = (out / "eval_report.csv").read_text().splitlines()[-1].split(",")
    assert float(agg[3]) == 0.0 and float(agg[4]) == 0.0


def test_evaluate_risky_policy_always_violates(tmp_path):
    m = two_action_chain()
    q = {((0, 0), 1): 1.0}
    ck = tmp_path / "ck.txt"
    ck.write_text(dump_checkpoint("safe_q", {"q": q}, {"quantum": 1.0, "budget": 2.0, "n_actions": 2}))
    cfg = tmp_path / "eval.cfg"
    cfg.write_text(
        "env.kind = chain\nenv.chain = two_action_chain\nlearner = safe_q\n"
        "eval_episodes = 300\nseeds = 4\nkey_quantum = 1\n"
    )
    out = tmp_path / "ev1"
    main(["--config", str(cfg), "--out", str(out), "evaluate", "--checkpoint", str(ck)])
    agg = (out / "eval_report.csv").read_text().splitlines()[-1].split(",")
    assert float(agg[3]) == 1.0


def test_missing_checkpoint_is_a_config_error(tmp_path):
    cfg = tmp_path / "eval.cfg"
    cfg.write_text("env.kind = chain\nenv.chain = two_action_chain\nseeds = 1\n")
    code = main(["--config", str(cfg), "--out", str(tmp_path / "x"),
                 "evaluate", "--checkpoint", str(tmp_path / "none.txt")])
    assert code == 2


def test_verify_command_passes_and_writes_report(tmp_path):
    out = tmp_path / "verify"
    assert main(["--out", str(out), "verify"]) == 0
    text = (out / "verify_report.csv").read_text()
    assert "zero_penalty_equivalence" in text
    assert "multi_constraint_feasibility" in text
    assert ",FAIL," not in text


def test_bounds_command_on_a_model_file(tmp_path):
    model = tmp_path / "chain.cmdp"
    model.write_text(dump_cmdp(two_action_chain()))
    out = tmp_path / "bounds"
    assert main(["--out", str(out), "bounds", str(model), "--alpha", "0.25", "--quantum", "1"]) == 0
    rows = dict(
        line.split(",") for line in (out / "bounds.csv").read_text().splitlines()[1:]
    )
    assert rows["best_return"] == "2"
    assert rows["worst_case_return"] == "1"
    assert rows["cost_slack"] == "2"
    assert rows["lambda_expected_cost"] == "0.5"
    assert rows["lambda_chance"] == "2"


def test_actor_critic_train_then_evaluate_round_trip(tmp_path):
    cfg_path = tmp_path / "ac.cfg"
    cfg_path.write_text(
        "env.kind = chain\nenv.chain = two_action_chain\nlearner = safe_ac\n"
        "lambda.1 = 1.0\nLambda_floor = 1.0\nepisodes = 1500\nseeds = 11\n"
        "eval_episodes = 400\n"
    )
    out = tmp_path / "ac"
    assert main(["--config", str(cfg_path), "--out", str(out), "train"]) == 0
    assert main(["--config", str(cfg_path), "--out", str(out), "evaluate",
                 "--checkpoint", str(out / "checkpoint_seed11.txt")]) == 0
    agg = (out / "eval_report.csv").read_text().splitlines()[-1].split(",")
    # Feasibility-constrained selection sticks to the safe branch.
    assert float(agg[1]) == 1.0 and float(agg[3]) == 0.0


def test_out_dir_defaults_to_environment_variable(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("CMDP_FORGE_OUT", str(target))
    model = tmp_path / "m.cmdp"
    model.write_text(dump_cmdp(two_action_chain()))
    assert main(["bounds", str(model), "--quantum", "1"]) == 0
    assert (target / "bounds.csv").exists()


def test_named_check_dispatch():
    from cmdp_forge.fixtures import Fixture
    from cmdp_forge.verification import ALL_KINDS, verify

    f = Fixture("chain", two_action_chain(), quantum=1.0)
    rep = verify("zero_penalty_equivalence", [f])
    assert rep.passed and rep.rows
    with pytest.raises(ValueError, match="unknown check kind"):
        verify("nope", [f])
    assert len(ALL_KINDS) == 8


def test_parallel_jobs_match_sequential(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(CHAIN_TRAIN)
    seq, par = tmp_path / "seq", tmp_path / "par"
    assert main(["--config", str(cfg_path), "--out", str(seq), "train"]) == 0
    assert main(["--config", str(cfg_path), "--out", str(par), "--jobs", "2", "train"]) == 0
    for name in ("train_seed7.csv", "train_seed8.csv"):
        assert _strip_wall((seq / name).read_text()) == _strip_wall((par / name).read_text())
    assert (seq / "train_aggregate.csv").read_text() == (par / "train_aggregate.csv").read_text()
