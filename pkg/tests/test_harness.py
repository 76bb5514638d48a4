import csv
import json

import numpy as np
import pytest

from rlpinns.cli import main, parse_samplers, parse_seeds
from rlpinns.harness import (
    RESULT_COLUMNS,
    ConfigError,
    RunRecord,
    compare,
    default_config,
    emit_results,
    load_config,
    read_results,
    run_pipeline,
    run_sweep,
)

TINY = dict(
    hidden=[6], pretrain_iters=3, n_r0=30, t_max=2, s0=20, s=5, n_b=20,
    round_plan=[["adam", 2]], final_plan=[["adam", 3]], test_grid=11, test_random=50,
    rl=dict(epsilon=1e-6, steps_per_episode=10, episodes_max=3, buffer_capacity=100,
            init_low=[-1, -1], init_high=[1, 1]),
)


def test_table_defaults():
    c = default_config("single-peak")
    assert (c.lr, c.n_r0, c.pretrain_iters, c.t_max, c.s0, c.s) == (1e-4, 5000, 5000, 5, 1000, 200)
    assert (c.rl["epsilon"], c.rl["action_step"], c.rl["buffer_capacity"]) == (0.005, 0.1, 1000)
    h = default_config("high-dimension")
    assert (h.rl["epsilon"], h.rl["steps_per_episode"], h.rl["buffer_capacity"]) == (0.0001, 1000, 5000)
    b = default_config("burgers")
    assert b.round_plan == [["adam", 5000], ["lbfgs", 5000]]
    assert b.final_plan == [["adam", 25000], ["lbfgs", 25000]]


def test_validation_errors():
    with pytest.raises(ConfigError, match="uniform, rar, rad, rl"):
        default_config("single-peak", sampler="foo")
    with pytest.raises(ConfigError):
        default_config("nope")
    with pytest.raises(ConfigError):
        default_config("single-peak", n_r0=0)
    with pytest.raises(ConfigError):
        default_config("single-peak", bogus=1)


def test_load_config_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"case": "dual-peak", "lr": 0.5, "s": 10, "rl": {"epsilon": 0.2}}))
    c = load_config(path, {"s": 20, "seed": None})
    assert c.case == "dual-peak" and c.lr == 0.5 and c.s == 20
    assert c.rl["epsilon"] == 0.2 and c.rl["buffer_capacity"] == 2000
    assert load_config(path, {"case": "wave"}).case == "wave"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="malformed"):
        load_config(path)


@pytest.fixture(scope="module")
def tiny_records():
    base = default_config("single-peak", **TINY)
    return run_sweep(base, ["uniform", "rar", "rad", "rl"], [0])


def test_budget_and_timing(tiny_records):
    by = {r.sampler: r for r in tiny_records}
    for s in ("uniform", "rar", "rad"):
        assert by[s].points_added == 10
    assert 0 < by["rl"].points_added <= 100
    assert by["rl"].episodes_used is not None and by["rl"].episodes_used <= 3
    for r in tiny_records:
        assert r.sampling_time_s >= 0 and r.training_time_s > 0 and r.rel_l2 >= 0


def test_shared_pretrain_matches_standalone(tiny_records):
    cfg = default_config("single-peak", sampler="rar", **TINY)
    alone = run_pipeline(cfg)
    shared = next(r for r in tiny_records if r.sampler == "rar")
    assert alone.rel_l2 == shared.rel_l2
    np.testing.assert_array_equal(alone.points, shared.points)


def test_emit_results(tiny_records, tmp_path):
    emit_results(tiny_records, tmp_path)
    rows = read_results(tmp_path / "results.csv")
    with open(tmp_path / "results.csv") as fh:
        assert tuple(next(csv.reader(fh))) == RESULT_COLUMNS
    assert [r["sampler"] for r in rows] == ["uniform", "rar", "rad", "rl"]
    assert rows[0]["episodes_used"] == ""
    for s in ("uniform", "rar", "rad", "rl"):
        assert (tmp_path / f"points_single-peak_{s}_0.csv").exists()
        assert (tmp_path / f"loss_single-peak_{s}_0.csv").exists()
    first = (tmp_path / "results.csv").read_bytes()
    emit_results(list(reversed(tiny_records)), tmp_path)
    assert (tmp_path / "results.csv").read_bytes() == first
    assert not list(tmp_path.glob("*.tmp"))
    with pytest.raises(ValueError):
        emit_results([], tmp_path)


def _rec(sampler, err, seed=0):
    return RunRecord("single-peak", sampler, seed, 1, 0.0, 1.0, err)


def test_compare():
    s = compare([_rec("rl", 0.1462), _rec("uniform", 0.4242)])["single-peak"]
    assert s["improvement"]["uniform"] == pytest.approx(0.655, abs=5e-4)
    assert s["ranking"] == ["rl", "uniform"]
    assert compare([_rec("rl", 0.3), _rec("rar", 0.3)])["single-peak"]["improvement"]["rar"] == 0
    with pytest.raises(ValueError):
        compare([_rec("rl", 0.3)])
    med = compare([_rec("rl", e, i) for i, e in enumerate((1, 5, 2))] + [_rec("rad", 3)])
    assert med["single-peak"]["median"]["rl"] == 2


def test_failure_marker(tmp_path):
    cfg = default_config("single-peak", **{**TINY, "rl": {**TINY["rl"], "epsilon": 1e9}},
                         sampler="rl", out_dir=str(tmp_path))
    with pytest.raises(Exception):
        run_pipeline(cfg)
    marker = json.loads((tmp_path / "failed_single-peak_rl_0.json").read_text())
    assert marker["status"] == "failed" and marker["phase"] == "sampling"


def test_cli_parsers():
    assert parse_seeds("0..4") == [0, 1, 2, 3, 4]
    assert parse_seeds("3,1") == [3, 1]
    assert parse_samplers("rl,uniform") == ["rl", "uniform"]


def test_cli_run_and_reference(tmp_path, capsys):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps({"case": "single-peak", **TINY}))
    assert main(["run", "--config", str(cfg), "--sampler", "uniform", "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "results.csv").exists()
    assert main(["sweep", "--config", str(cfg), "--samplers", "uniform,rl", "--seeds", "0..1",
                 "--out", str(tmp_path / "s")]) == 0
    assert len(read_results(tmp_path / "s" / "results.csv")) == 4
    ref = tmp_path / "ref.csv"
    assert main(["reference-burgers", "--grid", "5", "--out", str(ref)]) == 0
    assert len(ref.read_text().splitlines()) == 26
    assert main(["run", "--case", "nope"]) == 2


def test_cli_validate_derivs(capsys):
    assert main(["validate-derivs", "--nets", "5"]) == 0
    assert "order 4" in capsys.readouterr().out
