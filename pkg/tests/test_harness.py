import csv
import dataclasses
import math
import os

import numpy as np
import pytest

from isda import harness
from isda.ce import CeHyperparams, IterationRecord
from isda.cli import main
from isda.config import BaselineSettings, dump_config, load_config, parse_config

SMALL_CE = CeHyperparams(episode_length=50, episodes_per_iteration=20, elite_fraction=0.2,
                         iterations=4, eval_episodes=10)
SMALL_BASE = BaselineSettings(long_run_slots=5000, eval_episodes=50)


def small(name, **kw):
    cfg = load_config(name)
    return dataclasses.replace(cfg, ce=SMALL_CE, baseline=SMALL_BASE, seeds=(5,), **kw)


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def all_bytes(d):
    return {p: (d / p).read_bytes() for p in sorted(os.listdir(d))}


def test_train_trace_schema(tmp_path):
    cfg = small("paper_table1", mode="train")
    assert harness.run_experiment(cfg, tmp_path, quiet=True) == 0
    rows = read_csv(tmp_path / "trace_seed5.csv")
    assert rows[0] == ["iteration", "sim_seconds", "mean_sampled_cost", "elite_mean_cost", "eval_cost",
                       "eval_0_aoi", "eval_1_queue", "eval_2_idt_eh", "status"]
    assert len(rows) == 1 + SMALL_CE.iterations
    for m, row in enumerate(rows[1:], start=1):
        assert int(row[0]) == m and row[-1] == "ok"
        assert float(row[1]) == pytest.approx(m * 20 * 50 * 1.0 / 1000)
        assert all(math.isfinite(float(v)) for v in row[1:-1])
    assert (tmp_path / "policy_seed5.json").exists()
    assert not (tmp_path / "summary.csv").exists()


def test_sim_seconds_include_overhead_when_enabled():
    cfg = small("paper_table1")
    mac = dataclasses.replace(cfg.scenario.mac, count_overhead_in_time=True)
    cfg = dataclasses.replace(cfg, scenario=dataclasses.replace(cfg.scenario, mac=mac))
    recs = [IterationRecord(1, 1.0, 0.5, 0.7, np.ones(3), minislots=1000)]
    row = harness.trace_rows(cfg, recs, False)[0]
    assert float(row[1]) == pytest.approx((1000 * 1.0 + 1000 * 0.25) / 1000)


def test_disabled_evaluation_leaves_blank_cells():
    cfg = small("paper_table1")
    recs = [IterationRecord(1, 3.0, 1.0, math.nan, np.full(3, math.nan))]
    row = harness.trace_rows(cfg, recs, False)[0]
    assert row[4:8] == ["", "", "", ""] and row[-1] == "ok"


def test_divergence_becomes_error_row(tmp_path, monkeypatch):
    real_train = harness.train

    def exploding(*args, progress=None, **kw):
        def wrapped(rec):
            progress(rec)
            if rec.iteration == 2:
                raise FloatingPointError("boom")
        return real_train(*args, progress=wrapped, **kw)

    monkeypatch.setattr(harness, "train", exploding)
    cfg = small("paper_table1", mode="train")
    assert harness.run_experiment(cfg, tmp_path, quiet=True) == 1
    rows = read_csv(tmp_path / "trace_seed5.csv")
    assert [r[-1] for r in rows[1:]] == ["ok", "ok", "error"]
    assert rows[3][0] == "3" and set(rows[3][1:-1]) == {""}
    text = (tmp_path / "trace_seed5.csv").read_text()
    assert "nan" not in text.lower() and "inf" not in text.lower()


def test_baseline_all_aoi_has_ratio(tmp_path):
    cfg = small("homogeneous_aoi", mode="baseline")
    harness.run_experiment(cfg, tmp_path, quiet=True)
    rows = read_csv(tmp_path / "baseline_seed5.csv")
    assert rows[0] == ["terminal", "kind", "pure_csma", "whittle_oracle", "csma_to_oracle_ratio"]
    for r in rows[1:]:
        assert float(r[4]) == pytest.approx(float(r[2]) / float(r[3]), rel=1e-8)
    assert not (tmp_path / "trace_seed5.csv").exists()


def test_baseline_mixed_scenario_skips_oracle(tmp_path):
    cfg = small("paper_table1", mode="baseline")
    harness.run_experiment(cfg, tmp_path, quiet=True)
    assert read_csv(tmp_path / "baseline_seed5.csv")[0] == ["terminal", "kind", "pure_csma"]


def test_explicit_oracle_on_mixed_scenario_errors():
    with pytest.raises(ValueError, match="AoI"):
        harness.evaluate_whittle(small("paper_table1"), 1)


def test_compare_outputs(tmp_path):
    cfg = small("paper_table1")
    harness.run_experiment(cfg, tmp_path, quiet=True)
    rows = read_csv(tmp_path / "summary.csv")
    assert rows[0] == ["protocol", "scheme", "aoi_ms", "queue_length", "inter_delivery_ms"]
    schemes = [(r[0], r[1]) for r in rows[1:]]
    assert ("episodic", "Pure-CSMA") in schemes and ("episodic", "ISDA improvement (%)") in schemes
    assert ("long_run", "ISDA") in schemes
    text = (tmp_path / "summary.txt").read_text()
    assert "Inter-delivery time (ms)" in text and "Pure-CSMA" in text
    per_seed = read_csv(tmp_path / "compare_seed5.csv")
    assert len(per_seed) == 1 + 2 * 3


def test_summary_improvement_arithmetic():
    cfg = small("paper_table1")
    base = harness.SchemeMetrics(np.array([20.0, 2.0, 10.0]), np.array([20.0, 2.0, 10.0]))
    isda = harness.SchemeMetrics(np.array([15.0, 1.0, 9.0]), np.array([15.0, 1.0, 9.0]))
    rows = harness.summarize(cfg, [harness.SeedResult(1, {"pure_csma": base, "isda": isda})])
    imp = dict(((p, s), v) for p, s, v in rows)[("episodic", "ISDA improvement (%)")]
    assert imp == pytest.approx({"aoi_ms": 25.0, "queue_length": 50.0, "inter_delivery_ms": 10.0})


@pytest.mark.parametrize("name", ["paper_table1", "homogeneous_aoi"])
def test_byte_identical_reruns_and_parallelism(tmp_path, name):
    outs = []
    for i, workers in enumerate((1, 1, 8)):
        cfg = small(name, workers=workers)
        harness.run_experiment(cfg, tmp_path / str(i), quiet=True)
        outs.append(all_bytes(tmp_path / str(i)))
    assert outs[0] == outs[1] == outs[2]
    assert len(outs[0]) >= 4


def test_cli_overrides(tmp_path, capsys):
    cfg = small("homogeneous_aoi", mode="train")
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    out = tmp_path / "o"
    assert main(["--config", str(path), "--mode", "baseline", "--seed", "9", "--seed", "10",
                 "--out", str(out), "--quiet"]) == 0
    assert sorted(os.listdir(out)) == ["baseline_seed10.csv", "baseline_seed9.csv",
                                       "summary.csv", "summary.txt"]
    assert capsys.readouterr().out == ""


def test_cli_config_error(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("terminals:\n  - kind: aoi\nce:\n  elite_fraction: 0\n")
    assert main(["--config", str(path), "--quiet"]) == 2
    assert "ce.elite_fraction" in capsys.readouterr().err


def test_cli_rejects_unknown_mode():
    with pytest.raises(SystemExit):
        main(["--config", "paper_table1", "--mode", "dance"])


def test_outputs_depend_only_on_config_and_seed(tmp_path):
    cfg = small("homogeneous_aoi", mode="baseline")
    text = dump_config(cfg)
    harness.run_experiment(parse_config(text), tmp_path / "a", quiet=True)
    harness.run_experiment(parse_config(text), tmp_path / "b", quiet=True)
    assert all_bytes(tmp_path / "a") == all_bytes(tmp_path / "b")
