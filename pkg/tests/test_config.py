import textwrap

import pytest

from isda.config import ConfigError, bundled_configs, dump_config, load_config, parse_config
from isda.model import TerminalKind

MINIMAL = """\
terminals:
  - kind: aoi
    data_arrival_rate: 0.1
"""


def test_bundled_configs_listed():
    assert {"paper_table1", "homogeneous_aoi"} <= set(bundled_configs())


def test_paper_table1_values():
    cfg = load_config("paper_table1")
    t = cfg.scenario.terminals
    assert [x.kind for x in t] == [TerminalKind.AOI, TerminalKind.QUEUE, TerminalKind.IDT_EH]
    assert t[0].data_arrival_rate == 0.1 and t[1].data_arrival_rate == 0.1
    assert t[2].energy_arrival_rate == 0.2 and t[2].energy_capacity == 1
    assert cfg.scenario.mac.data_slot_ms == 1.0 and cfg.scenario.mac.mini_slot_ms == 0.25
    assert (cfg.ce.episode_length, cfg.ce.episodes_per_iteration, cfg.ce.elite_fraction) == (100, 100, 0.1)
    assert cfg.scenario.weights.tolist() == [1, 1, 1]
    assert cfg.p_const == pytest.approx(1 / 3)
    assert cfg.seeds == (1, 2, 3)


def test_homogeneous_config():
    cfg = load_config("homogeneous_aoi")
    assert cfg.all_aoi and cfg.scenario.n_terminals == 3
    assert set(cfg.scenario.data_rates) == {0.1}


def test_defaults_applied():
    cfg = parse_config(MINIMAL)
    assert cfg.scenario.mac.mini_slot_count == 3
    assert cfg.ce.iterations == 150 and cfg.policy.hidden_dim == 5
    assert cfg.mode == "compare" and cfg.seeds == (1,)


@pytest.mark.parametrize("extra,where", [
    ("ce:\n  elite_fraction: 0.0\n", "ce.elite_fraction"),
    ("ce:\n  episodes_per_iteration: 5\n", "ce."),
    ("ce:\n  bogus: 1\n", "ce.bogus"),
    ("mac:\n  mini_slot_count: 0\n", "mac.mini_slot_count"),
    ("mac:\n  data_slot_ms: fast\n", "mac.data_slot_ms"),
    ("policy:\n  norm: -1\n", "policy.norm"),
    ("baseline:\n  p_const: 2\n", "baseline.p_const"),
    ("mode: fly\n", "mode"),
    ("seeds: [1, -2]\n", "seeds[1]"),
    ("workers: 0\n", "workers"),
    ("colour: red\n", "colour"),
])
def test_field_precise_errors(extra, where):
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + extra)
    assert str(exc.value).startswith(where)


@pytest.mark.parametrize("term,where", [
    ("  - kind: wifi\n", "terminals[1].kind"),
    ("  - kind: aoi\n    data_arrival_rate: 1.5\n", "terminals[1].data_arrival_rate"),
    ("  - kind: idt_eh\n    energy_arrival_rate: 0.2\n", "terminals[1].energy_capacity"),
    ("  - kind: queue\n    x: 1\n", "terminals[1].x"),
    ("  - data_arrival_rate: 0.1\n", "terminals[1].kind"),
])
def test_terminal_errors(term, where):
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + term)
    assert str(exc.value).startswith(where)


def test_bad_documents():
    with pytest.raises(ConfigError, match="terminals"):
        parse_config("mode: train\n")
    with pytest.raises(ConfigError, match="YAML"):
        parse_config("terminals: [\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/cfg.yaml")


@pytest.mark.parametrize("name", ["paper_table1", "homogeneous_aoi"])
def test_round_trip(name):
    cfg = load_config(name)
    assert parse_config(dump_config(cfg)) == cfg


def test_round_trip_file(tmp_path):
    cfg = parse_config(MINIMAL + textwrap.dedent("""\
        baseline:
          p_const: 0.25
        seeds: 4
        """))
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg and cfg.p_const == 0.25 and cfg.seeds == (4,)
