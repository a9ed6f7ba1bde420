import json

import pytest

from holoplex.config import ConfigError, RunConfig, bundled_config_path, env_overrides, load_file, parse_text
from holoplex.mask import SpectrumMask


def test_defaults_valid():
    cfg = RunConfig.load()
    assert cfg.grid().shape == (64, 64) and cfg.grid().pitch == 8e-6
    assert cfg.optimizer().learning_rate == 1e-4
    assert cfg.loss().mse_weight == 1 and cfg.loss().alpha == 1


def test_parse_text_and_comments():
    raw = parse_text("# comment\ngrid.height = 32  # trailing\n\nmask.r.cx = 120\n")
    assert raw == {"grid.height": "32", "mask.r.cx": "120"}
    with pytest.raises(ConfigError):
        parse_text("grid.height 32")


def test_unknown_key_and_bad_value():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_sources({"grid.heigth": "3"})
    with pytest.raises(ConfigError):
        RunConfig.from_sources({"grid.height": "abc"})
    with pytest.raises(ConfigError):
        RunConfig.from_sources({"optimizer.learning_rate": "0"})
    with pytest.raises(ConfigError):
        RunConfig.from_sources({"loss.mse_weight": "0", "loss.ffl_weight": "0"})


def test_rectangular_pitch_rejected():
    with pytest.raises(ConfigError, match="square"):
        RunConfig.from_sources({"grid.pitch_x": "8e-6", "grid.pitch_y": "6e-6"})
    assert RunConfig.from_sources({"grid.pitch_x": "6e-6"}).grid().pitch == 6e-6


def test_invariants_checked_at_parse_time():
    with pytest.raises(ConfigError):
        RunConfig.from_sources({"wave.g": "638e-9"})
    with pytest.raises(ConfigError):
        RunConfig.from_sources({"plane.g": "0.02"})
    with pytest.raises(ConfigError):
        RunConfig.from_sources({"mask.r.cx": "3"})


def test_precedence_file_env_override(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("optimizer.iterations = 5\nseed = 3\n")
    env = {"HOLOPLEX_OPTIMIZER__ITERATIONS": "7", "HOLOPLEX_SEED": "4", "OTHER": "x"}
    assert env_overrides(env) == {"optimizer.iterations": "7", "seed": "4"}
    cfg = RunConfig.load(p, {"seed": "9"}, environ=env)
    assert cfg["optimizer.iterations"] == 7 and cfg["seed"] == 9


def test_json_flat_nested_and_manifest(tmp_path):
    (tmp_path / "flat.json").write_text(json.dumps({"grid.height": 32, "grid.width": 32}))
    (tmp_path / "nested.json").write_text(json.dumps({"grid": {"height": 32, "width": 32}}))
    (tmp_path / "man.json").write_text(json.dumps({"version": "x", "config": {"grid.height": 32, "grid.width": 32}}))
    for name in ("flat.json", "nested.json", "man.json"):
        assert RunConfig.load(tmp_path / name, environ={}).grid().shape == (32, 32)
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_file(tmp_path / "bad.json")


def test_masks_from_config():
    cfg = RunConfig.from_sources({"mask.g.cx": "1", "mask.g.cy": "2", "mask.g.r": "3"})
    assert cfg.masks()[1] == SpectrumMask(1, 2, 3)
    assert cfg.masks()[0].r == pytest.approx(12.8)


def test_echo_roundtrip(tmp_path):
    cfg = RunConfig.load(bundled_config_path(), environ={})
    (tmp_path / "echo.cfg").write_text(cfg.to_text())
    again = RunConfig.load(tmp_path / "echo.cfg", environ={})
    assert again.echo() == cfg.echo()
    (tmp_path / "echo.json").write_text(json.dumps(cfg.echo()))
    assert RunConfig.load(tmp_path / "echo.json", environ={}).echo() == cfg.echo()


def test_bundled_desk_config():
    cfg = RunConfig.load(bundled_config_path(), environ={})
    z = cfg.planes()
    assert cfg["plane.auto"] and z[0] == 0.02 and z[0] < z[1] < z[2]
    assert cfg.color().scheme == "SGDDM"
