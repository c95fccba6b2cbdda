import pytest

from sdrl.config import CONFIG_KEYS, RunConfig, coerce, parse_config, render_config
from sdrl.errors import ConfigError


def test_empty_file_gives_defaults(tmp_path):
    f = tmp_path / "empty.cfg"
    f.write_text("")
    cfg = parse_config(str(f), {})
    assert cfg == RunConfig()
    assert (cfg.env, cfg.ablation, cfg.decay_fraction, cfg.interval_episodes) == (
        "pendulum", "full", 0.06, 4)


def test_defaults_cover_documented_values():
    c = RunConfig()
    assert (c.gamma, c.tau, c.batch_size, c.lr_actor, c.lr_critic) == (0.99, 0.001, 64, 1e-4, 1e-3)
    assert (c.noise_sigma, c.noise_decay, c.cutoff) == (0.2, 0.99, 0.01)
    assert (c.rp_percentile, c.rp_window) == (60.0, 20)
    assert (c.buffer_capacity, c.pioneer_capacity, c.pioneer_min_updates) == (100_000, 50_000, 200)
    assert (c.supervised_target, c.reset_actor_target, c.clone_per_period) == (
        "supervisor", False, False)


def test_out_of_range_names_key(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("decay_fraction = 1.5\n")
    with pytest.raises(ConfigError) as exc:
        parse_config(str(f))
    assert exc.value.key == "decay_fraction" and "decay_fraction" in str(exc.value)


def test_flag_beats_file(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("ablation = full\n# comment\nseed = 3  # trailing\n")
    cfg = parse_config(str(f), {"ablation": "no_pioneer"})
    assert cfg.ablation == "no_pioneer" and cfg.seed == 3


def test_unknown_key_rejected(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("learning_speed = 3\n")
    with pytest.raises(ConfigError) as exc:
        parse_config(str(f))
    assert exc.value.key == "learning_speed"
    with pytest.raises(ConfigError):
        parse_config(None, {"wat": 1})


@pytest.mark.parametrize("key,raw", [("episodes", "many"), ("gamma", "x"),
                                     ("reset_actor_target", "maybe"), ("episodes", "2.5")])
def test_unparsable_value(key, raw):
    with pytest.raises(ConfigError) as exc:
        parse_config(None, {key: raw})
    assert exc.value.key == key


def test_coercions():
    assert coerce("buffer_capacity", "1e5") == 100_000
    assert coerce("reset_actor_target", "yes") is True
    assert coerce("gamma", "0.5") == 0.5
    assert coerce("env", " lander ") == "lander"


@pytest.mark.parametrize("key,value", [
    ("env", "cheetah"), ("ablation", "half"), ("gamma", 1.5), ("episodes", 0),
    ("supervised_target", "both"), ("schedule_mode", "weekly"), ("hidden_sizes", "64,x"),
    ("supervisor_gains", "kp6")])
def test_validation(key, value):
    with pytest.raises(ConfigError) as exc:
        RunConfig(**{key: value})
    assert exc.value.key == key


def test_dash_keys_and_render_roundtrip(tmp_path):
    cfg = parse_config(None, {"lr-actor": "0.0003", "supervisor_gains": "kp:6,kd:1.5"})
    assert cfg.lr_actor == 3e-4 and cfg.gain_overrides == {"kp": 6.0, "kd": 1.5}
    f = tmp_path / "echo.cfg"
    f.write_text(render_config(cfg))
    assert parse_config(str(f)) == cfg
    assert [line.split(" = ")[0] for line in render_config(cfg).splitlines()] == list(CONFIG_KEYS)
