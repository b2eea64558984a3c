import pytest

from iurewrite.config import ConfigError, RunConfig, dump_config, load_config
from iurewrite.heads import MergeMode


@pytest.mark.parametrize("switches", [
    dict(sm=True, hm=True),
    dict(cs=False, cm=True, sm=False, ic=False),
    dict(cs=False, cm=False, sm=False, ic=True),
    dict(cs=False, cm=False, sm=False, ic=False, hm=True),
])
def test_invalid_switch_combinations(switches):
    with pytest.raises(ConfigError):
        RunConfig(**switches)


@pytest.mark.parametrize("field, value", [
    ("merge_alpha", 1.5), ("tau", -0.1), ("alpha1", -1.0), ("class_weights", (1, 2)),
    ("lr", 0.0), ("dtype", "float16"), ("n_heads", 3),
])
def test_invalid_values(field, value):
    with pytest.raises(ConfigError):
        RunConfig(**{field: value})


def test_merge_mode_follows_switches():
    assert RunConfig().merge_mode == MergeMode.SOFT
    assert RunConfig(sm=False, hm=True).merge_mode == MergeMode.HARD
    assert RunConfig(sm=False).merge_mode == MergeMode.OFF
    assert RunConfig(cs=False, cm=False, sm=False, ic=False).merge_mode == MergeMode.OFF


def test_file_roundtrip_and_unknown_keys(tmp_path):
    cfg = RunConfig(seed=3, steps=10, class_weights=(1, 2, 3), train_path="x.jsonl")
    path = tmp_path / "run.yaml"
    dump_config(cfg, path)
    assert load_config(path) == cfg

    path.write_text("seed: 1\nlearning_rate: 0.1\n")
    with pytest.raises(ConfigError, match="learning_rate"):
        load_config(path)
    path.write_text("encoder:\n  d_model: 8\n")
    with pytest.raises(ConfigError, match="flat"):
        load_config(path)


def test_replace_revalidates():
    with pytest.raises(ConfigError):
        RunConfig().replace(hm=True)
