import numpy as np
import pytest

from fatsynth.config import SEED_KEYS, ConfigError, ExperimentConfig, load_config


def test_defaults_follow_reference_protocol(tiny_doc):
    cfg = ExperimentConfig({"protocol": {"te1": 0.0014, "delta_te": 0.0022, "n": 6},
                            "seeds": tiny_doc["seeds"], "dataset": {"real": 1, "synthetic": 0, "test": 1}})
    assert cfg.schedule.T == 500
    d = cfg.doc["diffusion"]
    assert d["optimizer"]["lr"] == 7e-5 and d["optimizer"]["batch_size"] == 8
    assert cfg.protocol.n_echoes == 6
    assert cfg.spectrum.n_peaks == 6
    assert cfg.snr == 100.0


def test_unknown_keys_rejected(tiny_doc):
    tiny_doc["phantom"]["colour"] = "red"
    with pytest.raises(ConfigError, match="phantom"):
        ExperimentConfig(tiny_doc)


@pytest.mark.parametrize("key", SEED_KEYS)
def test_all_seeds_required(tiny_doc, key):
    del tiny_doc["seeds"][key]
    with pytest.raises(ConfigError):
        ExperimentConfig(tiny_doc)


def test_inconsistent_blocks(tiny_doc):
    bad = dict(tiny_doc, protocol={"te1": 1e-3, "delta_te": 1e-3, "n": 2})
    with pytest.raises(ConfigError, match="three echoes"):
        ExperimentConfig(bad)
    bad = dict(tiny_doc, protocol={"te1": 1e-3, "echo_times": [1e-3, 2e-3, 3e-3]})
    with pytest.raises(ConfigError):
        ExperimentConfig(bad)
    bad = dict(tiny_doc, spectrum={"ppm": [-3.4], "frequencies_hz": [-217.0], "amplitudes": [1.0]})
    with pytest.raises(ConfigError):
        ExperimentConfig(bad)
    bad = dict(tiny_doc, diffusion={"beta_start": 0.1, "beta_end": 0.01})
    with pytest.raises(ConfigError):
        ExperimentConfig(bad)


def test_explicit_echo_times_and_hz_spectrum(tiny_doc):
    tiny_doc["protocol"] = {"echo_times": [0.001, 0.0025, 0.0045], "field_strength": 3.0}
    tiny_doc["spectrum"] = {"frequencies_hz": [-434.0], "amplitudes": [2.0]}
    cfg = ExperimentConfig(tiny_doc)
    assert cfg.protocol.delta_te is None
    assert cfg.spectrum.amplitudes == (1.0,)


def test_overrides(tiny_doc):
    cfg = ExperimentConfig(tiny_doc)
    o = cfg.with_overrides(seed=42, snr=np.inf, out="/tmp/x", protocol=(0.0012, 0.002, 4))
    assert set(o.seeds) == set(SEED_KEYS)
    assert o.seeds != cfg.seeds
    assert o.seeds == cfg.with_overrides(seed=42).seeds
    assert np.isinf(o.snr) and o.doc["dataset"]["snr"] == "inf"
    assert o.protocol.n_echoes == 4
    assert o.doc["output_dir"] == "/tmp/x"


def test_hash_ignores_output_dir(tiny_doc):
    from fatsynth.io import config_hash

    a = ExperimentConfig(dict(tiny_doc, output_dir="a"))
    b = ExperimentConfig(dict(tiny_doc, output_dir="b"))
    assert config_hash(a.hash_document()) == config_hash(b.hash_document())
    c = a.with_overrides(snr=50)
    assert config_hash(a.hash_document()) != config_hash(c.hash_document())


def test_load_config(tmp_path, tiny_doc, write_config):
    assert load_config(write_config(tiny_doc)).doc["dataset"]["real"] == 10
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_shipped_configs_validate():
    import glob
    import os

    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    paths = sorted(glob.glob(os.path.join(root, "*.json")))
    assert paths
    for p in paths:
        load_config(p)
    mixed = load_config(os.path.join(root, "paper_mixed.json"))
    assert mixed.doc["dataset"]["real"] == 200 and mixed.doc["dataset"]["synthetic"] == 3100
