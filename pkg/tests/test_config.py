import pytest

from bpinn_ageing.config import RunConfig, desk_scale
from bpinn_ageing.pinn import ConfigError


def test_defaults_validate_and_hash_is_stable():
    a, b = RunConfig(), RunConfig()
    assert a.hash() == b.hash() and len(a.hash()) == 16
    assert a.hash() != desk_scale().hash()


def test_yaml_round_trip(tmp_path):
    cfg = desk_scale().with_overrides(["bpinn.prior={kind: gaussian, sigma: 0.5}", "training.hidden=[10, 10]"])
    path = tmp_path / "c.yaml"
    path.write_text(cfg.to_yaml())
    back = RunConfig.load(path)
    assert back == cfg and back.hash() == cfg.hash()
    assert back.prior().tag == "gaussian"


def test_override_parses_yaml_values():
    cfg = RunConfig().with_overrides(["training.epochs=12", "training.lr=1e-3", "training.batch_size=null"])
    assert cfg.training.epochs == 12 and cfg.training.lr == 1e-3 and cfg.training.batch_size is None
    assert cfg.train_config().batch_size is None


@pytest.mark.parametrize("bad", ["training.epoch=3", "nosuch.key=1", "epochs=3", "training.epochs"])
def test_bad_override_rejected(bad):
    with pytest.raises(ConfigError):
        RunConfig().with_overrides([bad])


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        RunConfig.from_dict({"training": {"epochz": 3}})
    with pytest.raises(ConfigError, match="unknown config section"):
        RunConfig.from_dict({"trainer": {}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"training": 3})


@pytest.mark.parametrize(
    "over",
    ["grid.nx=1", "bpinn.sigma_f=0", "bpinn.samples=1", "dropout.rate=1.0", "noise.sigma_i=-1",
     "bpinn.prior={kind: cauchy}", "training.lambda_r=-1"],
)
def test_invalid_values_fail_early(over):
    with pytest.raises(ConfigError):
        RunConfig().with_overrides([over])


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("training: [unclosed\n")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "bad.yaml")
    (tmp_path / "empty.yaml").write_text("")
    assert RunConfig.load(tmp_path / "empty.yaml") == RunConfig()


def test_exponent_literals_are_numbers(tmp_path):
    (tmp_path / "c.yaml").write_text("training:\n  lr: 3e-3\nbpinn:\n  sigma_init: 1e-4\n")
    cfg = RunConfig.load(tmp_path / "c.yaml")
    assert cfg.training.lr == 3e-3 and cfg.bpinn.sigma_init == 1e-4
    with pytest.raises(ConfigError, match="expected a number"):
        RunConfig().with_overrides(["training.lr=fast"])
