import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgtomo.config import ConfigError, ExperimentConfig, default_config


def test_default_roundtrip():
    cfg = default_config()
    again = ExperimentConfig.loads(cfg.dumps())
    assert again == cfg
    assert again.digest() == cfg.digest()


@settings(max_examples=15, deadline=None)
@given(
    st.integers(0, 10**6),
    st.lists(st.floats(0.001, 0.5), min_size=1, max_size=5),
    st.sampled_from(["oracle", "boundary"]),
    st.floats(1.0, 40.0),
)
def test_roundtrip_property(seed, eps, mode, rho):
    cfg = default_config()
    cfg.seed, cfg.sweep.eps, cfg.recovery.mode, cfg.recovery.rho = seed, eps, mode, rho
    assert ExperimentConfig.loads(cfg.dumps()) == cfg


def test_partial_config_uses_defaults():
    cfg = ExperimentConfig.loads("[recovery]\nrho = 8.0\n")
    assert cfg.recovery.rho == 8.0
    assert cfg.grid == default_config().grid


@pytest.mark.parametrize(
    "text,path",
    [
        ("[grid]\nNt = 48\n", "grid"),
        ("[grid]\nT = -1.0\n", "grid.T"),
        ("[grid]\nNt = 1.5\n", "grid.Nt"),
        ("[grid]\nbogus = 1\n", "grid.bogus"),
        ("[recovery]\nmode = \"magic\"\n", "recovery.mode"),
        ("[recovery]\nrho = 0.5\n", "recovery.rho"),
        ("[potentials.v1]\nname = \"gaussian\"\n", "potentials.v1.name"),
        ("[potentials.v1]\nname = \"separable_bump\"\nparams = { amplitude = 20.0 }\n", "potentials.v1"),
        ("[potentials.perturbation]\nname = \"constant\"\nparams = { value = 1.0 }\n", "potentials.perturbation"),
        ("[cgo]\nr = []\n", "cgo.r"),
        ("[probe]\neta = [0.0, 0.0]\n", "probe.eta"),
        ("[sweep]\neps = [-0.1]\n", "sweep.eps"),
        ("seed = \"x\"\n", "seed"),
        ("grid = = 1\n", "<toml>"),
    ],
)
def test_errors_carry_field_paths(text, path):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.loads(text)
    assert exc.value.path == path
    assert str(exc.value).startswith(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="<file>"):
        ExperimentConfig.load(tmp_path / "nope.toml")


def test_random_preset_takes_run_seed():
    a = ExperimentConfig.loads("seed = 1\n").potential("perturbation")
    b = ExperimentConfig.loads("seed = 2\n").potential("perturbation")
    c = ExperimentConfig.loads("seed = 1\n").potential("perturbation")
    assert (a.values == c.values).all() and not (a.values == b.values).all()
