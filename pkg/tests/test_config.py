import pytest

from fedelicit.config import ConfigError, ExperimentSpec, load_spec, parse_spec


def test_defaults_and_types():
    spec = parse_spec("scenario = gamma_sweep\nseeds = 3, 4\nc_p = 0.1,0.2\nn_clients = 2\nq = 0.25  # trailing\n")
    assert spec.scenario == "gamma_sweep"
    assert spec.seeds == (3, 4) and spec.c_p == (0.1, 0.2) and spec.q == 0.25
    assert spec.cost_vector() == [0.1, 0.2]
    assert ExperimentSpec(n_clients=3).cost_vector() == [0.01] * 3


def test_overrides():
    spec = parse_spec("n_clients = 3\nstrategy.1.e = 0\nstrategy.1.gamma = 1.5\nstrategy.2.D = 7\n")
    assert spec.overrides == {1: {"e": 0, "gamma": 1.5}, 2: {"D": 7}}


@pytest.mark.parametrize("text, match", [
    ("colour = red", "unknown key"),
    ("q = 1.5", "q must lie"),
    ("q = abc", "bad value"),
    ("seeds = ", "seeds must be non-empty"),
    ("scenario = fig9", "scenario must be"),
    ("n_clients = 2\nstrategy.5.e = 0", "out of range"),
    ("strategy.0.e = 2", "must be 0 or 1"),
    ("strategy.0.beta = 2", "bad override key"),
    ("T = 5\nT = 6", "duplicate"),
    ("just words", "expected key = value"),
    ("n_clients = 3\nc_p = 0.1,0.2", "c_p needs"),
    ("data = mnist_subset", "mnist_subset needs"),
])
def test_rejects(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_spec(text)


def test_keyword_overrides(tmp_path):
    path = tmp_path / "x.spec"
    path.write_text("seeds = 1,2\n", encoding="utf-8")
    assert load_spec(path, seeds=(9,)).seeds == (9,)
    with pytest.raises(OSError):
        load_spec(tmp_path / "missing.spec")
