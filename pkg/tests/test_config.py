import pytest
import yaml

from cylsp.config import flagship_config, flagship_path, load_config, parse_config
from cylsp.errors import ConfigError


def base():
    return yaml.safe_load(flagship_path().read_text())


def test_flagship_loads():
    cfg = flagship_config()
    assert cfg.p == 4.0
    assert cfg.region.r0 == 2.0
    assert cfg.sweep["eps"] == [0.2, 0.1, 0.05]
    assert cfg.penalization == {"kappa": 0.1, "beta": 1.0, "mu": 0.1}


def test_defaults_for_optional_sections():
    raw = base()
    for key in ("penalization", "solver", "sweep"):
        raw.pop(key, None)
    cfg = parse_config(raw)
    assert cfg.penalization["kappa"] == 0.1 and cfg.solver == {} and cfg.sweep == {}


@pytest.mark.parametrize("mutate", [
    lambda r: r.pop("V"),
    lambda r: r.pop("Lambda"),
    lambda r: r.update(extra=1),
    lambda r: r.update(solver={"bogus": 1}),
    lambda r: r.update(penalization=[1, 2]),
    lambda r: r.update(V=[{"kind": "nope"}]),
    lambda r: r.update(Lambda={"r0": 1.0, "a_s": 1.0, "a_r": 1.0}),
    lambda r: r.update(K=[{"kind": "constant", "c": 0.0}]),
])
def test_invalid_configs(mutate):
    raw = base()
    mutate(raw)
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("V: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        parse_config(["not", "a", "mapping"])
