from pathlib import Path

import pytest
import yaml

from honeytrial.config import load_config, parse_config
from honeytrial.engine import Method
from honeytrial.errors import ConfigInvariantError, ConfigParseError
from honeytrial.records import Arm
from honeytrial.sim_env import HazardSpec, ScriptedOutcome

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def doc(name="rct-scripted.yaml"):
    return yaml.safe_load((CONFIGS / name).read_text())


def test_shipped_configs_load():
    ad = load_config(CONFIGS / "adaptive-hazard.yaml")
    assert ad.study.method is Method.ADAPTIVE
    assert isinstance(ad.environment, HazardSpec)
    assert ad.environment.seed == ad.study.rng_seed == 7
    assert ad.environment.rate(0, "east-1", Arm.CONTROL) == 0.1
    assert ad.environment.rate(1, "east-1", Arm.CONTROL) == 0.0
    assert ad.environment.region_onset_delay["west-2"] == 45 * 60_000
    rct = load_config(CONFIGS / "rct-scripted.yaml")
    assert isinstance(rct.environment, ScriptedOutcome)
    assert rct.study.stage_n_total == 48
    assert rct.environment.events[0].stage == 0  # 1-based in the file


def test_minutes_become_ms():
    assert load_config(CONFIGS / "rct-scripted.yaml").study.stage_duration == 240 * 60_000


@pytest.mark.parametrize("section, key", [("study", "regions"), ("study", "method"),
                                          ("study", "error_rates")])
def test_missing_required(section, key):
    d = doc()
    del d[section][key]
    with pytest.raises(ConfigParseError, match=key):
        parse_config(d)


def test_unknown_key():
    d = doc()
    d["study"]["colour"] = "blue"
    with pytest.raises(ConfigParseError, match="colour"):
        parse_config(d)


def test_environment_must_be_tagged():
    d = doc()
    del d["environment"]["kind"]
    with pytest.raises(ConfigParseError):
        parse_config(d)


def test_equal_incidence_names_field():
    d = doc()
    d["study"]["initial_incidence"] = {"p1": 0.3, "p2": 0.3}
    with pytest.raises(ConfigInvariantError) as info:
        parse_config(d)
    assert info.value.field == "initial_incidence"


def test_bad_alpha_names_field():
    d = doc()
    d["study"]["error_rates"]["alpha"] = 1.5
    with pytest.raises(ConfigInvariantError) as info:
        parse_config(d)
    assert info.value.field == "error_rates"


def test_unknown_region_in_script():
    d = doc()
    d["environment"]["events"][0]["region"] = "mars"
    with pytest.raises(ConfigInvariantError):
        parse_config(d)


def test_overrides():
    cfg = load_config(CONFIGS / "adaptive-hazard.yaml").with_overrides(seed=42, method="rct")
    assert cfg.study.method is Method.RCT
    assert cfg.study.rng_seed == cfg.environment.seed == 42


def test_yaml_syntax_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("study: [unclosed\n")
    with pytest.raises(ConfigParseError):
        load_config(p)
