import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from codingtrees.config import ConfigError, config_from_dict, load, loads

GOOD = """\
map: z2
tree:
  root: [4.0, 0.0]
  base_curves:
    - {kind: segment, from: [4.0, 0.0], to: [2.0, 0.0]}
    - {kind: arc, from: [4.0, 0.0], to: [-2.0, 0.0], bulge: -1.0}
charts:
  - {point: [1.0, 0.0], period: 1}
budgets: {depth: 6, samples: 64, horizon: 12}
seed: 3
"""


def test_load_example_configs():
    for name in ("z2", "z2m1"):
        cfg = load(f"configs/{name}.yaml")
        assert cfg.build_tree().d == 2


def test_round_trip_is_lossless():
    cfg = loads(GOOD)
    again = config_from_dict(json.loads(cfg.dumps()))
    assert again.to_dict() == cfg.to_dict()
    assert again.hash() == cfg.hash()
    assert loads(cfg.dumps(), "json").hash() == cfg.hash()


@given(
    st.integers(0, 2 ** 31),
    st.integers(1, 40),
    st.integers(1, 4096),
    st.integers(1, 500),
    st.floats(0.01, 0.99),
)
def test_round_trip_property(seed, depth, samples, horizon, kappa):
    data = {
        "map": {"numerator": [[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]},
        "seed": seed,
        "budgets": {"depth": depth, "samples": samples, "horizon": horizon},
        "telescope": {"kappa": kappa},
    }
    cfg = config_from_dict(data)
    assert config_from_dict(json.loads(cfg.dumps())).to_dict() == cfg.to_dict()


def test_hash_ignores_output_dir_but_not_seed():
    a = loads(GOOD)
    b = loads(GOOD + "out: elsewhere\n")
    c = loads(GOOD.replace("seed: 3", "seed: 4"))
    assert a.hash() == b.hash() != c.hash()


@pytest.mark.parametrize(
    "text, path, line",
    [
        (GOOD.replace("depth: 6", "depth: -1"), "budgets.depth", 9),
        (GOOD.replace("kind: segment", "kind: spline"), "tree.base_curves[0].kind", 5),
        (GOOD.replace("[1.0, 0.0], period: 1", "[1.0, 0.0, 2.0], period: 1"), "charts[0].point", 8),
        (GOOD + "colour: red\n", "colour", 11),
        (GOOD.replace("map: z2", "map: z9"), "map", 1),
    ],
)
def test_field_diagnostics(text, path, line):
    with pytest.raises(ConfigError) as info:
        loads(text)
    assert info.value.path == path
    assert info.value.line == line


def test_syntax_errors_carry_lines():
    with pytest.raises(ConfigError) as info:
        loads("map: z2\nbudgets: {depth: [\n")
    assert info.value.line is not None
    with pytest.raises(ConfigError) as info:
        loads('{"map": "z2",\n "seed": }', "json")
    assert info.value.line == 2


def test_empty_tree_is_an_error():
    cfg = loads("map: z2\n")
    with pytest.raises(ConfigError):
        cfg.build_tree()
